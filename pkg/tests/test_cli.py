import json
import math

import numpy as np
import pytest

from rydtraj.cli import main, parse_config


def write_config(tmp_path, name="cfg.json", **overrides):
    base = {
        "geometry": {"diameter": 0.7, "target_n": 16, "center_mode": "plaquette"},
        "truncation": {"n_max": 2},
        "run": {
            "t_end": 4.0,
            "n_samples": 9,
            "n_traj": 4,
            "t_steady": 12.0,
            "burn_in": 3.0,
            "scheme": "ifrk4",
            "master_seed": 77,
        },
        "outputs": {"directory": str(tmp_path / "out")},
    }
    for section, content in overrides.items():
        if isinstance(content, dict):
            base.setdefault(section, {}).update(content)
        else:
            base[section] = content
    path = tmp_path / name
    path.write_text(json.dumps(base), encoding="utf-8")
    return path


class TestParseConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        path = tmp_path / "min.json"
        path.write_text(
            json.dumps({"geometry": {"diameter": 0.7, "target_n": 16,
                                      "center_mode": "plaquette"}}),
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.params.gamma_z == pytest.approx(0.3)
        assert cfg.params.gamma_r == pytest.approx(0.075)
        assert cfg.resolved["params"]["gamma_z"] == pytest.approx(0.3)
        assert cfg.geometry.n_atoms == 16
        # diameter resolved from d_b units to absolute micrometers
        assert cfg.geometry.diameter == pytest.approx(
            0.7 * cfg.derived.blockade_dist
        )

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"params": {"gama_z": 0.3}}), encoding="utf-8")
        from rydtraj.cli import ConfigError

        with pytest.raises(ConfigError, match="gama_z"):
            parse_config(path)

    def test_negative_rate_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "params": {"gamma_r": -0.1},
                    "geometry": {"diameter": 1.0, "target_n": 9},
                }
            ),
            encoding="utf-8",
        )
        from rydtraj.cli import ConfigError

        with pytest.raises(ConfigError, match="gamma_r"):
            parse_config(path)

    def test_si_units_normalized(self, tmp_path):
        omega = 2 * math.pi * 85e3
        path = tmp_path / "si.json"
        path.write_text(
            json.dumps(
                {
                    "units": "si",
                    "params": {
                        "omega": omega,
                        "gamma_r": 0.075 * omega,
                        "gamma_z": 0.3 * omega,
                        "c6": 2 * math.pi * 15e9,
                    },
                    "geometry": {"diameter": 0.7, "target_n": 16,
                                 "center_mode": "plaquette"},
                }
            ),
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.params.omega == 1.0
        assert cfg.params.gamma_z == pytest.approx(0.3)
        # d_b in micrometers for n ~ 50 Rydberg states
        assert cfg.derived.blockade_dist == pytest.approx(5.58, abs=0.01)

    def test_explicit_positions_um(self, tmp_path):
        path = tmp_path / "pos.json"
        path.write_text(
            json.dumps(
                {
                    "geometry": {
                        "length_unit": "um",
                        "positions": [[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]],
                    }
                }
            ),
            encoding="utf-8",
        )
        cfg = parse_config(path)
        assert cfg.geometry.n_atoms == 3
        assert cfg.geometry.spacing == pytest.approx(4.0)


class TestCommands:
    def test_info_exit_codes(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["info", str(path)]) == 0
        out = capsys.readouterr().out
        assert "blockade distance" in out

    def test_unknown_key_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"nonsense": {}}), encoding="utf-8")
        assert main(["info", str(path)]) == 2

    def test_numeric_failure_exit_code(self, tmp_path):
        # d_b-relative lengths with gamma_r = 0: linewidth undefined
        path = tmp_path / "sing.json"
        path.write_text(
            json.dumps(
                {
                    "params": {"gamma_r": 0.0},
                    "geometry": {"diameter": 1.0, "target_n": 9},
                }
            ),
            encoding="utf-8",
        )
        assert main(["info", str(path)]) == 4

    def test_dynamics_artifacts(self, tmp_path):
        path = write_config(
            tmp_path,
            outputs={
                "directory": str(tmp_path / "out"),
                "observables": ["n_mean", "p_r", "q", "configurations"],
            },
        )
        assert main(["dynamics", str(path)]) == 0
        out = tmp_path / "out"
        csv_text = (out / "observables.csv").read_text().splitlines()
        assert csv_text[0] == "t,n_mean,n_stderr,q,p_0,p_1,p_2"
        assert len(csv_text) == 10
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["csv_schema"] == 1
        assert manifest["rng"]["algorithm"] == "philox4x64"
        assert manifest["config"]["run"]["n_traj"] == 4
        dists = json.loads((out / "distributions.json").read_text())
        assert abs(sum(dists["p_r_final"].values()) - 1.0) < 1e-9
        assert abs(sum(dists["configurations_final"].values()) - 1.0) < 1e-9

    def test_rerun_from_echo_bit_identical(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["dynamics", str(path)]) == 0
        first = (tmp_path / "out" / "observables.csv").read_bytes()
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        echo = manifest["config"]
        echo["outputs"]["directory"] = str(tmp_path / "out2")
        echo_path = tmp_path / "echo.json"
        echo_path.write_text(json.dumps(echo), encoding="utf-8")
        assert main(["dynamics", str(echo_path)]) == 0
        second = (tmp_path / "out2" / "observables.csv").read_bytes()
        assert first == second

    def test_steady_artifacts_and_dp_reference(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["steady", str(path)]) == 0
        out = tmp_path / "out"
        steady = json.loads((out / "steady.json").read_text())
        assert 0.0 <= steady["n_mean_time_avg"] <= 16.0
        assert (out / "p_r.csv").read_text().splitlines()[0] == "n,p,poisson"
        configs = json.loads((out / "configurations.json").read_text())
        assert abs(sum(configs.values()) - 1.0) < 1e-9
        # use the steady configurations as a D_p reference for dynamics
        path2 = write_config(
            tmp_path,
            name="dyn.json",
            outputs={
                "directory": str(tmp_path / "out_dp"),
                "observables": ["n_mean"],
                "steady_reference": str(out / "configurations.json"),
            },
        )
        assert main(["dynamics", str(path2)]) == 0
        header = (tmp_path / "out_dp" / "observables.csv").read_text().splitlines()[0]
        assert header.endswith(",d_p")

    def test_steady_density_matrix(self, tmp_path):
        path = write_config(
            tmp_path,
            outputs={"directory": str(tmp_path / "out"), "density_matrix": True},
        )
        assert main(["steady", str(path)]) == 0
        steady = json.loads((tmp_path / "out" / "steady.json").read_text())
        assert 0.0 <= steady["d_rho_classical"] <= 1.0

    def test_sweep(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["sweep", str(path), "--axis", "n", "--values", "9,16"]) == 0
        text = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert text[0].startswith("n,n_atoms,basis_dim")
        assert len(text) == 3
        assert (tmp_path / "out" / "n_9" / "steady.json").exists()

    def test_sweep_empty_values_noop(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert main(["sweep", str(path), "--axis", "n", "--values", ""]) == 0
        err = capsys.readouterr().err
        assert "empty" in err
        assert not (tmp_path / "out" / "sweep.csv").exists()

    def test_oracle_compare_passes_small(self, tmp_path):
        path = write_config(
            tmp_path,
            geometry={"diameter": 0.8, "target_n": 4, "center_mode": "plaquette"},
            truncation={"n_max": 4},
            run={
                "t_end": 2.5,
                "n_samples": 8,
                "n_traj": 300,
                "scheme": "ifrk4",
                "master_seed": 5,
            },
        )
        assert main(["oracle-compare", str(path)]) == 0
        rep = json.loads((tmp_path / "out" / "oracle_compare.json").read_text())
        assert rep["passed"] is True

    def test_oracle_compare_capacity(self, tmp_path):
        path = write_config(
            tmp_path,
            geometry={"diameter": 2.0, "target_n": 37, "center_mode": "site"},
        )
        assert main(["oracle-compare", str(path)]) == 3

    def test_convergence_command(self, tmp_path):
        path = write_config(tmp_path)
        assert main(["convergence", str(path), "--n-max-list", "1,2"]) == 0
        rep = json.loads((tmp_path / "out" / "convergence.json").read_text())
        assert rep["n_max_list"] == [1, 2]
        assert rep["converged"] is True  # blockaded volume
