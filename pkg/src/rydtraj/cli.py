"""Configuration parsing, run orchestration, and plot-ready data emission.

Configs are JSON files with nested sections (``params``, ``geometry``,
``truncation``, ``run``, ``outputs``); unknown keys are hard errors.  All
rates are in units of the Rabi frequency (``units: "omega"``, the default)
or in rad/s (``units: "si"``); internally everything runs at omega = 1 with
time in 1/omega.  Lengths are micrometers or multiples of the blockade
distance, chosen by ``geometry.length_unit``.

Subcommands: ``dynamics``, ``steady``, ``sweep``, ``oracle-compare``,
``convergence``, ``info``.  Every artifact directory is self-describing:
``manifest.json`` echoes the fully resolved configuration, and re-running
from that echo reproduces bit-identical CSVs.  Exit codes: 0 success,
2 config error, 3 capacity error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import build_effective_hamiltonian
from .hilbert import BasisSet, CapacityError, PruneRule, build_basis
from .lattice import (
    AtomGeometry,
    DerivedScales,
    PhysicalParams,
    build_disk_lattice,
    derived_scales,
    geometry_from_positions,
    interaction_matrix,
    spacing_for_target_n,
)
from .mcwf import RunOptions, convergence_check, run_ensemble, run_trajectory
from .observables import (
    ConfigurationDistribution,
    DensityMatrix,
    ExcitationDistribution,
    classical_projection,
    distribution_to_json,
    kolmogorov_distance,
    mandel_q,
    poisson_pmf,
    trace_distance,
    write_observables_csv,
)

__all__ = ["ConfigError", "RunConfig", "parse_config", "main"]

CSV_SCHEMA = 1
RNG_SPEC = {
    "algorithm": "philox4x64",
    "seeding": "splitmix64(master_seed, trajectory_index)",
}


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_DEFAULTS = {
    "units": "omega",
    "params": {
        "omega": 1.0,
        "gamma_r": 0.075,
        "gamma_z": 0.3,
        # c6 such that d_b = (c6 / w)**(1/6) = 5.58 um at the default rates
        # (c6 / 2 pi = 15 GHz um^6 against omega / 2 pi = 85 kHz)
        "c6": 15e9 / 85e3,
    },
    "geometry": {
        "length_unit": "d_b",
        "diameter": None,
        "spacing": None,
        "target_n": None,
        "center_mode": "site",
        "positions": None,
    },
    "truncation": {
        "n_max": 3,
        "delta_cut": 100.0,  # in units of the linewidth w; null disables pruning
        "max_bytes": 2 * 1024**3,
    },
    "run": {
        "t_end": 60.0,
        "n_samples": 241,
        "n_traj": 200,
        "master_seed": 1234,
        "burn_in": 40.0,
        "t_steady": 400.0,
        "scheme": "rk4",
        "stability_factor": 0.1,
        "dt": None,
        "batch_size": None,
        "n_workers": 1,
    },
    "outputs": {
        "directory": "out",
        "observables": ["n_mean", "p_r", "q"],
        "density_matrix": False,
        "steady_reference": None,
    },
}

_KNOWN_OBSERVABLES = {"n_mean", "p_r", "q", "configurations"}


def _merge_with_defaults(user: dict) -> dict:
    """Overlay the user config on the defaults, rejecting unknown keys."""
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    merged = copy.deepcopy(_DEFAULTS)
    for section, content in user.items():
        if section not in merged:
            raise ConfigError(f"unknown config key: {section}")
        if section == "units":
            merged[section] = content
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in content.items():
            if key not in merged[section]:
                raise ConfigError(f"unknown config key: {section}.{key}")
            merged[section][key] = value
    return merged


@dataclass
class RunConfig:
    """Fully resolved run configuration (omega = 1 internal units)."""

    params: PhysicalParams
    geometry: AtomGeometry
    derived: DerivedScales | None
    n_max: int
    delta_cut: float | None  # absolute (omega) units
    t_end: float
    n_samples: int
    n_traj: int
    master_seed: int
    burn_in: float
    t_steady: float
    scheme: str
    stability_factor: float
    dt: float | None
    batch_size: int | None
    n_workers: int
    out_dir: Path
    observables: list[str]
    density_matrix: bool
    steady_reference: Path | None
    resolved: dict
    original: dict

    def build_basis(self) -> BasisSet:
        delta = interaction_matrix(self.geometry, self.params)
        prune = (
            PruneRule(delta.delta, self.delta_cut)
            if self.delta_cut is not None
            else None
        )
        basis = build_basis(self.geometry.n_atoms, self.n_max, prune=prune)
        return basis

    def build_hamiltonian(self, basis: BasisSet):
        delta = interaction_matrix(self.geometry, self.params)
        return build_effective_hamiltonian(basis, delta, self.params)

    def run_options(self, **overrides) -> RunOptions:
        base = dict(
            scheme=self.scheme,
            stability_factor=self.stability_factor,
            dt=self.dt,
        )
        base.update(overrides)
        return RunOptions(**base)


def _positive(value, name, strict=True):
    if value is None or (strict and not value > 0) or (not strict and value < 0):
        raise ConfigError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value}")
    return value


def _resolve(merged: dict) -> RunConfig:
    units = merged["units"]
    if units not in ("omega", "si"):
        raise ConfigError(f"units must be 'omega' or 'si', got {units!r}")
    praw = merged["params"]
    scale = float(praw["omega"]) if units == "si" else 1.0
    if units == "si" and not scale > 0:
        raise ConfigError("params.omega must be positive")
    try:
        params = PhysicalParams(
            omega=float(praw["omega"]) / scale,
            gamma_r=float(praw["gamma_r"]) / scale,
            gamma_z=float(praw["gamma_z"]) / scale,
            c6=float(praw["c6"]) / scale,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid params: {exc}") from exc

    try:
        derived = derived_scales(params)
    except ValueError:
        derived = None

    g = merged["geometry"]
    if g["center_mode"] not in ("site", "plaquette"):
        raise ConfigError(f"unknown center_mode {g['center_mode']!r}")
    if g["length_unit"] not in ("d_b", "um"):
        raise ConfigError(f"unknown length_unit {g['length_unit']!r}")
    if g["length_unit"] == "d_b":
        if derived is None:
            raise ValueError(
                "lengths in units of d_b require gamma_r > 0 (linewidth defined)"
            )
        length_scale = derived.blockade_dist
    else:
        length_scale = 1.0

    if g["positions"] is not None:
        pos = np.asarray(g["positions"], dtype=float) * length_scale
        geometry = geometry_from_positions(pos)
    else:
        if g["diameter"] is None:
            raise ConfigError("geometry needs either positions or a diameter")
        diameter = float(g["diameter"]) * length_scale
        _positive(diameter, "geometry.diameter")
        if g["spacing"] is not None:
            spacing = float(g["spacing"]) * length_scale
        elif g["target_n"] is not None:
            spacing = spacing_for_target_n(
                diameter, int(g["target_n"]), g["center_mode"]
            )
        else:
            raise ConfigError("geometry needs a spacing or a target_n")
        geometry = build_disk_lattice(spacing, diameter, g["center_mode"])
        if g["target_n"] is not None and geometry.n_atoms != int(g["target_n"]):
            raise ConfigError(
                f"geometry produced N = {geometry.n_atoms}, not the requested "
                f"{g['target_n']}"
            )

    t = merged["truncation"]
    n_max = int(t["n_max"])
    if not 1 <= n_max <= geometry.n_atoms:
        raise ConfigError(
            f"truncation.n_max must be in [1, {geometry.n_atoms}], got {n_max}"
        )
    if t["delta_cut"] is not None:
        if derived is None:
            raise ValueError("delta_cut in units of w requires gamma_r > 0")
        delta_cut = float(t["delta_cut"]) * derived.linewidth
        _positive(delta_cut, "truncation.delta_cut")
    else:
        delta_cut = None

    r = merged["run"]
    t_end = _positive(float(r["t_end"]), "run.t_end")
    n_samples = int(r["n_samples"])
    if n_samples < 2:
        raise ConfigError("run.n_samples must be at least 2")
    n_traj = int(r["n_traj"])
    if n_traj < 1:
        raise ConfigError("run.n_traj must be at least 1")
    burn_in = float(r["burn_in"])
    t_steady = _positive(float(r["t_steady"]), "run.t_steady")
    if r["scheme"] not in ("rk4", "ifrk4"):
        raise ConfigError(f"unknown scheme {r['scheme']!r}")
    if burn_in < 0:
        raise ConfigError("run.burn_in must be non-negative")

    o = merged["outputs"]
    unknown_obs = set(o["observables"]) - _KNOWN_OBSERVABLES
    if unknown_obs:
        raise ConfigError(f"unknown observables: {sorted(unknown_obs)}")

    resolved = copy.deepcopy(merged)
    resolved["units"] = "omega"
    resolved["params"] = {
        "omega": params.omega,
        "gamma_r": params.gamma_r,
        "gamma_z": params.gamma_z,
        "c6": params.c6,
    }
    resolved["geometry"] = {
        "length_unit": "um",
        "diameter": geometry.diameter,
        "spacing": geometry.spacing,
        "target_n": None,
        "center_mode": g["center_mode"],
        "positions": geometry.positions.tolist(),
    }
    resolved["truncation"]["n_max"] = n_max
    resolved["truncation"]["delta_cut"] = (
        None if delta_cut is None else delta_cut / derived.linewidth
    )

    return RunConfig(
        params=params,
        geometry=geometry,
        derived=derived,
        n_max=n_max,
        delta_cut=delta_cut,
        t_end=t_end,
        n_samples=n_samples,
        n_traj=n_traj,
        master_seed=int(r["master_seed"]),
        burn_in=burn_in,
        t_steady=t_steady,
        scheme=r["scheme"],
        stability_factor=float(r["stability_factor"]),
        dt=None if r["dt"] is None else float(r["dt"]),
        batch_size=None if r["batch_size"] is None else int(r["batch_size"]),
        n_workers=int(r["n_workers"]),
        out_dir=Path(o["directory"]),
        observables=list(o["observables"]),
        density_matrix=bool(o["density_matrix"]),
        steady_reference=(
            Path(o["steady_reference"]) if o["steady_reference"] else None
        ),
        resolved=resolved,
        original=merged,
    )


def parse_config(path) -> RunConfig:
    """Load, validate, and resolve a JSON run configuration."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return _resolve(_merge_with_defaults(user))


# ---------------------------------------------------------------------------
# artifacts


def _write_manifest(cfg: RunConfig, out_dir: Path, extra: dict, wall: float):
    manifest = {
        "config": cfg.resolved,
        "derived": (
            {
                "gamma_rg": cfg.derived.gamma_rg,
                "linewidth": cfg.derived.linewidth,
                "blockade_distance": cfg.derived.blockade_dist,
                "linewidth_valid": cfg.derived.linewidth_valid,
            }
            if cfg.derived is not None
            else None
        ),
        "geometry": {"n_atoms": cfg.geometry.n_atoms},
        "rng": RNG_SPEC,
        "version": __version__,
        "csv_schema": CSV_SCHEMA,
        "wall_time_s": wall,
    }
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )


def _q_series(pr: np.ndarray) -> np.ndarray:
    out = np.full(pr.shape[0], np.nan)
    n = np.arange(pr.shape[1], dtype=float)
    for i, row in enumerate(pr):
        mean = float(n @ row)
        if mean > 1e-12:
            mean2 = float((n**2) @ row)
            out[i] = (mean2 - mean**2) / mean - 1.0
    return out


def _load_reference_configs(path: Path) -> dict[int, float]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): float(v) for k, v in payload.items()}


def _dp_series(acc, basis, reference: dict[int, float]) -> np.ndarray:
    ref_bits = np.array(sorted(reference), dtype=np.uint64)
    ref = ConfigurationDistribution(
        ref_bits, np.array([reference[int(b)] for b in ref_bits])
    )
    out = np.empty(len(acc.sample_times))
    for i, t in enumerate(acc.sample_times):
        cur = ConfigurationDistribution(basis.bits, acc.config_probs(t))
        out[i] = kolmogorov_distance(cur, ref)
    return out


def cmd_info(cfg: RunConfig) -> int:
    print(f"atoms: {cfg.geometry.n_atoms}")
    print(f"spacing: {cfg.geometry.spacing:.6g}")
    print(f"diameter: {cfg.geometry.diameter:.6g}")
    if cfg.derived is not None:
        print(f"gamma_rg: {cfg.derived.gamma_rg:.6g}")
        print(f"linewidth w: {cfg.derived.linewidth:.6g}")
        print(f"blockade distance d_b: {cfg.derived.blockade_dist:.6g}")
        print(f"linewidth valid: {cfg.derived.linewidth_valid}")
        print(f"diameter / d_b: {cfg.geometry.diameter / cfg.derived.blockade_dist:.6g}")
    basis = cfg.build_basis()
    print(f"basis dimension (n_max = {cfg.n_max}): {basis.dim}")
    print(f"pruned configurations: {len(basis.pruned)}")
    return 0


def cmd_dynamics(cfg: RunConfig) -> int:
    start = time.time()
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    basis = cfg.build_basis()
    h = cfg.build_hamiltonian(basis)
    want_configs = "configurations" in cfg.observables or cfg.steady_reference
    opts = cfg.run_options(collect_configs=bool(want_configs))
    times = np.linspace(0.0, cfg.t_end, cfg.n_samples)
    acc = run_ensemble(
        h,
        cfg.params,
        times,
        cfg.n_traj,
        cfg.master_seed,
        opts,
        batch_size=cfg.batch_size,
        n_workers=cfg.n_workers,
    )
    pr = acc.p_r()
    columns = {
        "n_mean": acc.n_mean(),
        "n_stderr": acc.n_stderr(),
        "q": _q_series(pr),
    }
    for k in range(pr.shape[1]):
        columns[f"p_{k}"] = pr[:, k]
    if cfg.steady_reference is not None:
        reference = _load_reference_configs(cfg.steady_reference)
        columns["d_p"] = _dp_series(acc, basis, reference)
    write_observables_csv(out_dir / "observables.csv", times, columns)

    dists = {
        "p_r_final": json.loads(
            distribution_to_json(ExcitationDistribution(pr[-1]))
        )
    }
    if want_configs:
        final = ConfigurationDistribution(
            basis.bits, acc.config_probs(float(times[-1]))
        )
        dists["configurations_final"] = json.loads(distribution_to_json(final))
    (out_dir / "distributions.json").write_text(
        json.dumps(dists, indent=2), encoding="utf-8"
    )
    _write_manifest(
        cfg,
        out_dir,
        {"command": "dynamics", "basis_dim": basis.dim},
        time.time() - start,
    )
    print(f"dynamics: N={cfg.geometry.n_atoms} dim={basis.dim} -> {out_dir}")
    return 0


def _steady_quantities(cfg: RunConfig, basis, h):
    """Long single-trajectory time average plus ensemble tail average."""
    ds = cfg.t_end / (cfg.n_samples - 1)
    n_steady = int(math.ceil(cfg.t_steady / ds)) + 1
    steady_times = np.linspace(0.0, cfg.t_steady, n_steady)
    use_rho = cfg.density_matrix and basis.dim <= 4096
    traj_opts = cfg.run_options(
        tail_from=cfg.burn_in,
        collect_configs=False,
        tail_configs=True,
        tail_rho=use_rho,
    )
    from .mcwf import EnsembleAccumulator, derive_seed, _run_batch

    traj_acc = EnsembleAccumulator.create(steady_times, basis, 1, traj_opts)
    from .mcwf import _BatchRun

    runner = _BatchRun(
        h, cfg.params, steady_times, [derive_seed(cfg.master_seed, 0)], 0,
        traj_acc, traj_opts,
    )
    runner.run()
    traj_acc.n_traj = 1

    ens_opts = cfg.run_options(tail_from=min(cfg.burn_in, 0.5 * cfg.t_end))
    times = np.linspace(0.0, cfg.t_end, cfg.n_samples)
    ens_acc = run_ensemble(
        h,
        cfg.params,
        times,
        cfg.n_traj,
        cfg.master_seed + 1,
        ens_opts,
        batch_size=cfg.batch_size,
        n_workers=cfg.n_workers,
    )
    return traj_acc, ens_acc, use_rho


def cmd_steady(cfg: RunConfig) -> int:
    start = time.time()
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    basis = cfg.build_basis()
    h = cfg.build_hamiltonian(basis)
    traj_acc, ens_acc, use_rho = _steady_quantities(cfg, basis, h)

    pr = traj_acc.tail_pr_mean()
    n_time_avg = float(traj_acc.tail_n_means()[0])
    tails = ens_acc.tail_n_means()
    n_ens = float(tails.mean())
    n_ens_err = float(tails.std(ddof=1) / math.sqrt(len(tails))) if len(tails) > 1 else float("nan")
    q = mandel_q(ExcitationDistribution(pr)) if pr[1:].sum() > 1e-12 else float("nan")

    payload = {
        "n_atoms": cfg.geometry.n_atoms,
        "basis_dim": basis.dim,
        "n_mean_time_avg": n_time_avg,
        "n_mean_ensemble": n_ens,
        "n_stderr_ensemble": n_ens_err,
        "q": q,
        "p_r": pr.tolist(),
    }
    d_rho = None
    if use_rho:
        rho = DensityMatrix(traj_acc.tail_rho())
        d_rho = trace_distance(rho, classical_projection(rho))
        payload["d_rho_classical"] = d_rho
    (out_dir / "steady.json").write_text(
        json.dumps(payload, indent=2), encoding="utf-8"
    )

    with open(out_dir / "p_r.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("n,p,poisson\n")
        mean = max(float(np.arange(pr.size) @ pr), 1e-300)
        ref = poisson_pmf(mean, pr.size - 1)
        for n, (p_val, r_val) in enumerate(zip(pr, ref)):
            fh.write(f"{n},{p_val:.17g},{r_val:.17g}\n")

    steady_configs = traj_acc.tail_config_probs()
    dist = ConfigurationDistribution(basis.bits, steady_configs / steady_configs.sum())
    (out_dir / "configurations.json").write_text(
        distribution_to_json(dist), encoding="utf-8"
    )
    _write_manifest(
        cfg,
        out_dir,
        {"command": "steady", "basis_dim": basis.dim},
        time.time() - start,
    )
    print(
        f"steady: N={cfg.geometry.n_atoms} n_mean={n_time_avg:.4f} "
        f"(ensemble {n_ens:.4f} +- {n_ens_err:.4f}) q={q:.4f}"
        + (f" d_rho={d_rho:.4f}" if d_rho is not None else "")
    )
    return 0


def cmd_sweep(cfg: RunConfig, axis: str, values: list[float]) -> int:
    if axis not in ("n", "diameter", "gamma_z"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    if not values:
        print("sweep: empty value list, nothing to do", file=sys.stderr)
        return 0
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for v in values:
        # sweeps re-resolve from the original config so that d_b-relative
        # lengths stay consistent with the varied parameters
        sub = copy.deepcopy(cfg.original)
        sub["outputs"]["directory"] = str(out_dir / f"{axis}_{v:g}")
        if axis == "n":
            sub["geometry"]["positions"] = None
            sub["geometry"]["spacing"] = None
            sub["geometry"]["target_n"] = int(v)
            # fillings of the other parity need the other disk centering
            mode = sub["geometry"]["center_mode"]
            try:
                spacing_for_target_n(1.0, int(v), mode)
            except ValueError:
                other = "site" if mode == "plaquette" else "plaquette"
                spacing_for_target_n(1.0, int(v), other)  # may raise
                sub["geometry"]["center_mode"] = other
        elif axis == "diameter":
            sub["geometry"]["positions"] = None
            sub["geometry"]["spacing"] = None
            if sub["geometry"]["target_n"] is None:
                sub["geometry"]["target_n"] = cfg.geometry.n_atoms
            sub["geometry"]["diameter"] = v
        else:
            sub["params"]["gamma_z"] = v
        sub_cfg = _resolve(_merge_with_defaults(sub))
        cmd_steady(sub_cfg)
        steady = json.loads(
            (sub_cfg.out_dir / "steady.json").read_text(encoding="utf-8")
        )
        rows.append(
            (
                v,
                steady["n_atoms"],
                steady["basis_dim"],
                steady["n_mean_time_avg"],
                steady["n_mean_ensemble"],
                steady["n_stderr_ensemble"],
                steady["q"],
                steady.get("d_rho_classical", float("nan")),
            )
        )
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(
            f"{axis},n_atoms,basis_dim,n_mean_time_avg,n_mean_ensemble,"
            "n_stderr_ensemble,q,d_rho_classical\n"
        )
        for row in rows:
            fh.write(",".join(f"{x:.17g}" if isinstance(x, float) else str(x) for x in row) + "\n")
    print(f"sweep over {axis}: {len(rows)} runs -> {out_dir}")
    return 0


def cmd_oracle_compare(cfg: RunConfig) -> int:
    from .oracle import ORACLE_MAX_ATOMS, compare_with_trajectories

    start = time.time()
    n = cfg.geometry.n_atoms
    if n > ORACLE_MAX_ATOMS:
        raise CapacityError(
            f"oracle comparison limited to {ORACLE_MAX_ATOMS} atoms, got {n}"
        )
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    delta = interaction_matrix(cfg.geometry, cfg.params)
    n_samples = min(cfg.n_samples, 24)
    times = np.linspace(cfg.t_end / n_samples, cfg.t_end, n_samples)
    rep = compare_with_trajectories(
        delta,
        cfg.params,
        times,
        cfg.n_traj,
        cfg.master_seed,
        options=cfg.run_options(),
    )
    payload = {
        "times": rep.sample_times.tolist(),
        "trace_distance": rep.trace_distances.tolist(),
        "stat_error": rep.stat_errors.tolist(),
        "max_observable_dev": rep.max_observable_dev,
        "n_traj": rep.n_traj,
        "passed": rep.passed,
    }
    (out_dir / "oracle_compare.json").write_text(
        json.dumps(payload, indent=2), encoding="utf-8"
    )
    _write_manifest(
        cfg, out_dir, {"command": "oracle-compare"}, time.time() - start
    )
    print(
        f"oracle-compare: N={n} max D={rep.trace_distances.max():.4g} "
        f"max 3sigma={3 * rep.stat_errors.max():.4g} "
        f"{'PASS' if rep.passed else 'FAIL'}"
    )
    return 0


def cmd_convergence(cfg: RunConfig, n_max_list: list[int]) -> int:
    start = time.time()
    out_dir = cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    delta = interaction_matrix(cfg.geometry, cfg.params)
    times = np.linspace(0.0, cfg.t_end, cfg.n_samples)
    report = convergence_check(
        cfg.params,
        delta,
        cfg.geometry.n_atoms,
        times,
        n_max_list,
        cfg.n_traj,
        cfg.master_seed,
        delta_cut=cfg.delta_cut,
        options=cfg.run_options(),
    )
    payload = {
        "n_max_list": list(report.n_max_list),
        "dims": list(report.dims),
        "tolerance": report.tolerance,
        "converged": report.converged,
        "pairs": [
            {
                "n_max_low": p.n_max_low,
                "n_max_high": p.n_max_high,
                "max_n_diff": p.max_n_diff,
                "max_pr_distance": p.max_pr_distance,
                "converged": p.converged,
            }
            for p in report.pairs
        ],
    }
    (out_dir / "convergence.json").write_text(
        json.dumps(payload, indent=2), encoding="utf-8"
    )
    _write_manifest(
        cfg, out_dir, {"command": "convergence"}, time.time() - start
    )
    for p in report.pairs:
        print(
            f"n_max {p.n_max_low} -> {p.n_max_high}: max|d n|={p.max_n_diff:.4g} "
            f"max D_p(p_R)={p.max_pr_distance:.4g} "
            f"{'converged' if p.converged else 'NOT converged'}"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydtraj",
        description="Quantum-jump simulator for driven dissipative Rydberg lattices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("dynamics", "time-resolved ensemble observables"),
        ("steady", "steady state from a long trajectory plus ensemble tail"),
        ("sweep", "repeat steady runs along an axis"),
        ("oracle-compare", "validate against the dense master equation"),
        ("convergence", "truncation convergence report"),
        ("info", "print derived scales for a config"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("config", help="path to a JSON run configuration")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=["n", "diameter", "gamma_z"])
            p.add_argument(
                "--values",
                required=True,
                help="comma-separated axis values (empty string is a no-op)",
            )
        if name == "convergence":
            p.add_argument(
                "--n-max-list",
                required=True,
                help="comma-separated truncation levels, e.g. 2,3,4",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.command == "info":
            return cmd_info(cfg)
        if args.command == "dynamics":
            return cmd_dynamics(cfg)
        if args.command == "steady":
            return cmd_steady(cfg)
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v.strip()]
            return cmd_sweep(cfg, args.axis, values)
        if args.command == "oracle-compare":
            return cmd_oracle_compare(cfg)
        if args.command == "convergence":
            levels = [int(v) for v in args.n_max_list.split(",") if v.strip()]
            return cmd_convergence(cfg, levels)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
