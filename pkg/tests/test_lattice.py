import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydtraj.lattice import (
    AtomGeometry,
    PhysicalParams,
    blockade_distance,
    build_disk_lattice,
    derived_gamma_rg,
    derived_scales,
    excitation_linewidth,
    geometry_from_json,
    geometry_from_positions,
    geometry_to_json,
    interaction_matrix,
    spacing_for_target_n,
)

TWO_PI = 2.0 * math.pi
OMEGA_SI = TWO_PI * 85e3  # rad/s


def paper_params(gamma_z=0.3, c6_ghz=1.0):
    return PhysicalParams(
        omega=OMEGA_SI,
        gamma_r=0.075 * OMEGA_SI,
        gamma_z=gamma_z * OMEGA_SI,
        c6=TWO_PI * c6_ghz * 1e9,
    )


class TestDerivedScales:
    def test_gamma_rg_reference_rates(self):
        p = PhysicalParams(1.0, 0.075, 0.3, 1.0)
        assert derived_gamma_rg(p) == pytest.approx(0.6375)

    def test_gamma_rg_zero(self):
        # gamma_r = gamma_z = 0 handled through the formula directly
        assert 0.5 * 0.0 + 2.0 * 0.0 == 0.0
        p = PhysicalParams(1.0, 2.0, 0.0, 1.0)
        assert derived_gamma_rg(p) == pytest.approx(1.0)

    def test_linewidth_half_mhz(self):
        # 2 significant figures: w/2pi = 0.50 MHz
        w = excitation_linewidth(paper_params())
        assert abs(w / TWO_PI - 0.5e6) < 0.005e6

    def test_linewidth_no_dephasing(self):
        w = excitation_linewidth(paper_params(gamma_z=0.0))
        assert abs(w / TWO_PI - 120e3) < 5e3

    def test_linewidth_ratio_independent_of_scale(self):
        # gamma_r = 2 omega k with gamma_z = 0 gives w = sqrt(2) omega;
        # outside the validity regime (2 k^2 >= 1) a warning is attached
        for k in (0.1, 1.0, 7.0):
            p = PhysicalParams(1.0, 2.0 * k, 0.0, 1.0)
            if p.linewidth_valid:
                w = excitation_linewidth(p)
            else:
                with pytest.warns(UserWarning):
                    w = excitation_linewidth(p)
            assert w == pytest.approx(math.sqrt(2.0))

    def test_linewidth_requires_decay(self):
        p = PhysicalParams(1.0, 0.0, 0.3, 1.0)
        with pytest.raises(ValueError):
            excitation_linewidth(p)

    def test_validity_flag(self):
        assert paper_params().linewidth_valid
        slow = PhysicalParams(1.0, 10.0, 10.0, 1.0)
        assert not slow.linewidth_valid
        scales = derived_scales(paper_params())
        assert scales.linewidth_valid

    def test_blockade_distance_paper_range(self):
        # c6/2pi = 1 and 15 GHz um^6 bracket d_b = 3.5 - 5.6 um
        d_lo = blockade_distance(paper_params(c6_ghz=1.0))
        d_hi = blockade_distance(paper_params(c6_ghz=15.0))
        assert abs(d_lo - 3.5) < 0.06
        assert abs(d_hi - 5.6) < 0.05

    def test_blockade_distance_unity(self):
        p = PhysicalParams(1.0, 0.075, 0.3, 1.0)
        w = excitation_linewidth(p)
        p2 = PhysicalParams(1.0, 0.075, 0.3, w)
        assert blockade_distance(p2) == pytest.approx(1.0)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            PhysicalParams(0.0, 0.1, 0.1, 1.0)
        with pytest.raises(ValueError):
            PhysicalParams(1.0, -0.1, 0.1, 1.0)
        with pytest.raises(ValueError):
            PhysicalParams(1.0, 0.1, -0.1, 1.0)
        with pytest.raises(ValueError):
            PhysicalParams(1.0, 0.1, 0.1, 0.0)


class TestDiskLattice:
    def test_single_site_when_spacing_exceeds_diameter(self):
        g = build_disk_lattice(spacing=2.0, diameter=1.0, center_mode="site")
        assert g.n_atoms == 1
        np.testing.assert_allclose(g.positions, [[0.0, 0.0]])

    def test_site_count_at_half_diameter_spacing(self):
        # enumeration of i^2 + j^2 <= (d / (2a))^2 with a = d/2: radius 1 in
        # lattice units keeps the center and the four nearest sites
        g = build_disk_lattice(spacing=0.5, diameter=1.0, center_mode="site")
        assert g.n_atoms == 5

    def test_three_by_three(self):
        # 3x3 block requires the corners at sqrt(2) a inside the radius
        g = build_disk_lattice(spacing=0.35, diameter=1.0, center_mode="site")
        assert g.n_atoms == 9

    def test_plaquette_centered_four(self):
        g = build_disk_lattice(spacing=1.0, diameter=1.6, center_mode="plaquette")
        assert g.n_atoms == 4

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty"):
            build_disk_lattice(spacing=1.0, diameter=0.5, center_mode="plaquette")

    def test_disk_membership_invariant(self):
        g = build_disk_lattice(0.21, 2.0, "site")
        g.validate()
        r = np.linalg.norm(g.positions, axis=1)
        assert np.all(r <= 1.0 + 1e-12 * 2.0)

    def test_monotonicity_in_diameter(self):
        counts = [
            build_disk_lattice(0.3, d, "site").n_atoms
            for d in np.linspace(0.7, 4.0, 23)
        ]
        assert all(b >= a for a, b in zip(counts, counts[1:]))

    @pytest.mark.parametrize(
        "n,diam,mode",
        [
            (12, 1.0, "plaquette"),
            (21, math.sqrt(2.0), "site"),
            (37, 2.0, "site"),
            (9, 0.7, "site"),
            (16, 0.7, "plaquette"),
            (25, 0.7, "site"),
            (45, 0.7, "site"),
        ],
    )
    def test_spacing_sweep_hits_reported_fillings(self, n, diam, mode):
        a = spacing_for_target_n(diam, n, mode)
        g = build_disk_lattice(a, diam, mode)
        assert g.n_atoms == n

    def test_spacing_sweep_unachievable(self):
        with pytest.raises(ValueError, match="not achievable"):
            spacing_for_target_n(1.0, 6, "site")

    def test_explicit_positions_roundtrip(self):
        g = geometry_from_positions([[0.0, 0.0], [1.5, 0.0], [0.0, 2.0]])
        assert g.n_atoms == 3
        assert g.spacing == pytest.approx(1.5)
        text = geometry_to_json(g, "um")
        g2, unit = geometry_from_json(text)
        assert unit == "um"
        np.testing.assert_allclose(g2.positions, g.positions)
        assert g2.diameter == pytest.approx(g.diameter)

    def test_geometry_json_rejects_unknown_unit(self):
        g = geometry_from_positions([[0.0, 0.0]])
        with pytest.raises(ValueError):
            geometry_to_json(g, "furlong")


class TestInteractionMatrix:
    def test_two_atoms_at_blockade_distance(self):
        p = PhysicalParams(1.0, 0.075, 0.3, 1000.0)
        db = blockade_distance(p)
        w = excitation_linewidth(p)
        g = geometry_from_positions([[0.0, 0.0], [db, 0.0]])
        delta = interaction_matrix(g, p).delta
        assert delta[0, 1] == pytest.approx(w, rel=1e-12)
        assert delta[1, 0] == delta[0, 1]
        assert delta[0, 0] == 0.0

    def test_imperfect_blockade_ratio(self):
        # delta(0.7 d_b) / w = 0.7**-6 = 8.4999...
        p = PhysicalParams(1.0, 0.075, 0.3, 1000.0)
        db = blockade_distance(p)
        w = excitation_linewidth(p)
        g = geometry_from_positions([[0.0, 0.0], [0.7 * db, 0.0]])
        delta = interaction_matrix(g, p).delta
        assert delta[0, 1] / w == pytest.approx(0.7**-6, rel=1e-12)
        assert 8.4 < delta[0, 1] / w < 8.6

    def test_single_atom(self):
        p = PhysicalParams(1.0, 0.075, 0.3, 1.0)
        g = geometry_from_positions([[0.3, -0.2]])
        delta = interaction_matrix(g, p).delta
        assert delta.shape == (1, 1)
        assert delta[0, 0] == 0.0

    def test_coincident_atoms_raise(self):
        p = PhysicalParams(1.0, 0.075, 0.3, 1.0)
        g = AtomGeometry(np.array([[0.0, 0.0], [0.0, 0.0]]), 1.0, 1.0, 2)
        with pytest.raises(ValueError, match="coincident|singular"):
            interaction_matrix(g, p)

    @given(scale=st.floats(0.2, 5.0))
    @settings(max_examples=25, deadline=None)
    def test_distance_scaling(self, scale):
        # rescaling all positions by s multiplies every shift by s**-6
        p = PhysicalParams(1.0, 0.075, 0.3, 7.0)
        base = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.2]])
        d1 = interaction_matrix(geometry_from_positions(base), p).delta
        d2 = interaction_matrix(geometry_from_positions(scale * base), p).delta
        off = ~np.eye(3, dtype=bool)
        np.testing.assert_allclose(d2[off], d1[off] * scale**-6.0, rtol=1e-12)
