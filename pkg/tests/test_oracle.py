import itertools
import math

import numpy as np
import pytest

from rydtraj.hilbert import CapacityError
from rydtraj.lattice import PhysicalParams
from rydtraj.oracle import (
    build_lindblad_model,
    ground_density_matrix,
    integrate_master_equation,
    lindblad_rhs,
    lindblad_rhs_reference,
    mean_excitations_dense,
    steady_state,
)


def random_delta(n, rng, scale=5.0):
    d = np.zeros((n, n))
    for i, j in itertools.combinations(range(n), 2):
        d[i, j] = d[j, i] = scale * rng.uniform(0.2, 1.0)
    return d


def random_density_matrix(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / rho.trace()


class TestModel:
    def test_hamiltonian_hermitian(self, rng):
        p = PhysicalParams(1.2, 0.1, 0.2, 1.0)
        m = build_lindblad_model(random_delta(4, rng), p)
        h = m.hamiltonian
        assert np.abs(h - h.conj().T).max() < 1e-12

    def test_jump_op_structure(self, rng):
        p = PhysicalParams(1.0, 0.36, 0.49, 1.0)
        n = 3
        m = build_lindblad_model(random_delta(n, rng), p)
        assert len(m.jump_ops) == 2 * n
        for j in range(n):
            op = m.jump_ops[j]
            nz = np.nonzero(op)
            assert nz[0].size == 2 ** (n - 1)
            np.testing.assert_allclose(op[nz], math.sqrt(0.36))
        for j in range(n, 2 * n):
            op = m.jump_ops[j]
            assert np.abs(op - np.diag(op.diagonal())).max() == 0.0
            np.testing.assert_allclose(np.abs(op.diagonal()), math.sqrt(0.49))

    def test_capacity_cap(self):
        p = PhysicalParams(1.0, 0.1, 0.1, 1.0)
        with pytest.raises(CapacityError):
            build_lindblad_model(np.zeros((11, 11)), p)


class TestRhs:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_structured_equals_reference(self, n, rng):
        p = PhysicalParams(0.8, 0.23, 0.31, 1.0)
        m = build_lindblad_model(random_delta(n, rng), p)
        for _ in range(4):
            rho = random_density_matrix(1 << n, rng)
            a = lindblad_rhs(m, rho)
            b = lindblad_rhs_reference(m, rho)
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_ground_state_fixed_point_without_drive(self, rng):
        p0 = PhysicalParams(1e-12, 0.3, 0.2, 1.0)  # omega -> 0
        m = build_lindblad_model(random_delta(3, rng), p0)
        rhs = lindblad_rhs(m, ground_density_matrix(m))
        assert np.abs(rhs).max() < 1e-11

    def test_trace_free(self, rng):
        p = PhysicalParams(1.1, 0.4, 0.17, 1.0)
        m = build_lindblad_model(random_delta(3, rng), p)
        for _ in range(4):
            rho = random_density_matrix(8, rng)
            assert abs(lindblad_rhs(m, rho).trace()) < 1e-12

    def test_pure_commutator_without_dissipation(self, rng):
        p = PhysicalParams(1.0, 0.0, 0.0, 1.0)
        m = build_lindblad_model(random_delta(2, rng), p)
        rho = random_density_matrix(4, rng)
        h = m.hamiltonian
        np.testing.assert_allclose(
            lindblad_rhs(m, rho), -1j * (h @ rho - rho @ h), atol=1e-13
        )


class TestIntegration:
    def test_trace_conserved(self, rng):
        p = PhysicalParams(1.0, 0.2, 0.3, 1.0)
        m = build_lindblad_model(random_delta(3, rng), p)
        rhos = integrate_master_equation(
            m, ground_density_matrix(m), np.linspace(0.5, 8.0, 6)
        )
        for dm in rhos:
            assert abs(dm.elements.trace().real - 1.0) < 1e-9
            dm.validate(check_psd=True)

    def test_purity_conserved_without_dissipation(self, rng):
        p = PhysicalParams(1.0, 0.0, 0.0, 1.0)
        m = build_lindblad_model(random_delta(2, rng), p)
        rhos = integrate_master_equation(m, ground_density_matrix(m), [3.0])
        purity = (rhos[0].elements @ rhos[0].elements).trace().real
        assert purity == pytest.approx(1.0, abs=1e-8)

    def test_single_atom_bloch_steady_state(self):
        # resonant two-level steady state: rho_rr = 2 omega^2 /
        # (gamma_r * gamma_rg + 4 omega^2)
        p = PhysicalParams(1.0, 0.075, 0.3, 1.0)
        m = build_lindblad_model(np.zeros((1, 1)), p)
        rho = steady_state(m, t_final=80.0)
        gamma_rg = 0.5 * 0.075 + 2 * 0.3
        expected = 2.0 / (0.075 * gamma_rg + 4.0)
        assert rho.elements[1, 1].real == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(0.494, abs=5e-4)

    def test_independent_atoms_rabi(self):
        # two atoms far apart, no dissipation: <n_R>(t) = 2 sin^2(t)
        p = PhysicalParams(1.0, 0.0, 0.0, 1.0)
        delta = np.array([[0.0, 1e-9], [1e-9, 0.0]])
        m = build_lindblad_model(delta, p)
        ts = [0.3, 0.7, 1.1]
        rhos = integrate_master_equation(m, ground_density_matrix(m), ts)
        for t, dm in zip(ts, rhos):
            n = mean_excitations_dense(m, dm.elements)
            assert n == pytest.approx(2.0 * math.sin(t) ** 2, abs=1e-6)

    def test_blockaded_pair_collective_frequency(self):
        # strong blockade: oscillation at sqrt(2) omega between G and the
        # symmetric single-excitation state, exact as delta -> infinity
        p = PhysicalParams(1.0, 0.0, 0.0, 1.0)
        delta = np.array([[0.0, 2000.0], [2000.0, 0.0]])
        m = build_lindblad_model(delta, p)
        ts = np.linspace(0.2, 2.2, 9)
        rhos = integrate_master_equation(m, ground_density_matrix(m), ts)
        for t, dm in zip(ts, rhos):
            n = mean_excitations_dense(m, dm.elements)
            assert n == pytest.approx(math.sin(math.sqrt(2.0) * t) ** 2, abs=5e-3)

    def test_hermiticity_maintained(self, rng):
        p = PhysicalParams(1.0, 0.25, 0.15, 1.0)
        m = build_lindblad_model(random_delta(2, rng), p)
        rho = integrate_master_equation(m, random_density_matrix(4, rng), [2.0])[0]
        assert np.abs(rho.elements - rho.elements.conj().T).max() == 0.0
