"""Dense Lindblad master-equation integrator on the full 2^N space.

This is the exactness oracle for the trajectory engine: no truncation, no
pruning, straightforward RK4 on the density matrix with Hermiticity restored
by symmetrization each step.  It is limited to N <= 10 atoms.

The right-hand side

    d rho/dt = -i [H, rho]
             + sum_j gamma_r (s_gr^j rho s_rg^j - 1/2 {s_rr^j, rho})
             + sum_j gamma_z (s_z^j rho s_z^j - rho)

is evaluated through the bit structure of the operators (permutations and
elementwise masks) rather than dense matrix products; the literal
dense-operator formula is kept as ``lindblad_rhs_reference`` and the two are
checked against each other in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import CapacityError
from .lattice import InteractionMatrix, PhysicalParams
from .mcwf import RunOptions, run_ensemble
from .observables import DensityMatrix, trace_distance

__all__ = [
    "LindbladModel",
    "build_lindblad_model",
    "lindblad_rhs",
    "lindblad_rhs_reference",
    "integrate_master_equation",
    "steady_state",
    "mean_excitations_dense",
    "compare_with_trajectories",
    "ORACLE_MAX_ATOMS",
]

ORACLE_MAX_ATOMS = 10


@dataclass
class LindbladModel:
    """Dense Hamiltonian and the 2N jump operators, plus bit-structure caches."""

    n_atoms: int
    params: PhysicalParams
    hamiltonian: np.ndarray
    jump_ops: list[np.ndarray]
    diag_energy: np.ndarray = field(repr=False)
    n_exc: np.ndarray = field(repr=False)
    flip_perms: np.ndarray = field(repr=False)
    bit_set: np.ndarray = field(repr=False)
    ham_xor: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return 1 << self.n_atoms


def build_lindblad_model(delta, params: PhysicalParams) -> LindbladModel:
    """Assemble the dense model for the interaction matrix ``delta``."""
    delta_arr = delta.delta if isinstance(delta, InteractionMatrix) else np.asarray(delta, float)
    n = delta_arr.shape[0]
    if n > ORACLE_MAX_ATOMS:
        raise CapacityError(
            f"dense oracle limited to {ORACLE_MAX_ATOMS} atoms, got {n} "
            f"(needs {(1 << (2 * n)) * 16} bytes per matrix)"
        )
    dim = 1 << n
    s = np.arange(dim, dtype=np.uint64)
    shifts = np.arange(n, dtype=np.uint64)
    bit_set = ((s[:, None] >> shifts[None, :]) & np.uint64(1)).astype(float)
    n_exc = bit_set.sum(axis=1)
    diag_energy = 0.5 * np.einsum("ij,jk,ik->i", bit_set, delta_arr, bit_set)

    ham = np.diag(diag_energy).astype(np.complex128)
    flip_perms = np.empty((n, dim), dtype=np.int64)
    idx = np.arange(dim)
    for j in range(n):
        flip_perms[j] = idx ^ (1 << j)
        ham[idx, flip_perms[j]] += -params.omega

    jump_ops = []
    sqrt_gr = math.sqrt(params.gamma_r)
    for j in range(n):
        op = np.zeros((dim, dim), dtype=np.complex128)
        has = bit_set[:, j] > 0.5
        src = idx[has]
        op[src ^ (1 << j), src] = sqrt_gr
        jump_ops.append(op)
    sqrt_gz = math.sqrt(params.gamma_z)
    for j in range(n):
        sign = np.where(bit_set[:, j] > 0.5, 1.0, -1.0)
        jump_ops.append(np.diag(sqrt_gz * sign).astype(np.complex128))

    xor = s[:, None] ^ s[None, :]
    ham_xor = np.bitwise_count(xor).astype(float)
    return LindbladModel(
        n_atoms=n,
        params=params,
        hamiltonian=ham,
        jump_ops=jump_ops,
        diag_energy=diag_energy,
        n_exc=n_exc,
        flip_perms=flip_perms,
        bit_set=bit_set,
        ham_xor=ham_xor,
    )


def lindblad_rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Right-hand side of the master equation (structure-exploiting form)."""
    p = model.params
    # H rho and rho H through the diagonal plus bit-flip structure
    h_rho = model.diag_energy[:, None] * rho
    rho_h = rho * model.diag_energy[None, :]
    for j in range(model.n_atoms):
        perm = model.flip_perms[j]
        h_rho -= p.omega * rho[perm, :]
        rho_h -= p.omega * rho[:, perm]
    out = -1j * (h_rho - rho_h)
    if p.gamma_r > 0:
        out -= (0.5 * p.gamma_r) * (model.n_exc[:, None] + model.n_exc[None, :]) * rho
        for j in range(model.n_atoms):
            perm = model.flip_perms[j]
            b0 = 1.0 - model.bit_set[:, j]
            out += (p.gamma_r * b0[:, None] * b0[None, :]) * rho[perm][:, perm]
    if p.gamma_z > 0:
        out -= (2.0 * p.gamma_z) * model.ham_xor * rho
    return out


def lindblad_rhs_reference(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Literal dense-operator evaluation, kept as the oracle's own oracle."""
    h = model.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for op in model.jump_ops:
        opd = op.conj().T
        out += op @ rho @ opd - 0.5 * (opd @ op @ rho + rho @ opd @ op)
    return out


def _dt_bound(model: LindbladModel, dt_factor: float) -> float:
    scale = float(np.abs(model.diag_energy).max()) + model.n_atoms * abs(
        model.params.omega
    )
    if scale == 0.0:
        return math.inf
    return dt_factor / scale


def integrate_master_equation(
    model: LindbladModel,
    rho0: np.ndarray,
    t_grid,
    dt_factor: float = 0.05,
) -> list[DensityMatrix]:
    """Fixed-step RK4 integration, one output per grid time.

    The step obeys ``dt <= dt_factor / ||H||``; Hermiticity is restored by
    symmetrization after every step, the trace is left untouched (the
    Lindblad form conserves it identically).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be non-empty and strictly increasing")
    rho = np.array(rho0, dtype=np.complex128, copy=True)
    if rho.shape != (model.dim, model.dim):
        raise ValueError("rho0 has the wrong shape")
    dt_target = _dt_bound(model, dt_factor)
    out = []
    t_prev = 0.0
    for t in t_grid:
        span = t - t_prev
        if span > 1e-15:
            n_sub = max(1, math.ceil(span / dt_target - 1e-9))
            dt = span / n_sub
            for _ in range(n_sub):
                k1 = lindblad_rhs(model, rho)
                k2 = lindblad_rhs(model, rho + (0.5 * dt) * k1)
                k3 = lindblad_rhs(model, rho + (0.5 * dt) * k2)
                k4 = lindblad_rhs(model, rho + dt * k3)
                rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                rho = 0.5 * (rho + rho.conj().T)
        out.append(DensityMatrix(rho.copy()))
        t_prev = t
    return out


def ground_density_matrix(model: LindbladModel) -> np.ndarray:
    rho = np.zeros((model.dim, model.dim), dtype=np.complex128)
    rho[0, 0] = 1.0
    return rho


def steady_state(model: LindbladModel, t_final: float = 60.0) -> DensityMatrix:
    """Steady state by long integration from the ground state (one code
    path, no null-space solve)."""
    return integrate_master_equation(model, ground_density_matrix(model), [t_final])[-1]


def mean_excitations_dense(model: LindbladModel, rho: np.ndarray) -> float:
    return float((model.n_exc * rho.diagonal().real).sum())


# ---------------------------------------------------------------------------
# trajectory engine vs oracle


@dataclass(frozen=True)
class EngineComparison:
    sample_times: np.ndarray
    trace_distances: np.ndarray
    stat_errors: np.ndarray
    max_observable_dev: float
    n_traj: int
    passed: bool


def _bootstrap_scale(group_sums, sizes, rho_mean, rng, n_boot: int) -> float:
    """RMS trace distance between group-bootstrap means and the full mean."""
    g = len(sizes)
    acc = 0.0
    for _ in range(n_boot):
        pick = rng.integers(0, g, size=g)
        rho_b = group_sums[pick].sum(axis=0) / sizes[pick].sum()
        acc += trace_distance(DensityMatrix(rho_b), DensityMatrix(rho_mean)) ** 2
    return math.sqrt(acc / n_boot)


def compare_with_trajectories(
    delta,
    params: PhysicalParams,
    sample_times,
    n_traj: int,
    master_seed: int,
    options: RunOptions | None = None,
    n_groups: int = 32,
    n_boot: int = 100,
    sigma_factor: float = 3.0,
) -> EngineComparison:
    """Run the dense oracle and the trajectory engine on identical physics.

    Passes when the trace distance between the trajectory-averaged and the
    oracle density matrix stays below ``sigma_factor`` times the bootstrap
    statistical scale at every sample time.
    """
    from .dynamics import build_effective_hamiltonian
    from .hilbert import build_basis

    delta_arr = delta.delta if isinstance(delta, InteractionMatrix) else np.asarray(delta, float)
    n = delta_arr.shape[0]
    model = build_lindblad_model(delta_arr, params)
    oracle_rhos = integrate_master_equation(
        model, ground_density_matrix(model), sample_times
    )

    basis = build_basis(n, n, prune=None)
    h = build_effective_hamiltonian(basis, delta_arr, params)
    opts = options or RunOptions()
    opts = RunOptions(
        scheme=opts.scheme,
        stability_factor=opts.stability_factor,
        dt=opts.dt,
        rho_samples=True,
        n_groups=min(n_groups, n_traj),
    )
    acc = run_ensemble(h, params, sample_times, n_traj, master_seed, opts)

    # permutation from the excitation-ordered basis to plain bit order
    perm = basis.bits.astype(np.int64)
    rng = np.random.Generator(np.random.Philox(key=np.array([master_seed, 1], np.uint64)))
    times = np.asarray(sample_times, dtype=float)
    dists = np.empty(times.size)
    errs = np.empty(times.size)
    max_dev = 0.0
    for i, t in enumerate(times):
        rho_traj_basis = acc.rho(t)
        rho_traj = np.zeros_like(rho_traj_basis)
        rho_traj[np.ix_(perm, perm)] = rho_traj_basis
        rho_oracle = oracle_rhos[i].elements
        dists[i] = trace_distance(DensityMatrix(rho_traj), DensityMatrix(rho_oracle))
        group_sums, sizes = acc.rho_group_sums(t)
        gs = np.zeros_like(group_sums)
        gs[:, perm[:, None], perm[None, :]] = group_sums
        errs[i] = _bootstrap_scale(gs, sizes, rho_traj, rng, n_boot)
        dev = abs(
            mean_excitations_dense(model, rho_traj)
            - mean_excitations_dense(model, rho_oracle)
        )
        max_dev = max(max_dev, dev)
    passed = bool(np.all(dists <= sigma_factor * errs + 1e-12))
    return EngineComparison(times, dists, errs, max_dev, n_traj, passed)
