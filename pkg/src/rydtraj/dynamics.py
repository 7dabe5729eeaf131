"""Matrix-free application and no-jump integration of the effective Hamiltonian.

The effective (non-Hermitian) Hamiltonian is diagonal in the configuration
basis except for the resonant drive, which couples every configuration to its
single-bit-flip partners:

    H_eff = diag(E_c - i/2 * (gamma_r * n_c + gamma_z * N)) - omega * A

where ``E_c`` is the summed pair shift of configuration ``c``, ``n_c`` its
excitation number, and ``A`` the flip adjacency restricted to the basis.
The no-jump Schroedinger equation ``d psi / dt = -i H_eff psi`` shrinks the
norm monotonically; the decay encodes the total jump probability.

Two fixed-step integrators are provided:

* ``rk4``    - classical Runge-Kutta on the full right-hand side; the step
  must satisfy ``dt <= stability_factor / max|diag|``.
* ``ifrk4``  - Runge-Kutta in the interaction picture of the diagonal part
  (Lawson scheme).  The diagonal, which dominates the stiffness in densely
  packed lattices, is integrated exactly; the step is limited only by the
  drive, ``dt <= stability_factor / (2 * omega * sqrt(N))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .hilbert import BasisSet, StateVector, config_energies
from .lattice import InteractionMatrix, PhysicalParams

__all__ = [
    "EffectiveHamiltonian",
    "build_effective_hamiltonian",
    "apply",
    "step_nojump",
    "Propagator",
    "dt_max",
]


@dataclass
class EffectiveHamiltonian:
    """Diagonal part plus drive structure of the non-Hermitian Hamiltonian."""

    basis: BasisSet
    diag: np.ndarray
    omega: float
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    max_abs_diag: float = 0.0

    def apply_batch(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """H_eff acting on a (dim, m) batch of column states."""
        if out is None:
            out = np.empty_like(psi)
        _kernels.h_apply(self.diag, self.omega, self.indptr, self.indices, psi, out)
        return out

    def drive_batch(self, psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Bare flip-partner sum (unit weights) on a batch."""
        if out is None:
            out = np.empty_like(psi)
        _kernels.gather_flips(self.indptr, self.indices, psi, out)
        return out


def build_effective_hamiltonian(
    basis: BasisSet, delta, params: PhysicalParams
) -> EffectiveHamiltonian:
    """Assemble diag and drive structure for a basis and interaction matrix."""
    delta_arr = delta.delta if isinstance(delta, InteractionMatrix) else np.asarray(delta, float)
    if delta_arr.shape != (basis.n_atoms, basis.n_atoms):
        raise ValueError(
            f"interaction matrix shape {delta_arr.shape} does not match "
            f"{basis.n_atoms} atoms"
        )
    energies = basis.energies
    if energies is None:
        energies = config_energies(basis.bits, delta_arr)
    n_exc = basis.n_exc.astype(float)
    diag = energies - 0.5j * (params.gamma_r * n_exc + params.gamma_z * basis.n_atoms)
    indptr, indices = basis.drive_adjacency()
    return EffectiveHamiltonian(
        basis=basis,
        diag=np.ascontiguousarray(diag, dtype=np.complex128),
        omega=float(params.omega),
        indptr=indptr,
        indices=indices,
        max_abs_diag=float(np.abs(diag).max()) if diag.size else 0.0,
    )


def apply(h: EffectiveHamiltonian, state: StateVector) -> StateVector:
    """Return H_eff |psi> (the Schroedinger right-hand side is -i times this)."""
    if state.basis is not h.basis:
        raise ValueError("state and Hamiltonian are built over different bases")
    out = h.apply_batch(state.amplitudes[:, None])[:, 0]
    return StateVector(out, state.basis)


def dt_max(h: EffectiveHamiltonian, stability_factor: float = 0.1) -> float:
    """Largest rk4 step honoring the diagonal stability rule."""
    if h.max_abs_diag == 0.0:
        return math.inf
    return stability_factor / h.max_abs_diag


def _rk4_batch(h: EffectiveHamiltonian, psi: np.ndarray, dt) -> np.ndarray:
    """One classical RK4 step of d psi/dt = -i H psi; dt scalar or per-column."""
    a1 = h.apply_batch(psi)
    a2 = h.apply_batch(psi - (0.5j * dt) * a1)
    a3 = h.apply_batch(psi - (0.5j * dt) * a2)
    a4 = h.apply_batch(psi - (1j * dt) * a3)
    return psi - (1j * dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)


def _ifrk4_batch(h: EffectiveHamiltonian, psi: np.ndarray, dt, phases=None) -> np.ndarray:
    """Lawson RK4: exact diagonal propagation, RK4 on the rotated drive."""
    if phases is None:
        d = h.diag[:, None] * dt  # (dim, m) when dt is per-column
        p = np.exp(-0.5j * d)
        pi = np.exp(0.5j * d)
        p2 = p * p
        p2i = pi * pi
    else:
        p, pi, p2, p2i = phases
    om = 1j * h.omega
    k1 = om * h.drive_batch(psi)
    k2 = pi * (om * h.drive_batch(p * (psi + (0.5 * dt) * k1)))
    k3 = pi * (om * h.drive_batch(p * (psi + (0.5 * dt) * k2)))
    k4 = p2i * (om * h.drive_batch(p2 * (psi + dt * k3)))
    return p2 * (psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def step_nojump(
    h: EffectiveHamiltonian,
    state: StateVector,
    dt: float,
    stability_factor: float = 0.1,
) -> StateVector:
    """Advance the unnormalized state by one RK4 step of the no-jump equation.

    Raises ``ValueError`` when ``dt`` exceeds the stability bound
    ``stability_factor / max|diag|``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    bound = dt_max(h, stability_factor)
    if dt > bound * (1 + 1e-12):
        raise ValueError(f"step size {dt} exceeds stability bound {bound}")
    if state.basis is not h.basis:
        raise ValueError("state and Hamiltonian are built over different bases")
    out = _rk4_batch(h, state.amplitudes[:, None], dt)[:, 0]
    return StateVector(out, state.basis)


class Propagator:
    """Fixed-step batch propagator bound to one Hamiltonian and grid step.

    ``step(psi)`` advances a (dim, m) batch by the grid step using cached
    phase factors; ``step_span(psi, dt)`` takes an arbitrary (possibly
    per-column) step, as needed by the jump-time bisection.
    """

    def __init__(
        self,
        h: EffectiveHamiltonian,
        dt: float,
        scheme: str = "rk4",
        stability_factor: float = 0.1,
    ):
        if scheme not in ("rk4", "ifrk4"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if not dt > 0:
            raise ValueError("dt must be positive")
        # rk4 is validated against the diagonal rule only (the contract of
        # step_nojump); scheme_dt_max is the stricter choice the runner makes.
        if scheme == "rk4":
            bound = dt_max(h, stability_factor)
        else:
            bound = scheme_dt_max(h, scheme, stability_factor)
        if dt > bound * (1 + 1e-12):
            raise ValueError(
                f"step size {dt} exceeds {scheme} stability bound {bound}"
            )
        self.h = h
        self.dt = float(dt)
        self.scheme = scheme
        if scheme == "ifrk4":
            d = h.diag[:, None] * self.dt
            p = np.exp(-0.5j * d)
            pi = np.exp(0.5j * d)
            self._phases = (p, pi, p * p, pi * pi)
        else:
            self._phases = None

    def step(self, psi: np.ndarray) -> np.ndarray:
        if self.scheme == "rk4":
            return _rk4_batch(self.h, psi, self.dt)
        return _ifrk4_batch(self.h, psi, self.dt, self._phases)

    def step_span(self, psi: np.ndarray, dt) -> np.ndarray:
        """Step by an arbitrary span; ``dt`` may be scalar or shape (m,)."""
        if self.scheme == "rk4":
            return _rk4_batch(self.h, psi, dt)
        return _ifrk4_batch(self.h, psi, dt)


def scheme_dt_max(
    h: EffectiveHamiltonian, scheme: str, stability_factor: float = 0.1
) -> float:
    """Stability-limited step for a scheme (diagonal rule for rk4, drive
    rule for ifrk4)."""
    if scheme == "rk4":
        scale = h.max_abs_diag + 2.0 * abs(h.omega) * math.sqrt(h.basis.n_atoms)
    else:
        scale = 2.0 * abs(h.omega) * math.sqrt(h.basis.n_atoms)
    if scale == 0.0:
        return math.inf
    return stability_factor / scale
