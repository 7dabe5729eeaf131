"""Measured quantities: excitation statistics, distances, density matrices.

Everything the simulator reports is derived here: the mean excitation number
and its distribution p_R(n), the Mandel Q parameter, configuration
distributions and their Kolmogorov distance, steady-state density matrices
from time averages, the classical (diagonal) projection, and the trace
distance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .hilbert import BasisSet, StateVector
from .mcwf import EnsembleAccumulator, TrajectoryRecord

__all__ = [
    "ExcitationDistribution",
    "ConfigurationDistribution",
    "DensityMatrix",
    "mean_excitations",
    "excitation_distribution",
    "mandel_q",
    "configuration_distribution",
    "kolmogorov_distance",
    "steady_state_time_average",
    "classical_projection",
    "trace_distance",
    "poisson_pmf",
    "fit_oscillation_frequency",
    "write_observables_csv",
    "distribution_to_json",
]

_NORM_ATOL = 1e-9


@dataclass(frozen=True)
class ExcitationDistribution:
    """p_R(n) for n = 0 .. n_max."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    def validate(self):
        if np.any(self.probs < -1e-12):
            raise ValueError("negative probability in p_R")
        if abs(self.probs.sum() - 1.0) > _NORM_ATOL:
            raise ValueError(f"p_R sums to {self.probs.sum()}, not 1")

    @property
    def mean(self) -> float:
        n = np.arange(self.probs.size)
        return float(n @ self.probs)


@dataclass(frozen=True)
class ConfigurationDistribution:
    """Probabilities of excitation configurations, keyed by bitmask."""

    bits: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint64))
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        if self.bits.shape != self.probs.shape:
            raise ValueError("bits and probs must have matching shapes")

    def validate(self):
        if np.any(self.probs < -1e-12):
            raise ValueError("negative configuration probability")
        if abs(self.probs.sum() - 1.0) > _NORM_ATOL:
            raise ValueError(f"configuration probabilities sum to {self.probs.sum()}")

    def as_dict(self) -> dict[int, float]:
        return {int(b): float(p) for b, p in zip(self.bits, self.probs)}


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix over a basis."""

    elements: np.ndarray
    basis: BasisSet | None = None

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=np.complex128)
        object.__setattr__(self, "elements", el)
        if el.ndim != 2 or el.shape[0] != el.shape[1]:
            raise ValueError("density matrix must be square")

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def validate(self, check_psd: bool = True):
        el = self.elements
        herm = np.abs(el - el.conj().T).max()
        if herm > 1e-12 * max(1.0, np.abs(el).max()):
            raise ValueError(f"density matrix not Hermitian (deviation {herm})")
        tr = el.trace().real
        if abs(tr - 1.0) > _NORM_ATOL:
            raise ValueError(f"trace is {tr}, not 1")
        if check_psd:
            evals = np.linalg.eigvalsh(0.5 * (el + el.conj().T))
            if evals.min() < -1e-9:
                raise ValueError(f"negative eigenvalue {evals.min()}")

    def diagonal(self) -> np.ndarray:
        return self.elements.diagonal().real.copy()


# ---------------------------------------------------------------------------


def _state_p2(state: StateVector) -> np.ndarray:
    if abs(state.norm2 - 1.0) > 1e-6:
        raise ValueError(
            f"state is not normalized (norm2 = {state.norm2}); normalize first"
        )
    a = state.amplitudes
    return a.real**2 + a.imag**2


def mean_excitations(source) -> float:
    """<n_R>, either from a normalized state or from p_R(n)."""
    if isinstance(source, StateVector):
        p2 = _state_p2(source)
        return float(p2 @ source.basis.n_exc.astype(float))
    if isinstance(source, ExcitationDistribution):
        return source.mean
    raise TypeError(f"unsupported source {type(source).__name__}")


def excitation_distribution(source, t: float | None = None) -> ExcitationDistribution:
    """p_R(n) from a normalized state or an ensemble at sample time ``t``.

    Block sums of squared amplitudes equal the projector expectations
    exactly in the excitation-ordered basis.
    """
    if isinstance(source, StateVector):
        p2 = _state_p2(source)[:, None]
        out = np.empty((source.basis.n_max + 1, 1))
        _kernels.block_sums(p2, source.basis.block_offsets, out)
        return ExcitationDistribution(out[:, 0])
    if isinstance(source, EnsembleAccumulator):
        if t is None:
            raise ValueError("a sample time is required for ensemble sources")
        return ExcitationDistribution(source.p_r(t))
    raise TypeError(f"unsupported source {type(source).__name__}")


def mandel_q(dist: ExcitationDistribution) -> float:
    """Q = (<n^2> - <n>^2) / <n> - 1; negative values are sub-Poissonian."""
    p = dist.probs
    n = np.arange(p.size, dtype=float)
    mean = float(n @ p)
    if mean <= 0.0:
        raise ValueError("Mandel Q undefined: mean excitation number is zero")
    mean2 = float((n**2) @ p)
    return (mean2 - mean**2) / mean - 1.0


def configuration_distribution(
    acc: EnsembleAccumulator, t: float, basis: BasisSet | None = None
) -> ConfigurationDistribution:
    """Trajectory-averaged configuration probabilities at sample time ``t``."""
    probs = acc.config_probs(t)
    if basis is not None:
        bits = basis.bits
    else:
        bits = np.arange(probs.size, dtype=np.uint64)
    return ConfigurationDistribution(bits, probs)


def kolmogorov_distance(
    p: ConfigurationDistribution, q: ConfigurationDistribution
) -> float:
    """Half the L1 distance between two configuration distributions;
    configurations missing from one side count as probability zero."""
    dp = p.as_dict()
    dq = q.as_dict()
    keys = set(dp) | set(dq)
    return 0.5 * sum(abs(dp.get(k, 0.0) - dq.get(k, 0.0)) for k in keys)


def steady_state_time_average(
    record: TrajectoryRecord, t0: float = 40.0
) -> DensityMatrix:
    """Trapezoidal time average of |psi><psi| over samples at t >= t0.

    Requires the trajectory to have been run with state snapshots enabled.
    """
    if record.states is None:
        raise ValueError("trajectory record has no state snapshots")
    t = record.sample_times
    if t0 >= t[-1]:
        raise ValueError(f"burn-in {t0} is not before the last sample {t[-1]}")
    sel = np.nonzero(t >= t0 - 1e-12)[0]
    if sel.size < 2:
        raise ValueError("need at least two samples after the burn-in")
    ts = t[sel]
    w = np.empty(sel.size)
    w[1:-1] = 0.5 * (ts[2:] - ts[:-2])
    w[0] = 0.5 * (ts[1] - ts[0])
    w[-1] = 0.5 * (ts[-1] - ts[-2])
    w /= w.sum()
    states = record.states[sel]
    rho = (states.T * w) @ states.conj()
    return DensityMatrix(rho)


def classical_projection(rho: DensityMatrix) -> DensityMatrix:
    """Zero all interatomic coherences, keeping the diagonal."""
    return DensityMatrix(np.diag(rho.elements.diagonal()), rho.basis)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Half the sum of absolute eigenvalues of the Hermitian difference."""
    da = a.elements if isinstance(a, DensityMatrix) else np.asarray(a)
    db = b.elements if isinstance(b, DensityMatrix) else np.asarray(b)
    if da.shape != db.shape:
        raise ValueError("density matrices live on different spaces")
    diff = da - db
    diff = 0.5 * (diff + diff.conj().T)
    evals = np.linalg.eigvalsh(diff)
    return 0.5 * float(np.abs(evals).sum())


def poisson_pmf(mean: float, n_max: int) -> np.ndarray:
    """Poisson probabilities for n = 0 .. n_max (reference curve for p_R)."""
    n = np.arange(n_max + 1)
    log_p = n * math.log(mean) - mean - np.array([math.lgamma(k + 1) for k in n])
    return np.exp(log_p)


def fit_oscillation_frequency(t, y, f0: float | None = None) -> float:
    """Angular frequency of a damped oscillation c + A*exp(-g t)*cos(2 f t + phi).

    Written for <n_R>(t) traces of the form sin^2(f t) with slow damping; the
    returned f is the sin^2 frequency (half the cosine frequency).  The
    initial guess comes from the FFT peak unless ``f0`` is given.
    """
    from scipy.optimize import curve_fit

    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if f0 is None:
        yd = y - y.mean()
        n_pad = 8 * y.size
        spec = np.abs(np.fft.rfft(yd, n_pad))
        freqs = 2.0 * math.pi * np.fft.rfftfreq(n_pad, d=t[1] - t[0])
        f0 = 0.5 * freqs[int(np.argmax(spec))]
    if f0 <= 0:
        raise ValueError("no oscillation found in the trace")

    def model(tt, c, a, f, g, phi):
        return c + a * np.exp(-g * tt) * np.cos(2.0 * f * tt + phi)

    p0 = [y.mean(), -(y.max() - y.min()) / 2.0, f0, 0.1 * f0, 0.0]
    popt, _ = curve_fit(model, t, y, p0=p0, maxfev=20000)
    return abs(popt[2])


# ---------------------------------------------------------------------------
# plot-ready exports


def write_observables_csv(path, times, columns: dict[str, np.ndarray]):
    """Time-series CSV: first column t, then one column per observable.

    Column order follows the dict order; floats are written with repr-level
    precision so identical runs produce identical bytes.
    """
    times = np.asarray(times, dtype=float)
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for i, t in enumerate(times):
            row = [f"{t:.17g}"]
            for name in names:
                row.append(f"{float(columns[name][i]):.17g}")
            writer.writerow(row)


def distribution_to_json(dist) -> str:
    """Distributions as JSON maps: p_R keyed by n, configurations keyed by
    the decimal bitmask."""
    if isinstance(dist, ExcitationDistribution):
        payload = {str(n): float(p) for n, p in enumerate(dist.probs)}
    elif isinstance(dist, ConfigurationDistribution):
        payload = {str(int(b)): float(p) for b, p in zip(dist.bits, dist.probs)}
    else:
        raise TypeError(f"unsupported distribution {type(dist).__name__}")
    return json.dumps(payload, indent=2)
