"""Quantum-jump trajectories and deterministic ensemble averaging.

A trajectory starts from the all-ground configuration and follows the
norm-decaying no-jump evolution.  A uniform threshold ``u`` in (0, 1] is
drawn; when the squared norm crosses it, the jump time is refined by
bisection, a jump channel (per-atom decay or dephasing) is selected with a
single uniform draw proportional to the channel weights, the corresponding
generator is applied, the state renormalized, and a fresh threshold drawn.
This waiting-time construction gives jump statistics independent of the
integration step.

Ensembles are propagated in lockstep batches: the state is a (dim, m)
array whose columns are independent trajectories sharing the step grid.
Column arithmetic never mixes columns, so results are bit-identical for any
worker count, and a single trajectory is just a batch of one.  Every
trajectory owns a counter-based RNG stream (Philox) keyed by a SplitMix64
hash of (master_seed, trajectory index), making the ensemble reproducible
and order-independent.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .dynamics import (
    EffectiveHamiltonian,
    Propagator,
    build_effective_hamiltonian,
    scheme_dt_max,
)
from .hilbert import BasisSet, PruneRule, StateVector, build_basis
from .lattice import PhysicalParams

__all__ = [
    "JumpChannel",
    "TrajectoryRecord",
    "EnsembleAccumulator",
    "RunOptions",
    "jump_weights",
    "apply_jump",
    "run_trajectory",
    "run_ensemble",
    "convergence_check",
    "derive_seed",
    "checkpoint_json",
    "checkpoint_from_json",
    "audit_trajectory",
]

RHO_DIM_CAP = 4096
BISECT_RTOL = 1e-6
_BATCH_MEM_BYTES = 600_000_000

DECAY = "decay"
DEPHASE = "dephase"


@dataclass(frozen=True)
class JumpChannel:
    """One Lindblad generator: per-atom population decay or dephasing."""

    kind: str
    atom: int

    def __post_init__(self):
        if self.kind not in (DECAY, DEPHASE):
            raise ValueError(f"unknown jump kind {self.kind!r}")
        if self.atom < 0:
            raise ValueError("atom index must be non-negative")


def derive_seed(master_seed: int, index: int) -> int:
    """SplitMix64 hash of (master_seed, trajectory index) -> 64-bit seed."""
    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return z


def _make_rng(seed: int) -> np.random.Generator:
    key = np.array([seed, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# jump channels


def _jump_weights_raw(
    basis: BasisSet, params: PhysicalParams, psi: np.ndarray
) -> np.ndarray:
    """Unnormalized channel weights [decay_0..N-1, dephase_0..N-1]."""
    p2 = psi.real**2 + psi.imag**2
    n2 = float(p2.sum())
    occ = np.einsum("i,ij->j", p2, basis.bit_matrix())
    w = np.empty(2 * basis.n_atoms)
    w[: basis.n_atoms] = params.gamma_r * occ
    w[basis.n_atoms :] = params.gamma_z * n2
    return w


def jump_weights(state: StateVector, params: PhysicalParams) -> np.ndarray:
    """Channel weights on the current (possibly unnormalized) state.

    The decay weight of atom j is ``gamma_r * <sigma_rr^j>`` and the
    dephasing weight is ``gamma_z * norm2`` for every atom; their sum equals
    the instantaneous norm-decay rate of the no-jump evolution.
    """
    if state.norm2 <= 0:
        raise ValueError("state has zero norm")
    return _jump_weights_raw(state.basis, params, state.amplitudes)


def _apply_jump_raw(basis: BasisSet, psi: np.ndarray, channel: JumpChannel) -> np.ndarray:
    if channel.atom >= basis.n_atoms:
        raise ValueError(f"atom {channel.atom} outside the register")
    if channel.kind == DECAY:
        mask = basis.atom_mask(channel.atom)
        src = np.nonzero(mask)[0]
        out = np.zeros_like(psi)
        if src.size:
            tgt = basis.lower_table()[src, channel.atom]
            out[tgt] = psi[src]
        n2 = float(np.vdot(out, out).real)
        if n2 <= 0.0:
            raise RuntimeError(
                "impossible jump: decay channel applied with zero weight "
                "(jump-weight bookkeeping bug)"
            )
    else:
        sign = np.where(basis.atom_mask(channel.atom), 1.0, -1.0)
        out = psi * sign
        n2 = float(np.vdot(out, out).real)
        if n2 <= 0.0:
            raise RuntimeError("impossible jump: zero-norm state")
    return out / math.sqrt(n2)


def apply_jump(state: StateVector, channel: JumpChannel) -> StateVector:
    """Apply a jump generator and renormalize.

    Decay moves every amplitude with atom j excited to its lowered partner
    and zeroes the rest; dephasing flips the sign of amplitudes with atom j
    in the ground state (leaving all magnitudes unchanged).
    """
    out = _apply_jump_raw(state.basis, state.amplitudes, channel)
    return StateVector(out, state.basis, 1.0)


def _select_channel(w: np.ndarray, r: float, n_atoms: int) -> JumpChannel:
    total = w.sum()
    if total <= 0.0:
        raise RuntimeError("impossible jump: all channel weights vanish")
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, r * total, side="right"))
    idx = min(idx, 2 * n_atoms - 1)
    if idx < n_atoms:
        return JumpChannel(DECAY, idx)
    return JumpChannel(DEPHASE, idx - n_atoms)


# ---------------------------------------------------------------------------
# accumulators


@dataclass(frozen=True)
class RunOptions:
    """Knobs of the trajectory engine; identical options plus identical
    (master_seed, n_traj, batch partition) imply bit-identical results."""

    scheme: str = "rk4"
    stability_factor: float = 0.1
    dt: float | None = None
    collect_configs: bool = False
    rho_samples: bool = False
    n_groups: int = 1
    tail_from: float | None = None
    tail_configs: bool = False
    tail_rho: bool = False
    record_states: bool = False
    keep_jump_log: bool = False


@dataclass
class EnsembleAccumulator:
    """Mergeable sums over trajectories.

    Per sample time: sum and sum of squares of the excitation number, summed
    excitation-number distribution, optionally summed configuration
    probabilities and grouped density-matrix sums.  Optionally a tail window
    accumulates time-averaged quantities and per-trajectory tail means.
    Merging adds sums; it is commutative, and associative up to float
    rounding.
    """

    sample_times: np.ndarray
    n_atoms: int
    n_max: int
    dim: int
    n_traj_total: int
    n_groups: int
    tail_from: float | None
    n_traj: int = 0
    n_sum: np.ndarray | None = None
    n_sumsq: np.ndarray | None = None
    pr_sum: np.ndarray | None = None
    config_sum: np.ndarray | None = None
    rho_sum: np.ndarray | None = None
    tail_samples: int = 0
    tail_n_per_traj: np.ndarray | None = None
    tail_pr_per_traj: np.ndarray | None = None
    tail_config_sum: np.ndarray | None = None
    tail_rho_sum: np.ndarray | None = None

    @classmethod
    def create(cls, sample_times, basis: BasisSet, n_traj_total: int, opts: RunOptions):
        s = len(sample_times)
        k = basis.n_max + 1
        acc = cls(
            sample_times=np.asarray(sample_times, dtype=float),
            n_atoms=basis.n_atoms,
            n_max=basis.n_max,
            dim=basis.dim,
            n_traj_total=n_traj_total,
            n_groups=opts.n_groups,
            tail_from=opts.tail_from,
        )
        acc.n_sum = np.zeros(s)
        acc.n_sumsq = np.zeros(s)
        acc.pr_sum = np.zeros((s, k))
        if opts.collect_configs:
            acc.config_sum = np.zeros((s, basis.dim))
        if opts.rho_samples:
            if basis.dim > RHO_DIM_CAP:
                raise ValueError(
                    f"density-matrix accumulation limited to dim <= {RHO_DIM_CAP}, "
                    f"got {basis.dim}"
                )
            acc.rho_sum = np.zeros(
                (opts.n_groups, s, basis.dim, basis.dim), dtype=np.complex128
            )
        if opts.tail_from is not None:
            acc.tail_samples = int(
                np.count_nonzero(acc.sample_times >= opts.tail_from - 1e-12)
            )
            acc.tail_n_per_traj = np.zeros(n_traj_total)
            acc.tail_pr_per_traj = np.zeros((n_traj_total, k))
            if opts.tail_configs:
                acc.tail_config_sum = np.zeros(basis.dim)
            if opts.tail_rho:
                if basis.dim > RHO_DIM_CAP:
                    raise ValueError(
                        f"density-matrix accumulation limited to dim <= {RHO_DIM_CAP}"
                    )
                acc.tail_rho_sum = np.zeros((basis.dim, basis.dim), dtype=np.complex128)
        return acc

    # -- merging -----------------------------------------------------------

    def _check_compatible(self, other: "EnsembleAccumulator"):
        if (
            self.sample_times.shape != other.sample_times.shape
            or not np.array_equal(self.sample_times, other.sample_times)
            or self.dim != other.dim
            or self.n_max != other.n_max
            or self.n_traj_total != other.n_traj_total
            or self.n_groups != other.n_groups
            or (self.tail_from is None) != (other.tail_from is None)
        ):
            raise ValueError("accumulators are not compatible for merging")

    def merge(self, other: "EnsembleAccumulator") -> "EnsembleAccumulator":
        """Combine two disjoint trajectory sets (commutative)."""
        self._check_compatible(other)

        def add(a, b):
            if a is None and b is None:
                return None
            return a + b

        out = replace(self)
        out.n_traj = self.n_traj + other.n_traj
        out.n_sum = add(self.n_sum, other.n_sum)
        out.n_sumsq = add(self.n_sumsq, other.n_sumsq)
        out.pr_sum = add(self.pr_sum, other.pr_sum)
        out.config_sum = add(self.config_sum, other.config_sum)
        out.rho_sum = add(self.rho_sum, other.rho_sum)
        out.tail_n_per_traj = add(self.tail_n_per_traj, other.tail_n_per_traj)
        out.tail_pr_per_traj = add(self.tail_pr_per_traj, other.tail_pr_per_traj)
        out.tail_config_sum = add(self.tail_config_sum, other.tail_config_sum)
        out.tail_rho_sum = add(self.tail_rho_sum, other.tail_rho_sum)
        return out

    # -- accessors ----------------------------------------------------------

    def time_index(self, t: float) -> int:
        scale = max(1.0, abs(float(self.sample_times[-1])))
        hits = np.nonzero(np.abs(self.sample_times - t) <= 1e-9 * scale)[0]
        if hits.size == 0:
            raise KeyError(f"no sample recorded at t = {t}")
        return int(hits[0])

    def n_mean(self) -> np.ndarray:
        return self.n_sum / self.n_traj

    def n_stderr(self) -> np.ndarray:
        m = self.n_traj
        if m < 2:
            return np.full_like(self.n_sum, np.nan)
        var = (self.n_sumsq - self.n_sum**2 / m) / (m - 1)
        return np.sqrt(np.maximum(var, 0.0) / m)

    def p_r(self, t: float | None = None) -> np.ndarray:
        pr = self.pr_sum / self.n_traj
        if t is None:
            return pr
        return pr[self.time_index(t)]

    def config_probs(self, t: float) -> np.ndarray:
        if self.config_sum is None:
            raise ValueError("configuration probabilities were not collected")
        return self.config_sum[self.time_index(t)] / self.n_traj

    def rho(self, t: float) -> np.ndarray:
        if self.rho_sum is None:
            raise ValueError("density-matrix accumulation was not enabled")
        return self.rho_sum[:, self.time_index(t)].sum(axis=0) / self.n_traj

    def rho_group_sums(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Per-group density-matrix sums and group sizes at a sample time."""
        if self.rho_sum is None:
            raise ValueError("density-matrix accumulation was not enabled")
        idx = np.arange(self.n_traj_total)
        groups = idx * self.n_groups // self.n_traj_total
        sizes = np.bincount(groups, minlength=self.n_groups)
        return self.rho_sum[:, self.time_index(t)], sizes

    def tail_n_means(self) -> np.ndarray:
        """Per-trajectory time averages of <n_R> over the tail window."""
        if self.tail_n_per_traj is None or self.tail_samples == 0:
            raise ValueError("no tail window accumulated")
        return self.tail_n_per_traj / self.tail_samples

    def tail_pr_mean(self) -> np.ndarray:
        if self.tail_pr_per_traj is None or self.tail_samples == 0:
            raise ValueError("no tail window accumulated")
        return self.tail_pr_per_traj.sum(axis=0) / (self.tail_samples * self.n_traj)

    def tail_config_probs(self) -> np.ndarray:
        if self.tail_config_sum is None or self.tail_samples == 0:
            raise ValueError("tail configuration probabilities were not collected")
        return self.tail_config_sum / (self.tail_samples * self.n_traj)

    def tail_rho(self) -> np.ndarray:
        if self.tail_rho_sum is None or self.tail_samples == 0:
            raise ValueError("tail density matrix was not accumulated")
        return self.tail_rho_sum / (self.tail_samples * self.n_traj)


@dataclass
class TrajectoryRecord:
    """Per-sample normalized observables (and optional snapshots) of one
    trajectory, plus its jump log."""

    seed: int
    sample_times: np.ndarray
    n_mean: np.ndarray
    p_r: np.ndarray
    config_probs: np.ndarray | None
    states: np.ndarray | None
    jump_log: list[tuple[float, JumpChannel]]
    final_state: StateVector
    options: RunOptions

    def validate(self):
        if np.any(np.diff(self.sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        t_end = float(self.sample_times[-1])
        for t, _ in self.jump_log:
            if not 0.0 <= t <= t_end * (1 + 1e-12):
                raise ValueError(f"jump time {t} outside the simulated window")


# ---------------------------------------------------------------------------
# the batched engine


def _default_dt(h: EffectiveHamiltonian, opts: RunOptions, sample_times) -> float:
    dt = opts.dt
    if dt is None:
        dt = scheme_dt_max(h, opts.scheme, opts.stability_factor)
        if opts.scheme == "ifrk4" and h.max_abs_diag > 0.0:
            # the interaction picture removes the stiffness but the step must
            # still resolve the fastest retained detuning: undersampling the
            # rotating couplings fabricates population in far-detuned
            # configurations (sampling the phase incoherently acts like a
            # random walk into them)
            dt = min(dt, 1.0 / h.max_abs_diag)
    spans = np.diff(np.concatenate([[0.0], np.asarray(sample_times, float)]))
    spans = spans[spans > 0]
    if spans.size:
        dt = min(dt, float(spans.min()))
    if not math.isfinite(dt):
        dt = float(spans.min()) if spans.size else 1.0
    return dt


class _BatchRun:
    """Lockstep propagation of one batch of trajectories."""

    def __init__(self, h, params, sample_times, seeds, first_index, acc, opts):
        self.h = h
        self.params = params
        self.basis = h.basis
        self.sample_times = np.asarray(sample_times, dtype=float)
        self.seeds = seeds
        self.first_index = first_index
        self.acc = acc
        self.opts = opts
        self.m = len(seeds)
        self.rngs = [_make_rng(s) for s in seeds]
        self.u = np.array([1.0 - r.random() for r in self.rngs])
        self.jump_logs = [[] for _ in range(self.m)]
        self.states = (
            np.zeros((len(sample_times), h.basis.dim), dtype=np.complex128)
            if opts.record_states and self.m == 1
            else None
        )
        self._props: dict[float, Propagator] = {}
        self._k_values = np.arange(h.basis.n_max + 1, dtype=float)

    def _propagator(self, dt: float) -> Propagator:
        prop = self._props.get(dt)
        if prop is None:
            prop = Propagator(self.h, dt, self.opts.scheme, self.opts.stability_factor)
            self._props[dt] = prop
        return prop

    def run(self):
        dim = self.basis.dim
        psi = np.zeros((dim, self.m), dtype=np.complex128)
        psi[0, :] = 1.0
        norms = np.ones(self.m)
        dt_target = _default_dt(self.h, self.opts, self.sample_times)
        t_prev = 0.0
        norms_buf = np.empty(self.m)
        for s, t_s in enumerate(self.sample_times):
            span = t_s - t_prev
            if span < -1e-15:
                raise ValueError("sample times must be non-decreasing from 0")
            if span > 1e-15:
                n_sub = max(1, math.ceil(span / dt_target - 1e-9))
                dt_seg = span / n_sub
                prop = self._propagator(dt_seg)
                for _ in range(n_sub):
                    psi_prev = psi.copy()
                    psi = prop.step(psi)
                    _kernels.col_norms(psi, norms_buf)
                    norms[:] = norms_buf
                    crossed = np.nonzero(norms <= self.u)[0]
                    if crossed.size:
                        self._resolve(prop, psi_prev, psi, norms, crossed, t_prev, dt_seg)
                    t_prev += dt_seg
            self._record(s, psi, norms)
            t_prev = t_s
        self.final_psi = psi
        self.final_norms = norms

    # -- jump resolution ---------------------------------------------------

    def _resolve(self, prop, psi_prev, psi, norms, cols, t_base, dt_seg):
        """Find and apply all jumps of the crossed columns inside one step."""
        base = np.ascontiguousarray(psi_prev[:, cols])
        end = np.ascontiguousarray(psi[:, cols])
        k = cols.size
        rem = np.full(k, dt_seg)
        consumed = np.zeros(k)
        tol = BISECT_RTOL * dt_seg
        active = np.arange(k)
        end_norms = norms[cols].copy()
        while active.size:
            u_act = self.u[cols[active]]
            crossed = end_norms[active] <= u_act
            done = active[~crossed]
            if done.size:
                psi[:, cols[done]] = end[:, done]
                norms[cols[done]] = end_norms[done]
            active = active[crossed]
            if active.size == 0:
                break
            # bisect the crossing time of each active column in [0, rem]
            lo = np.zeros(active.size)
            hi = rem[active].copy()
            psi_hi = np.ascontiguousarray(end[:, active])
            u_act = self.u[cols[active]]
            base_act = np.ascontiguousarray(base[:, active])
            while True:
                todo = np.nonzero(hi - lo > tol)[0]
                if todo.size == 0:
                    break
                mid = 0.5 * (lo[todo] + hi[todo])
                probe = prop.step_span(np.ascontiguousarray(base_act[:, todo]), mid)
                pn = np.empty(todo.size)
                _kernels.col_norms(probe, pn)
                le = pn <= u_act[todo]
                sel = todo[le]
                hi[sel] = mid[le]
                psi_hi[:, sel] = probe[:, le]
                lo[todo[~le]] = mid[~le]
            # apply one jump per active column
            for ii, a in enumerate(active):
                c = int(cols[a])
                state = psi_hi[:, ii]
                w = _jump_weights_raw(self.basis, self.params, state)
                r = self.rngs[c].random()
                channel = _select_channel(w, r, self.basis.n_atoms)
                jumped = _apply_jump_raw(self.basis, state, channel)
                t_jump = t_base + consumed[a] + hi[ii]
                self.jump_logs[c].append((t_jump, channel))
                self.u[c] = 1.0 - self.rngs[c].random()
                consumed[a] += hi[ii]
                rem[a] -= hi[ii]
                base[:, a] = jumped
            # propagate the post-jump states over the step remainder
            still = rem[active] > 1e-12 * dt_seg
            ended = active[~still]
            if ended.size:
                psi[:, cols[ended]] = base[:, ended]
                norms[cols[ended]] = 1.0
            active = active[still]
            if active.size:
                stepped = prop.step_span(
                    np.ascontiguousarray(base[:, active]), rem[active]
                )
                end[:, active] = stepped
                pn = np.empty(active.size)
                _kernels.col_norms(stepped, pn)
                end_norms[active] = pn

    # -- sampling ------------------------------------------------------------

    def _record(self, s, psi, norms):
        acc = self.acc
        t_s = float(self.sample_times[s])
        inv = 1.0 / norms
        p2 = (psi.real**2 + psi.imag**2) * inv[None, :]
        pr = np.empty((self.basis.n_max + 1, self.m))
        _kernels.block_sums(p2, self.basis.block_offsets, pr)
        n_mean_cols = np.einsum("k,km->m", self._k_values, pr)
        acc.n_sum[s] += n_mean_cols.sum()
        acc.n_sumsq[s] += (n_mean_cols**2).sum()
        acc.pr_sum[s] += pr.sum(axis=1)
        if acc.config_sum is not None:
            acc.config_sum[s] += p2.sum(axis=1)
        psi_bar = None
        if acc.rho_sum is not None or (
            acc.tail_rho_sum is not None
            and acc.tail_from is not None
            and t_s >= acc.tail_from - 1e-12
        ) or self.states is not None:
            psi_bar = psi * np.sqrt(inv)[None, :]
        if acc.rho_sum is not None:
            gidx = (
                (self.first_index + np.arange(self.m))
                * acc.n_groups
                // acc.n_traj_total
            )
            for g in np.unique(gidx):
                sel = psi_bar[:, gidx == g]
                acc.rho_sum[g, s] += sel @ sel.conj().T
        in_tail = acc.tail_from is not None and t_s >= acc.tail_from - 1e-12
        if in_tail and acc.tail_n_per_traj is not None:
            sl = slice(self.first_index, self.first_index + self.m)
            acc.tail_n_per_traj[sl] += n_mean_cols
            acc.tail_pr_per_traj[sl] += pr.T
            if acc.tail_config_sum is not None:
                acc.tail_config_sum += p2.sum(axis=1)
            if acc.tail_rho_sum is not None:
                acc.tail_rho_sum += psi_bar @ psi_bar.conj().T
        if self.states is not None:
            self.states[s] = psi_bar[:, 0]


def _run_batch(h, params, sample_times, seeds, first_index, n_traj_total, opts):
    acc = EnsembleAccumulator.create(sample_times, h.basis, n_traj_total, opts)
    run = _BatchRun(h, params, sample_times, seeds, first_index, acc, opts)
    run.run()
    acc.n_traj = len(seeds)
    return acc, run


def _validate_sample_times(sample_times):
    t = np.asarray(sample_times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("sample_times must be a non-empty 1D sequence")
    if t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("sample_times must be strictly increasing and non-negative")
    return t


def run_trajectory(
    h: EffectiveHamiltonian,
    params: PhysicalParams,
    sample_times,
    seed: int,
    options: RunOptions = RunOptions(),
) -> TrajectoryRecord:
    """Simulate a single quantum trajectory from the all-ground state.

    Identical (Hamiltonian, options, seed) give a bit-identical record.
    """
    t = _validate_sample_times(sample_times)
    opts = replace(options, keep_jump_log=True)
    acc, run = _run_batch(h, params, t, [seed], 0, 1, opts)
    record = TrajectoryRecord(
        seed=seed,
        sample_times=t,
        n_mean=acc.n_sum.copy(),
        p_r=acc.pr_sum.copy(),
        config_probs=acc.config_sum.copy() if acc.config_sum is not None else None,
        states=run.states,
        jump_log=run.jump_logs[0],
        final_state=StateVector(run.final_psi[:, 0].copy(), h.basis),
        options=opts,
    )
    record.validate()
    return record


def _auto_batch_size(dim: int, n_traj: int) -> int:
    per_col = dim * 16 * 8  # state plus integrator scratch
    return max(1, min(n_traj, _BATCH_MEM_BYTES // max(per_col, 1)))


def run_ensemble(
    h: EffectiveHamiltonian,
    params: PhysicalParams,
    sample_times,
    n_traj: int,
    master_seed: int,
    options: RunOptions = RunOptions(),
    batch_size: int | None = None,
    n_workers: int = 1,
) -> EnsembleAccumulator:
    """Average ``n_traj`` independent trajectories.

    Trajectory m uses the seed ``derive_seed(master_seed, m)``.  Batches are
    fixed consecutive index ranges and are merged in index order, so the
    result is independent of ``n_workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    t = _validate_sample_times(sample_times)
    if batch_size is None:
        batch_size = _auto_batch_size(h.basis.dim, n_traj)
    ranges = [
        (lo, min(lo + batch_size, n_traj)) for lo in range(0, n_traj, batch_size)
    ]

    def work(rng):
        lo, hi = rng
        seeds = [derive_seed(master_seed, m) for m in range(lo, hi)]
        acc, _ = _run_batch(h, params, t, seeds, lo, n_traj, options)
        return acc

    if n_workers <= 1 or len(ranges) == 1:
        parts = [work(r) for r in ranges]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(work, ranges))
    acc = parts[0]
    for part in parts[1:]:
        acc = acc.merge(part)
    return acc


# ---------------------------------------------------------------------------
# truncation convergence


@dataclass(frozen=True)
class ConvergencePair:
    n_max_low: int
    n_max_high: int
    max_n_diff: float
    max_pr_distance: float
    converged: bool


@dataclass(frozen=True)
class ConvergenceReport:
    n_max_list: tuple[int, ...]
    dims: tuple[int, ...]
    pairs: tuple[ConvergencePair, ...]
    tolerance: float

    @property
    def converged(self) -> bool:
        return bool(self.pairs) and self.pairs[-1].converged


def _kd_arrays(p: np.ndarray, q: np.ndarray) -> float:
    k = max(p.size, q.size)
    pp = np.zeros(k)
    qq = np.zeros(k)
    pp[: p.size] = p
    qq[: q.size] = q
    return 0.5 * float(np.abs(pp - qq).sum())


def convergence_check(
    params: PhysicalParams,
    delta,
    n_atoms: int,
    sample_times,
    n_max_list,
    n_traj: int,
    master_seed: int,
    delta_cut: float | None = None,
    options: RunOptions = RunOptions(),
    tolerance: float = 0.01,
) -> ConvergenceReport:
    """Re-run a reduced ensemble at each truncation level and compare.

    Reports, for successive levels, the largest difference of <n_R> over the
    sample grid and the largest Kolmogorov distance between the
    excitation-number distributions; a pair converges when both beat the
    tolerance.
    """
    levels = sorted(set(int(x) for x in n_max_list))
    if len(levels) < 2:
        raise ValueError("need at least two truncation levels")
    delta_arr = getattr(delta, "delta", delta)
    results = []
    dims = []
    for n_max in levels:
        prune = (
            PruneRule(delta_arr, delta_cut) if delta_cut is not None else None
        )
        basis = build_basis(n_atoms, n_max, prune=prune)
        dims.append(basis.dim)
        ham = build_effective_hamiltonian(basis, delta_arr, params)
        acc = run_ensemble(ham, params, sample_times, n_traj, master_seed, options)
        results.append((acc.n_mean(), acc.p_r()))
    pairs = []
    for (n_lo, pr_lo), (n_hi, pr_hi), lo, hi in zip(
        results[:-1], results[1:], levels[:-1], levels[1:]
    ):
        max_n = float(np.abs(n_hi - n_lo).max())
        max_kd = max(
            _kd_arrays(pr_lo[s], pr_hi[s]) for s in range(pr_lo.shape[0])
        )
        pairs.append(
            ConvergencePair(lo, hi, max_n, max_kd, max_n <= tolerance)
        )
    return ConvergenceReport(tuple(levels), tuple(dims), tuple(pairs), tolerance)


# ---------------------------------------------------------------------------
# trajectory checkpoints


def checkpoint_json(record: TrajectoryRecord) -> str:
    """Serialize seed, elapsed time and jump log; with the engine options
    this is sufficient to replay or audit the trajectory."""
    payload = {
        "seed": record.seed,
        "elapsed": float(record.sample_times[-1]),
        "scheme": record.options.scheme,
        "stability_factor": record.options.stability_factor,
        "dt": record.options.dt,
        "jump_log": [[t, ch.kind, ch.atom] for t, ch in record.jump_log],
    }
    return json.dumps(payload, indent=2)


def checkpoint_from_json(text: str) -> dict:
    payload = json.loads(text)
    payload["jump_log"] = [
        (float(t), JumpChannel(kind, int(atom)))
        for t, kind, atom in payload["jump_log"]
    ]
    return payload


def audit_trajectory(
    h: EffectiveHamiltonian,
    params: PhysicalParams,
    checkpoint: dict,
    n_samples: int = 32,
) -> bool:
    """Replay a checkpointed trajectory and verify its jump log."""
    t_end = checkpoint["elapsed"]
    opts = RunOptions(
        scheme=checkpoint.get("scheme", "rk4"),
        stability_factor=checkpoint.get("stability_factor", 0.1),
        dt=checkpoint.get("dt"),
        keep_jump_log=True,
    )
    times = np.linspace(0.0, t_end, n_samples + 1)[1:]
    record = run_trajectory(h, params, times, checkpoint["seed"], opts)
    log = checkpoint["jump_log"]
    if len(log) != len(record.jump_log):
        return False
    for (t_a, ch_a), (t_b, ch_b) in zip(log, record.jump_log):
        if ch_a != ch_b or abs(t_a - t_b) > 1e-9 * max(1.0, t_end):
            return False
    return True
