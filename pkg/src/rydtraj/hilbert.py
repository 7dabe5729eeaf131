"""Excitation-number-truncated configuration basis.

A configuration is an N-bit mask: bit j set means atom j is in the excited
state.  The basis keeps every configuration with at most ``n_max`` excited
atoms, ordered by (excitation number, bits ascending), so the drive only
couples adjacent blocks.  Configurations whose total interaction energy
exceeds an optional cutoff are pruned; pruning is hereditary (removing a
configuration also removes every configuration that contains it), which
keeps the decay jump j -> lowered(j) total on the basis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Configuration",
    "PruneRule",
    "BasisSet",
    "StateVector",
    "build_basis",
    "rank",
    "unrank",
    "lower",
    "config_energies",
    "ground_state",
]

MAX_ATOMS = 64
DEFAULT_MAX_BYTES = 2 * 1024**3


@dataclass(frozen=True)
class Configuration:
    """An N-bit excitation pattern; ``n_exc`` is the number of set bits."""

    bits: int
    n_exc: int = -1

    def __post_init__(self):
        if self.bits < 0:
            raise ValueError("bits must be non-negative")
        pop = int(self.bits).bit_count()
        if self.n_exc < 0:
            object.__setattr__(self, "n_exc", pop)
        elif self.n_exc != pop:
            raise ValueError(f"n_exc {self.n_exc} does not match popcount {pop}")

    def excited_atoms(self) -> list[int]:
        return [j for j in range(self.bits.bit_length()) if (self.bits >> j) & 1]


@dataclass(frozen=True)
class PruneRule:
    """Drop configurations whose summed pair shift exceeds ``delta_cut``."""

    delta: np.ndarray
    delta_cut: float

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        if not self.delta_cut > 0:
            raise ValueError("delta_cut must be positive")


class CapacityError(MemoryError):
    """Requested basis would exceed the configured memory cap."""


def _binomial_dim(n_atoms: int, n_max: int) -> int:
    return sum(math.comb(n_atoms, k) for k in range(n_max + 1))


def _block_configs(n_atoms: int, k: int) -> np.ndarray:
    """All k-excitation bitmasks, sorted ascending, as uint64."""
    if k == 0:
        return np.zeros(1, dtype=np.uint64)
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n_atoms), k)),
        dtype=np.int64,
    ).reshape(-1, k)
    bits = (np.uint64(1) << combos.astype(np.uint64)).sum(axis=1, dtype=np.uint64)
    bits.sort()
    return bits


def config_energies(bits: np.ndarray, delta: np.ndarray, chunk: int = 65536) -> np.ndarray:
    """Total interaction energy sum_{i<j in config} delta_ij per configuration."""
    n_atoms = delta.shape[0]
    shifts = np.arange(n_atoms, dtype=np.uint64)
    out = np.empty(bits.shape[0], dtype=float)
    for lo in range(0, bits.shape[0], chunk):
        hi = min(lo + chunk, bits.shape[0])
        b = ((bits[lo:hi, None] >> shifts[None, :]) & np.uint64(1)).astype(float)
        out[lo:hi] = 0.5 * np.einsum("ij,jk,ik->i", b, delta, b)
    return out


class BasisSet:
    """Ordered configuration basis with rank/unrank maps.

    Built by :func:`build_basis`.  Blocks of equal excitation number are
    contiguous, each sorted by bits ascending.  The object is immutable
    after construction and safe to share across threads; the lazily built
    caches (bit matrix, lowering table, drive adjacency) are idempotent.
    """

    def __init__(self, n_atoms, n_max, block_bits, pruned_block_bits, energies=None):
        self.n_atoms = int(n_atoms)
        self.n_max = int(n_max)
        self._block_bits = block_bits
        self._pruned_block_bits = pruned_block_bits
        self.block_offsets = np.concatenate(
            [[0], np.cumsum([b.shape[0] for b in block_bits])]
        ).astype(np.int64)
        self.dim = int(self.block_offsets[-1])
        self.bits = np.concatenate(block_bits).astype(np.uint64)
        self.n_exc = np.repeat(
            np.arange(n_max + 1, dtype=np.uint8),
            [b.shape[0] for b in block_bits],
        )
        self.energies = energies
        self._bit_matrix = None
        self._lower_table = None
        self._drive = None

    # -- lookups ---------------------------------------------------------

    def rank(self, config) -> int:
        """Dense index of a configuration (block offset plus position in the
        bits-sorted block)."""
        bits = config.bits if isinstance(config, Configuration) else int(config)
        if bits < 0 or bits >= (1 << self.n_atoms):
            raise KeyError(f"bits {bits} outside the {self.n_atoms}-atom register")
        k = bits.bit_count()
        if k > self.n_max:
            raise KeyError(f"configuration {bits:#x} has {k} > n_max excitations")
        block = self._block_bits[k]
        i = int(np.searchsorted(block, np.uint64(bits)))
        if i >= block.shape[0] or block[i] != np.uint64(bits):
            raise KeyError(f"configuration {bits:#x} was pruned from the basis")
        return int(self.block_offsets[k]) + i

    def unrank(self, index: int) -> Configuration:
        if not 0 <= index < self.dim:
            raise IndexError(f"index {index} out of range [0, {self.dim})")
        return Configuration(int(self.bits[index]), int(self.n_exc[index]))

    def index_of(self, config) -> int:
        return self.rank(config)

    def __contains__(self, config) -> bool:
        try:
            self.rank(config)
            return True
        except KeyError:
            return False

    def __len__(self) -> int:
        return self.dim

    @property
    def configs(self) -> list[Configuration]:
        """Materialized configuration list (avoid for very large bases)."""
        return [Configuration(int(b)) for b in self.bits]

    @property
    def pruned(self) -> frozenset[Configuration]:
        return frozenset(
            Configuration(int(b)) for blk in self._pruned_block_bits for b in blk
        )

    # -- derived structure -----------------------------------------------

    def bit_matrix(self) -> np.ndarray:
        """(dim, N) float matrix, entry 1.0 where atom j is excited."""
        if self._bit_matrix is None:
            shifts = np.arange(self.n_atoms, dtype=np.uint64)
            self._bit_matrix = (
                (self.bits[:, None] >> shifts[None, :]) & np.uint64(1)
            ).astype(float)
        return self._bit_matrix

    def atom_mask(self, j: int) -> np.ndarray:
        """Boolean mask of configurations with atom j excited."""
        return ((self.bits >> np.uint64(j)) & np.uint64(1)).astype(bool)

    def lower_table(self) -> np.ndarray:
        """(dim, N) int32 table: index of the configuration with bit j cleared,
        or -1 where bit j is not set.  Always resolvable thanks to hereditary
        pruning."""
        if self._lower_table is None:
            table = np.full((self.dim, self.n_atoms), -1, dtype=np.int32)
            for j in range(self.n_atoms):
                mask = self.atom_mask(j)
                src = np.nonzero(mask)[0]
                if src.size == 0:
                    continue
                lowered = self.bits[src] ^ np.uint64(1 << j)
                ks = self.n_exc[src].astype(np.int64) - 1
                for k in np.unique(ks):
                    sel = ks == k
                    block = self._block_bits[k]
                    pos = np.searchsorted(block, lowered[sel])
                    if np.any(pos >= block.shape[0]) or np.any(
                        block[np.minimum(pos, block.shape[0] - 1)] != lowered[sel]
                    ):
                        raise RuntimeError("pruning closure violated: missing child")
                    table[src[sel], j] = self.block_offsets[k] + pos
            self._lower_table = table
        return self._lower_table

    def drive_adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR structure (indptr, indices) of the single-bit-flip graph
        restricted to the basis.  All couplings carry unit weight; the drive
        amplitude is applied by the caller."""
        if self._drive is None:
            rows, cols = [], []
            for k in range(self.n_max):
                src_block = self._block_bits[k]
                dst_block = self._block_bits[k + 1]
                if src_block.size == 0 or dst_block.size == 0:
                    continue
                src_off = int(self.block_offsets[k])
                dst_off = int(self.block_offsets[k + 1])
                for j in range(self.n_atoms):
                    bit = np.uint64(1 << j)
                    free = (src_block & bit) == 0
                    src = np.nonzero(free)[0]
                    if src.size == 0:
                        continue
                    raised = src_block[src] | bit
                    pos = np.searchsorted(dst_block, raised)
                    ok = pos < dst_block.shape[0]
                    ok[ok] &= dst_block[pos[ok]] == raised[ok]
                    src = src[ok]
                    pos = pos[ok]
                    rows.append(src_off + src)
                    cols.append(dst_off + pos)
            if rows:
                r = np.concatenate(rows)
                c = np.concatenate(cols)
                r_all = np.concatenate([r, c])
                c_all = np.concatenate([c, r])
            else:
                r_all = np.zeros(0, dtype=np.int64)
                c_all = np.zeros(0, dtype=np.int64)
            order = np.lexsort((c_all, r_all))
            r_all = r_all[order]
            c_all = c_all[order]
            indptr = np.zeros(self.dim + 1, dtype=np.int64)
            np.add.at(indptr, r_all + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._drive = (indptr, c_all.astype(np.int32))
        return self._drive


def build_basis(
    n_atoms: int,
    n_max: int,
    prune: PruneRule | None = None,
    max_bytes: int = DEFAULT_MAX_BYTES,
) -> BasisSet:
    """Construct the truncated (optionally pruned) configuration basis.

    Parameters
    ----------
    n_atoms : int
        Number of atoms, at most 64 (one machine word per configuration).
    n_max : int
        Maximal number of simultaneous excitations kept in the basis.
    prune : PruneRule, optional
        Energy pruning: configurations whose summed pair shift exceeds
        ``delta_cut`` are removed (hereditarily).
    max_bytes : int
        Rough memory cap; exceeding it raises :class:`CapacityError`
        naming the required bytes.
    """
    if not 1 <= n_max <= n_atoms <= MAX_ATOMS:
        raise ValueError(
            f"need 1 <= n_max <= n_atoms <= {MAX_ATOMS}, got n_max={n_max}, n_atoms={n_atoms}"
        )
    dim_full = _binomial_dim(n_atoms, n_max)
    est_bytes = dim_full * (8 + 1 + 8 + 16 * 4)
    if est_bytes > max_bytes:
        raise CapacityError(
            f"basis of dimension {dim_full} requires about {est_bytes} bytes "
            f"(cap {max_bytes})"
        )
    if prune is not None and prune.delta.shape != (n_atoms, n_atoms):
        raise ValueError("prune.delta shape does not match n_atoms")

    block_bits: list[np.ndarray] = []
    pruned_blocks: list[np.ndarray] = []
    block_energies: list[np.ndarray] = []
    for k in range(n_max + 1):
        bits = _block_configs(n_atoms, k)
        if prune is None or k < 2:
            # the ground state and single excitations carry no pair energy
            keep = np.ones(bits.shape[0], dtype=bool)
            energies = np.zeros(bits.shape[0]) if prune is not None else None
        else:
            energies = config_energies(bits, prune.delta)
            keep = energies <= prune.delta_cut
            # hereditary closure: every single-lowering child must be kept
            prev = block_bits[k - 1]
            for j in range(n_atoms):
                bit = np.uint64(1 << j)
                has = (bits & bit) != 0
                cand = np.nonzero(keep & has)[0]
                if cand.size == 0:
                    continue
                child = bits[cand] ^ bit
                pos = np.searchsorted(prev, child)
                ok = pos < prev.shape[0]
                ok[ok] &= prev[np.minimum(pos, prev.shape[0] - 1)][ok] == child[ok]
                keep[cand[~ok]] = False
        block_bits.append(bits[keep])
        pruned_blocks.append(bits[~keep])
        if prune is not None:
            if energies is None:
                energies = config_energies(bits, prune.delta)
            block_energies.append(energies[keep])

    energies = np.concatenate(block_energies) if prune is not None else None
    return BasisSet(n_atoms, n_max, block_bits, pruned_blocks, energies)


def rank(config, basis: BasisSet) -> int:
    """Dense index of ``config`` in ``basis`` (see :meth:`BasisSet.rank`)."""
    return basis.rank(config)


def unrank(index: int, basis: BasisSet) -> Configuration:
    """Configuration at dense index ``index`` (inverse of :func:`rank`)."""
    return basis.unrank(index)


def lower(config: Configuration, j: int) -> Configuration:
    """Clear bit j (decay of atom j).  Raises ``ValueError`` when the bit is
    not set, which corresponds to annihilating the state."""
    bits = config.bits if isinstance(config, Configuration) else int(config)
    if not (bits >> j) & 1:
        raise ValueError(f"atom {j} is not excited: lowering annihilates the state")
    return Configuration(bits & ~(1 << j))


@dataclass
class StateVector:
    """Complex amplitudes over a :class:`BasisSet`.

    The norm is allowed to decay below one during no-jump evolution; library
    routines keep ``norm2`` in sync with ``amplitudes``.
    """

    amplitudes: np.ndarray
    basis: BasisSet
    norm2: float = -1.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitudes shape {self.amplitudes.shape} does not match dim {self.basis.dim}"
            )
        if self.norm2 < 0:
            self.norm2 = float(np.vdot(self.amplitudes, self.amplitudes).real)

    def normalized(self) -> "StateVector":
        if self.norm2 <= 0:
            raise ValueError("cannot normalize a zero state")
        return StateVector(self.amplitudes / math.sqrt(self.norm2), self.basis, 1.0)

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.basis, self.norm2)


def ground_state(basis: BasisSet) -> StateVector:
    """All atoms in the ground state (the first basis configuration)."""
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps, basis, 1.0)
