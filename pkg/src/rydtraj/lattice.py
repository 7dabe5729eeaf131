"""Atom geometry, physical parameters, and derived interaction scales.

Atoms sit on a square lattice clipped to a 2D disk.  Each pair (i, j) of
simultaneously excited atoms acquires a van der Waals level shift
``delta_ij = c6 / r_ij**6``.  The blockade distance ``d_b`` is the separation
at which this shift equals the steady-state excitation linewidth
``w = 2 * omega * sqrt(gamma_rg / gamma_r)``, with
``gamma_rg = gamma_r / 2 + 2 * gamma_z``.

All rates and frequencies are angular frequencies.  The natural convention
throughout the package is ``omega = 1`` with time in units of ``1/omega``;
SI values (rad/s, lengths in micrometers) work equally well as long as they
are used consistently.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalParams",
    "AtomGeometry",
    "InteractionMatrix",
    "DerivedScales",
    "derived_gamma_rg",
    "excitation_linewidth",
    "blockade_distance",
    "derived_scales",
    "build_disk_lattice",
    "geometry_from_positions",
    "spacing_for_target_n",
    "interaction_matrix",
    "geometry_to_json",
    "geometry_from_json",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Drive strength and relaxation rates of the two-level atoms.

    Parameters
    ----------
    omega : float
        Rabi frequency of the resonant drive (angular frequency).
    gamma_r : float
        Population decay rate of the excited state.
    gamma_z : float
        Relaxation rate of the ground-excited coherence.
    c6 : float
        van der Waals coefficient, in (angular frequency) * length**6.
    """

    omega: float
    gamma_r: float
    gamma_z: float
    c6: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.gamma_r < 0:
            raise ValueError(f"gamma_r must be non-negative, got {self.gamma_r}")
        if self.gamma_z < 0:
            raise ValueError(f"gamma_z must be non-negative, got {self.gamma_z}")
        if not self.c6 > 0:
            raise ValueError(f"c6 must be positive, got {self.c6}")

    @property
    def linewidth_valid(self) -> bool:
        """True when omega**2 > gamma_r * gamma_rg, the regime where the
        saturated-linewidth formula holds."""
        return self.omega**2 > self.gamma_r * derived_gamma_rg(self)


def derived_gamma_rg(params: PhysicalParams) -> float:
    """Coherence decay rate gamma_rg = gamma_r / 2 + 2 * gamma_z."""
    return 0.5 * params.gamma_r + 2.0 * params.gamma_z


def excitation_linewidth(params: PhysicalParams) -> float:
    """Saturated excitation linewidth w = 2 * omega * sqrt(gamma_rg / gamma_r).

    Raises ``ValueError`` when ``gamma_r == 0`` (the formula is singular) and
    warns when the validity condition ``omega**2 > gamma_r * gamma_rg`` fails.
    """
    if params.gamma_r <= 0:
        raise ValueError("excitation linewidth undefined: gamma_r = 0")
    if not params.linewidth_valid:
        warnings.warn(
            "linewidth formula outside its validity regime "
            "(omega**2 <= gamma_r * gamma_rg)",
            stacklevel=2,
        )
    return 2.0 * params.omega * math.sqrt(derived_gamma_rg(params) / params.gamma_r)


def blockade_distance(params: PhysicalParams) -> float:
    """Distance d_b at which the pair shift equals the linewidth: (c6/w)**(1/6)."""
    w = excitation_linewidth(params)
    return (params.c6 / w) ** (1.0 / 6.0)


@dataclass(frozen=True)
class DerivedScales:
    gamma_rg: float
    linewidth: float
    blockade_dist: float
    linewidth_valid: bool


def derived_scales(params: PhysicalParams) -> DerivedScales:
    """Bundle gamma_rg, w and d_b with the linewidth validity flag."""
    return DerivedScales(
        gamma_rg=derived_gamma_rg(params),
        linewidth=excitation_linewidth(params),
        blockade_dist=blockade_distance(params),
        linewidth_valid=params.linewidth_valid,
    )


@dataclass(frozen=True)
class AtomGeometry:
    """Positions of N atoms on a square lattice clipped to a disk.

    ``positions`` is an (N, 2) float array.  ``spacing`` is the lattice
    constant and ``diameter`` the disk diameter, in the same length unit as
    the positions.
    """

    positions: np.ndarray
    spacing: float
    diameter: float
    n_atoms: int

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (N, 2) array")
        if self.n_atoms != pos.shape[0]:
            raise ValueError("n_atoms does not match the number of positions")

    def validate(self, eps: float = 1e-9):
        """Check disk membership and the minimum-separation invariant."""
        center = self.positions.mean(axis=0)
        r = np.linalg.norm(self.positions - center, axis=1)
        if np.any(r > 0.5 * self.diameter + 1e-12 * self.diameter):
            raise ValueError("positions extend outside the stated disk")
        if self.n_atoms > 1:
            d = _pairwise_distances(self.positions)
            dmin = d[np.triu_indices(self.n_atoms, k=1)].min()
            if dmin < self.spacing - eps * self.spacing:
                raise ValueError("pairwise distance below the lattice spacing")


def _pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def build_disk_lattice(
    spacing: float, diameter: float, center_mode: str = "site"
) -> AtomGeometry:
    """Square lattice clipped to a disk of the given diameter.

    ``center_mode="site"`` puts a lattice site at the disk center (odd-type
    fillings such as N = 9, 21, 37); ``"plaquette"`` centers the disk between
    four sites (even-type fillings such as N = 16).  The resulting atom
    number is an output, not an input; use :func:`spacing_for_target_n` to
    hit a specific N.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    if diameter <= 0:
        raise ValueError(f"diameter must be positive, got {diameter}")
    if center_mode == "site":
        offset = 0.0
    elif center_mode == "plaquette":
        offset = 0.5
    else:
        raise ValueError(f"unknown center_mode {center_mode!r}")

    radius = 0.5 * diameter
    k = int(math.floor(radius / spacing)) + 2
    idx = np.arange(-k, k + 1, dtype=float) + offset
    coords = idx * spacing
    x, y = np.meshgrid(coords, coords, indexing="ij")
    keep = x**2 + y**2 <= (radius + 1e-12 * diameter) ** 2
    pos = np.column_stack([x[keep], y[keep]])
    if pos.shape[0] == 0:
        raise ValueError(
            f"empty geometry: no lattice sites inside disk of diameter {diameter} "
            f"at spacing {spacing} ({center_mode}-centered)"
        )
    order = np.lexsort((pos[:, 0], pos[:, 1]))
    pos = pos[order]
    return AtomGeometry(pos, spacing, diameter, pos.shape[0])


def geometry_from_positions(positions) -> AtomGeometry:
    """Wrap an explicit position list; spacing and diameter are inferred
    (minimum pairwise distance, twice the maximum distance from the centroid)."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = pos.shape[0]
    if n == 0:
        raise ValueError("empty geometry: no positions given")
    center = pos.mean(axis=0)
    radius = float(np.linalg.norm(pos - center, axis=1).max())
    if n > 1:
        d = _pairwise_distances(pos)
        dmin = float(d[np.triu_indices(n, k=1)].min())
        if dmin <= 0:
            raise ValueError("coincident atoms in position list")
    else:
        dmin = 1.0
    return AtomGeometry(pos, dmin, max(2.0 * radius, dmin), n)


def _radius_thresholds(center_mode: str, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted squared radii of lattice shells and cumulative site counts."""
    offset = 0.0 if center_mode == "site" else 0.5
    idx = np.arange(-k, k + 1, dtype=float) + offset
    x, y = np.meshgrid(idx, idx, indexing="ij")
    r2 = np.sort((x**2 + y**2).ravel())
    uniq, counts = np.unique(np.round(r2, 9), return_counts=True)
    return uniq, np.cumsum(counts)


def spacing_for_target_n(
    diameter: float, n_atoms: int, center_mode: str = "site"
) -> float:
    """Lattice spacing that yields exactly ``n_atoms`` sites inside the disk.

    The site count as a function of spacing is a step function whose jumps
    occur at shell radii of the square lattice; the spacing returned is the
    midpoint of the interval that realizes the requested count.  Raises
    ``ValueError`` when that count is not achievable, naming the closest
    achievable ones.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be at least 1")
    if center_mode not in ("site", "plaquette"):
        raise ValueError(f"unknown center_mode {center_mode!r}")
    k = int(math.ceil(math.sqrt(n_atoms))) + 3
    uniq, cum = _radius_thresholds(center_mode, k)
    hits = np.nonzero(cum == n_atoms)[0]
    if hits.size == 0:
        below = cum[cum < n_atoms].max(initial=0)
        above = cum[cum > n_atoms].min()
        raise ValueError(
            f"{n_atoms} sites not achievable with {center_mode}-centered disk "
            f"(closest counts: {int(below)}, {int(above)})"
        )
    j = hits[0]
    mid = 0.5 * (uniq[j] + uniq[j + 1])
    return 0.5 * diameter / math.sqrt(mid)


@dataclass(frozen=True)
class InteractionMatrix:
    """Symmetric matrix of pairwise level shifts, zero on the diagonal."""

    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))

    @property
    def n_atoms(self) -> int:
        return self.delta.shape[0]


def interaction_matrix(
    geometry: AtomGeometry, params: PhysicalParams
) -> InteractionMatrix:
    """Pairwise van der Waals shifts delta_ij = c6 / |x_i - x_j|**6."""
    n = geometry.n_atoms
    if n == 1:
        return InteractionMatrix(np.zeros((1, 1)))
    d = _pairwise_distances(geometry.positions)
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] == 0):
        raise ValueError("coincident atoms: interaction shift is singular")
    delta = np.zeros((n, n))
    delta[off] = params.c6 / d[off] ** 6
    if not np.all(np.isfinite(delta)):
        raise ValueError("non-finite interaction shift")
    return InteractionMatrix(delta)


def geometry_to_json(geometry: AtomGeometry, length_unit: str = "um") -> str:
    """Serialize a geometry; ``length_unit`` is carried as a flag
    ("um" or "d_b") and does not rescale the stored numbers."""
    if length_unit not in ("um", "d_b"):
        raise ValueError(f"unknown length_unit {length_unit!r}")
    payload = {
        "spacing": geometry.spacing,
        "diameter": geometry.diameter,
        "positions": geometry.positions.tolist(),
        "length_unit": length_unit,
    }
    return json.dumps(payload, indent=2)


def geometry_from_json(text: str) -> tuple[AtomGeometry, str]:
    """Inverse of :func:`geometry_to_json`; returns (geometry, length_unit)."""
    payload = json.loads(text)
    pos = np.asarray(payload["positions"], dtype=float)
    geom = AtomGeometry(pos, float(payload["spacing"]), float(payload["diameter"]), pos.shape[0])
    unit = payload.get("length_unit", "um")
    if unit not in ("um", "d_b"):
        raise ValueError(f"unknown length_unit {unit!r}")
    return geom, unit
