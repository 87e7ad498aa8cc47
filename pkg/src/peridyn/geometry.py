"""Material-point grids, horizon neighbor lists, and subdomain classification.

The spatial substrate is a uniform lattice of material points with one
volume per point (dx^2 * thickness in 2D, dx^3 in 3D).  Each point interacts
with every other point within the horizon radius ``delta``; the neighbor
list caches the reference bond vectors and carries the per-bond alive flags
``mu`` that the damage model mutates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Fractional slack on the horizon test so lattice points lying exactly on the
# horizon sphere (delta = m*dx configurations) are not lost to rounding.
HORIZON_TOL = 1e-12

# Extent/dx mismatch tolerated by build_grid, as a fraction of the extent.
GRID_FIT_TOL = 5e-3

# Subdomain labels: fine interior, fine boundary layer, coarse boundary
# layer, coarse interior.
LABEL_F = 0
LABEL_FI = 1
LABEL_CI = 2
LABEL_C = 3

LABEL_NAMES = {LABEL_F: "F", LABEL_FI: "FI", LABEL_CI: "CI", LABEL_C: "C"}


class GeometryError(ValueError):
    """Raised for invalid grids, horizons, or selections."""


@dataclass
class PointCloud:
    """Uniform lattice of material points.

    positions has shape (N, dim) in meters; ``volume_per_point`` is the
    common cell volume (m^3).  ``thickness`` is the out-of-plane depth in 2D
    and None in 3D.  ``bounds`` is the (2, dim) bounding box.
    """

    dim: int
    positions: np.ndarray
    spacing: float
    volume_per_point: float
    bounds: np.ndarray
    thickness: float | None = None

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]


@dataclass
class NeighborList:
    """Horizon neighborhoods in CSR layout with cached bond geometry.

    Bond b runs from ``bond_i[b]`` to ``neighbors[b]``; the bonds of point i
    occupy ``offsets[i]:offsets[i+1]`` and are sorted by ascending neighbor
    index (this fixes the force summation order).  ``partner[b]`` is the
    index of the reversed bond, so symmetric damage updates are O(1).
    ``mu`` is 1.0 for alive bonds and 0.0 once broken; bonds never heal.
    """

    delta: float
    offsets: np.ndarray
    neighbors: np.ndarray
    bond_i: np.ndarray
    xi: np.ndarray
    xi_norm: np.ndarray
    partner: np.ndarray
    mu: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.mu is None:
            self.mu = np.ones(len(self.neighbors))

    @property
    def n_points(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_bonds(self) -> int:
        return len(self.neighbors)

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)


@dataclass
class SubdomainLabels:
    """Four-way partition of the cloud driven by the fine-region boxes.

    A point is fine when it lies in any fine box; it is interior to its side
    (F or C) exactly when every neighbor shares the side, otherwise it lands
    in the corresponding boundary layer (FI or CI).
    """

    labels: np.ndarray
    fine_boxes: list

    @property
    def fine_mask(self) -> np.ndarray:
        return self.labels <= LABEL_FI

    @property
    def coarse_mask(self) -> np.ndarray:
        return self.labels >= LABEL_CI

    def indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    @property
    def omega_hat_f(self) -> np.ndarray:
        """Points advanced with the fine step (F plus FI)."""
        return np.flatnonzero(self.fine_mask)

    @property
    def omega_hat_c(self) -> np.ndarray:
        """Points advanced with the coarse step (C plus CI)."""
        return np.flatnonzero(self.coarse_mask)

    @property
    def bar_f(self) -> np.ndarray:
        """Fine side plus its coarse boundary layer (scoped-error region)."""
        return np.flatnonzero(self.fine_mask | (self.labels == LABEL_CI))

    @property
    def bar_c(self) -> np.ndarray:
        """Coarse side plus its fine boundary layer (scoped-error region)."""
        return np.flatnonzero(self.coarse_mask | (self.labels == LABEL_FI))


def build_grid(box, dx: float, thickness: float | None = None) -> PointCloud:
    """Lay out points at the cell centers of a uniform lattice over ``box``.

    ``box`` is a (min_corner, max_corner) pair; its length fixes the
    dimension (2 or 3).  ``dx`` must tile every extent to within 0.5%.
    ``thickness`` is required in 2D and ignored in 3D.
    """
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1 or len(lo) not in (2, 3):
        raise GeometryError("box must be a (min, max) pair of 2D or 3D corners")
    dim = len(lo)
    extents = hi - lo
    if np.any(extents <= 0):
        raise GeometryError(f"box extents must be positive, got {extents}")
    if dx <= 0:
        raise GeometryError(f"spacing must be positive, got {dx}")
    counts = np.rint(extents / dx).astype(int)
    if np.any(counts < 1):
        raise GeometryError(f"spacing {dx} exceeds box extents {extents}")
    misfit = np.abs(counts * dx - extents)
    if np.any(misfit > GRID_FIT_TOL * extents):
        raise GeometryError(
            f"spacing {dx} does not tile extents {tuple(extents)} "
            f"(misfit {tuple(misfit)} exceeds 0.5%)")

    axes = [lo[k] + (np.arange(counts[k]) + 0.5) * dx for k in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    positions = np.column_stack([m.ravel() for m in mesh])

    if dim == 2:
        if thickness is None or thickness <= 0:
            raise GeometryError("2D grids require a positive thickness")
        volume = dx * dx * thickness
    else:
        thickness = None
        volume = dx ** 3
    bounds = np.vstack([lo, hi])
    return PointCloud(dim=dim, positions=positions, spacing=dx,
                      volume_per_point=volume, bounds=bounds,
                      thickness=thickness)


def _concat_ranges(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenate arange(starts[k], stops[k]) for all k, vectorized."""
    lengths = stops - starts
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    first = np.repeat(starts, lengths)
    reset = np.repeat(np.cumsum(lengths) - lengths, lengths)
    return first + (np.arange(total, dtype=np.int64) - reset)


def build_neighbor_list(cloud: PointCloud, delta: float) -> NeighborList:
    """Find all pairs within the horizon using uniform cell binning.

    Cost is O(N * neighbors): points are binned into cells of edge >= delta
    and pairs are generated only between adjacent cells.  Points exactly on
    the horizon sphere are kept (relative slack HORIZON_TOL).
    """
    if delta < cloud.spacing:
        raise GeometryError(
            f"horizon {delta} is degenerate: smaller than spacing {cloud.spacing}")
    pos = cloud.positions
    n = cloud.n_points
    dim = cloud.dim
    reach = delta * (1.0 + HORIZON_TOL)

    cell_size = reach * (1.0 + 1e-9)
    cells = np.floor((pos - pos.min(axis=0)) / cell_size).astype(np.int64)
    dims = cells.max(axis=0) + 1
    cell_id = np.ravel_multi_index(cells.T, dims)
    order = np.argsort(cell_id, kind="stable")
    sorted_ids = cell_id[order]
    uniq_ids, uniq_starts = np.unique(sorted_ids, return_index=True)
    uniq_stops = np.append(uniq_starts[1:], n)

    pair_i = []
    pair_j = []
    offsets_nd = np.stack(np.meshgrid(*([np.arange(-1, 2)] * dim),
                                      indexing="ij"), axis=-1).reshape(-1, dim)
    for off in offsets_nd:
        target = cells + off
        valid = np.all((target >= 0) & (target < dims), axis=1)
        src = np.flatnonzero(valid)
        if not len(src):
            continue
        tgt_id = np.ravel_multi_index(target[src].T, dims)
        loc = np.searchsorted(uniq_ids, tgt_id)
        found = (loc < len(uniq_ids))
        found[found] &= uniq_ids[loc[found]] == tgt_id[found]
        src = src[found]
        loc = loc[found]
        starts, stops = uniq_starts[loc], uniq_stops[loc]
        pair_i.append(np.repeat(src, stops - starts))
        pair_j.append(order[_concat_ranges(starts, stops)])

    bi = np.concatenate(pair_i) if pair_i else np.empty(0, np.int64)
    bj = np.concatenate(pair_j) if pair_j else np.empty(0, np.int64)

    diff = pos[bj] - pos[bi]
    dist = np.linalg.norm(diff, axis=1)
    coincident = (dist == 0.0) & (bi != bj)
    if np.any(coincident):
        k = np.flatnonzero(coincident)[0]
        raise GeometryError(
            f"points {bi[k]} and {bj[k]} coincide; zero-length bonds are not allowed")
    keep = (dist <= reach) & (bi != bj)
    bi, bj, diff, dist = bi[keep], bj[keep], diff[keep], dist[keep]

    sort = np.lexsort((bj, bi))
    bi, bj, diff, dist = bi[sort], bj[sort], diff[sort], dist[sort]

    counts = np.bincount(bi, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])

    keys = bi * np.int64(n) + bj
    partner = np.searchsorted(keys, bj * np.int64(n) + bi)
    if not np.array_equal(keys[partner], bj * np.int64(n) + bi):
        raise GeometryError("neighbor relation is not symmetric (internal error)")

    return NeighborList(delta=delta, offsets=offsets, neighbors=bj,
                        bond_i=bi, xi=diff, xi_norm=dist, partner=partner)


def _in_boxes(positions: np.ndarray, boxes) -> np.ndarray:
    """Closed-box membership of each position in any of the boxes."""
    inside = np.zeros(len(positions), dtype=bool)
    for lo, hi in boxes:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        inside |= np.all((positions >= lo) & (positions <= hi), axis=1)
    return inside


def classify_subdomains(cloud: PointCloud, nbrs: NeighborList,
                        fine_boxes) -> SubdomainLabels:
    """Partition points into F / FI / CI / C from the fine-region boxes.

    Horizon containment is decided on the discrete neighbor list: a point is
    interior to its side exactly when every neighbor lies on the same side.
    An empty box list labels everything C.
    """
    fine = _in_boxes(cloud.positions, fine_boxes)
    fine_j = fine[nbrs.neighbors]
    has_coarse_nbr = np.bincount(nbrs.bond_i, weights=~fine_j,
                                 minlength=cloud.n_points) > 0
    has_fine_nbr = np.bincount(nbrs.bond_i, weights=fine_j,
                               minlength=cloud.n_points) > 0
    labels = np.full(cloud.n_points, LABEL_C, dtype=np.int8)
    labels[~fine & has_fine_nbr] = LABEL_CI
    labels[fine] = LABEL_F
    labels[fine & has_coarse_nbr] = LABEL_FI
    return SubdomainLabels(labels=labels, fine_boxes=list(fine_boxes))


def select_layer(cloud: PointCloud, region) -> np.ndarray:
    """Indices of points inside the closed axis-aligned ``region`` box.

    An empty selection raises: a loading or constraint layer that grabs no
    points is a configuration bug, not a benign no-op.
    """
    lo, hi = region
    idx = np.flatnonzero(_in_boxes(cloud.positions, [(lo, hi)]))
    if len(idx) == 0:
        raise GeometryError(f"layer {lo}..{hi} selects no points")
    return idx
