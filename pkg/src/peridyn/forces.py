"""Bond forces, the semi-discrete spatial operator, and bond damage.

The operator maps a packed state array Y = [u | v] of shape (N, 2*dim) to
its time derivative: du/dt = v and dv/dt = (sum of pairwise bond forces
times neighbor volume, plus body force) / rho.  Velocity-constraint layers
override du/dt with the prescribed velocity and zero the acceleration.

Evaluation can be restricted to a subset of target points (a "view"): the
multi-time-step scheme advances the coarse and fine subdomains separately
and must not pay for force sums outside the active subdomain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import NeighborList, PointCloud, _concat_ranges

# Relative collapse guard for the nonlinear law's division by |xi + eta|.
COLLAPSE_TOL = 1e-12

# Bond-based peridynamics fixes Poisson's ratio by dimension.
NU_2D = 1.0 / 3.0
NU_3D = 1.0 / 4.0
_NU_TOL = 1e-9


class SimulationError(RuntimeError):
    """Raised for non-physical states encountered during a run."""


class InstabilityError(SimulationError):
    """Non-finite field detected; carries the offending point and time."""

    def __init__(self, point: int, t: float, stage: int | None = None,
                 last_good_step: int | None = None):
        self.point = point
        self.t = t
        self.stage = stage
        self.last_good_step = last_good_step
        super().__init__(self._message())

    def _message(self) -> str:
        msg = f"non-finite rate at point {self.point}, t={self.t:.6e}"
        if self.stage is not None:
            msg += f", RK stage {self.stage + 1}"
        if self.last_good_step is not None:
            msg += f" (last good step: {self.last_good_step})"
        return msg

    def with_context(self, stage=None, last_good_step=None) -> "InstabilityError":
        return InstabilityError(self.point, self.t,
                                stage if stage is not None else self.stage,
                                last_good_step if last_good_step is not None
                                else self.last_good_step)


@dataclass
class Material:
    """Elastic constants plus the calibrated micro-modulus.

    ``s0`` is the critical bond stretch; None disables fracture.  ``alpha``
    is derived from E and the horizon by calibrate_alpha.
    """

    E: float
    nu: float
    rho: float
    s0: float | None = None
    alpha: float | None = None

    def validate(self, dim: int):
        if self.E <= 0:
            raise ValueError(f"elastic modulus must be positive, got {self.E}")
        if self.rho <= 0:
            raise ValueError(f"density must be positive, got {self.rho}")
        required = NU_2D if dim == 2 else NU_3D
        if abs(self.nu - required) > _NU_TOL:
            raise ValueError(
                f"bond-based peridynamics requires nu = {'1/3' if dim == 2 else '1/4'} "
                f"in {dim}D, got {self.nu}")


@dataclass
class FieldState:
    """Displacement and velocity fields at one time level."""

    u: np.ndarray
    v: np.ndarray
    t: float

    def packed(self) -> np.ndarray:
        return np.hstack([self.u, self.v])

    @staticmethod
    def from_packed(y: np.ndarray, t: float) -> "FieldState":
        dim = y.shape[1] // 2
        return FieldState(u=y[:, :dim].copy(), v=y[:, dim:].copy(), t=t)


@dataclass
class Loading:
    """A body-force layer or a velocity-constraint layer.

    ``indices`` are the affected points; ``value`` is the force density
    (N/m^3) or the prescribed velocity (m/s) per component.  Only the
    constant time profile is implemented.
    """

    kind: str  # "body_force_layer" | "velocity_constraint"
    indices: np.ndarray
    value: np.ndarray
    profile: str = "constant"

    def __post_init__(self):
        if self.kind not in ("body_force_layer", "velocity_constraint"):
            raise ValueError(f"unknown loading kind {self.kind!r}")
        if self.profile != "constant":
            raise ValueError(f"unsupported time profile {self.profile!r}")
        if len(self.indices) == 0:
            raise ValueError("loading layer is empty")


def calibrate_alpha(material: Material, delta: float, dim: int,
                    thickness: float | None = None) -> float:
    """Micro-modulus from energy equivalence with classical elasticity:
    9E/(pi delta^3 d) in 2D, 12E/(pi delta^4) in 3D.
    """
    if dim == 2:
        if thickness is None or thickness <= 0:
            raise ValueError("2D calibration requires a positive thickness")
        return 9.0 * material.E / (np.pi * delta ** 3 * thickness)
    if dim == 3:
        return 12.0 * material.E / (np.pi * delta ** 4)
    raise ValueError(f"dim must be 2 or 3, got {dim}")


def bond_stretch(xi, eta):
    """Relative bond elongation s = (|xi + eta| - |xi|) / |xi|.

    Accepts single bonds or (M, dim) arrays.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    nxi = np.linalg.norm(xi, axis=-1)
    return (np.linalg.norm(xi + eta, axis=-1) - nxi) / nxi


def pairwise_force_linear(xi, eta, alpha: float):
    """Linearized pairwise force alpha * (xi (x) xi / |xi|^3) eta."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    nxi = np.linalg.norm(xi, axis=-1)
    dot = np.sum(xi * eta, axis=-1)
    return alpha * (dot / nxi ** 3)[..., None] * xi


def pairwise_force_nonlinear(xi, eta, alpha: float):
    """Nonlinear pairwise force alpha * s * (xi + eta)/|xi + eta|.

    Raises SimulationError if a deformed bond collapses to (numerically)
    zero length, which indicates a non-physical state.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    nxi = np.linalg.norm(xi, axis=-1)
    deformed = xi + eta
    ndef = np.linalg.norm(deformed, axis=-1)
    collapsed = ndef < COLLAPSE_TOL * nxi
    if np.any(collapsed):
        raise SimulationError("deformed bond collapsed to zero length")
    s = (ndef - nxi) / nxi
    return (alpha * s / ndef)[..., None] * deformed


@dataclass
class _View:
    """Bond-level slice of the neighbor list restricted to target rows."""

    rows: np.ndarray            # global point indices, ascending
    bond_sel: np.ndarray        # bond ids, grouped by row in CSR order
    i_local: np.ndarray         # per bond: position of its source in rows
    j_global: np.ndarray
    xi: np.ndarray
    xi_norm: np.ndarray
    constrained_local: np.ndarray
    v_prescribed: np.ndarray


class PDOperator:
    """The semi-discrete spatial operator for one cloud + material + loading.

    Instances are shared, read-only state for the steppers; the only mutable
    piece is the neighbor list's ``mu`` array, written between steps by the
    damage update.
    """

    def __init__(self, cloud: PointCloud, nbrs: NeighborList,
                 material: Material, loadings=(), law: str = "linear"):
        if law not in ("linear", "nonlinear"):
            raise ValueError(f"unknown force law {law!r}")
        material.validate(cloud.dim)
        self.cloud = cloud
        self.nbrs = nbrs
        self.material = material
        self.law = law
        self.alpha = calibrate_alpha(material, nbrs.delta, cloud.dim,
                                     cloud.thickness)
        n, dim = cloud.n_points, cloud.dim

        self.body = np.zeros((n, dim))
        constrained = np.zeros(n, dtype=bool)
        v_presc = np.zeros((n, dim))
        for load in loadings:
            value = np.asarray(load.value, dtype=float)
            if value.shape != (dim,):
                raise ValueError(
                    f"loading value must have {dim} components, got {value.shape}")
            if load.kind == "body_force_layer":
                self.body[load.indices] += value
            else:
                overlap = constrained[load.indices]
                if np.any(overlap):
                    raise ValueError(
                        "velocity-constraint layers overlap at point "
                        f"{load.indices[np.flatnonzero(overlap)[0]]}")
                constrained[load.indices] = True
                v_presc[load.indices] = value
        self.constrained_mask = constrained
        self.v_prescribed_full = v_presc
        self._full_view = self.make_view(np.arange(n, dtype=np.int64))

    def make_view(self, rows: np.ndarray) -> _View:
        """Precompute the bond slice for evaluating rates at ``rows`` only."""
        rows = np.asarray(rows, dtype=np.int64)
        off = self.nbrs.offsets
        bond_sel = _concat_ranges(off[rows], off[rows + 1])
        counts = (off[rows + 1] - off[rows])
        i_local = np.repeat(np.arange(len(rows), dtype=np.int64), counts)
        cons = np.flatnonzero(self.constrained_mask[rows])
        return _View(rows=rows, bond_sel=bond_sel, i_local=i_local,
                     j_global=self.nbrs.neighbors[bond_sel],
                     xi=self.nbrs.xi[bond_sel],
                     xi_norm=self.nbrs.xi_norm[bond_sel],
                     constrained_local=cons,
                     v_prescribed=self.v_prescribed_full[rows[cons]])

    @property
    def full_view(self) -> _View:
        return self._full_view

    def rates(self, y: np.ndarray, t: float, view: _View | None = None) -> np.ndarray:
        """d/dt of the packed state at the view's rows.

        Neighbor values are read from the full array ``y``; only the target
        rows are written.  Per-point sums run in ascending neighbor order,
        so results are reproducible bit-for-bit.
        """
        if view is None:
            view = self._full_view
        dim = self.cloud.dim
        u = y[:, :dim]
        nrows = len(view.rows)
        # overflow/NaN propagate silently here; the trap below names them
        with np.errstate(over="ignore", invalid="ignore"):
            eta = u[view.j_global] - u[view.rows[view.i_local]]
            mu = self.nbrs.mu[view.bond_sel]
            if self.law == "linear":
                dot = np.einsum("bd,bd->b", view.xi, eta)
                coef = (self.alpha * mu) * dot / view.xi_norm ** 3
                p = coef[:, None] * view.xi
            else:
                deformed = view.xi + eta
                ndef = np.linalg.norm(deformed, axis=1)
                collapsed = ndef < COLLAPSE_TOL * view.xi_norm
                if np.any(collapsed):
                    b = np.flatnonzero(collapsed)[0]
                    raise SimulationError(
                        f"bond {view.rows[view.i_local[b]]} -> {view.j_global[b]} "
                        f"collapsed to zero length at t={t:.6e}")
                s = (ndef - view.xi_norm) / view.xi_norm
                p = ((self.alpha * mu) * s / ndef)[:, None] * deformed

            force = np.empty((nrows, dim))
            for k in range(dim):
                force[:, k] = np.bincount(view.i_local, weights=p[:, k],
                                          minlength=nrows)
            accel = (force * self.cloud.volume_per_point
                     + self.body[view.rows]) / self.material.rho

        out = np.empty((nrows, 2 * dim))
        out[:, :dim] = y[view.rows, dim:]
        out[:, dim:] = accel
        if len(view.constrained_local):
            out[view.constrained_local, :dim] = view.v_prescribed
            out[view.constrained_local, dim:] = 0.0
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.isfinite(out).all(axis=1))[0]
            raise InstabilityError(point=int(view.rows[bad]), t=t)
        return out


def apply_operator(state: FieldState, cloud: PointCloud, nbrs: NeighborList,
                   material: Material, loadings=(), t: float | None = None,
                   law: str = "linear"):
    """One-shot operator application; returns (du_dt, dv_dt) arrays."""
    op = PDOperator(cloud, nbrs, material, loadings, law)
    rate = op.rates(state.packed(), state.t if t is None else t)
    dim = cloud.dim
    return rate[:, :dim], rate[:, dim:]


def bond_stretches(nbrs: NeighborList, u: np.ndarray) -> np.ndarray:
    """Current stretch of every bond (broken ones included)."""
    eta = u[nbrs.neighbors] - u[nbrs.bond_i]
    return (np.linalg.norm(nbrs.xi + eta, axis=1) - nbrs.xi_norm) / nbrs.xi_norm


def update_damage(nbrs: NeighborList, u: np.ndarray, s0: float,
                  bond_mask: np.ndarray | None = None) -> int:
    """Break every alive bond whose stretch reaches s0 (s >= s0, inclusive).

    Both directions of a bond break together; flags never reset.  Returns
    the number of newly broken (undirected) bonds.  ``bond_mask`` limits the
    check to a subset of bonds (it must be symmetric under bond reversal).
    """
    alive = nbrs.mu > 0.0
    if bond_mask is not None:
        alive = alive & bond_mask
    ids = np.flatnonzero(alive)
    if len(ids) == 0:
        return 0
    i, j = nbrs.bond_i[ids], nbrs.neighbors[ids]
    eta = u[j] - u[i]
    s = (np.linalg.norm(nbrs.xi[ids] + eta, axis=1) - nbrs.xi_norm[ids]) \
        / nbrs.xi_norm[ids]
    breaking = ids[s >= s0]
    if len(breaking) == 0:
        return 0
    both = np.union1d(breaking, nbrs.partner[breaking])
    newly = both[nbrs.mu[both] > 0.0]
    nbrs.mu[newly] = 0.0
    return len(newly) // 2


def break_precrack_bonds(cloud: PointCloud, nbrs: NeighborList,
                         segment) -> int:
    """Cut every bond whose open segment crosses the (closed) crack segment.

    2D only.  Returns the number of undirected bonds broken.
    """
    if cloud.dim != 2:
        raise ValueError("pre-cracks are only supported in 2D")
    c = np.asarray(segment[0], dtype=float)
    d = np.asarray(segment[1], dtype=float)
    a = cloud.positions[nbrs.bond_i]
    b = cloud.positions[nbrs.neighbors]

    def cross(o, p, q):
        return (p[..., 0] - o[..., 0]) * (q[..., 1] - o[..., 1]) \
            - (p[..., 1] - o[..., 1]) * (q[..., 0] - o[..., 0])

    d1 = cross(c, d, a)
    d2 = cross(c, d, b)
    d3 = cross(a, b, c)
    d4 = cross(a, b, d)
    # Bond endpoints strictly on opposite sides of the crack line (open bond
    # segment), crossing point within the closed crack segment.
    hits = (d1 * d2 < 0.0) & (d3 * d4 <= 0.0)
    ids = np.flatnonzero(hits & (nbrs.mu > 0.0))
    if len(ids) == 0:
        return 0
    both = np.union1d(ids, nbrs.partner[ids])
    newly = both[nbrs.mu[both] > 0.0]
    nbrs.mu[newly] = 0.0
    return len(newly) // 2


def damage_index(nbrs: NeighborList, i: int | None = None):
    """Volume-weighted fraction of broken bonds per point, in [0, 1].

    With uniform point volumes this is 1 - (alive bonds / total bonds).
    Points without bonds report 0.  Pass ``i`` for a single point.
    """
    counts = nbrs.counts().astype(float)
    alive = np.bincount(nbrs.bond_i, weights=nbrs.mu, minlength=nbrs.n_points)
    phi = np.zeros(nbrs.n_points)
    has = counts > 0
    phi[has] = 1.0 - alive[has] / counts[has]
    return float(phi[i]) if i is not None else phi
