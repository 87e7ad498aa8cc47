"""Writers: legacy ASCII VTK snapshots, convergence CSV, timing reports,
and the binary reference-solution cache.

All output is deterministic: no wall-clock time stamps appear in any data
section, and floats are printed with 17 significant digits (VTK) so parsed
values round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

from .forces import FieldState
from .geometry import PointCloud

_CACHE_MAGIC = "peridyn reference cache 1"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_vtk(cloud: PointCloud, state: FieldState, damage: np.ndarray,
              path):
    """Legacy ASCII VTK unstructured grid of vertices with point data
    arrays 'displacement', 'velocity' (padded to 3 components) and the
    scalar 'damage'."""
    n = cloud.n_points
    pos3 = np.zeros((n, 3))
    pos3[:, :cloud.dim] = cloud.positions

    def pad(a):
        out = np.zeros((n, 3))
        out[:, :cloud.dim] = a
        return out

    lines = [
        "# vtk DataFile Version 3.0",
        "peridyn snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    lines += [" ".join(_fmt(v) for v in row) for row in pos3]
    lines.append(f"CELLS {n} {2 * n}")
    lines += [f"1 {i}" for i in range(n)]
    lines.append(f"CELL_TYPES {n}")
    lines += ["1"] * n
    lines.append(f"POINT_DATA {n}")
    for name, arr in (("displacement", pad(state.u)), ("velocity", pad(state.v))):
        lines.append(f"VECTORS {name} double")
        lines += [" ".join(_fmt(v) for v in row) for row in arr]
    lines.append("SCALARS damage double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [_fmt(v) for v in damage]
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")


def write_csv(rows, path):
    """Convergence rows as CSV: header dt,K,scope,error,CR; scientific
    notation with 6 significant digits; CR empty on first rows."""
    lines = ["dt,K,scope,error,CR"]
    for row in rows:
        cr = "" if row.cr is None else f"{row.cr:.5e}"
        lines.append(f"{row.dt:.5e},{row.K},{row.scope},{row.error:.5e},{cr}")
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")


def read_csv(path):
    """Parse a convergence CSV back into ConvergenceRow objects."""
    from .analysis import ConvergenceRow

    rows = []
    with open(path) as fp:
        header = fp.readline().strip()
        if header != "dt,K,scope,error,CR":
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in fp:
            line = line.strip()
            if not line:
                continue
            dt, k, scope, err, cr = line.split(",")
            rows.append(ConvergenceRow(
                dt=float(dt), K=int(k), scope=scope, error=float(err),
                cr=None if cr == "" else float(cr)))
    return rows


def write_timing(timing, path):
    """Flat text record of the phase timings: phase,calls,seconds."""
    lines = ["phase,calls,seconds"]
    for name, calls, secs in timing.rows():
        lines.append(f"{name},{calls},{secs:.6f}")
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")


def reference_cache_key(canonical_text: str, order: int, dt_ref: float) -> str:
    payload = f"{canonical_text}\norder={order}\ndt_ref={dt_ref.hex()}"
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def reference_cache_path(cache_dir, key: str) -> str:
    return os.path.join(cache_dir, f"ref_{key}.bin")


def save_reference(path, state: FieldState):
    """Flat binary dump with a small text header (native little-endian
    float64, u then v, C order)."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    n, dim = state.u.shape
    header = (f"{_CACHE_MAGIC}\n"
              f"dim {dim}\n"
              f"points {n}\n"
              f"components {2 * dim}\n"
              f"final_time {_fmt(state.t)}\n")
    with open(path, "wb") as fp:
        fp.write(header.encode())
        np.ascontiguousarray(state.u, dtype="<f8").tofile(fp)
        np.ascontiguousarray(state.v, dtype="<f8").tofile(fp)


def load_reference(path) -> FieldState | None:
    """Read a cached reference; None when the file does not exist."""
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fp:
        magic = fp.readline().decode().strip()
        if magic != _CACHE_MAGIC:
            raise ValueError(f"{path}: not a reference cache file")
        meta = {}
        for _ in range(4):
            key, value = fp.readline().decode().split()
            meta[key] = value
        dim = int(meta["dim"])
        n = int(meta["points"])
        data = np.fromfile(fp, dtype="<f8", count=2 * n * dim)
    u = data[:n * dim].reshape(n, dim)
    v = data[n * dim:].reshape(n, dim)
    return FieldState(u=u, v=v, t=float(meta["final_time"]))
