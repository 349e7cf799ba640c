"""Edie aggregation of trajectories into density matrices, and quartet extraction."""
from __future__ import annotations

import csv
import os
from typing import Iterable, Sequence

import numpy as np

from .core import BoundaryVector, DensityMatrix, FDParams, GridSpec, Quartet, SpaceTimeDiagram, Trajectory, _flow
from .fov import apply_camera_mask, sweep_area


def _segments(trajectories: Iterable[Trajectory]):
    ta, tb, xa, xb = [], [], [], []
    for v in trajectories:
        if len(v) < 2:
            continue
        ta.append(v.t[:-1])
        tb.append(v.t[1:])
        xa.append(v.x[:-1])
        xb.append(v.x[1:])
    if not ta:
        return (np.empty(0),) * 4
    return tuple(np.concatenate(a) for a in (ta, tb, xa, xb))


def edie_sums(trajectories: Iterable[Trajectory], grid: GridSpec):
    """Per-cell total time spent (s) and distance travelled (m).

    Trajectories are linear between samples. A vehicle standing exactly on a
    cell edge is attributed to the higher-index cell (the last cell owns x=L).
    """
    ta, tb, xa, xb = _segments(trajectories)
    time = np.zeros(grid.shape)
    dist = np.zeros(grid.shape)
    if ta.size == 0:
        return time, dist
    xe, te = grid.x_edges(), grid.t_edges()
    a, b = grid.alpha, grid.beta
    for j in range(b):
        lo = np.maximum(ta, te[j])
        hi = np.minimum(tb, te[j + 1])
        ok = hi > lo
        if not ok.any():
            continue
        s0, s1, x0, x1 = ta[ok], tb[ok], xa[ok], xb[ok]
        lo, hi = lo[ok], hi[ok]
        frac = (np.stack([lo, hi]) - s0) / (s1 - s0)
        p = x0 + frac * (x1 - x0)  # positions at lo and hi
        pmin, pmax = p.min(axis=0), p.max(axis=0)
        dur = hi - lo
        # sub-picometre motion counts as standing; avoids dur/span blowing up
        moving = pmax - pmin > 1e-12 * grid.dx
        # moving pieces: time share proportional to spatial overlap
        ov = np.clip(np.minimum(pmax[:, None], xe[None, 1:]) - np.maximum(pmin[:, None], xe[None, :-1]), 0, None)
        span = np.where(moving, pmax - pmin, 1.0)
        t_mv = np.where(moving[:, None], ov * (dur / span)[:, None], 0.0)
        # standing pieces: whole duration to the owning cell
        idx = np.clip(np.searchsorted(xe, pmin, side="right") - 1, 0, a - 1)
        t_st = np.zeros_like(t_mv)
        still = ~moving
        t_st[np.nonzero(still)[0], idx[still]] = dur[still]
        time[:, j] = (t_mv + t_st).sum(axis=0)
        dist[:, j] = np.where(moving[:, None], ov, 0.0).sum(axis=0)
    return time, dist


def _check_extent(diagram: SpaceTimeDiagram, grid: GridSpec):
    if abs(diagram.grid.L - grid.L) > 1e-9 or abs(diagram.grid.T - grid.T) > 1e-9:
        raise ValueError(
            f"diagram covers L={diagram.grid.L}, T={diagram.grid.T} but grid expects L={grid.L}, T={grid.T}"
        )


def aggregate(diagram: SpaceTimeDiagram, grid: GridSpec | None = None, masked: bool = False,
              min_coverage: float = 0.0, normalize: str = "visible") -> DensityMatrix:
    """Edie density of every cell.

    Unmasked: every cell observed, density = vehicle-seconds / (dx*dt).

    Masked: only trajectory portions inside the camera window count. A cell is
    observed when the window band covers more than ``min_coverage`` of its
    area (any overlap by default). With ``normalize="visible"`` the density is
    vehicle-seconds over the covered area, i.e. Edie's definition applied to
    the observed part of the cell; ``"cell"`` divides by the full cell area.
    """
    grid = grid or diagram.grid
    _check_extent(diagram, grid)
    cell_area = grid.dx * grid.dt
    if not masked:
        time, _ = edie_sums(diagram.vehicles, grid)
        return DensityMatrix.full(grid, time / cell_area)
    if normalize not in ("visible", "cell"):
        raise ValueError(f"normalize must be 'visible' or 'cell', got {normalize!r}")
    seen = apply_camera_mask(diagram)
    time, _ = edie_sums(seen.vehicles, grid)
    area = sweep_area(diagram.camera, diagram.fov, grid)
    observed = area > max(min_coverage, 1e-9) * cell_area
    denom = area if normalize == "visible" else np.full(grid.shape, cell_area)
    cells = np.where(observed, time / np.where(observed, denom, 1.0), np.nan)
    return DensityMatrix(grid, cells, observed)


def edie_flow_density(diagram: SpaceTimeDiagram, grid: GridSpec | None = None):
    """Ground-truth Edie (flow veh/s, density veh/m) per cell, unmasked."""
    grid = grid or diagram.grid
    time, dist = edie_sums(diagram.vehicles, grid)
    area = grid.dx * grid.dt
    return dist / area, time / area


def extract_quartets(matrices: Sequence[DensityMatrix]) -> list[Quartet]:
    """All fully observed (up, mid, down, next) patterns, ordered by matrix, t, x."""
    out: list[Quartet] = []
    if not matrices:
        return out
    grid = matrices[0].grid
    for m in matrices:
        if m.grid != grid:
            raise ValueError("all matrices must share one grid")
        k, o = m.cells, m.observed
        a, b = grid.shape
        for j in range(b - 1):
            for i in range(1, a - 1):
                if o[i - 1, j] and o[i, j] and o[i + 1, j] and o[i, j + 1]:
                    out.append(Quartet(float(k[i - 1, j]), float(k[i, j]), float(k[i + 1, j]), float(k[i, j + 1])))
    return out


def measure_boundary(truth: DensityMatrix, fd: FDParams, method: str = "flow") -> BoundaryVector:
    """Boundary vector read off a fully observed matrix; ``init`` is column 0.

    ``method="flow"`` inverts the CTM update at the two edge cells: the
    inflow (outflow) density is the virtual-cell density whose sending
    (receiving) flow reproduces the observed change of the first (last) cell
    between columns ``j`` and ``j+1``. The last column has no successor and
    keeps a zero entry, which no rollout reads.

    ``method="edge"`` copies the edge-cell densities of column ``j``
    unchanged. It lags the true boundary by one step and is kept for
    comparison only.

    Values are clipped to ``[0, k_j]``.
    """
    k = np.clip(truth.filled(0.0), 0.0, fd.k_j)
    if method == "edge":
        return BoundaryVector(k[:, 0], k[0, :], k[-1, :])
    if method != "flow":
        raise ValueError(f"method must be 'flow' or 'edge', got {method!r}")
    grid = truth.grid
    ratio = grid.dt / grid.dx
    inflow = np.zeros(grid.beta)
    outflow = np.zeros(grid.beta)
    if grid.alpha < 2 or grid.beta < 2:
        return BoundaryVector(k[:, 0], inflow, outflow)
    now, nxt = k[:, :-1], k[:, 1:]
    q_first = _flow(fd.v_f, fd.w_c, fd.k_j, now[0], now[1])
    q_in = (nxt[0] - now[0]) / ratio + q_first
    inflow[:-1] = np.clip(q_in / fd.v_f, 0.0, fd.k_j)
    q_last = _flow(fd.v_f, fd.w_c, fd.k_j, now[-2], now[-1])
    q_out = np.clip(q_last - (nxt[-1] - now[-1]) / ratio, 0.0, fd.v_f * now[-1])
    outflow[:-1] = np.clip(fd.k_j - q_out / fd.w_c, 0.0, fd.k_j)
    return BoundaryVector(k[:, 0], inflow, outflow)


# -- CSV serialisation --------------------------------------------------------

def _atomic_write_rows(path, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows(rows)
    os.replace(tmp, path)


def save_matrix(m: DensityMatrix, cells_path, mask_path=None) -> None:
    """Write alpha rows x beta columns; unobserved cells are empty fields."""
    rows = [["" if not o else repr(float(v)) for v, o in zip(r, ro)] for r, ro in zip(m.cells, m.observed)]
    _atomic_write_rows(cells_path, rows)
    if mask_path is not None:
        _atomic_write_rows(mask_path, [[int(o) for o in ro] for ro in m.observed])


def load_matrix(grid: GridSpec, cells_path, mask_path=None) -> DensityMatrix:
    with open(cells_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cells = np.array([[float(v) if v != "" else np.nan for v in r] for r in rows])
    if cells.shape != grid.shape:
        raise ValueError(f"{cells_path}: matrix shape {cells.shape} != grid {grid.shape}")
    if mask_path is not None:
        with open(mask_path, newline="", encoding="utf-8") as fh:
            observed = np.array([[v == "1" for v in r] for r in csv.reader(fh)])
    else:
        observed = ~np.isnan(cells)
    return DensityMatrix(grid, cells, observed)
