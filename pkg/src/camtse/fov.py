"""Camera field-of-view geometry in the space-time plane.

The camera drives against the observed traffic (towards decreasing ``x``)
and looks ahead, so a vehicle at ``x`` is visible at ``t`` when
``near <= cam(t) - x <= far``. The region swept by this window is a band
below the camera line.
"""
from __future__ import annotations

import numpy as np

from .core import GridSpec, SpaceTimeDiagram, Trajectory

_EPS = 1e-9


def _linear_window(t0, t1, f0, f1, lo, hi):
    """Sub-interval of [t0, t1] where the linear f lies in [lo, hi], or None."""
    if f0 == f1:
        return (t0, t1) if lo <= f0 <= hi else None
    # parameter s in [0, 1] where f = f0 + s (f1 - f0)
    s_lo = (lo - f0) / (f1 - f0)
    s_hi = (hi - f0) / (f1 - f0)
    a, b = max(0.0, min(s_lo, s_hi)), min(1.0, max(s_lo, s_hi))
    if a > b:
        return None
    return t0 + a * (t1 - t0), t0 + b * (t1 - t0)


def visible_windows(traj: Trajectory, camera: Trajectory, fov) -> list[tuple[float, float]]:
    """Maximal time intervals during which ``traj`` is inside the camera window."""
    near, far = fov
    if len(traj) == 0:
        return []
    t_lo, t_hi = traj.t[0], traj.t[-1]
    inner = camera.t[(camera.t > t_lo) & (camera.t < t_hi)]
    tm = np.union1d(traj.t, inner)
    tm = tm[(tm >= camera.t[0]) & (tm <= camera.t[-1])]
    if tm.size == 0:
        return []
    d = np.interp(tm, camera.t, camera.x) - np.interp(tm, traj.t, traj.x)
    if tm.size == 1:
        return [(tm[0], tm[0])] if near - _EPS <= d[0] <= far + _EPS else []

    windows: list[list[float]] = []
    for i in range(tm.size - 1):
        w = _linear_window(tm[i], tm[i + 1], d[i], d[i + 1], near - _EPS, far + _EPS)
        if w is None:
            continue
        if windows and w[0] - windows[-1][1] <= _EPS:
            windows[-1][1] = max(windows[-1][1], w[1])
        else:
            windows.append([w[0], w[1]])
    return [(a, b) for a, b in windows if b - a > _EPS]


def _cut(traj: Trajectory, a: float, b: float, vid: str) -> Trajectory:
    inside = (traj.t > a + _EPS) & (traj.t < b - _EPS)
    t = np.concatenate([[a], traj.t[inside], [b]])
    x = np.interp(t, traj.t, traj.x)
    # snap the window edges onto existing samples so repeated cuts are stable
    for pos, edge in ((0, a), (-1, b)):
        hit = np.nonzero(np.abs(traj.t - edge) <= _EPS)[0]
        if hit.size:
            t[pos], x[pos] = traj.t[hit[0]], traj.x[hit[0]]
    return Trajectory(vid, t, x)


def apply_camera_mask(diagram: SpaceTimeDiagram) -> SpaceTimeDiagram:
    """Keep only the trajectory portions seen through the camera's field of view.

    A vehicle seen during several disjoint windows is split into pieces
    named ``<id>.<n>``.
    """
    kept = []
    for v in diagram.vehicles:
        wins = visible_windows(v, diagram.camera, diagram.fov)
        for n, (a, b) in enumerate(wins):
            vid = v.vehicle_id if len(wins) == 1 else f"{v.vehicle_id}.{n}"
            kept.append(_cut(v, a, b, vid))
    return SpaceTimeDiagram(diagram.grid, tuple(kept), diagram.camera, diagram.fov, diagram.run_id)


def sweep_area(camera: Trajectory, fov, grid: GridSpec) -> np.ndarray:
    """Area (m*s) of each grid cell covered by the field-of-view band.

    The band edges are piecewise linear in ``t``, so the covered length of a
    cell is piecewise linear between kink times and the trapezoid rule on the
    kink set is exact.
    """
    near, far = fov
    xe, te = grid.x_edges(), grid.t_edges()
    ct, cx = camera.t, camera.x
    levels = np.concatenate([xe + near, xe + far])
    levels = levels[np.isfinite(levels)]
    kinks = [ct, te]
    for k in range(ct.size - 1):
        c0, c1 = cx[k], cx[k + 1]
        if c0 == c1:
            continue
        s = (levels - c0) / (c1 - c0)
        s = s[(s > 0) & (s < 1)]
        kinks.append(ct[k] + s * (ct[k + 1] - ct[k]))
    bp = np.unique(np.concatenate(kinks))
    bp = bp[(bp >= max(0.0, ct[0])) & (bp <= min(grid.T, ct[-1]))]
    if bp.size < 2:
        return np.zeros(grid.shape)

    cam = np.interp(bp, ct, cx)
    lo = np.maximum((cam - far)[:, None], xe[None, :-1])
    hi = np.minimum((cam - near)[:, None], xe[None, 1:])
    cover = np.clip(hi - lo, 0.0, None)  # (breakpoints, alpha)

    area = np.zeros(grid.shape)
    for j in range(grid.beta):
        sel = (bp >= te[j]) & (bp <= te[j + 1])
        if sel.sum() >= 2:
            area[:, j] = np.trapezoid(cover[sel], bp[sel], axis=0)
    return area
