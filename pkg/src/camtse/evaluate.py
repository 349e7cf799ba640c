"""Scoring of completed density fields against ground truth."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DensityMatrix, GridSpec, SpaceTimeDiagram, Trajectory

MASK_REGIONS = ("ahead", "swept")


def _camera_range(camera: Trajectory, t0: float, t1: float):
    inner = camera.t[(camera.t > t0) & (camera.t < t1)]
    pts = np.interp(np.concatenate([[t0], inner, [t1]]), camera.t, camera.x)
    return pts.min(), pts.max()


def camera_mask(diagram: SpaceTimeDiagram, grid: GridSpec | None = None, region: str = "ahead") -> np.ndarray:
    """Cells scored by the masked RMSE, as an alpha x beta boolean array.

    ``region="ahead"``: the whole cell stays below the camera line
    (``x <= cam(t)`` throughout the cell), i.e. traffic the camera has not met
    yet and will see. ``region="swept"``: the camera has left the cell's
    spatial extent by the end of the cell's time interval, i.e. it has
    already crossed the lower cell edge (``cam(t_end) <= x_lo`` and it stays there).
    """
    grid = grid or diagram.grid
    if region not in MASK_REGIONS:
        raise ValueError(f"region must be one of {MASK_REGIONS}")
    xe, te = grid.x_edges(), grid.t_edges()
    mask = np.zeros(grid.shape, dtype=bool)
    for j in range(grid.beta):
        if region == "ahead":
            lo, _ = _camera_range(diagram.camera, te[j], te[j + 1])
            mask[:, j] = xe[1:] <= lo
        else:
            _, hi = _camera_range(diagram.camera, te[j + 1], grid.T)
            mask[:, j] = xe[:-1] >= hi
    return mask


def masked_rmse(truth: DensityMatrix, estimate: DensityMatrix, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    a, b = np.asarray(truth.cells), np.asarray(estimate.cells)
    if a.shape != b.shape or a.shape != mask.shape:
        raise ValueError(f"shape mismatch: {a.shape}, {b.shape}, mask {mask.shape}")
    if not mask.any():
        raise ValueError("evaluation mask selects no cell")
    d = a[mask] - b[mask]
    if np.isnan(d).any():
        raise ValueError("masked cells must be observed in both matrices")
    return float(np.sqrt(np.mean(d * d)))


@dataclass
class Trend:
    slope: float
    intercept: float
    correlation: float

    def as_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "correlation": self.correlation}


def trend_regression(x, y, *, tol: float = 1e-8, max_iter: int = 500, c: float = 1.345) -> Trend:
    """Huber-loss line fit by iteratively reweighted least squares, plus Pearson r.

    The Huber threshold is ``c`` times the MAD scale of the current residuals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    if x.size < 3:
        raise ValueError("trend regression needs at least 3 points")
    if np.ptp(x) == 0:
        raise ValueError("covariate has zero variance")
    A = np.column_stack([x, np.ones_like(x)])
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    for _ in range(max_iter):
        r = y - A @ beta
        scale = np.median(np.abs(r - np.median(r))) / 0.6745
        if scale <= 1e-15 * max(1.0, np.abs(y).max()):
            break
        delta = c * scale
        w = np.where(np.abs(r) <= delta, 1.0, delta / np.maximum(np.abs(r), 1e-300))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)[0]
        done = np.max(np.abs(new - beta)) <= tol * (1.0 + np.max(np.abs(beta)))
        beta = new
        if done:
            break
    # rescale first so products of tiny covariates do not underflow
    corr = 0.0 if np.ptp(y) == 0 else float(np.corrcoef(x / np.ptp(x), y / np.ptp(y))[0, 1])
    corr = min(1.0, max(-1.0, corr))
    return Trend(float(beta[0]), float(beta[1]), corr)


def mean_density(diagram: SpaceTimeDiagram) -> float:
    """Average opposite-lane density over the whole link and run (veh/m)."""
    return diagram.vehicle_seconds() / (diagram.grid.L * diagram.grid.T)


def camera_speed(camera: Trajectory) -> float:
    """Average camera speed while it is moving along the link (m/s)."""
    dist = np.abs(np.diff(camera.x))
    moving = np.nonzero(dist > 0)[0]
    if moving.size == 0:
        return 0.0
    span = camera.t[moving[-1] + 1] - camera.t[0]
    return float(dist.sum() / span)


@dataclass
class ScenarioEval:
    """What the scorer needs from one scenario."""

    run_id: str
    truth: DensityMatrix
    mask: np.ndarray
    mean_density: float
    camera_speed: float

    @classmethod
    def from_diagram(cls, diagram: SpaceTimeDiagram, truth: DensityMatrix, region: str = "ahead"):
        return cls(diagram.run_id, truth, camera_mask(diagram, truth.grid, region),
                   mean_density(diagram), camera_speed(diagram.camera))


@dataclass
class EvalReport:
    rows: list
    summary: dict = field(default_factory=dict)

    COLUMNS = ("run_id", "rmse_ga", "rmse_baseline", "mean_density", "camera_speed", "n_cells")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True)


def _stats(v):
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(v.mean()), "std": float(v.std()), "n": int(v.size)}


def batch_report(scenarios: Sequence[ScenarioEval], estimates: Sequence[Optional[DensityMatrix]],
                 baselines: Sequence[Optional[DensityMatrix]]) -> EvalReport:
    """Per-scenario masked RMSE of GA estimates and known-value baselines plus trends.

    Rows follow the order of ``scenarios``. Scenarios whose mask is empty get
    NaN scores and are left out of the statistics.
    """
    if not (len(scenarios) == len(estimates) == len(baselines)):
        raise ValueError("scenarios, estimates and baselines must have equal length")
    rows = []
    for sc, est, base in zip(scenarios, estimates, baselines):
        ok = bool(sc.mask.any())
        rows.append({
            "run_id": sc.run_id,
            "rmse_ga": masked_rmse(sc.truth, est, sc.mask) if ok and est is not None else float("nan"),
            "rmse_baseline": masked_rmse(sc.truth, base, sc.mask) if ok and base is not None else float("nan"),
            "mean_density": float(sc.mean_density),
            "camera_speed": float(sc.camera_speed),
            "n_cells": int(sc.mask.sum()),
        })
    summary = {"n_scenarios": len(rows)}
    for key in ("rmse_ga", "rmse_baseline"):
        summary[key] = _stats([r[key] for r in rows])
    trends = {}
    for key in ("rmse_ga", "rmse_baseline"):
        for cov in ("mean_density", "camera_speed"):
            xs = np.array([r[cov] for r in rows])
            ys = np.array([r[key] for r in rows])
            ok = np.isfinite(ys)
            try:
                trends[f"{key}_vs_{cov}"] = trend_regression(xs[ok], ys[ok]).as_dict()
            except ValueError as exc:
                trends[f"{key}_vs_{cov}"] = {"error": str(exc)}
    summary["trends"] = trends
    return EvalReport(rows, summary)
