"""Fundamental-diagram calibration from density quartets."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FDParams, GridSpec, Quartet, _flow, as_quartet_array
from .ga import GAConfig, GAResult, run_repeated

# lower edge of both gene ranges, as a fraction of the range; keeps v_f, k_c > 0
_OPEN_EDGE = 1e-6


def default_ga_config(**overrides) -> GAConfig:
    """GA settings used for FD calibration (population 56, 100 generations)."""
    base = dict(population_size=56, generations=100, k_tournament=5,
                p_low_fitness=0.65, p_high_fitness=0.35, crossover_fraction=20)
    base.update(overrides)
    return GAConfig(**base)


@dataclass
class CalibrationResult:
    fd: FDParams
    rmse: float
    ga_trace: list = field(default_factory=list)
    n_quartets: int = 0
    run_fitness: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fd": self.fd.as_dict(),
            "rmse": self.rmse,
            "n_quartets": self.n_quartets,
            "run_fitness": list(self.run_fitness),
            "ga_trace": list(self.ga_trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(FDParams.from_dict(d["fd"]), d["rmse"], d.get("ga_trace", []),
                   d.get("n_quartets", 0), d.get("run_fitness", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def predict_next(fd: FDParams, grid: GridSpec, quartet) -> float:
    """CTM prediction of ``k(x, t+dt)`` from the three densities at ``t``."""
    up, mid, down = (float(v) for v in tuple(quartet)[:3])
    r = grid.dt / grid.dx
    q_in = _flow(fd.v_f, fd.w_c, fd.k_j, up, mid)
    q_out = _flow(fd.v_f, fd.w_c, fd.k_j, mid, down)
    return float(np.clip(mid + r * (q_in - q_out), 0.0, fd.k_j))


def quartet_rmse(genomes: np.ndarray, q: np.ndarray, k_j: float, ratio: float) -> np.ndarray:
    """RMSE of next-step predictions for each (v_f, k_c) row of ``genomes``."""
    genomes = np.atleast_2d(genomes)
    v_f = genomes[:, 0:1]
    k_c = genomes[:, 1:2]
    w_c = v_f * k_c / (k_j - k_c)
    up, mid, down, nxt = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    q_in = _flow(v_f, w_c, k_j, up, mid)
    q_out = _flow(v_f, w_c, k_j, mid, down)
    pred = np.clip(mid + ratio * (q_in - q_out), 0.0, k_j)
    return np.sqrt(np.mean((nxt - pred) ** 2, axis=1))


def gene_bounds(grid: GridSpec, k_j: float) -> list:
    v_hi = grid.courant_speed
    k_hi = 0.5 * k_j * (1 - 1e-9)
    return [(v_hi * _OPEN_EDGE, v_hi), (k_hi * _OPEN_EDGE, k_hi)]


def calibrate_fd(quartets: Sequence[Quartet], grid: GridSpec, k_j: float,
                 ga_config: GAConfig | None = None, repeats: int = 5) -> CalibrationResult:
    """Fit (v_f, k_c) to the quartets with ``repeats`` GA runs, keeping the best.

    ``k_j`` is fixed (inverse of the minimum headway). Quartet densities are
    clipped to ``[0, k_j]`` before fitting.
    """
    if not k_j > 0:
        raise ValueError(f"k_j must be positive, got {k_j}")
    q = as_quartet_array(quartets)
    if q.shape[0] == 0:
        raise ValueError("calibration needs at least one quartet")
    q = np.clip(q, 0.0, k_j)
    ratio = grid.dt / grid.dx
    cfg = (ga_config or default_ga_config()).replace(bounds=gene_bounds(grid, k_j))

    def fitness(pop):
        return -quartet_rmse(pop, q, k_j, ratio)

    best, runs = run_repeated(cfg, fitness, repeats=repeats, vectorized=True)
    return _result(best, runs, k_j, q.shape[0])


def _result(best: GAResult, runs, k_j, n) -> CalibrationResult:
    v_f, k_c = (float(v) for v in best.best_genome)
    return CalibrationResult(FDParams(v_f, k_c, k_j), float(-best.best_fitness),
                             [float(v) for v in best.fitness_trace], n,
                             [float(r.best_fitness) for r in runs])
