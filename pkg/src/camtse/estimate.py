"""Boundary-condition estimation and density-field completion for one diagram."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import BoundaryVector, DensityMatrix, FDParams, ctm_rollout, ctm_run
from .ga import GAConfig, run_repeated


def default_ga_config(**overrides) -> GAConfig:
    """GA settings for boundary estimation (population 500, 60 generations)."""
    base = dict(population_size=500, generations=60, k_tournament=10,
                p_low_fitness=0.9, p_high_fitness=0.1, crossover_fraction=50)
    base.update(overrides)
    return GAConfig(**base)


@dataclass
class EstimationResult:
    boundary: BoundaryVector
    completed: DensityMatrix
    fitness: float
    ga_trace: list = field(default_factory=list)
    run_fitness: list = field(default_factory=list)

    def metadata(self) -> dict:
        return {
            "fitness": self.fitness,
            "run_fitness": list(self.run_fitness),
            "boundary": {
                "init": [float(v) for v in self.boundary.init],
                "inflow": [float(v) for v in self.boundary.inflow],
                "outflow": [float(v) for v in self.boundary.outflow],
            },
            "ga_trace": list(self.ga_trace),
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


def rollout_fitness(fd: FDParams, partial: DensityMatrix):
    """Vectorised fitness: minus the RMSE over observed cells of each rollout."""
    grid = partial.grid
    a, b = grid.shape
    obs = partial.observed
    target = partial.cells[obs]

    def fitness(pop):
        pop = np.atleast_2d(pop)
        k = ctm_rollout(fd, grid, pop[:, :a], pop[:, a:a + b], pop[:, a + b:])
        err = k[:, obs] - target
        return -np.sqrt(np.mean(err * err, axis=1))

    return fitness


def estimate_density(partial: DensityMatrix, fd: FDParams, ga_config: GAConfig | None = None,
                     repeats: int = 5) -> EstimationResult:
    """Search boundary vectors whose CTM rollout matches the observed cells.

    Genes are bounded to ``[0, k_j]``; the best of ``repeats`` runs is kept
    and rolled out over the whole grid.
    """
    grid = partial.grid
    fd.check_grid(grid)
    if partial.n_observed == 0:
        raise ValueError("partial matrix has no observed cell")
    a, b = grid.shape
    cfg = (ga_config or default_ga_config()).replace(bounds=[(0.0, fd.k_j)] * (a + 2 * b))
    fitness = rollout_fitness(fd, partial)
    best, runs = run_repeated(cfg, fitness, repeats=repeats, vectorized=True)
    bv = BoundaryVector.from_genome(best.best_genome, grid)
    return EstimationResult(bv, ctm_run(fd, grid, bv), float(best.best_fitness),
                            [float(v) for v in best.fitness_trace],
                            [float(r.best_fitness) for r in runs])


def baseline_known(partial_truth_pair, fd_true: FDParams, bv_true: BoundaryVector) -> DensityMatrix:
    """CTM rollout under the true FD and measured boundary (comparison baseline).

    ``partial_truth_pair`` is accepted for interface symmetry with the
    estimator; the rollout depends only on ``fd_true`` and ``bv_true``.
    """
    grid = partial_truth_pair[1].grid if partial_truth_pair is not None else None
    if grid is None:
        raise ValueError("partial_truth_pair must carry the ground-truth matrix")
    return ctm_run(fd_true, grid, bv_true)
