"""Hyperparameter grid search over the two GA stages.

Axis names map onto :class:`GAConfig` fields. The special axis ``mutation``
takes ``(p_low, p_high)`` pairs and sets both adaptive mutation rates.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import calibrate, estimate
from .core import DensityMatrix, FDParams, GridSpec, Quartet
from .ga import GAConfig

PAIR_AXES = {"mutation": ("p_low_fitness", "p_high_fitness")}


class SearchError(ValueError):
    pass


@dataclass
class GridSpecSearch:
    axes: dict
    fixed: GAConfig
    repetitions: int = 1
    rng_seed: int = 0
    cap: int = 500
    # when set, crossover_fraction = int(population_size * crossover_ratio) at every point
    crossover_ratio: Optional[float] = None

    def validate(self) -> None:
        if not self.axes:
            raise SearchError("search needs at least one axis")
        known = set(GAConfig.__dataclass_fields__) | set(PAIR_AXES)
        for name, values in self.axes.items():
            if name not in known:
                raise SearchError(f"unknown search axis {name!r}")
            if len(values) == 0:
                raise SearchError(f"axis {name!r} has no values")
        if self.repetitions < 1:
            raise SearchError("repetitions must be at least 1")
        if self.size > self.cap:
            raise SearchError(f"grid has {self.size} points, above the cap of {self.cap}")

    @property
    def size(self) -> int:
        return int(np.prod([len(v) for v in self.axes.values()]))

    def points(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]

    def config_for(self, point: dict, seed: int) -> GAConfig:
        changes = {}
        for name, value in point.items():
            if name in PAIR_AXES:
                lo, hi = PAIR_AXES[name]
                changes[lo], changes[hi] = float(value[0]), float(value[1])
            else:
                changes[name] = value
        cfg = self.fixed.replace(**changes, rng_seed=seed)
        if self.crossover_ratio is not None:
            cfg = cfg.replace(crossover_fraction=int(cfg.population_size * self.crossover_ratio))
        cfg.validate()
        return cfg

    def point_seed(self, index: int) -> int:
        return int(np.random.SeedSequence([self.rng_seed, index]).generate_state(1)[0])


@dataclass
class SearchTable:
    axes: list
    rows: list = field(default_factory=list)

    @property
    def columns(self) -> list:
        cols = []
        for name in self.axes:
            cols.extend(PAIR_AXES.get(name, (name,)))
        return cols + ["fitness"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            out = []
            for name in self.axes:
                v = r[name]
                out.extend(v if name in PAIR_AXES else (v,))
            out.append(r["fitness"])
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in out])
        return buf.getvalue()

    def mean_by(self, axis: str) -> dict:
        """Mean fitness grouped by one axis value."""
        groups: dict = {}
        for r in self.rows:
            key = tuple(r[axis]) if axis in PAIR_AXES else r[axis]
            groups.setdefault(key, []).append(r["fitness"])
        return {k: float(np.mean(v)) for k, v in groups.items()}


def _fd_point(args):
    quartets, grid, k_j, cfg, reps = args
    return calibrate.calibrate_fd(quartets, grid, k_j, cfg, repeats=reps).rmse * -1.0


def _boundary_point(args):
    partials, fd, cfg, reps = args
    fits = []
    for n, p in enumerate(partials):
        seed = int(np.random.SeedSequence([cfg.rng_seed, n]).generate_state(1)[0])
        fits.append(estimate.estimate_density(p, fd, cfg.replace(rng_seed=seed), repeats=reps).fitness)
    return float(np.mean(fits))


def _run(search: GridSpecSearch, make_args: Callable, worker: Callable, map_fn, progress) -> SearchTable:
    search.validate()
    pts = search.points()
    cfgs = [search.config_for(p, search.point_seed(i)) for i, p in enumerate(pts)]
    results = []
    for i, fit in enumerate(map_fn(worker, [make_args(c) for c in cfgs])):
        results.append(float(fit))
        if progress:
            progress(i + 1, len(pts))
    rows = [dict(p, fitness=f) for p, f in zip(pts, results)]
    order = sorted(range(len(rows)), key=lambda i: (-rows[i]["fitness"], i))
    return SearchTable(list(search.axes), [rows[i] for i in order])


def search_fd(quartets: Sequence[Quartet], grid: GridSpec, k_j: float, search: GridSpecSearch,
              map_fn=map, progress=None) -> SearchTable:
    """Calibrate the FD at every lattice point; rows sorted by fitness (-RMSE), best first."""
    if len(quartets) == 0:
        raise SearchError("quartet list is empty")
    quartets = list(quartets)
    return _run(search, lambda c: (quartets, grid, k_j, c, search.repetitions), _fd_point, map_fn, progress)


def search_boundary(partials: Sequence[DensityMatrix], fd: FDParams, search: GridSpecSearch,
                    map_fn=map, progress=None) -> SearchTable:
    """Boundary estimation at every lattice point; fitness is the mean over diagrams."""
    if len(partials) == 0:
        raise SearchError("no diagrams to search over")
    partials = list(partials)
    return _run(search, lambda c: (partials, fd, c, search.repetitions), _boundary_point, map_fn, progress)


def fd_search(rng_seed: int = 0, repetitions: int = 1) -> GridSpecSearch:
    """60-point lattice: generations x tournament size x mutation rates."""
    return GridSpecSearch(
        axes={"generations": [20, 40, 60, 80, 100], "k_tournament": [2, 5, 7, 10],
              "mutation": [(0.9, 0.1), (0.75, 0.25), (0.5, 0.5)]},
        fixed=calibrate.default_ga_config(), repetitions=repetitions, rng_seed=rng_seed)


def boundary_search_phase1(rng_seed: int = 0, repetitions: int = 1) -> GridSpecSearch:
    """Tournament size x mutation rates at 60 generations, population 500."""
    return GridSpecSearch(
        axes={"k_tournament": [2, 4, 6, 8, 10],
              "mutation": [(0.9, 0.1), (0.8, 0.2), (0.7, 0.3), (0.6, 0.4), (0.5, 0.5)]},
        fixed=estimate.default_ga_config(generations=60, population_size=500, crossover_fraction=250),
        repetitions=repetitions, rng_seed=rng_seed)


def boundary_search_phase2(rng_seed: int = 0, repetitions: int = 1) -> GridSpecSearch:
    """Population x generations with mutation (0.9, 0.1), k=10, crossover half the population."""
    return GridSpecSearch(
        axes={"population_size": [100, 200, 400, 600, 800], "generations": [40, 60, 80, 100, 120]},
        fixed=estimate.default_ga_config(k_tournament=10, p_low_fitness=0.9, p_high_fitness=0.1),
        repetitions=repetitions, rng_seed=rng_seed, crossover_ratio=0.5)
