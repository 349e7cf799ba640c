"""Real-valued genetic algorithm: K-way tournament, uniform crossover, two-rate mutation.

The engine maximises ``fitness``. Operators are implemented on whole batches
of genomes; the single-genome functions exported here are thin wrappers over
the same code so that tests exercise exactly what :func:`run` uses.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

MUTATION_KINDS = ("uniform", "nonuniform")


class GAError(RuntimeError):
    pass


@dataclass
class GAConfig:
    """Hyper-parameters of one GA run.

    ``crossover_fraction`` is the number of offspring *pairs* bred per
    generation; the remaining slots are filled with tournament winners.
    ``p_low_fitness`` applies to candidates whose fitness is below the
    population mean, ``p_high_fitness`` to the rest.
    """

    bounds: list = field(default_factory=list)
    population_size: int = 56
    generations: int = 100
    k_tournament: int = 5
    mating_pool_size: Optional[int] = None
    crossover_fraction: int = 20
    p_low_fitness: float = 0.65
    p_high_fitness: float = 0.35
    mutation: str = "nonuniform"
    nonuniform_shape: float = 3.0
    elitism: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        self.bounds = [(float(lo), float(hi)) for lo, hi in self.bounds]
        self.validate()

    def validate(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if not 2 <= self.k_tournament <= self.population_size:
            raise ValueError(
                f"k_tournament must lie in [2, population_size={self.population_size}], got {self.k_tournament}"
            )
        if self.pool_size < 1:
            raise ValueError("mating_pool_size must be >= 1")
        if self.crossover_fraction < 0:
            raise ValueError("crossover_fraction must be >= 0")
        for p in (self.p_low_fitness, self.p_high_fitness):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"mutation probability {p} outside [0, 1]")
        if self.mutation not in MUTATION_KINDS:
            raise ValueError(f"mutation must be one of {MUTATION_KINDS}")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must lie in [0, population_size)")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"gene bounds must satisfy lo < hi, got ({lo}, {hi})")

    @property
    def pool_size(self) -> int:
        return self.population_size if self.mating_pool_size is None else self.mating_pool_size

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def replace(self, **changes) -> "GAConfig":
        data = asdict(self)
        data.update(changes)
        return GAConfig(**data)


@dataclass
class GAResult:
    best_genome: np.ndarray
    best_fitness: float
    fitness_trace: np.ndarray
    mean_trace: np.ndarray

    def to_dict(self) -> dict:
        return {
            "best_genome": [float(v) for v in self.best_genome],
            "best_fitness": float(self.best_fitness),
            "fitness_trace": [float(v) for v in self.fitness_trace],
            "mean_trace": [float(v) for v in self.mean_trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# -- batch operators -------------------------------------------------------

def tournament_indices(fitness: np.ndarray, k: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``m`` tournament winners, each the best of ``k`` distinct draws."""
    n = fitness.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"tournament size {k} outside [1, {n}]")
    keys = rng.random((m, n))
    if k < n:
        cand = np.argpartition(keys, k - 1, axis=1)[:, :k]
    else:
        cand = np.broadcast_to(np.arange(n), (m, n))
    winner = np.argmax(fitness[cand], axis=1)
    return cand[np.arange(m), winner]


def crossover_batch(a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    swap = rng.random(a.shape) < 0.5
    return np.where(swap, b, a), np.where(swap, a, b)


def mutate_batch(genomes, fitness, mean_fitness, cfg: GAConfig, rng, progress: float = 0.0):
    """Mutate rows of ``genomes``; rows below ``mean_fitness`` use ``p_low_fitness``."""
    genomes = np.array(genomes, dtype=float, copy=True)
    lo, hi = cfg.lower, cfg.upper
    rate = np.where(np.asarray(fitness) < mean_fitness, cfg.p_low_fitness, cfg.p_high_fitness)
    hit = rng.random(genomes.shape) < rate[:, None]
    if cfg.mutation == "uniform":
        fresh = rng.uniform(lo, hi, genomes.shape)
    else:
        # Michalewicz non-uniform step: full-range early, shrinking with progress
        u = rng.random(genomes.shape)
        up = rng.random(genomes.shape) < 0.5
        shrink = 1.0 - u ** ((1.0 - progress) ** cfg.nonuniform_shape)
        fresh = np.where(up, genomes + (hi - genomes) * shrink, genomes - (genomes - lo) * shrink)
        fresh = np.clip(fresh, lo, hi)
    genomes[hit] = fresh[hit]
    return genomes


# -- single-genome operators ------------------------------------------------

def tournament_select(population, fitnesses, k: int, rng: np.random.Generator) -> np.ndarray:
    """Return the fittest of ``k`` candidates drawn without replacement."""
    population = np.asarray(population, dtype=float)
    idx = tournament_indices(np.asarray(fitnesses, dtype=float), k, 1, rng)[0]
    return population[idx].copy()


def uniform_crossover(parent_a, parent_b, rng: np.random.Generator):
    a = np.asarray(parent_a, dtype=float)[None, :]
    b = np.asarray(parent_b, dtype=float)[None, :]
    ca, cb = crossover_batch(a, b, rng)
    return ca[0], cb[0]


def adaptive_mutate(genome, fitness: float, population_mean_fitness: float, config: GAConfig,
                    rng: np.random.Generator, progress: float = 0.0) -> np.ndarray:
    g = np.asarray(genome, dtype=float)[None, :]
    return mutate_batch(g, np.array([fitness]), population_mean_fitness, config, rng, progress)[0]


# -- engine -----------------------------------------------------------------

def _evaluate(pop, fitness, vectorized, map_fn):
    if vectorized:
        out = np.asarray(fitness(pop), dtype=float)
        if out.shape != (pop.shape[0],):
            raise GAError(f"vectorised fitness returned shape {out.shape}, expected ({pop.shape[0]},)")
        return out
    return np.fromiter(map_fn(fitness, list(pop)), dtype=float, count=pop.shape[0])


def _evaluate_finite(pop, fitness, cfg, rng, vectorized, map_fn, max_rounds=20):
    fit = _evaluate(pop, fitness, vectorized, map_fn)
    for _ in range(max_rounds):
        bad = ~np.isfinite(fit)
        if not bad.any():
            break
        pop[bad] = rng.uniform(cfg.lower, cfg.upper, (int(bad.sum()), pop.shape[1]))
        fit[bad] = _evaluate(pop[bad], fitness, vectorized, map_fn)
    bad = ~np.isfinite(fit)
    if bad.all():
        raise GAError("every candidate of the generation has a non-finite fitness")
    fit[bad] = -np.inf
    return fit


def _breed(pop, fit, cfg: GAConfig, rng, progress):
    n = cfg.population_size
    finite = np.isfinite(fit)
    mean_fit = float(fit[finite].mean())
    order = np.argsort(-fit, kind="stable")
    elite = order[:cfg.elitism]
    slots = n - cfg.elitism

    pool = tournament_indices(fit, cfg.k_tournament, cfg.pool_size, rng)
    m = pool.size
    n_pairs = min(cfg.crossover_fraction, (slots + 1) // 2)
    ia = pool[(2 * np.arange(n_pairs)) % m]
    ib = pool[(2 * np.arange(n_pairs) + 1) % m]
    ca, cb = crossover_batch(pop[ia], pop[ib], rng)
    children = np.empty((2 * n_pairs, pop.shape[1]))
    children[0::2], children[1::2] = ca, cb
    parent_fit = np.repeat((fit[ia] + fit[ib]) / 2.0, 2)
    children, parent_fit = children[:slots], parent_fit[:slots]

    rest = pool[(2 * n_pairs + np.arange(slots - children.shape[0])) % m]
    offspring = np.concatenate([children, pop[rest]])
    ref_fit = np.concatenate([parent_fit, fit[rest]])
    offspring = mutate_batch(offspring, ref_fit, mean_fit, cfg, rng, progress)

    new_pop = np.concatenate([pop[elite], offspring])
    new_fit = np.full(n, np.nan)
    new_fit[:cfg.elitism] = fit[elite]
    return new_pop, new_fit


def run(config: GAConfig, fitness: Callable, *, vectorized: bool = False, map_fn=map,
        initial_population=None, on_generation: Optional[Callable] = None) -> GAResult:
    """Maximise ``fitness`` over the box ``config.bounds``.

    ``fitness`` maps a genome to a float, or, with ``vectorized=True``, an
    (n, genes) array to n floats. ``map_fn`` lets callers evaluate genomes
    concurrently (e.g. ``executor.map``); results are consumed in order.
    ``on_generation(g, population, fitness)`` is called after each evaluation.
    """
    cfg = config
    cfg.validate()
    if not cfg.bounds:
        raise ValueError("GAConfig.bounds must list one (lo, hi) pair per gene")
    rng = np.random.default_rng(cfg.rng_seed)
    n, genes = cfg.population_size, len(cfg.bounds)
    if initial_population is None:
        pop = rng.uniform(cfg.lower, cfg.upper, (n, genes))
    else:
        pop = np.array(initial_population, dtype=float, copy=True)
        if pop.shape != (n, genes):
            raise ValueError(f"initial population shape {pop.shape} != {(n, genes)}")
    fit = _evaluate_finite(pop, fitness, cfg, rng, vectorized, map_fn)

    best_trace, mean_trace = [], []
    for g in range(cfg.generations):
        if g > 0:
            pop, fit = _breed(pop, fit, cfg, rng, progress=g / cfg.generations)
            todo = np.isnan(fit)
            sub = pop[todo]
            fit[todo] = _evaluate_finite(sub, fitness, cfg, rng, vectorized, map_fn)
            pop[todo] = sub
        if on_generation is not None:
            on_generation(g, pop, fit)
        best_trace.append(float(fit.max()))
        mean_trace.append(float(fit[np.isfinite(fit)].mean()))

    best = int(np.argmax(fit))
    return GAResult(pop[best].copy(), float(fit[best]), np.array(best_trace), np.array(mean_trace))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent integer seeds from ``seed``."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def run_repeated(config: GAConfig, fitness: Callable, repeats: int = 5, **kwargs):
    """Run the GA ``repeats`` times with derived seeds; return (best result, all results)."""
    results = [run(config.replace(rng_seed=s), fitness, **kwargs)
               for s in spawn_seeds(config.rng_seed, repeats)]
    best = max(range(len(results)), key=lambda i: (results[i].best_fitness, -i))
    return results[best], results
