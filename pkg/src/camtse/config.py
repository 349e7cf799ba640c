"""Run configuration: one YAML file with a section per pipeline stage."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .core import ConfigurationError, GridSpec
from .ga import GAConfig
from .scenario import ScenarioConfig, ScenarioRanges
from . import calibrate, estimate

OUT_ENV = "CAMTSE_OUT"

_GA_KEYS = ("population_size", "generations", "k_tournament", "mating_pool_size", "crossover_fraction",
            "p_low_fitness", "p_high_fitness", "mutation", "nonuniform_shape", "elitism")


def _ga_section(cfg: GAConfig) -> dict:
    return {k: getattr(cfg, k) for k in _GA_KEYS}


DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "out": "out",
    "grid": {"L": 100.0, "T": 16.0, "dx": 20.0, "dt": 2.0},
    "scenario": {
        "count": 140,
        "v_f": 10.0,
        "s_min": 6.5,
        "tau": 1.0,
        "fov": [10.0, 60.0],
        "warmup": 60.0,
        "ranges": ScenarioRanges().to_dict(),
    },
    "ingest": None,
    "discretize": {"min_coverage": 0.25, "normalize": "visible"},
    "calibrate": {"repeats": 5, "k_j": None, "ga": _ga_section(calibrate.default_ga_config())},
    "estimate": {"repeats": 5, "ga": _ga_section(estimate.default_ga_config())},
    "evaluate": {"region": "ahead", "bins": 20},
    "gridsearch": {"repetitions": 1, "diagrams": 5, "cap": 500, "stages": ["fd", "boundary"]},
}


def _merge(base: dict, over: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        elif isinstance(base[key], dict) and value is not None:
            raise ConfigurationError(f"config key '{where}' must be a mapping")
        else:
            out[key] = value
    return out


@dataclass
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "RunConfig":
        if d is None:
            d = {}
        if not isinstance(d, dict):
            raise ConfigurationError("config file must hold a mapping at top level")
        cfg = cls(_merge(DEFAULTS, d, ""))
        # an ingest run has no scenario section unless explicitly given
        if cfg.data["ingest"] is not None and "scenario" not in d:
            cfg.data["scenario"] = None
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: malformed YAML: {exc}") from None
        return cls.from_dict(raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=None)

    def __getitem__(self, key):
        return self.data[key]

    # -- typed views -----------------------------------------------------------

    def _key(self, dotted: str, fn):
        try:
            return fn()
        except ConfigurationError as exc:
            raise ConfigurationError(f"{dotted}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid value under '{dotted}': {exc}") from None

    @property
    def grid(self) -> GridSpec:
        return self._key("grid", lambda: GridSpec(**{k: float(v) for k, v in self.data["grid"].items()}))

    @property
    def fov(self) -> tuple:
        src = self.data["ingest"] if self.data["ingest"] is not None else self.data["scenario"]
        return tuple(float(v) for v in src["fov"])

    @property
    def k_j(self) -> float:
        k_j = self.data["calibrate"]["k_j"]
        if k_j is not None:
            return float(k_j)
        if self.data["scenario"] is None:
            raise ConfigurationError("'calibrate.k_j' is required when trajectories are ingested")
        return 1.0 / float(self.data["scenario"]["s_min"])

    def scenario_base(self) -> ScenarioConfig:
        s = self.data["scenario"]
        return self._key("scenario", lambda: ScenarioConfig(
            grid=self.grid, v_f=float(s["v_f"]), s_min=float(s["s_min"]), tau=float(s["tau"]),
            fov=tuple(s["fov"]), warmup=float(s["warmup"]), rng_seed=int(self.data["seed"])))

    def scenario_ranges(self) -> ScenarioRanges:
        r = self.data["scenario"]["ranges"]
        return self._key("scenario.ranges", lambda: ScenarioRanges(**{
            k: (tuple(v) if isinstance(v, list) else v) for k, v in r.items()}))

    def ga(self, stage: str) -> GAConfig:
        module = calibrate if stage == "calibrate" else estimate
        return self._key(f"{stage}.ga", lambda: module.default_ga_config(**self.data[stage]["ga"]))

    def validate(self) -> None:
        d = self.data
        if (d["ingest"] is None) == (d["scenario"] is None):
            raise ConfigurationError("set exactly one of 'scenario' and 'ingest'")
        if d["ingest"] is not None:
            ing = d["ingest"]
            if not isinstance(ing, dict) or "path" not in ing or "fov" not in ing:
                raise ConfigurationError("'ingest' needs 'path' and 'fov' keys")
        for key in ("seed", "jobs"):
            if not isinstance(d[key], int) or isinstance(d[key], bool) or d[key] < (1 if key == "jobs" else 0):
                raise ConfigurationError(f"'{key}' must be a {'positive' if key == 'jobs' else 'non-negative'} integer")
        self.grid
        if d["scenario"] is not None:
            s = d["scenario"]
            if not isinstance(s["count"], int) or s["count"] < 1:
                raise ConfigurationError("'scenario.count' must be a positive integer")
            self.scenario_base()
            self.scenario_ranges()
        if d["discretize"]["normalize"] not in ("visible", "cell"):
            raise ConfigurationError("'discretize.normalize' must be 'visible' or 'cell'")
        mc = d["discretize"]["min_coverage"]
        if not isinstance(mc, (int, float)) or not 0 <= mc < 1:
            raise ConfigurationError("'discretize.min_coverage' must lie in [0, 1)")
        for stage in ("calibrate", "estimate"):
            self.ga(stage)
            if not isinstance(d[stage]["repeats"], int) or d[stage]["repeats"] < 1:
                raise ConfigurationError(f"'{stage}.repeats' must be a positive integer")
        if d["evaluate"]["region"] not in ("ahead", "swept"):
            raise ConfigurationError("'evaluate.region' must be 'ahead' or 'swept'")
        bad = set(d["gridsearch"]["stages"]) - {"fd", "boundary"}
        if bad:
            raise ConfigurationError(f"'gridsearch.stages' has unknown entries {sorted(bad)}")
        self.k_j
