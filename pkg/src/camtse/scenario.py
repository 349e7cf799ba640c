"""Synthetic ground truth: Newell car-following traffic observed by a moving camera.

Newell's rule ``x_i(t) = min(x_i(t-h) + v_f h, x_{i-1}(t-tau) - s_min)`` has a
triangular fundamental diagram with jam density ``1/s_min`` and backward wave
speed ``s_min/tau``, so generated data carry no model mismatch beyond
discretisation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BoundaryVector, ConfigurationError, FDParams, GridSpec, SpaceTimeDiagram, Trajectory
from .discretize import aggregate, edie_flow_density, measure_boundary
from .fov import apply_camera_mask

SAMPLE_DT = 0.1


@dataclass
class Signal:
    """Fixed-time signal; each cycle starts with red at ``offset``."""

    position: float
    red: float
    green: float
    offset: float = 0.0

    def is_red(self, t):
        cycle = self.red + self.green
        return np.mod(np.asarray(t) - self.offset, cycle) < self.red


@dataclass
class ScenarioConfig:
    grid: GridSpec
    v_f: float = 10.0
    s_min: float = 6.5
    tau: float = 1.0
    fov: tuple = (10.0, 60.0)
    signal: Optional[Signal] = None
    demand: float = 0.3
    # constant speed, or [(t_start, speed), ...] pieces
    camera_speed: object = 6.25
    rng_seed: int = 0
    warmup: float = 60.0

    def __post_init__(self):
        if isinstance(self.signal, dict):
            self.signal = Signal(**self.signal)
        if isinstance(self.grid, dict):
            self.grid = GridSpec(**self.grid)
        self.fov = tuple(float(v) for v in self.fov)
        if self.s_min <= 0:
            raise ConfigurationError("s_min must be positive")
        if self.demand < 0:
            raise ConfigurationError("demand must be non-negative")
        if self.v_f <= 0 or self.v_f > self.grid.courant_speed * (1 + 1e-12):
            raise ConfigurationError(f"v_f={self.v_f} must lie in (0, dx/dt={self.grid.courant_speed}]")
        lag = self.tau / SAMPLE_DT
        if self.tau <= 0 or abs(lag - round(lag)) > 1e-9:
            raise ConfigurationError(f"tau must be a positive multiple of {SAMPLE_DT} s")
        if not self.fov[0] < self.fov[1]:
            raise ConfigurationError("fov near must be below far")
        if self.warmup < 0:
            raise ConfigurationError("warmup must be non-negative")

    @property
    def fd(self) -> FDParams:
        k_j = 1.0 / self.s_min
        w_c = self.s_min / self.tau
        return FDParams(self.v_f, w_c * k_j / (self.v_f + w_c), k_j)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fov"] = list(self.fov)
        if isinstance(self.camera_speed, (list, tuple)):
            d["camera_speed"] = [list(p) for p in self.camera_speed]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        cs = d.get("camera_speed")
        if isinstance(cs, list):
            d["camera_speed"] = [tuple(p) for p in cs]
        return cls(**d)


@dataclass
class ScenarioBundle:
    diagram: SpaceTimeDiagram
    true_fd: FDParams
    true_bv: BoundaryVector
    config: Optional[ScenarioConfig] = None


def _camera_path(cfg: ScenarioConfig, t: np.ndarray) -> np.ndarray:
    L = cfg.grid.L
    prof = cfg.camera_speed
    if np.isscalar(prof):
        prof = [(0.0, float(prof))]
    starts = np.array([p[0] for p in prof], dtype=float)
    speeds = np.array([p[1] for p in prof], dtype=float)
    if np.any(speeds < 0):
        raise ConfigurationError("camera speeds must be non-negative")
    speed = speeds[np.clip(np.searchsorted(starts, t, side="right") - 1, 0, None)]
    travelled = np.concatenate([[0.0], np.cumsum(speed[:-1] * np.diff(t))])
    return np.clip(L - travelled, 0.0, L)


def _arrivals(cfg: ScenarioConfig, rng, t_start: float, t_end: float) -> np.ndarray:
    if cfg.demand <= 0:
        return np.empty(0)
    h_min = cfg.tau + cfg.s_min / cfg.v_f
    out, t = [], t_start
    while True:
        t += max(rng.exponential(1.0 / cfg.demand), h_min)
        if t > t_end:
            return np.array(out)
        out.append(t)


def simulate_positions(cfg: ScenarioConfig, arrivals: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Newell positions (vehicles x times) on an unbounded road; x=0 is the link entry."""
    h = SAMPLE_DT
    lag = int(round(cfg.tau / h))
    n_veh, n_t = arrivals.size, times.size
    x = np.empty((n_veh, n_t))
    x[:, 0] = cfg.v_f * (times[0] - arrivals)
    red = cfg.signal.is_red(times) if cfg.signal else np.zeros(n_t, dtype=bool)
    for n in range(1, n_t):
        nxt = x[:, n - 1] + cfg.v_f * h
        if n_veh > 1:
            if n - lag >= 0:
                lead = x[:-1, n - lag]
            else:
                # before the first sample every vehicle was still free-flowing
                lead = cfg.v_f * (times[0] + (n - lag) * h - arrivals[:-1])
            nxt[1:] = np.minimum(nxt[1:], lead - cfg.s_min)
        if red[n]:
            p = cfg.signal.position
            stop = x[:, n - 1] <= p
            nxt[stop] = np.minimum(nxt[stop], p)
        x[:, n] = nxt
    return x


def _on_link(t: np.ndarray, x: np.ndarray, L: float):
    """Samples inside [0, L] plus interpolated entry/exit crossings."""
    inside = (x >= 0) & (x <= L)
    if not inside.any():
        return None
    idx = np.nonzero(inside)[0]
    first, last = idx[0], idx[-1]
    tt, xx = list(t[first:last + 1]), list(x[first:last + 1])
    if first > 0 and x[first] > 0:
        tc = t[first - 1] + (0.0 - x[first - 1]) / (x[first] - x[first - 1]) * (t[first] - t[first - 1])
        if tc < t[first]:
            tt.insert(0, tc)
            xx.insert(0, 0.0)
    if last < t.size - 1 and x[last] < L:
        tc = t[last] + (L - x[last]) / (x[last + 1] - x[last]) * (t[last + 1] - t[last])
        if tc > t[last]:
            tt.append(tc)
            xx.append(L)
    if len(tt) < 2:
        return None
    return np.array(tt), np.array(xx)


def generate(config: ScenarioConfig) -> ScenarioBundle:
    """Simulate one camera run; deterministic in ``config.rng_seed``."""
    cfg = config
    grid = cfg.grid
    rng = np.random.default_rng(cfg.rng_seed)
    n_warm = int(round(cfg.warmup / SAMPLE_DT))
    n_rec = int(round(grid.T / SAMPLE_DT))
    times = (np.arange(-n_warm, n_rec + 1)) * SAMPLE_DT
    arrivals = _arrivals(cfg, rng, -cfg.warmup, grid.T)
    pos = simulate_positions(cfg, arrivals, times)

    rec = times >= 0
    t_rec = times[rec]
    vehicles = []
    for i in range(arrivals.size):
        piece = _on_link(t_rec, pos[i, rec], grid.L)
        if piece is not None:
            vehicles.append(Trajectory(f"v{i:05d}", *piece))

    camera = Trajectory("camera", t_rec, _camera_path(cfg, t_rec))
    diagram = SpaceTimeDiagram(grid, tuple(vehicles), camera, cfg.fov, run_id=f"s{cfg.rng_seed}")
    fd = cfg.fd
    truth = aggregate(diagram, grid, masked=False)
    return ScenarioBundle(diagram, fd, measure_boundary(truth, fd), cfg)


@dataclass
class ScenarioRanges:
    """Per-scenario parameter ranges used to build a diverse batch."""

    demand: tuple = (0.05, 0.55)
    red: tuple = (0.0, 12.0)
    green: tuple = (6.0, 20.0)
    camera_speed: tuple = (6.25, 10.0)
    signal_position: Optional[float] = None  # defaults to L

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def sample_configs(base: ScenarioConfig, ranges: ScenarioRanges, n: int, seed: int) -> list[ScenarioConfig]:
    """Draw ``n`` scenario configs with independent seeds from ``seed``."""
    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(seed).generate_state(n)
    out = []
    for i in range(n):
        demand = rng.uniform(*ranges.demand)
        red = rng.uniform(*ranges.red)
        green = rng.uniform(*ranges.green)
        offset = rng.uniform(0.0, red + green)
        cam = rng.uniform(*ranges.camera_speed)
        pos = base.grid.L if ranges.signal_position is None else ranges.signal_position
        signal = Signal(pos, red, green, offset) if red > 0 else None
        d = base.to_dict()
        d.update(demand=float(demand), camera_speed=float(cam), rng_seed=int(seeds[i]),
                 signal=None if signal is None else asdict(signal))
        out.append(ScenarioConfig.from_dict(d))
    return out


def measure_true_fd(bundles: Sequence, s_min: float | None = None, bins: int = 20) -> FDParams:
    """Empirical triangular FD from ground-truth Edie (flow, density) cell pairs.

    ``bundles`` holds :class:`ScenarioBundle` or bare diagrams (then
    ``s_min`` is required). ``k_c`` is the centre of the density bin with
    the largest mean flow, ``v_f`` the least-squares slope through the
    origin of cells with density up to that bin; ``k_j = 1/s_min``.
    For evaluation only.
    """
    if not bundles:
        raise ValueError("need at least one bundle")
    if s_min is None:
        first = bundles[0]
        if not isinstance(first, ScenarioBundle):
            raise ValueError("s_min is required when measuring from bare diagrams")
        s_min = first.config.s_min if first.config else 1.0 / first.true_fd.k_j
    qs, ks = [], []
    for b in bundles:
        q, k = edie_flow_density(getattr(b, "diagram", b))
        qs.append(q.ravel())
        ks.append(k.ravel())
    q, k = np.concatenate(qs), np.concatenate(ks)
    nz = k > 0
    if not nz.any():
        raise ValueError("all bundles are empty; cannot measure a fundamental diagram")
    q, k = q[nz], k[nz]
    k_j = 1.0 / s_min

    edges = np.linspace(0.0, k_j, bins + 1)
    which = np.clip(np.digitize(k, edges) - 1, 0, bins - 1)
    mean_q = np.array([q[which == b].mean() if np.any(which == b) else -np.inf for b in range(bins)])
    best = int(np.argmax(mean_q))
    k_c = 0.5 * (edges[best] + edges[best + 1])
    if best == bins - 1 or k_c >= k_j / 2:
        k_c = min(k_c, 0.5 * k_j * (1 - 1e-9))
    free = k <= edges[best + 1]
    v_f = float(np.dot(k[free], q[free]) / np.dot(k[free], k[free]))
    return FDParams(v_f, float(k_c), k_j)


def observe(bundle: ScenarioBundle) -> SpaceTimeDiagram:
    return apply_camera_mask(bundle.diagram)


__all__ = [
    "Signal", "ScenarioConfig", "ScenarioBundle", "ScenarioRanges", "generate", "sample_configs",
    "apply_camera_mask", "measure_true_fd", "observe", "simulate_positions",
]
