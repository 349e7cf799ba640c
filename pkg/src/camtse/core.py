"""Domain types, the triangular fundamental diagram and the Cell Transmission Model.

Conventions used throughout the package:

* traffic on the observed lane moves towards increasing ``x``; vehicles enter
  at ``x = 0`` and leave at ``x = L``;
* density matrices are indexed ``[space cell, time cell]`` (alpha x beta);
* densities are per lane, in veh/m.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Invalid grid, fundamental diagram or run configuration."""


class DomainError(ValueError):
    """A density or parameter outside its admissible range."""


def _cell_count(total: float, step: float, name: str) -> int:
    n = int(round(total / step))
    if n < 1 or abs(n * step - total) > 1e-9 * max(abs(total), 1.0):
        raise ConfigurationError(f"{name}: {total} is not an integer multiple of {step}")
    return n


@dataclass(frozen=True)
class GridSpec:
    """Space-time discretisation of one link: ``L`` metres by ``T`` seconds."""

    L: float
    T: float
    dx: float
    dt: float

    def __post_init__(self):
        for name in ("L", "T", "dx", "dt"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigurationError(f"grid.{name} must be positive, got {value}")
        _cell_count(self.L, self.dx, "L/dx")
        _cell_count(self.T, self.dt, "T/dt")

    @property
    def alpha(self) -> int:
        return _cell_count(self.L, self.dx, "L/dx")

    @property
    def beta(self) -> int:
        return _cell_count(self.T, self.dt, "T/dt")

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha, self.beta

    @property
    def courant_speed(self) -> float:
        """Largest admissible free-flow speed, ``dx/dt``."""
        return self.dx / self.dt

    def x_edges(self) -> np.ndarray:
        return np.arange(self.alpha + 1) * self.dx

    def t_edges(self) -> np.ndarray:
        return np.arange(self.beta + 1) * self.dt


@dataclass(frozen=True)
class FDParams:
    """Triangular fundamental diagram (free-flow speed, optimal density, jam density)."""

    v_f: float
    k_c: float
    k_j: float

    def __post_init__(self):
        if not (np.isfinite(self.v_f) and self.v_f > 0):
            raise DomainError(f"v_f must be positive, got {self.v_f}")
        if not (np.isfinite(self.k_j) and self.k_j > 0):
            raise DomainError(f"k_j must be positive, got {self.k_j}")
        if not (0 < self.k_c < self.k_j / 2):
            raise DomainError(f"k_c must lie in (0, k_j/2) = (0, {self.k_j / 2}), got {self.k_c}")

    @property
    def w_c(self) -> float:
        """Backward wave speed."""
        return self.v_f * self.k_c / (self.k_j - self.k_c)

    @property
    def capacity(self) -> float:
        return self.v_f * self.k_c

    def check_grid(self, grid: GridSpec) -> None:
        """Raise ConfigurationError when the CFL condition fails on ``grid``."""
        if self.v_f > grid.courant_speed * (1 + 1e-12):
            raise ConfigurationError(
                f"CFL violated: v_f={self.v_f} exceeds dx/dt={grid.courant_speed}"
            )

    def as_dict(self) -> dict:
        return {"v_f": self.v_f, "k_c": self.k_c, "k_j": self.k_j, "w_c": self.w_c}

    @classmethod
    def from_dict(cls, d: dict) -> "FDParams":
        """Inverse of :meth:`as_dict`; the derived ``w_c`` entry is ignored."""
        return cls(float(d["v_f"]), float(d["k_c"]), float(d["k_j"]))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled path of one vehicle (or the camera) along the link."""

    vehicle_id: str
    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        t = _frozen(self.t)
        x = _frozen(self.x)
        if t.ndim != 1 or t.shape != x.shape:
            raise ValueError(f"trajectory {self.vehicle_id}: t and x must be equal-length vectors")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError(f"trajectory {self.vehicle_id}: timestamps must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.t.size

    def position(self, t) -> np.ndarray:
        """Linear interpolation of position; NaN outside the sampled span."""
        return np.interp(t, self.t, self.x, left=np.nan, right=np.nan)

    def clipped(self, L: float) -> "Trajectory":
        return Trajectory(self.vehicle_id, self.t, np.clip(self.x, 0.0, L))


@dataclass(frozen=True, eq=False)
class SpaceTimeDiagram:
    """Vehicle trajectories of one camera run plus the camera path and field of view."""

    grid: GridSpec
    vehicles: tuple[Trajectory, ...]
    camera: Trajectory
    fov: tuple[float, float]
    run_id: str = "0"

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        near, far = (float(v) for v in self.fov)
        if not near < far:
            raise ConfigurationError(f"fov near ({near}) must be below far ({far})")
        object.__setattr__(self, "fov", (near, far))

    def vehicle_seconds(self) -> float:
        """Total time spent on the link inside ``[0, T]`` by all vehicles."""
        total = 0.0
        for v in self.vehicles:
            if len(v) > 1:
                total += min(v.t[-1], self.grid.T) - max(v.t[0], 0.0)
        return total


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """alpha x beta cell densities; unobserved cells hold NaN."""

    grid: GridSpec
    cells: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float)
        observed = np.array(self.observed, dtype=bool)
        if cells.shape != self.grid.shape or observed.shape != self.grid.shape:
            raise ValueError(f"matrix shape {cells.shape} does not match grid {self.grid.shape}")
        cells[~observed] = np.nan
        if np.isnan(cells[observed]).any():
            raise ValueError("observed cells must carry a density")
        cells.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "observed", observed)

    @classmethod
    def full(cls, grid: GridSpec, cells) -> "DensityMatrix":
        return cls(grid, cells, np.ones(grid.shape, dtype=bool))

    @property
    def n_observed(self) -> int:
        return int(self.observed.sum())

    def filled(self, value: float = 0.0) -> np.ndarray:
        return np.where(self.observed, self.cells, value)


class Quartet(NamedTuple):
    """Upstream, own and downstream density at ``t`` plus own density at ``t + dt``."""

    k_up: float
    k_mid: float
    k_down: float
    k_next: float


@dataclass(frozen=True, eq=False)
class BoundaryVector:
    """Initial column plus per-step inflow/outflow densities.

    The genome layout is ``[init (alpha) | inflow (beta) | outflow (beta)]``.
    Only the first ``beta - 1`` inflow/outflow entries drive a rollout; the last
    ones are kept so the layout has a fixed length per time cell.
    """

    init: np.ndarray
    inflow: np.ndarray
    outflow: np.ndarray

    def __post_init__(self):
        for name in ("init", "inflow", "outflow"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.inflow.shape != self.outflow.shape:
            raise ValueError("inflow and outflow must have the same length")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "BoundaryVector":
        return cls(np.zeros(grid.alpha), np.zeros(grid.beta), np.zeros(grid.beta))

    @classmethod
    def from_genome(cls, genome, grid: GridSpec) -> "BoundaryVector":
        g = np.asarray(genome, dtype=float)
        a, b = grid.alpha, grid.beta
        if g.shape != (a + 2 * b,):
            raise ValueError(f"genome length {g.size} != alpha + 2*beta = {a + 2 * b}")
        return cls(g[:a], g[a:a + b], g[a + b:])

    def genome(self) -> np.ndarray:
        return np.concatenate([self.init, self.inflow, self.outflow])

    def check(self, grid: GridSpec, k_j: float) -> None:
        if self.init.shape != (grid.alpha,) or self.inflow.shape != (grid.beta,):
            raise ValueError("boundary vector does not match grid")
        g = self.genome()
        if np.any(g < 0) or np.any(g > k_j):
            raise DomainError("boundary densities must lie in [0, k_j]")


def _flow(v_f, w_c, k_j, k_send, k_recv):
    # broadcasting kernel shared by every CTM path
    return np.minimum(k_send * v_f, w_c * (k_j - k_recv))


def _check_density(k, k_j, what):
    k = np.asarray(k, dtype=float)
    if np.any(~np.isfinite(k)) or np.any(k < 0) or np.any(k > k_j):
        raise DomainError(f"{what} density outside [0, k_j={k_j}]: {k}")
    return k


def flow(fd: FDParams, k_sending, k_receiving):
    """Interface flow between a sending and a receiving cell (veh/s)."""
    ks = _check_density(k_sending, fd.k_j, "sending")
    kr = _check_density(k_receiving, fd.k_j, "receiving")
    q = _flow(fd.v_f, fd.w_c, fd.k_j, ks, kr)
    return float(q) if q.ndim == 0 else q


def _step(k, k_in, k_out, v_f, w_c, k_j, ratio):
    """One CTM update along the last axis of ``k``; ``k_in``/``k_out`` match k[..., 0]."""
    send = np.concatenate([np.asarray(k_in)[..., None], k], axis=-1)
    recv = np.concatenate([k, np.asarray(k_out)[..., None]], axis=-1)
    q = _flow(v_f, w_c, k_j, send, recv)
    nxt = k + ratio * (q[..., :-1] - q[..., 1:])
    return np.clip(nxt, 0.0, k_j)


def ctm_step(fd: FDParams, grid: GridSpec, row, inflow_density: float, outflow_density: float) -> np.ndarray:
    """Advance one row of ``alpha`` densities by ``dt``.

    ``inflow_density`` is the sending density of a virtual cell upstream of
    cell 0 and ``outflow_density`` the receiving density of a virtual cell
    downstream of the last cell.
    """
    fd.check_grid(grid)
    k = _check_density(row, fd.k_j, "row")
    if k.shape != (grid.alpha,):
        raise ValueError(f"row length {k.shape} != alpha={grid.alpha}")
    _check_density(inflow_density, fd.k_j, "inflow")
    _check_density(outflow_density, fd.k_j, "outflow")
    return _step(k, inflow_density, outflow_density, fd.v_f, fd.w_c, fd.k_j, grid.dt / grid.dx)


def ctm_rollout(fd: FDParams, grid: GridSpec, init, inflow, outflow) -> np.ndarray:
    """Batched rollout: ``init`` is (..., alpha), ``inflow``/``outflow`` (..., beta).

    Returns (..., alpha, beta). No range checks; callers guarantee bounds.
    """
    init = np.asarray(init, dtype=float)
    inflow = np.asarray(inflow, dtype=float)
    outflow = np.asarray(outflow, dtype=float)
    ratio = grid.dt / grid.dx
    out = np.empty(init.shape + (grid.beta,))
    k = np.clip(init, 0.0, fd.k_j)
    out[..., 0] = k
    for j in range(grid.beta - 1):
        k = _step(k, inflow[..., j], outflow[..., j], fd.v_f, fd.w_c, fd.k_j, ratio)
        out[..., j + 1] = k
    return out


def ctm_run(fd: FDParams, grid: GridSpec, bv: BoundaryVector) -> DensityMatrix:
    """Roll the CTM forward from ``bv`` over the whole grid."""
    fd.check_grid(grid)
    bv.check(grid, fd.k_j)
    return DensityMatrix.full(grid, ctm_rollout(fd, grid, bv.init, bv.inflow, bv.outflow))


def as_quartet_array(quartets: Sequence[Quartet]) -> np.ndarray:
    """Stack quartets into an (N, 4) array ordered (up, mid, down, next)."""
    if len(quartets) == 0:
        return np.empty((0, 4))
    return np.asarray(quartets, dtype=float).reshape(-1, 4)
