"""CSV intake and export of trajectories (e.g. floating-car exports from a simulator).

Schema, one row per sample, header mandatory::

    run_id,vehicle_id,role,t,x

``role`` is ``camera`` or ``vehicle``; each run has exactly one camera.
Rows of one vehicle must appear with strictly increasing ``t`` but may be
interleaved with other vehicles (time-ordered exports are fine).
"""
from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import GridSpec, SpaceTimeDiagram, Trajectory

COLUMNS = ("run_id", "vehicle_id", "role", "t", "x")
ROLES = ("camera", "vehicle")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    run_id: str
    vehicle_id: str
    role: str
    t: float
    x: float


def _fmt(v: float) -> str:
    # shortest repr round-trips exactly
    return repr(float(v))


def read_records(path) -> Iterable[tuple[int, TrajectoryRecord]]:
    """Yield (line number, record) pairs after validating the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in COLUMNS]
        if unknown:
            raise IngestError(f"{path}: unknown column(s) {unknown}; expected {list(COLUMNS)}")
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise IngestError(f"{path}: missing column(s) {missing}")
        pos = {c: header.index(c) for c in COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            role = row[pos["role"]].strip()
            if role not in ROLES:
                raise IngestError(f"{path}:{lineno}: role must be one of {ROLES}, got {role!r}")
            try:
                t = float(row[pos["t"]])
                x = float(row[pos["x"]])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            if not (np.isfinite(t) and np.isfinite(x)):
                raise IngestError(f"{path}:{lineno}: non-finite t or x")
            if t < 0:
                raise IngestError(f"{path}:{lineno}: negative timestamp {t}")
            yield lineno, TrajectoryRecord(row[pos["run_id"]], row[pos["vehicle_id"]], role, t, x)


def load_runs(path, grid: GridSpec, fov) -> list[SpaceTimeDiagram]:
    """Group records into one diagram per run, sorted by run id.

    Positions are clipped to ``[0, grid.L]``; grid and field of view come from
    the run configuration, not from the file.
    """
    samples: dict = defaultdict(lambda: defaultdict(list))
    roles: dict = {}
    cameras: dict = defaultdict(set)
    last_t: dict = {}
    for lineno, rec in read_records(path):
        key = (rec.run_id, rec.vehicle_id)
        prev_role = roles.setdefault(key, rec.role)
        if prev_role != rec.role:
            raise IngestError(f"{path}:{lineno}: {rec.vehicle_id} in run {rec.run_id} changes role")
        if key in last_t and not rec.t > last_t[key]:
            raise IngestError(
                f"{path}:{lineno}: non-monotone timestamp {rec.t} for {rec.vehicle_id} in run {rec.run_id}"
            )
        last_t[key] = rec.t
        if rec.role == "camera":
            cameras[rec.run_id].add(rec.vehicle_id)
        samples[rec.run_id][rec.vehicle_id].append((rec.t, rec.x))

    diagrams = []
    for run_id in sorted(samples):
        cams = cameras.get(run_id, set())
        if not cams:
            raise IngestError(f"{path}: run {run_id!r} has no camera rows")
        if len(cams) > 1:
            raise IngestError(f"{path}: run {run_id!r} has several cameras {sorted(cams)}")
        cam_id = next(iter(cams))
        vehicles, camera = [], None
        for vid in sorted(samples[run_id]):
            arr = np.asarray(samples[run_id][vid], dtype=float)
            traj = Trajectory(vid, arr[:, 0], np.clip(arr[:, 1], 0.0, grid.L))
            if vid == cam_id:
                camera = traj
            else:
                vehicles.append(traj)
        diagrams.append(SpaceTimeDiagram(grid, tuple(vehicles), camera, fov, run_id=run_id))
    return diagrams


def save_runs(diagrams: Sequence[SpaceTimeDiagram], path) -> None:
    """Write diagrams in canonical order (run_id, role, vehicle_id, t); atomic."""
    rows = []
    for d in diagrams:
        rows.extend((d.run_id, "camera", d.camera.vehicle_id, t, x) for t, x in zip(d.camera.t, d.camera.x))
        for v in d.vehicles:
            rows.extend((d.run_id, "vehicle", v.vehicle_id, t, x) for t, x in zip(v.t, v.x))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    directory = os.path.dirname(os.path.abspath(path))
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp{os.getpid()}")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for run_id, role, vid, t, x in rows:
            w.writerow((run_id, vid, role, _fmt(t), _fmt(x)))
    os.replace(tmp, path)
