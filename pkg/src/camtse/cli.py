"""Command-line pipeline: generate -> discretize -> calibrate -> estimate -> evaluate.

Every command reads its inputs from, and writes its outputs to, one output
directory, so stages can be re-run individually::

    trajectories.csv          all runs, canonical order
    scenarios.json            run ids, ground-truth FD per run
    matrices/<run>.truth.csv  ground-truth densities
    matrices/<run>.partial.csv, <run>.partial.mask.csv
    calibration.json
    estimates/<run>.csv, <run>.json
    baselines/<run>.csv
    report.csv, summary.json, *.svg, hist.csv, scatter.csv
    gridsearch_*.csv
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import calibrate as cal
from . import estimate as est
from . import gridsearch as gs
from .config import OUT_ENV, RunConfig
from .core import ConfigurationError, DensityMatrix, FDParams
from .discretize import aggregate, extract_quartets, load_matrix, measure_boundary, save_matrix
from .evaluate import ScenarioEval, batch_report
from .ingest import IngestError, load_runs, save_runs
from .plots import histogram_svg, scatter_svg
from .scenario import generate, measure_true_fd, sample_configs


class MissingArtifact(RuntimeError):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _need(path: str) -> str:
    if not os.path.exists(path):
        raise MissingArtifact(f"missing input file {path} (run the upstream command first)")
    return path


def _read_json(path: str):
    with open(_need(path), encoding="utf-8") as fh:
        return json.load(fh)


@contextmanager
def _mapper(jobs: int):
    if jobs <= 1:
        yield map
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield lambda fn, items: pool.map(fn, items, chunksize=1)


def _task_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


class Context:
    def __init__(self, cfg: RunConfig, out: str):
        self.cfg = cfg
        self.out = out
        self.grid = cfg.grid

    def path(self, *parts) -> str:
        return os.path.join(self.out, *parts)

    def run_ids(self) -> list:
        return [r["run_id"] for r in _read_json(self.path("scenarios.json"))["runs"]]

    def diagrams(self):
        return load_runs(_need(self.path("trajectories.csv")), self.grid, self.cfg.fov)

    def matrix(self, run_id: str, kind: str) -> DensityMatrix:
        cells = _need(self.path("matrices", f"{run_id}.{kind}.csv"))
        mask = self.path("matrices", f"{run_id}.{kind}.mask.csv") if kind == "partial" else None
        return load_matrix(self.grid, cells, _need(mask) if mask else None)


# -- workers (top level so process pools can pickle them) ------------------------

def _generate_one(config):
    return generate(config)


def _estimate_one(args):
    partial, fd, ga_cfg, repeats = args
    return est.estimate_density(partial, fd, ga_cfg, repeats=repeats)


# -- commands --------------------------------------------------------------------

def cmd_generate(ctx: Context) -> None:
    cfg = ctx.cfg
    if cfg["ingest"] is not None:
        path = _need(cfg["ingest"]["path"])
        diagrams = load_runs(path, ctx.grid, ctx.cfg.fov)
        fd = measure_true_fd(diagrams, s_min=1.0 / cfg.k_j)
        runs = [{"run_id": d.run_id, "true_fd": fd.as_dict()} for d in diagrams]
        _log(f"[generate] ingested {len(diagrams)} runs from {path}")
    else:
        configs = sample_configs(cfg.scenario_base(), cfg.scenario_ranges(), cfg["scenario"]["count"], cfg["seed"])
        bundles = []
        with _mapper(cfg["jobs"]) as mapper:
            for i, b in enumerate(mapper(_generate_one, configs)):
                bundles.append(b)
                _log(f"[generate] {i + 1}/{len(configs)} {b.diagram.run_id}")
        bundles.sort(key=lambda b: b.diagram.run_id)
        diagrams = [b.diagram for b in bundles]
        runs = [{"run_id": b.diagram.run_id, "true_fd": b.true_fd.as_dict(), "config": b.config.to_dict()}
                for b in bundles]
    save_runs(diagrams, ctx.path("trajectories.csv"))
    for d in diagrams:
        save_matrix(aggregate(d, ctx.grid), ctx.path("matrices", f"{d.run_id}.truth.csv"))
    _write_json(ctx.path("scenarios.json"), {"grid": cfg["grid"], "runs": runs})


def cmd_discretize(ctx: Context) -> None:
    opts = ctx.cfg["discretize"]
    diagrams = ctx.diagrams()
    os.makedirs(ctx.path("matrices"), exist_ok=True)
    for i, d in enumerate(diagrams):
        save_matrix(aggregate(d, ctx.grid), ctx.path("matrices", f"{d.run_id}.truth.csv"))
        part = aggregate(d, ctx.grid, masked=True, min_coverage=float(opts["min_coverage"]),
                         normalize=opts["normalize"])
        save_matrix(part, ctx.path("matrices", f"{d.run_id}.partial.csv"),
                    ctx.path("matrices", f"{d.run_id}.partial.mask.csv"))
        _log(f"[discretize] {i + 1}/{len(diagrams)} {d.run_id}: {part.n_observed} observed cells")


def _quartets(ctx: Context):
    return extract_quartets([ctx.matrix(r, "partial") for r in ctx.run_ids()])


def cmd_calibrate(ctx: Context) -> None:
    cfg = ctx.cfg
    quartets = _quartets(ctx)
    _log(f"[calibrate] {len(quartets)} quartets")
    res = cal.calibrate_fd(quartets, ctx.grid, cfg.k_j, cfg.ga("calibrate").replace(rng_seed=cfg["seed"]),
                           repeats=cfg["calibrate"]["repeats"])
    _log(f"[calibrate] v_f={res.fd.v_f:.4f} k_c={res.fd.k_c:.5f} rmse={res.rmse:.3g}")
    _write_json(ctx.path("calibration.json"), res.to_dict())


def _calibrated_fd(ctx: Context) -> FDParams:
    return cal.CalibrationResult.from_dict(_read_json(ctx.path("calibration.json"))).fd


def cmd_estimate(ctx: Context) -> None:
    cfg = ctx.cfg
    fd = _calibrated_fd(ctx)
    ids = ctx.run_ids()
    base = cfg.ga("estimate")
    tasks = [(ctx.matrix(r, "partial"), fd, base.replace(rng_seed=_task_seed(cfg["seed"], i)),
              cfg["estimate"]["repeats"]) for i, r in enumerate(ids)]
    with _mapper(cfg["jobs"]) as mapper:
        for i, (run_id, res) in enumerate(zip(ids, mapper(_estimate_one, tasks))):
            save_matrix(res.completed, ctx.path("estimates", f"{run_id}.csv"))
            _write_json(ctx.path("estimates", f"{run_id}.json"), res.metadata())
            _log(f"[estimate] {i + 1}/{len(ids)} {run_id}: fitness {res.fitness:.3g}")


def cmd_evaluate(ctx: Context) -> None:
    cfg = ctx.cfg
    runs = _read_json(ctx.path("scenarios.json"))["runs"]
    by_id = {d.run_id: d for d in ctx.diagrams()}
    scenarios, estimates, baselines = [], [], []
    for r in runs:
        run_id = r["run_id"]
        if run_id not in by_id:
            raise MissingArtifact(f"run {run_id} listed in scenarios.json is absent from trajectories.csv")
        truth = ctx.matrix(run_id, "truth")
        true_fd = FDParams.from_dict(r["true_fd"])
        base = est.baseline_known((None, truth), true_fd, measure_boundary(truth, true_fd))
        save_matrix(base, ctx.path("baselines", f"{run_id}.csv"))
        scenarios.append(ScenarioEval.from_diagram(by_id[run_id], truth, cfg["evaluate"]["region"]))
        estimates.append(load_matrix(ctx.grid, _need(ctx.path("estimates", f"{run_id}.csv"))))
        baselines.append(base)
    report = batch_report(scenarios, estimates, baselines)
    summary = dict(report.summary)
    summary["region"] = cfg["evaluate"]["region"]
    calib = ctx.path("calibration.json")
    if os.path.exists(calib):
        fd = _calibrated_fd(ctx)
        measured = measure_true_fd(list(by_id.values()), s_min=1.0 / fd.k_j)
        summary["fd"] = {
            "calibrated": fd.as_dict(), "measured": measured.as_dict(),
            "v_f_rel_error": abs(fd.v_f - measured.v_f) / measured.v_f,
            "k_c_rel_error": abs(fd.k_c - measured.k_c) / measured.k_c,
        }
    _write_text(ctx.path("report.csv"), report.to_csv())
    _write_json(ctx.path("summary.json"), summary)

    rows = report.rows
    ga = [r["rmse_ga"] for r in rows]
    bins = int(cfg["evaluate"]["bins"])
    counts, edges = np.histogram(np.array([v for v in ga if np.isfinite(v)] or [0.0]), bins=bins)
    hist = "bin_lo,bin_hi,count\n" + "".join(f"{repr(float(a))},{repr(float(b))},{int(c)}\n"
                                              for a, b, c in zip(edges[:-1], edges[1:], counts))
    _write_text(ctx.path("hist.csv"), hist)
    _write_text(ctx.path("scatter.csv"), report.to_csv())
    _write_text(ctx.path("rmse_hist.svg"), histogram_svg(ga, bins, "GA masked RMSE", "RMSE (veh/m)"))
    for key, trend in summary["trends"].items():
        if not key.startswith("rmse_ga") or "error" in trend:
            continue
        cov = key.split("_vs_")[1]
        svg = scatter_svg([r[cov] for r in rows], ga, trend["slope"], trend["intercept"],
                          f"GA RMSE vs {cov} (r={trend['correlation']:.3f})", cov, "RMSE (veh/m)")
        _write_text(ctx.path(f"rmse_vs_{cov}.svg"), svg)
    s = summary["rmse_ga"]
    b = summary["rmse_baseline"]
    _log(f"[evaluate] GA mean {s['mean']}, baseline mean {b['mean']} over {s['n']} scenarios")


def cmd_gridsearch(ctx: Context) -> None:
    cfg = ctx.cfg
    opts = cfg["gridsearch"]
    reps, cap = int(opts["repetitions"]), int(opts["cap"])

    def progress(name):
        return lambda i, n: _log(f"[gridsearch:{name}] {i}/{n}")

    with _mapper(cfg["jobs"]) as mapper:
        if "fd" in opts["stages"]:
            search = gs.fd_search(cfg["seed"], reps)
            search.cap = cap
            table = gs.search_fd(_quartets(ctx), ctx.grid, cfg.k_j, search, mapper, progress("fd"))
            _write_text(ctx.path("gridsearch_fd.csv"), table.to_csv())
        if "boundary" in opts["stages"]:
            fd = _calibrated_fd(ctx)
            ids = ctx.run_ids()[: int(opts["diagrams"])]
            partials = [ctx.matrix(r, "partial") for r in ids]
            for name, make in (("phase1", gs.boundary_search_phase1), ("phase2", gs.boundary_search_phase2)):
                search = make(cfg["seed"], reps)
                search.cap = cap
                table = gs.search_boundary(partials, fd, search, mapper, progress(name))
                _write_text(ctx.path(f"gridsearch_boundary_{name}.csv"), table.to_csv())


def cmd_pipeline(ctx: Context) -> None:
    for step in (cmd_generate, cmd_discretize, cmd_calibrate, cmd_estimate, cmd_evaluate):
        step(ctx)
    if ctx.cfg["gridsearch"]["stages"]:
        cmd_gridsearch(ctx)


COMMANDS = {
    "generate": cmd_generate,
    "discretize": cmd_discretize,
    "calibrate": cmd_calibrate,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="camtse", description="Moving-camera traffic state estimation pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    init = sub.add_parser("config-init", help="print or write the default configuration")
    init.add_argument("path", nargs="?", help="file to write (default: standard output)")
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML run configuration (defaults apply when omitted)")
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int)
        s.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    return p


def _context(args) -> Context:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if over:
        data = dict(cfg.data)
        data.update(over)
        cfg = RunConfig.from_dict(data)
    out = args.out or os.environ.get(OUT_ENV) or cfg["out"]
    os.makedirs(out, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigurationError(f"output directory {out} is not writable")
    return Context(cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config-init":
            text = RunConfig().dump()
            if args.path:
                _write_text(args.path, text)
            else:
                sys.stdout.write(text)
            return 0
        COMMANDS[args.command](_context(args))
    except (ConfigurationError, IngestError, MissingArtifact) as exc:
        print(f"camtse: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"camtse: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
