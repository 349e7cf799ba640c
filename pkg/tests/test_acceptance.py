"""End-to-end acceptance checks.

Each test records a one-line PASS/FAIL verdict that is printed in the
"acceptance criteria" section at the end of the pytest run. The batch
tests run the full pipeline and take several minutes on one core.
"""
import csv
import json
import time

import numpy as np
import pytest
import yaml

from camtse import ga
from camtse.calibrate import calibrate_fd
from camtse.cli import main
from camtse.core import BoundaryVector, DensityMatrix, FDParams, GridSpec, Quartet, ctm_run, ctm_step
from camtse.discretize import aggregate
from camtse.estimate import estimate_density
from camtse.evaluate import camera_mask, masked_rmse
from camtse.fov import sweep_area
from camtse.scenario import ScenarioConfig, ScenarioRanges, generate, sample_configs

pytestmark = pytest.mark.slow

GRID = GridSpec(100.0, 16.0, 20.0, 2.0)


def run_batch(root, count):
    cfg = root / "run.yaml"
    cfg.write_text(yaml.safe_dump({"scenario": {"count": count}, "gridsearch": {"stages": []}}))
    out = root / "out"
    start = time.perf_counter()
    assert main(["pipeline", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out, time.perf_counter() - start


@pytest.fixture(scope="module")
def batch(tmp_path_factory):
    return run_batch(tmp_path_factory.mktemp("batch140"), 140)


@pytest.fixture(scope="module")
def reduced(tmp_path_factory):
    return run_batch(tmp_path_factory.mktemp("batch20"), 20)


def report(out):
    rows = list(csv.DictReader((out / "report.csv").open()))
    summary = json.loads((out / "summary.json").read_text())
    return rows, summary


# -- 1 --------------------------------------------------------------------------

def test_criterion_1_planted_fd_recovery(acceptance):
    fd = FDParams(8.5, 0.05, 1 / 6.5)
    rng = np.random.default_rng(2024)
    cell = GridSpec(3 * GRID.dx, 2 * GRID.dt, GRID.dx, GRID.dt)
    quartets = []
    for _ in range(300):
        row = rng.uniform(0, fd.k_j, 3)
        quartets.append(Quartet(row[0], row[1], row[2], ctm_step(fd, cell, row, row[0], row[2])[1]))
    start = time.perf_counter()
    res = calibrate_fd(quartets, GRID, fd.k_j)
    took = time.perf_counter() - start
    dv = abs(res.fd.v_f - fd.v_f) / fd.v_f
    dk = abs(res.fd.k_c - fd.k_c) / fd.k_c
    ok = dv <= 0.01 and dk <= 0.02 and res.rmse < 1e-6 and took < 30
    acceptance("1", ok, f"v_f err {dv:.2e}, k_c err {dk:.2e}, rmse {res.rmse:.2e}, {took:.1f}s")
    assert ok


# -- 2 --------------------------------------------------------------------------

def test_criterion_2_planted_boundary_recovery(acceptance):
    fd = FDParams(10.0, 0.06, 1 / 6.5)
    worst_obs = worst_masked = worst_time = 0.0
    # realistic boundaries and camera sweeps taken from generated scenarios
    for cfg in sample_configs(ScenarioConfig(grid=GRID), ScenarioRanges(), 5, seed=11):
        bundle = generate(cfg)
        truth = ctm_run(fd, GRID, bundle.true_bv)
        d = bundle.diagram
        observed = sweep_area(d.camera, d.fov, GRID) > 1e-9 * GRID.dx * GRID.dt
        partial = DensityMatrix(GRID, truth.cells, observed)
        start = time.perf_counter()
        res = estimate_density(partial, fd)
        worst_time = max(worst_time, time.perf_counter() - start)
        obs_rmse = float(np.sqrt(np.mean((res.completed.cells - truth.cells)[observed] ** 2)))
        worst_obs = max(worst_obs, obs_rmse)
        worst_masked = max(worst_masked, masked_rmse(truth, res.completed, camera_mask(d, GRID)))
    ok = worst_obs <= 1e-3 and worst_masked <= 0.002 and worst_time < 120
    acceptance("2", ok, f"worst observed rmse {worst_obs:.2e}, worst masked rmse {worst_masked:.2e}, "
                        f"slowest {worst_time:.1f}s per diagram")
    assert ok


# -- 3 --------------------------------------------------------------------------

def check_batch(out):
    _, summary = report(out)
    base = summary["rmse_baseline"]["mean"]
    est = summary["rmse_ga"]["mean"]
    fd = summary["fd"]
    verdicts = {
        "a": (base <= 0.012, f"baseline mean masked rmse {base:.4f} (limit 0.012)"),
        "b": (est <= 1.8 * base, f"GA mean {est:.4f} = {est / base:.2f} x baseline (limit 1.8)"),
        "c": (fd["v_f_rel_error"] <= 0.05 and fd["k_c_rel_error"] <= 0.15,
              f"v_f err {fd['v_f_rel_error']:.3f} (limit 0.05), k_c err {fd['k_c_rel_error']:.3f} (limit 0.15)"),
    }
    return verdicts


@pytest.mark.parametrize("part", ["a", "b", "c"])
def test_criterion_3_batch(acceptance, batch, part):
    _, out, took = batch
    ok, detail = check_batch(out)[part]
    acceptance(f"3{part}", ok, f"{detail}; 140 scenarios in {took / 60:.1f} min")
    assert ok, detail


def test_criterion_3_reduced_mode(acceptance, reduced):
    _, out, took = reduced
    verdicts = check_batch(out)
    ok = all(v[0] for v in verdicts.values()) and took <= 15 * 60
    acceptance("3-reduced", ok, "; ".join(f"3{k} {'ok' if v[0] else 'FAIL'} ({v[1]})" for k, v in verdicts.items())
               + f"; 20 scenarios in {took / 60:.1f} min")
    assert ok


# -- 4 --------------------------------------------------------------------------

def test_criterion_4_trends(acceptance, batch):
    rows, _ = report(batch[1])
    ga_rmse = np.array([float(r["rmse_ga"]) for r in rows])
    keep = np.isfinite(ga_rmse)
    dens = np.array([float(r["mean_density"]) for r in rows])[keep]
    speed = np.array([float(r["camera_speed"]) for r in rows])[keep]
    r_dens = np.corrcoef(dens, ga_rmse[keep])[0, 1]
    r_speed = np.corrcoef(speed, ga_rmse[keep])[0, 1]
    ok = r_dens > 0.1 and abs(r_speed) < 0.15
    acceptance("4", ok, f"r(density) {r_dens:.3f} (> 0.1), r(camera speed) {r_speed:.3f} (|r| < 0.15)")
    assert ok


# -- 5 --------------------------------------------------------------------------

def mean_fitness(path, column):
    rows = list(csv.DictReader(path.open()))
    groups = {}
    for r in rows:
        groups.setdefault(float(r[column]), []).append(float(r["fitness"]))
    lo, hi = min(groups), max(groups)
    return len(rows), np.mean(groups[lo]), np.mean(groups[hi])


def test_criterion_5_grid_search_shape(acceptance, batch):
    cfg_path, out, _ = batch
    cfg = yaml.safe_load(cfg_path.read_text())
    cfg["gridsearch"] = {"stages": ["fd", "boundary"], "diagrams": 3}
    cfg_path.write_text(yaml.safe_dump(cfg))
    assert main(["gridsearch", "--config", str(cfg_path), "--out", str(out)]) == 0
    checks = [("gridsearch_fd.csv", "generations", 60),
              ("gridsearch_boundary_phase1.csv", "k_tournament", 25),
              ("gridsearch_boundary_phase2.csv", "population_size", 25),
              ("gridsearch_boundary_phase2.csv", "generations", 25)]
    ok, parts = True, []
    for name, column, expected in checks:
        n, small, large = mean_fitness(out / name, column)
        good = n == expected and large >= small
        ok &= good
        parts.append(f"{name}:{column} rows {n}/{expected} fitness {small:.3g} -> {large:.3g}")
    acceptance("5", ok, "; ".join(parts))
    assert ok


# -- 6 --------------------------------------------------------------------------

def test_criterion_6_property_suites(acceptance):
    rng = np.random.default_rng(6)
    failures = []

    # closed-link conservation: no inflow, outflow blocked
    fd = FDParams(10.0, 0.06, 1 / 6.5)
    for _ in range(200):
        init = rng.uniform(0, fd.k_j, GRID.alpha)
        bv = BoundaryVector(init, np.zeros(GRID.beta), np.full(GRID.beta, fd.k_j))
        k = ctm_run(fd, GRID, bv).cells
        if not np.allclose(k.sum(axis=0), init.sum(), rtol=1e-9, atol=0):
            failures.append("conservation")
            break

    # Edie identity on generated traffic
    for cfg in sample_configs(ScenarioConfig(grid=GRID), ScenarioRanges(), 5, seed=6):
        d = generate(cfg).diagram
        total = aggregate(d, GRID).cells.sum() * GRID.dx * GRID.dt
        if abs(total - d.vehicle_seconds()) > 1e-6 * max(d.vehicle_seconds(), 1e-12):
            failures.append("vehicle-seconds")
            break

    # GA determinism and bounds at every generation
    cfg = ga.GAConfig(population_size=40, generations=15, bounds=[(-2.0, 3.0)] * 4, crossover_fraction=10,
                      rng_seed=9)

    def sphere(pop):
        return -np.sum(pop ** 2, axis=1)

    seen = []
    a = ga.run(cfg, sphere, vectorized=True, on_generation=lambda g, pop, fit: seen.append(pop.copy()))
    b = ga.run(cfg, sphere, vectorized=True)
    if a.to_json() != b.to_json():
        failures.append("determinism")
    if not all(np.all((p >= -2.0) & (p <= 3.0)) for p in seen):
        failures.append("bounds")

    # uniform crossover keeps each locus multiset
    pa, pb = rng.random((20, 6)), rng.random((20, 6))
    ca, cb = ga.crossover_batch(pa, pb, np.random.default_rng(1))
    if not np.allclose(np.sort(np.stack([pa, pb]), axis=0), np.sort(np.stack([ca, cb]), axis=0)):
        failures.append("crossover multiset")

    # metric axioms
    x = DensityMatrix.full(GRID, rng.random(GRID.shape))
    y = DensityMatrix.full(GRID, rng.random(GRID.shape))
    mask = np.ones(GRID.shape, bool)
    if masked_rmse(x, x, mask) != 0 or masked_rmse(x, y, mask) != masked_rmse(y, x, mask):
        failures.append("rmse axioms")

    ok = not failures
    acceptance("6", ok, "all property checks hold" if ok else "failed: " + ", ".join(failures)
               + " (full suites: test_core, test_discretize, test_ga, test_evaluate)")
    assert ok
