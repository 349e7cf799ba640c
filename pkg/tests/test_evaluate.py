import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camtse.core import DensityMatrix, GridSpec, SpaceTimeDiagram, Trajectory
from camtse.evaluate import (ScenarioEval, batch_report, camera_mask, camera_speed, masked_rmse, mean_density,
                             trend_regression)


def with_camera(grid, t, x):
    return SpaceTimeDiagram(grid, (), Trajectory("camera", t, x), (10.0, 60.0))


def leave_time(t, cam, x0):
    """First sample after the camera's last position above x0."""
    above = np.nonzero(cam > x0)[0]
    if above.size == 0:
        return t[0]
    return t[above[-1] + 1] if above[-1] + 1 < t.size else np.inf


def brute_mask(grid, camera, region, step=0.01):
    """Sample the camera line and check every cell against the half-plane it must stay in."""
    t = np.arange(0.0, grid.T + step / 2, step)
    cam = np.interp(t, camera.t, camera.x)
    mask = np.zeros(grid.shape, bool)
    for j in range(grid.beta):
        sel = (t >= j * grid.dt - 1e-9) & (t <= (j + 1) * grid.dt + 1e-9)
        for i in range(grid.alpha):
            x0, x1 = i * grid.dx, (i + 1) * grid.dx
            if region == "ahead":
                mask[i, j] = np.all(x1 <= cam[sel])
            else:
                mask[i, j] = leave_time(t, cam, x0) <= (j + 1) * grid.dt + 1e-9
    return mask


def test_swept_extremes(grid):
    fast = with_camera(grid, [0.0, 1e-9, 16.0], [100.0, 0.0, 0.0])
    assert camera_mask(fast, region="swept").all()
    parked = with_camera(grid, [0.0, 16.0], [100.0, 100.0])
    assert not camera_mask(parked, region="swept").any()


def test_ahead_extremes(grid):
    fast = with_camera(grid, [0.0, 1e-9, 16.0], [100.0, 0.0, 0.0])
    assert not camera_mask(fast).any()
    parked = with_camera(grid, [0.0, 16.0], [100.0, 100.0])
    assert camera_mask(parked).all()


@pytest.mark.parametrize("region", ["ahead", "swept"])
def test_table_setup_against_halfplane_oracle(grid, region):
    arrive = 100.0 / 8.5
    d = with_camera(grid, [0.0, arrive, 16.0], [100.0, 0.0, 0.0])
    m = camera_mask(d, region=region)
    assert 0 < m.sum() < grid.alpha * grid.beta
    np.testing.assert_array_equal(m, brute_mask(grid, d.camera, region))


def test_generated_camera_against_oracle(congested_bundle, grid):
    cam = congested_bundle.diagram.camera
    for region in ("ahead", "swept"):
        np.testing.assert_array_equal(camera_mask(congested_bundle.diagram, region=region),
                                      brute_mask(grid, cam, region))


def test_swept_monotone_in_horizon():
    # a longer run only adds swept cells to the original window
    short, long = GridSpec(100, 16, 20, 2), GridSpec(100, 24, 20, 2)
    t, x = [0.0, 12.0, 24.0], [100.0, 0.0, 0.0]
    a = camera_mask(with_camera(short, t, x), region="swept")
    b = camera_mask(with_camera(long, t, x), region="swept")
    assert np.all(b[:, :short.beta] >= a)


def test_bad_region(grid):
    with pytest.raises(ValueError):
        camera_mask(with_camera(grid, [0, 16], [100, 0]), region="behind")


def full(grid, cells):
    return DensityMatrix.full(grid, np.asarray(cells, float))


def test_masked_rmse_trivial(grid):
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 0.15, grid.shape)
    mask = np.ones(grid.shape, bool)
    assert masked_rmse(full(grid, a), full(grid, a), mask) == 0.0
    assert masked_rmse(full(grid, a), full(grid, a + 0.01), mask) == pytest.approx(0.01, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_masked_rmse_formula_and_symmetry(seed):
    grid = GridSpec(100, 16, 20, 2)
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0, 0.15, (2, *grid.shape))
    mask = rng.random(grid.shape) < 0.5
    mask[0, 0] = True
    direct = np.sqrt(np.sum(((a - b) ** 2) * mask) / mask.sum())
    got = masked_rmse(full(grid, a), full(grid, b), mask)
    assert got == pytest.approx(direct, abs=1e-12)
    assert got == masked_rmse(full(grid, b), full(grid, a), mask)
    assert got >= 0


def test_masked_rmse_errors(grid):
    a = full(grid, np.zeros(grid.shape))
    with pytest.raises(ValueError):
        masked_rmse(a, a, np.zeros(grid.shape, bool))
    with pytest.raises(ValueError):
        masked_rmse(a, a, np.ones((3, 3), bool))


def test_trend_exact_line():
    x = np.linspace(0, 1, 20)
    tr = trend_regression(x, 2 * x + 1)
    assert tr.slope == pytest.approx(2, abs=1e-9)
    assert tr.intercept == pytest.approx(1, abs=1e-9)
    assert tr.correlation == pytest.approx(1.0)


def test_trend_resists_outlier():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 10, 40)
    y = 0.5 * x + 3 + rng.normal(0, 0.05, x.size)
    y[7] += 40
    assert trend_regression(x, y).slope == pytest.approx(0.5, rel=0.05)
    assert abs(np.polyfit(x, y, 1)[0] - 0.5) > 0.025


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_trend_correlation_in_range(points):
    x, y = np.array(points).T
    if np.ptp(x) == 0:
        return
    assert -1 - 1e-12 <= trend_regression(x, y).correlation <= 1 + 1e-12


def test_trend_errors():
    with pytest.raises(ValueError):
        trend_regression([1, 2], [1, 2])
    with pytest.raises(ValueError):
        trend_regression([1, 1, 1], [1, 2, 3])


def test_covariates(grid):
    parked = Trajectory("camera", [0, 16], [100, 100])
    assert camera_speed(parked) == 0.0
    assert camera_speed(Trajectory("camera", [0, 10, 16], [100, 0, 0])) == pytest.approx(10.0)
    car = Trajectory("a", [0, 16], [0, 100])
    d = SpaceTimeDiagram(grid, (car,), parked, (10, 60))
    assert mean_density(d) == pytest.approx(16 / 1600)


def scenario(grid, run_id, truth, speed=8.0, density=0.05):
    mask = np.zeros(grid.shape, bool)
    mask[:3, :4] = True
    return ScenarioEval(run_id, full(grid, truth), mask, density, speed)


def test_batch_report_statistics(grid):
    rng = np.random.default_rng(3)
    scs, ests, bases = [], [], []
    for n in range(6):
        truth = rng.uniform(0, 0.15, grid.shape)
        scs.append(scenario(grid, f"r{n}", truth, speed=6 + n * 0.5, density=0.02 * n))
        ests.append(full(grid, truth + rng.normal(0, 0.01, grid.shape)))
        bases.append(full(grid, truth))
    rep = batch_report(scs, ests, bases)
    assert [r["run_id"] for r in rep.rows] == [f"r{n}" for n in range(6)]
    ga = [masked_rmse(s.truth, e, s.mask) for s, e in zip(scs, ests)]
    assert rep.summary["rmse_ga"]["mean"] == pytest.approx(np.mean(ga))
    assert rep.summary["rmse_ga"]["std"] == pytest.approx(np.std(ga))
    assert rep.summary["rmse_baseline"]["mean"] == 0.0
    assert "slope" in rep.summary["trends"]["rmse_ga_vs_mean_density"]
    lines = rep.to_csv().splitlines()
    assert lines[0] == "run_id,rmse_ga,rmse_baseline,mean_density,camera_speed,n_cells"
    assert len(lines) == 7


def test_batch_report_single_perfect(grid):
    truth = np.full(grid.shape, 0.03)
    rep = batch_report([scenario(grid, "a", truth)], [full(grid, truth)], [full(grid, truth)])
    assert rep.summary["rmse_ga"]["mean"] == 0.0 and rep.summary["rmse_ga"]["std"] == 0.0
    assert "error" in rep.summary["trends"]["rmse_ga_vs_camera_speed"]


def test_batch_report_length_mismatch(grid):
    with pytest.raises(ValueError):
        batch_report([], [None], [])
