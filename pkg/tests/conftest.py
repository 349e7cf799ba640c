import numpy as np
import pytest

from camtse.core import FDParams, GridSpec
from camtse.scenario import ScenarioConfig, Signal, generate


@pytest.fixture
def grid():
    return GridSpec(100.0, 16.0, 20.0, 2.0)


@pytest.fixture
def fd_ref():
    # the worked example: v_f 10, k_c 0.05, k_j 0.15385
    return FDParams(10.0, 0.05, 0.15385)


@pytest.fixture(scope="session")
def congested_bundle():
    grid = GridSpec(100.0, 16.0, 20.0, 2.0)
    cfg = ScenarioConfig(grid=grid, demand=0.4, signal=Signal(100.0, 10.0, 10.0, 0.0),
                         camera_speed=8.0, rng_seed=12)
    return generate(cfg)


def ref_flow(v_f, k_c, k_j, ks, kr):
    """Scalar triangular interface flow, written independently of the package."""
    w = v_f * k_c / (k_j - k_c)
    demand = ks * v_f
    supply = w * (k_j - kr)
    return demand if demand < supply else supply


def ref_step(v_f, k_c, k_j, ratio, row, k_in, k_out):
    cells = [k_in] + list(row) + [k_out]
    out = []
    for i in range(1, len(cells) - 1):
        q_in = ref_flow(v_f, k_c, k_j, cells[i - 1], cells[i])
        q_out = ref_flow(v_f, k_c, k_j, cells[i], cells[i + 1])
        v = cells[i] + ratio * (q_in - q_out)
        out.append(min(max(v, 0.0), k_j))
    return np.array(out)


@pytest.fixture
def acceptance(request):
    """Record one criterion outcome for the end-of-run summary."""
    log = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(criterion, passed, detail):
        log.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split(":")[0].split()[1]):
            terminalreporter.write_line(line)
