import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from implicitdpc import data, ocp, predictors, sim

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def scalar_state_data(seed=1, noise_std=0.1, steps=50, ell=3):
    """State-setting data of the scalar unstable plant (N_f = 1)."""
    plant = sim.example_plant(noise_std)
    traj = sim.simulate(plant, [0.0], sim.pe_input(1, steps, 1.0, seed=seed), seed=seed)
    return data.build_data_matrix(traj, 0, 1, ell=ell, setting="state")


def scalar_spec(lambda_a=1.0, kind=predictors.TWO_NORM, boxes=True, R=1.0):
    reg = None if lambda_a is None else predictors.RegularizerSpec(kind, lambda_a)
    box = ocp.BoxSet.interval(-1.0, 1.0, 1) if boxes else None
    return ocp.OcpSpec(np.eye(1), R * np.eye(1), 0, 1, reg, box, box)


def random_io_data(rng, m=1, p=2, N_p=2, N_f=2, extra=3):
    """Random full-row-rank io data matrix."""
    rows = (m + p) * (N_p + N_f)
    M = rng.standard_normal((rows, rows + extra))
    return data.DataMatrix(
        Up=M[: m * N_p], Yp=M[m * N_p:(m + p) * N_p],
        Uf=M[(m + p) * N_p:(m + p) * N_p + m * N_f], Yf=M[(m + p) * N_p + m * N_f:],
        m=m, p=p, N_p=N_p, N_f=N_f,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def scalar_D():
    return scalar_state_data()


def enumerate_box_qp(H, f, lo, hi):
    """Brute force over all 3^n lower/free/upper patterns."""
    n = f.size
    best_x, best_v = None, np.inf
    for pattern in itertools.product((-1, 0, 1), repeat=n):
        pattern = np.array(pattern)
        x = np.where(pattern < 0, lo, np.where(pattern > 0, hi, 0.0))
        if not np.all(np.isfinite(x)):
            continue
        free = pattern == 0
        if free.any():
            Hff = 2.0 * H[np.ix_(free, free)]
            rhs = -f[free] - 2.0 * H[np.ix_(free, ~free)] @ x[~free]
            x[free] = np.linalg.solve(Hff, rhs)
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            continue
        v = x @ H @ x + f @ x
        if v < best_v:
            best_x, best_v = x, v
    return best_x, best_v


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines recorded through ``record_property``."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in getattr(rep, "user_properties", ()) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
