import functools

import numpy as np
import pytest

from frontlab.nonlinearity import build_power_family
from frontlab.wave import minimal_profile

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def power(n=2, chi=1.0, lam=1.0):
    return build_power_family(n, chi, lam)


@functools.lru_cache(maxsize=None)
def profile(n=2, chi=1.0, lam=1.0):
    return minimal_profile(power(n, chi, lam))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


# long runs shared by the acceptance suite and the run-level module tests ------

LONG_T = 2000.0
LONG_RIGHT = 300.0
TRIPLET_TIMES = (50.0, 100.0, 200.0, 400.0)


def _long_schedule(dt):
    from frontlab.solver import triplet_schedule
    early = set(np.arange(0.0, 501.0, 10.0))
    late = set(np.arange(600.0, LONG_T + 1.0, 100.0)) | {800.0, 1600.0}
    return tuple(sorted(early | late | set(triplet_schedule(TRIPLET_TIMES, dt))))


@functools.lru_cache(maxsize=None)
def long_run(equation, chi, flux="upwind", t_end=LONG_T):
    """Steep step data, dx = 0.05, dt = 5e-4, right half-width 300."""
    from frontlab.solver import RunConfig, run
    m = power(2, chi)
    probe = RunConfig(m, equation)
    sched = tuple(t for t in _long_schedule(probe.dt) if t <= t_end + 1e-9)
    cfg = RunConfig(m, equation, right=LONG_RIGHT, t_end=t_end, snapshot_times=sched, flux=flux)
    return run(cfg)


def snapshot_at(traj, t):
    s = traj.at(t)
    assert abs(s.t - t) < 1e-6, f"no snapshot at t={t}"
    return s


def triplet_at(traj, t, gap_steps=10):
    dt = traj.config.dt
    k = int(round(t / dt))
    by_step = {s.steps: s for s in traj.snapshots}
    return by_step[k - gap_steps], by_step[k], by_step[k + gap_steps]


ENTROPY_TIMES = (25.0, 50.0, 100.0, 200.0, 400.0)


@functools.lru_cache(maxsize=None)
def entropy_run():
    """RCL from compressed-wave data (gamma = 1.2, a = 2), central flux."""
    from frontlab.solver import RunConfig, run
    times = ENTROPY_TIMES + tuple(t + 1.0 for t in ENTROPY_TIMES[:-1])
    cfg = RunConfig(power(2, 1.0), "RCL", right=200.0, t_end=ENTROPY_TIMES[-1], flux="central",
                    snapshot_times=times,
                    initial={"kind": "scaled_wave", "gamma": 1.2, "a": 2.0})
    return run(cfg, profile=profile(2, 1.0))
