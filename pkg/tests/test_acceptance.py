"""Acceptance criteria 1-10, one reported line each.

The long front runs (t = 2000, dx = 0.05, dt = 5e-4) are shared through
session caches in conftest and take several minutes in total.
"""

import math
import warnings

import numpy as np
import pytest

from frontlab.cli import comparison_gap
from frontlab.diagnostics import (calibrate_hopf_cole, energy, energy_dissipation,
                                  entropy_decrement, exponential_moment, hopf_cole,
                                  relative_entropy, shape_defect, supersolution_F)
from frontlab.front import fit_log_correction, x0_drift
from frontlab.solver import RunConfig, discrete_linear_speed, run, triplet_schedule
from frontlab.voting import (StepVote, estimate_u, identity_check, pde_reference, tilted_rules,
                             voting_nonlinearity)
from frontlab.wave import decay_asymptotics, evaluate_wave, integrate_wave, minimal_speed
from frontlab.solver import Equation, FieldState

from conftest import (ACCEPTANCE_LINES, TRIPLET_TIMES, long_run, power, profile, snapshot_at,
                      triplet_at)
from conftest import entropy_run as shared_entropy_run

WINDOW = (250.0, 2000.0)


def record(k, ok, detail):
    ACCEPTANCE_LINES[k] = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[k])
    return ok


def c_h(traj):
    cfg = traj.config
    return discrete_linear_speed(cfg.model.lam, cfg.dx, cfg.dt)


def test_criterion_01_minimal_speeds():
    got = {chi: minimal_speed(power(2, chi)) for chi in (0.0, 0.5, 1.0, 4.0)}
    want = {0.0: 2.0, 0.5: 2.0, 1.0: 2.0, 4.0: 2.5}
    ok = all(abs(got[k] - want[k]) <= 1e-3 for k in want)
    assert record(1, ok, "c_* = " + ", ".join(f"chi={k}: {v:.6f}" for k, v in got.items()))


def test_criterion_02_explicit_profiles():
    errs = {}
    for chi, k in ((1.0, 1.0), (4.0, 2.0)):
        p, m = profile(2, chi), power(2, chi)
        u = p.u_grid
        errs[f"eta chi={chi}"] = float(np.max(np.abs(p.eta - k * (u - u * u))))
        w = integrate_wave(p, m)
        errs[f"U chi={chi}"] = float(np.max(np.abs(w.U - 1 / (1 + np.exp(k * w.x_grid)))))
    ok = all(v <= 1e-6 for v in errs.values())
    assert record(2, ok, ", ".join(f"{k}: {v:.2e}" for k, v in errs.items()))


def test_criterion_03_log_delay_gap():
    semi = long_run("RDE", 0.5)
    pmp = long_run("RDE", 1.0)
    es, ep = fit_log_correction(semi.trace, WINDOW), fit_log_correction(pmp.trace, WINDOW)
    ds, _ = x0_drift(semi.trace, es)
    dp, _ = x0_drift(pmp.trace, ep)
    gap = es.r_fit - ep.r_fit
    ok = (1.25 <= es.r_fit <= 1.75 and 0.3 <= ep.r_fit <= 0.7 and gap > 0.6
          and ds < 0.1 and dp < 0.1)
    assert record(3, ok, f"r(0.5)={es.r_fit:.4f}, r(1)={ep.r_fit:.4f}, gap={gap:.3f}, "
                         f"x0 drift {ds:.4f}/{dp:.4f}")


def test_criterion_04_rcl_front_and_comparison():
    rcl = long_run("RCL", 1.0, "central")
    rde = long_run("RDE", 1.0)
    est = fit_log_correction(rcl.trace, WINDOW)
    drift, _ = x0_drift(rcl.trace, est)
    gaps = [comparison_gap(a, b) for a, b in zip(rde.snapshots, rcl.snapshots)]
    assert all(abs(a.t - b.t) < 1e-9 for a, b in zip(rde.snapshots, rcl.snapshots))
    worst = max(gaps)
    ok = 0.3 <= est.r_fit <= 0.7 and worst <= 1e-8 and drift < 0.1
    assert record(4, ok, f"r_rcl={est.r_fit:.4f}, x0 drift {drift:.4f}, "
                         f"max(u_rd - u_rcl)={worst:.2e} over {len(gaps)} snapshots")


def test_criterion_05_shape_defect_positivity():
    worst, hi = {}, {}
    ok = True
    for key, traj in (("RDE chi=1", long_run("RDE", 1.0)), ("RCL", long_run("RCL", 1.0, "central")),
                      ("RDE chi=0.5", long_run("RDE", 0.5))):
        p = profile(2, traj.config.model.chi)
        snaps = [s for s in traj.snapshots if s.t <= 500 + 1e-9]
        ok &= shape_defect(snaps[0], p).min_w >= -1e-10
        margins = [shape_defect(s, p).min_w + 1e-8 * (1 + s.t) for s in snaps]
        worst[key] = min(margins)
        ok &= worst[key] >= 0
        # context only: 6th-order w on the smooth states (t > 0)
        hi[key] = min(shape_defect(s, p, 6).min_w for s in snaps if s.t > 0)
    dx = long_run("RCL", 1.0, "central").config.dx
    assert record(5, ok, "min(w + 1e-8(1+t)) on [0,500]: "
                         + ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
                         + "; order-6 min w (t>0): "
                         + ", ".join(f"{k} {v:.1e}" for k, v in hi.items())
                         + f"; order-2 stencil floor on the exact wave -dx^2/48 = {-dx**2 / 48:.1e}")


def test_criterion_06_energy():
    traj = long_run("RDE", 1.0)
    p = profile(2, 1.0)
    c = c_h(traj)
    snaps = [s for s in traj.snapshots if s.t <= 500 + 1e-9]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        Es = [energy(s, p, c, order=6).E for s in snaps]
    mono = all(b <= a + 1e-8 * a for a, b in zip(Es, Es[1:]))
    ratios = []
    for t in TRIPLET_TIMES:
        dE, diss = energy_dissipation(*triplet_at(traj, t), p, c, order=6)
        ratios.append(dE / diss)
    ident = all(abs(r - 1) <= 0.05 for r in ratios)
    exact = {}
    for chi in (1.0, 4.0):
        m, pp = power(2, chi), profile(2, chi)
        x = -30 + 0.05 * np.arange(1801)
        st = FieldState(Equation.RDE, 0.0, -30.0, 0.05, evaluate_wave(pp, m, x))
        exact[chi] = energy(st, pp, pp.c, order=6).E
    zero = all(abs(v) < 1e-10 for v in exact.values())
    ok = mono and ident and zero
    assert record(6, ok, f"E non-increasing over {len(Es)} snapshots: {mono}; dE/dt / dissipation = "
                         + ", ".join(f"{r:.4f}" for r in ratios)
                         + f"; exact-wave E = {max(exact.values()):.1e}")


def test_criterion_07_hopf_cole():
    eps = calibrate_hopf_cole(power(2, 1.0), 0.05, 5e-4, profile=profile(2, 1.0))
    runs = {0.0: long_run("RDE", 0.0, t_end=401.0), 0.5: long_run("RDE", 0.5),
            1.0: long_run("RDE", 1.0)}
    worst = {}
    for chi, traj in runs.items():
        worst[chi] = max(hopf_cole(*triplet_at(traj, t), power(2, chi)).max_residual
                         for t in TRIPLET_TIMES)
    ok = eps < 1e-3 and all(v <= eps for v in worst.values())
    assert record(7, ok, f"eps_grid={eps:.2e}; max residual "
                         + ", ".join(f"chi={k}: {v:.2e}" for k, v in worst.items()))


@pytest.fixture(scope="module")
def entropy_run():
    return shared_entropy_run()


def test_criterion_08_entropy_and_weights(entropy_run):
    u = np.linspace(0, 1, 2001)
    f2 = float(np.max(np.abs(supersolution_F(power(2, 1.0))(u) - (1 - u))))
    f3 = float(np.max(np.abs(supersolution_F(power(3, 1.0))(u) - np.sqrt(1 - u * u))))
    W = supersolution_F(power(2, 1.0))
    ch = c_h(entropy_run)
    snaps = [s for s in entropy_run.snapshots if s.t >= 25 - 1e-9]
    rates = [entropy_decrement(a, b, W, ch)[0] for a, b in zip(snaps, snaps[1:])]
    dyadic = [snapshot_at(entropy_run, t) for t in (25.0, 50.0, 100.0, 200.0, 400.0)]
    phi2 = [relative_entropy(s, W, ch).phi2 for s in dyadic]
    slope = float(np.polyfit(np.log([s.t for s in dyadic]), np.log(phi2), 1)[0])

    rcl = long_run("RCL", 1.0, "central")
    ts = (200.0, 400.0, 800.0, 1600.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mom = [exponential_moment(snapshot_at(rcl, t), c_h(rcl), 0.5) for t in ts]
    scaled = [r.I / math.sqrt(r.t) for r in mom]
    ratios = [b / a for a, b in zip(scaled, scaled[1:])]
    ok = (f2 <= 1e-10 and f3 <= 1e-10 and max(rates) <= 1e-6 and abs(slope + 0.5) <= 0.15
          and all(0.8 <= r <= 1.25 for r in ratios))
    trunc = [r.t for r in mom if r.truncated]
    assert record(8, ok, f"F errors {f2:.1e}/{f3:.1e}; max dPhi2/dt={max(rates):.2e}; "
                         f"Phi2 slope {slope:.3f}; I/sqrt(t) ratios "
                         + ", ".join(f"{r:.4f}" for r in ratios)
                         + (f" (tail flagged at t={trunc})" if trunc else ""))


def test_criterion_09_voting():
    xs = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    worst = {}
    for key, rules in (("n=2", tilted_rules(2, 1.0)), ("n=3", tilted_rules(3, 0.5))):
        est = estimate_u(rules, StepVote(0.0), 1.0, xs, 100_000, seed=0)
        ref = pde_reference(rules, 1.0, xs)
        worst[key] = float(np.max(np.abs(est.mean - ref) / est.se))
    rng = np.random.default_rng(99)
    ident = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 10))
        ident = max(ident, identity_check(n, float(rng.uniform(1e-3, 1 / (n - 1))),
                                          float(rng.uniform()))[2])
    maj = voting_nonlinearity(3, (0, 0, 1, 1)).coeffs
    cubic = bool(np.allclose(maj, [0, -1, 3, -2], atol=1e-14))
    ok = all(v <= 3 for v in worst.values()) and ident < 1e-12 and cubic
    assert record(9, ok, "max |MC - PDE|/SE " + ", ".join(f"{k}: {v:.2f}" for k, v in worst.items())
                         + f"; identity {ident:.1e}; majority cubic {cubic}")


def test_criterion_10_decay_classes():
    out = {}
    for chi, ext in ((0.5, (30, 60)), (1.0, (30, 40)), (4.0, (30, 40))):
        w = integrate_wave(profile(2, chi), power(2, chi), x_extent=ext)
        out[chi] = decay_asymptotics(w)
    semi = out[0.5]
    ok = (semi.classification.value == "LinearPrefactor" and semi.D > 10 * semi.noise_floor
          and out[1.0].classification.value == "PureExponential"
          and out[4.0].classification.value == "PureExponential")
    assert record(10, ok, ", ".join(f"chi={k}: {v.classification.value} (D={v.D:.2e}, "
                                    f"floor={v.noise_floor:.1e})" for k, v in out.items()))
