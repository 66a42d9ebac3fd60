"""frontlab command-line interface.

Every subcommand reads a TOML (or JSON) config, writes plot-ready CSV files
into --out and finishes with manifest.json. Exit codes: 0 success, 2 config
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, defaults
from .io import ConfigError, env_default, load_config, read_columns, read_json, write_columns, \
    write_csv, write_json
from .nonlinearity import classify, from_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    pass


# config helpers ------------------------------------------------------------------

def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _model(d):
    try:
        return from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad model entry {d!r}: {exc}") from exc


def expand_models(cfg: dict) -> list:
    """Models from ``models = [...]``, a single ``[model]`` table, or a ``[grid]`` product.

    A grid maps each key to a value or a list of values, e.g.
    ``[grid] family = "power", n = [2], chi = [0, 0.5, 1]``.
    """
    entries = list(cfg.get("models", []))
    if "model" in cfg:
        entries.append(cfg["model"])
    grid = cfg.get("grid")
    if grid:
        keys = sorted(grid)
        vals = [v if isinstance(v, list) else [v] for v in (grid[k] for k in keys)]
        entries.extend(dict(zip(keys, combo)) for combo in itertools.product(*vals))
    if not entries:
        raise ConfigError("no models")
    return entries


def _single_model(cfg):
    entries = expand_models(cfg)
    if len(entries) != 1:
        raise ConfigError("this subcommand takes exactly one model")
    return entries[0], _model(entries[0])


class Manifest:
    def __init__(self, subcommand: str, cfg: dict, out: Path):
        self.subcommand = subcommand
        self.cfg = cfg
        self.out = out
        self.outputs: list[str] = []
        self.steps = 0
        self._t0 = time.perf_counter()

    def add(self, path: Path):
        self.outputs.append(str(Path(path).relative_to(self.out)))

    def write(self):
        write_json(self.out / "manifest.json", {
            "config_hash": config_hash(self.cfg),
            "version": __version__,
            "subcommand": self.subcommand,
            "config": self.cfg,
            "outputs": sorted(self.outputs),
            "wall_clock_s": round(time.perf_counter() - self._t0, 3),
            "steps": self.steps,
        })


# subcommands -------------------------------------------------------------------

def _speed_row(entry):
    from .wave import minimal_speed
    m = _model(entry)
    cls = classify(m)
    return [entry.get("family", ""), entry.get("n", ""), m.chi, m.lam,
            minimal_speed(m), cls.minimal_speed_prediction, cls.regime.value]


def cmd_speed(cfg, out, mf, workers=1, **_):
    entries = expand_models(cfg)
    for e in entries:
        _model(e)
    rows = _pmap(_speed_row, entries, workers)
    p = write_csv(out / "speed.csv",
                  ["family", "n", "chi", "lambda", "c_star", "c_predicted", "regime"], rows)
    mf.add(p)
    print(f"{'family':>12} {'n':>3} {'chi':>6} {'lambda':>7} {'c_star':>12} {'regime':>14}")
    for r in rows:
        print(f"{r[0]:>12} {str(r[1]):>3} {r[2]:>6.3g} {r[3]:>7.3g} {r[4]:>12.8f} {r[6]:>14}")


def cmd_wave(cfg, out, mf, **_):
    from .wave import decay_asymptotics, integrate_wave, minimal_profile, minimal_speed, \
        solve_profile_ode
    _, model = _single_model(cfg)
    opts = cfg.get("wave", {})
    c = float(opts["c"]) if "c" in opts else minimal_speed(model)
    prof = minimal_profile(model) if "c" not in opts else solve_profile_ode(model, c)
    if not prof:
        raise NumericalFailure(f"no monotone connection at c={c} (u_hit={prof.u_hit})")
    extent = tuple(opts.get("extent", (30.0, 40.0)))
    wave = integrate_wave(prof, model, x_extent=extent, dx=float(opts.get("dx", defaults.DX)))
    mf.add(write_columns(out / "profile.csv", u=prof.u_grid, eta=prof.eta))
    mf.add(write_columns(out / "wave.csv", x=wave.x_grid, U=wave.U))
    info = {"c": prof.c, "lambda_c": wave.lambda_c, "eta_prime_0": prof.eta_prime_0,
            "eta_prime_1": prof.eta_prime_1}
    try:
        fit = decay_asymptotics(wave)
        info.update(D=fit.D, B=fit.B, decay=fit.classification.value, noise_floor=fit.noise_floor)
    except ValueError as exc:
        info["decay"] = f"unavailable: {exc}"
    mf.add(write_json(out / "wave.json", info))
    print(f"c = {prof.c:.10g}, lambda_c = {wave.lambda_c:.10g}")


def _run_config(model, opts):
    from .solver import RunConfig
    keys = {"dx", "dt", "left", "right", "level", "t_end", "snapshot_times", "trace_every",
            "initial", "recenter", "flux"}
    unknown = set(opts) - keys - {"equation", "equations", "snapshot_every"}
    if unknown:
        raise ConfigError(f"unknown run keys {sorted(unknown)}")
    kw = {k: opts[k] for k in keys if k in opts}
    if "snapshot_every" in opts and "snapshot_times" not in opts:
        every = float(opts["snapshot_every"])
        kw["snapshot_times"] = tuple(np.arange(1, int(opts.get("t_end", 0) / every) + 1) * every)
    kw["snapshot_times"] = tuple(float(t) for t in kw.get("snapshot_times", ()))
    return kw


def _save_snapshots(traj, d: Path, mf):
    d.mkdir(parents=True, exist_ok=True)
    meta = []
    for k, s in enumerate(traj.snapshots):
        name = f"snap_{k:04d}.csv"
        mf.add(write_columns(d / name, x=s.x, u=s.u))
        meta.append({"file": name, "t": s.t, "frame_offset": s.frame_offset, "dx": s.dx,
                     "equation": s.equation.value, "steps": s.steps})
    mf.add(write_json(d / "snapshots.json", meta))


def _load_snapshots(d: Path):
    from .solver import Equation, FieldState
    out = []
    for m in read_json(d / "snapshots.json"):
        cols = read_columns(d / m["file"])
        out.append(FieldState(Equation(m["equation"]), m["t"], m["frame_offset"], m["dx"],
                              cols["u"], m["steps"]))
    return out


def _energy_speed(model, states):
    """Frame speed for the energy: the scheme's own linear speed when c_* = 2 lam."""
    from .solver import discrete_linear_speed
    from .wave import minimal_speed
    c = minimal_speed(model)
    stepped = [s for s in states if s.steps > 0]
    if stepped and abs(c - 2.0 * model.lam) < 1e-9:
        dt = stepped[0].t / stepped[0].steps
        c = discrete_linear_speed(model.lam, stepped[0].dx, dt)
    return c


def diagnose_states(states, model, ledger=None):
    """Shape-defect and energy rows for a list of snapshots of one run.

    min_w uses the solver's second-order stencil; the energy uses the
    sixth-order one, which keeps its stencil floor far below E.
    """
    import warnings
    from .diagnostics import DiagnosticLedger, energy, shape_defect
    from .wave import minimal_profile
    ledger = ledger if ledger is not None else DiagnosticLedger()
    prof = minimal_profile(model)
    c = _energy_speed(model, states)
    prev_E = None
    for s in states:
        mw = shape_defect(s, prof).min_w
        ledger.add(s.t, "min_w", mw, -1e-8 * (1 + s.t), mw >= -1e-8 * (1 + s.t))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            E = energy(s, prof, c, order=6).E
        ledger.add(s.t, "energy", E, 0.0, True)
        if prev_E is not None:
            ledger.add(s.t, "energy_nonincreasing", E - prev_E, 1e-8 * prev_E,
                       E <= prev_E + 1e-8 * prev_E)
        prev_E = E
    return ledger


def _simulate_one(model, entry, run_opts, d: Path, mf, tag=""):
    from .solver import Equation, SolverError, run
    eqs = run_opts.get("equations") or [run_opts.get("equation", "RDE")]
    kw = _run_config(model, run_opts)
    from .diagnostics import DiagnosticLedger
    ledger = DiagnosticLedger()
    trajs = {}
    for eq in eqs:
        try:
            from .solver import RunConfig
            rc = RunConfig(model, Equation(eq), **kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            traj = run(rc)
        except SolverError as exc:
            raise NumericalFailure(f"{tag}{eq}: {exc}") from exc
        trajs[eq] = traj
        sub = d / eq
        _save_snapshots(traj, sub, mf)
        mf.add(write_columns(sub / "trace.csv", t=traj.trace.times, m=traj.trace.m))
        mf.add(write_json(sub / "run.json", {"model": entry, "run": rc.to_dict(),
                                             "config_hash": rc.config_hash()}))
        mf.steps += traj.snapshots[-1].steps
        diagnose_states(traj.snapshots, model, ledger)
    if "RDE" in trajs and "RCL" in trajs:
        for a, b in zip(trajs["RDE"].snapshots, trajs["RCL"].snapshots):
            gap = comparison_gap(a, b)
            ledger.add(a.t, "u_rd<=u_rcl", gap, 1e-8, gap <= 1e-8)
    mf.add(_write_ledger(ledger, d / "ledger.csv"))
    return ledger


def comparison_gap(a, b) -> float:
    """max over shared lab nodes of u_a - u_b (nodes outside a window count as 1 or 0)."""
    lo = min(a.frame_offset, b.frame_offset)
    hi = max(a.x[-1], b.x[-1])
    n = int(round((hi - lo) / a.dx)) + 1
    x = lo + a.dx * np.arange(n)

    def extend(s):
        k = np.rint((x - s.frame_offset) / s.dx).astype(int)
        return np.where(k < 0, 1.0, np.where(k >= s.n, 0.0, s.u[np.clip(k, 0, s.n - 1)]))
    return float(np.max(extend(a) - extend(b)))


def _write_ledger(ledger, path):
    ledger.write_csv(path)
    return path


def cmd_simulate(cfg, out, mf, **_):
    entry, model = _single_model(cfg)
    ledger = _simulate_one(model, entry, cfg.get("run", {}), out, mf)
    bad = [r for r in ledger.rows if not r[4]]
    print(f"{len(ledger.rows)} ledger rows, {len(bad)} failing")


def cmd_front_fit(cfg, out, mf, trajectory=None, window=None, **_):
    from .front import FrontTrace, fit_log_correction
    src = Path(trajectory or cfg.get("front_fit", {}).get("trajectory", ""))
    trace_file = src / "trace.csv" if (src / "trace.csv").exists() else None
    if trace_file is None:
        cands = sorted(src.glob("*/trace.csv"))
        if not cands:
            raise ConfigError(f"no trace.csv under {src}")
        trace_file = cands[0]
    cols = read_columns(trace_file)
    win = tuple(window or cfg.get("front_fit", {}).get("window", defaults.FIT_WINDOW))
    try:
        est = fit_log_correction(FrontTrace(cols["t"], cols["m"]), win)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mf.add(write_json(out / "fit.json", {"trace": str(trace_file), "c_fit": est.c_fit,
                                         "r_fit": est.r_fit, "x0_fit": est.x0_fit,
                                         "window": list(est.window),
                                         "residual_norm": est.residual_norm}))
    print(f"c = {est.c_fit:.8f}  r = {est.r_fit:.6f}  x0 = {est.x0_fit:.6f}")


def cmd_diagnose(cfg, out, mf, trajectory=None, **_):
    src = Path(trajectory or cfg.get("diagnose", {}).get("trajectory", ""))
    runs = [src] if (src / "run.json").exists() else sorted(p.parent for p in src.glob("*/run.json"))
    if not runs:
        raise ConfigError(f"no run.json under {src}")
    from .diagnostics import DiagnosticLedger
    ledger = DiagnosticLedger()
    for r in runs:
        model = _model(read_json(r / "run.json")["model"])
        diagnose_states(_load_snapshots(r), model, ledger)
    mf.add(_write_ledger(ledger, out / "ledger.csv"))
    print(f"{len(ledger.rows)} ledger rows, {sum(not r[4] for r in ledger.rows)} failing")


def cmd_voting_mc(cfg, out, mf, seed=0, workers=1, **_):
    from .voting import ParticleCapExceeded, StepVote, VotingRules, estimate_u, pde_reference, \
        tilted_rules
    v = cfg.get("voting")
    if not v:
        raise ConfigError("missing [voting] table")
    try:
        if "mu" in v:
            rules = VotingRules(int(v["n"]), tuple(float(m) for m in v["mu"]),
                                float(v.get("beta", 1.0)))
        else:
            rules = tilted_rules(int(v["n"]), float(v["gamma"]), float(v.get("beta", 1.0)))
        xs = np.asarray(v.get("xs", [0.0]), dtype=float)
        t = float(v.get("t", 1.0))
        n_paths = int(v.get("n_paths", 10_000))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad [voting] table: {exc}") from exc
    s = int(v.get("seed", seed))
    try:
        est = estimate_u(rules, StepVote(float(v.get("step_at", 0.0))), t, xs, n_paths, s, workers)
    except ParticleCapExceeded as exc:
        raise NumericalFailure(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cols = dict(x=est.xs, mean=est.mean, se=est.se, n_paths=np.full(xs.size, n_paths))
    if v.get("compare_pde", False):
        cols["pde"] = pde_reference(rules, t, xs, float(v.get("step_at", 0.0)))
    mf.add(write_columns(out / "votes.csv", **cols))
    for i, x in enumerate(est.xs):
        extra = f"  pde {cols['pde'][i]:.5f}" if "pde" in cols else ""
        print(f"x={x:+.3f}  u={est.mean[i]:.5f} +- {est.se[i]:.5f}{extra}")


def _sweep_task(args):
    k, entry, run_opts, out = args
    d = Path(out) / f"model_{k:03d}"
    mf = Manifest("simulate", {"model": entry, "run": run_opts}, d)
    model = _model(entry)
    _simulate_one(model, entry, run_opts, d, mf, tag=f"model {k}: ")
    mf.write()
    return k


def cmd_sweep(cfg, out, mf, workers=1, **_):
    entries = expand_models(cfg)
    for e in entries:
        _model(e)
    run_opts = cfg.get("run", {})
    tasks = [(k, e, run_opts, str(out)) for k, e in enumerate(entries)]
    _pmap(_sweep_task, tasks, workers)
    for k in range(len(entries)):
        mf.add(out / f"model_{k:03d}" / "manifest.json")
    print(f"{len(entries)} runs written")


def _pmap(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


COMMANDS = {
    "speed": cmd_speed,
    "wave": cmd_wave,
    "simulate": cmd_simulate,
    "front-fit": cmd_front_fit,
    "diagnose": cmd_diagnose,
    "voting-mc": cmd_voting_mc,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frontlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=env_default("CONFIG"))
        sp.add_argument("--out", default=env_default("OUT", "."))
        sp.add_argument("--seed", type=int, default=int(env_default("SEED", 0)))
        sp.add_argument("--workers", type=int, default=int(env_default("WORKERS", 1)))
        if name in ("front-fit", "diagnose"):
            sp.add_argument("trajectory", nargs="?")
        if name == "front-fit":
            sp.add_argument("--window", type=float, nargs=2)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        cfg = load_config(args.config) if args.config else {}
        out.mkdir(parents=True, exist_ok=True)
        mf = Manifest(args.command, cfg, out)
        COMMANDS[args.command](cfg, out, mf, seed=args.seed, workers=max(1, args.workers),
                               trajectory=getattr(args, "trajectory", None),
                               window=getattr(args, "window", None))
        mf.write()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
