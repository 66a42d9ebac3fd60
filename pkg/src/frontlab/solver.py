"""Explicit monotone finite-difference solver on a re-centred window.

Both equations are evolved in the lab frame:

    RDE:  u_t = u_xx + lam^2 (u - A)(1 + chi A')
    RCL:  u_t + lam (A(u))_x = u_xx + lam^2 (u - A)

Second-order central differences for u_xx, first-order upwind (left
neighbour) for the flux by default, Heun time stepping. A central flux is
available for the RCL where lam max A' dx < 2 keeps it monotone; its
denominator 2 sinh(lam dx)/lam makes sum_i e^{lam x_i} u_i grow by exactly
the factor of the linear tail mode, so the weighted mass is conserved in
the frame moving at discrete_linear_speed. The window shifts by whole cells
whenever the u = level crossing leaves the centre cell, so every snapshot
sits on the lab lattice x = x_origin + k dx and moving-frame views never
need interpolation.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import defaults
from .front import FrontTrace
from .nonlinearity import NonlinearityModel

CLIP_TOL = 1e-12


class Equation(str, enum.Enum):
    RDE = "RDE"
    RCL = "RCL"


class SolverError(RuntimeError):
    """Raised on NaN, out-of-range values or a front reaching the window edge."""


@dataclass(frozen=True)
class FieldState:
    equation: Equation
    t: float
    frame_offset: float
    dx: float
    u: np.ndarray
    steps: int = 0

    @property
    def x(self) -> np.ndarray:
        return self.frame_offset + self.dx * np.arange(self.u.size)

    @property
    def n(self) -> int:
        return self.u.size


def stability_bound(model: NonlinearityModel, dx: float) -> float:
    """Largest dt for which forward Euler, hence Heun, is monotone."""
    umax = np.linspace(0, 1, 257)
    adv = model.lam * float(np.max(model.dA(umax)))
    react = float(np.max(np.abs(model.df(umax))))
    return 1.0 / (2.0 / dx**2 + adv / dx + react)


def discrete_linear_speed(lam: float, dx: float, dt: float) -> float:
    """Speed c_h at which e^{-lam (x - c_h t)} is steady for the linearised scheme.

    Equals 2 lam + O(dx^2 + dt^2). Moving frames built on c_h keep the
    weighted mass of e^{lam x} u conserved by the discrete tail dynamics.
    """
    sigma = (2.0 * math.cosh(lam * dx) - 2.0) / dx**2 + lam**2
    z = sigma * dt
    return math.log1p(z + 0.5 * z * z) / (lam * dt)


# kernels -------------------------------------------------------------------

@njit(cache=True, inline="always")
def _horner(coeffs, u):
    # coeffs is a homogeneous tuple, so the loop is unrolled at compile time
    a = 0.0
    da = 0.0
    for c in coeffs[::-1]:
        da = da * u + a
        a = a * u + c
    return a, da


@njit(cache=True, inline="always")
def _rhs_pass(src, dst, base, scale, k1, dt, dx, coeffs, chi, lam, mode):
    """dst[i] = base[i] + scale dt r(src)_i; r is also stored in k1 when scale == 1."""
    n = src.size
    inv2 = 1.0 / (dx * dx)
    idx = 1.0 / dx
    lam2 = lam * lam
    # central flux divides by 2 sinh(lam dx)/lam instead of 2 dx: then the
    # sum of e^{lam x} times the flux difference telescopes exactly
    cinv = lam / (2.0 * math.sinh(lam * dx))
    am, _ = _horner(coeffs, src[0])
    ai, dai = _horner(coeffs, src[1])
    bad = 0
    for i in range(1, n - 1):
        ui = src[i]
        ap, dap = _horner(coeffs, src[i + 1])
        lap = (src[i + 1] - 2.0 * ui + src[i - 1]) * inv2
        if mode == 0:
            r = lap + lam2 * (ui - ai) * (1.0 + chi * dai)
        elif mode == 1:
            r = lap - lam * (ai - am) * idx + lam2 * (ui - ai)
        else:
            r = lap - lam * (ap - am) * cinv + lam2 * (ui - ai)
        if scale == 1.0:
            k1[i] = r
            dst[i] = base[i] + dt * r
        else:
            v = base[i] + 0.5 * dt * (k1[i] + r)
            bad += (v < -CLIP_TOL) | (v > 1.0 + CLIP_TOL) | (v != v)
            dst[i] = min(max(v, 0.0), 1.0)
        am, ai, dai = ai, ap, dap
    return bad


@njit(cache=True)
def _heun(u, k1, u1, dt, dx, coeffs, chi, lam, mode):
    """One Heun step in place; returns False if a value leaves [0, 1].

    mode 0 is the RDE, 1 the RCL with upwind flux, 2 the RCL with central flux.
    """
    n = u.size
    u1[0] = u[0]
    u1[n - 1] = u[n - 1]
    _rhs_pass(u, u1, u, 1.0, k1, dt, dx, coeffs, chi, lam, mode)
    # corrector: base and dst are both u, read at i just before the write
    bad = _rhs_pass(u1, u, u, 0.5, k1, dt, dx, coeffs, chi, lam, mode)
    return bad == 0


@njit(cache=True)
def _crossing(u, level, j):
    n = u.size
    if j < 0 or j > n - 2:
        j = 0
    while j > 0 and u[j] < level:
        j -= 1
    while j < n - 2 and u[j + 1] >= level:
        j += 1
    if u[j] >= level and u[j + 1] < level:
        return j
    return -1


@njit(cache=True)
def _advance(u, nsteps, dt, dx, coeffs, chi, lam, mode, center, level, recenter,
             trace_every, step0, cells0, x_origin, trace_t, trace_m, ntrace0):
    n = u.size
    k1 = np.empty(n)
    u1 = np.empty(n)
    cells = cells0
    ntrace = ntrace0
    j = _crossing(u, level, center)
    for s in range(nsteps):
        if not _heun(u, k1, u1, dt, dx, coeffs, chi, lam, mode):
            return cells, ntrace, 1, s
        if recenter or trace_every > 0:
            j = _crossing(u, level, j)
            if j < 0:
                return cells, ntrace, 2, s
        if recenter:
            k = j - center
            if k >= 1:
                for i in range(n - k):
                    u[i] = u[i + k]
                for i in range(n - k, n):
                    u[i] = 0.0
                cells += k
                j -= k
            elif k <= -1:
                k = -k
                for i in range(n - 1, k - 1, -1):
                    u[i] = u[i - k]
                for i in range(k):
                    u[i] = 1.0
                cells -= k
                j += k
        if trace_every > 0 and (step0 + s + 1) % trace_every == 0 and ntrace < trace_t.size:
            frac = (u[j] - level) / (u[j] - u[j + 1])
            trace_t[ntrace] = (step0 + s + 1) * dt
            trace_m[ntrace] = x_origin + (cells + j + frac) * dx
            ntrace += 1
    return cells, ntrace, 0, nsteps


def _numpy_rhs(u, model: NonlinearityModel, dx, mode):
    out = np.zeros_like(u)
    lap = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx**2
    lam = model.lam
    if mode:
        A = model.A(u)
        flux = ((A[1:-1] - A[:-2]) / dx if mode == 1
                else (A[2:] - A[:-2]) * lam / (2 * math.sinh(lam * dx)))
        out[1:-1] = lap - lam * flux + lam**2 * (u[1:-1] - A[1:-1])
    else:
        out[1:-1] = lap + model.f(u[1:-1])
    return out


FLUXES = ("upwind", "central")


def _mode(equation, model, dx, flux="upwind") -> int:
    """Kernel mode; a central flux is accepted only where it stays monotone."""
    if Equation(equation) is Equation.RDE:
        return 0
    if flux not in FLUXES:
        raise ValueError(f"flux must be one of {FLUXES}")
    if flux == "upwind":
        return 1
    peclet = model.lam * float(np.max(model.dA(np.linspace(0, 1, 257)))) * dx
    if peclet >= 2.0:
        raise ValueError(f"central flux is not monotone here (lam max A' dx = {peclet:.3g} >= 2)")
    return 2


def _poly_array(model):
    return None if model.poly is None else tuple(float(c) for c in model.poly)


# public stepping -----------------------------------------------------------

def _window_cells(dx, left, right):
    return int(round(left / dx)), int(round(right / dx))


def step(state: FieldState, model: NonlinearityModel, dt: float, *,
         level: float = 0.5, center: int | None = None, flux: str = "upwind") -> FieldState:
    """One Heun step with Dirichlet ends.

    With ``center`` given, the window is shifted by whole cells so that the
    ``level`` crossing returns to that node index.
    """
    if dt > stability_bound(model, state.dx) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability bound")
    u = state.u.copy()
    mode = _mode(state.equation, model, state.dx, flux)
    coeffs = _poly_array(model)
    if coeffs is not None:
        cells, _, status, _ = _advance(u, 1, dt, state.dx, coeffs, model.chi, model.lam, mode,
                                       -1 if center is None else int(center), level,
                                       center is not None, 0, 0, 0, 0.0,
                                       np.empty(0), np.empty(0), 0)
        _raise_status(status, state.t)
        offset = state.frame_offset + cells * state.dx
    else:
        if center is not None:
            raise NotImplementedError("re-centring needs a polynomial model")
        k1 = _numpy_rhs(u, model, state.dx, mode)
        k2 = _numpy_rhs(u + dt * k1, model, state.dx, mode)
        v = u + 0.5 * dt * (k1 + k2)
        if not np.all((v >= -CLIP_TOL) & (v <= 1 + CLIP_TOL)):
            raise SolverError(f"NaN or value outside [0, 1] near t={state.t}")
        u = np.clip(v, 0.0, 1.0)
        u[0], u[-1] = state.u[0], state.u[-1]
        offset = state.frame_offset
    return replace(state, t=state.t + dt, u=u,
                   frame_offset=offset, steps=state.steps + 1)


def _raise_status(status, t):
    if status == 1:
        raise SolverError(f"NaN or value outside [0, 1] beyond clip tolerance near t={t}")
    if status == 2:
        raise SolverError(f"level crossing lost (front touched the window edge) near t={t}")


# initial data ---------------------------------------------------------------

def _grid(dx, left, right, x_center=0.0):
    nl, nr = _window_cells(dx, left, right)
    origin = x_center - nl * dx
    return origin, origin + dx * np.arange(nl + nr + 1)


def make_initial_step(x0: float = 0.0, smoothing_width: float = 0.0, *, model=None,
                      equation: Equation | str = Equation.RDE, dx: float = defaults.DX,
                      left: float = defaults.WINDOW_LEFT, right: float = defaults.WINDOW_RIGHT,
                      profile=None) -> FieldState:
    """Step data equal to 1 left of x0 - width and 0 from x0 on.

    For width > 0 the transition is a compressed copy (factor 2) of the
    minimal wave, scaled so that it reaches 1 at x0 - width; a compressed
    wave is steeper than the wave itself, so the shape defect starts >= 0.
    """
    if smoothing_width < 0:
        raise ValueError("smoothing_width must be >= 0")
    origin, x = _grid(dx, left, right)
    if not (x[1] <= x0 <= x[-2]):
        raise ValueError(f"x0={x0} is outside the window [{x[0]}, {x[-1]}]")
    u = np.where(x < x0, 1.0, 0.0)
    if smoothing_width > 0:
        if model is None:
            raise ValueError("a model is needed to build smoothed step data")
        from .wave import evaluate_wave, minimal_profile
        prof = profile if profile is not None else minimal_profile(model)
        g = defaults.STEEPENING
        a = x0 - 0.5 * smoothing_width
        sel = (x > x0 - smoothing_width) & (x < x0)
        vals = evaluate_wave(prof, model, g * (x[sel] - a))
        top = float(evaluate_wave(prof, model, np.array([g * (-0.5 * smoothing_width)]))[0])
        u[sel] = np.minimum(vals / top, 1.0)
    return FieldState(Equation(equation), 0.0, origin, dx, u)


def make_initial_scaled_wave(model: NonlinearityModel, gamma: float = 1.2, a: float = 0.0, *,
                             equation: Equation | str = Equation.RDE, dx: float = defaults.DX,
                             left: float = defaults.WINDOW_LEFT, right: float = defaults.WINDOW_RIGHT,
                             profile=None) -> FieldState:
    """u(0, x) = U_*(gamma (x - a)) for x <= 0 and 0 beyond."""
    if not gamma > 1.0:
        raise ValueError("gamma must exceed 1")
    if a < 0:
        raise ValueError("a must be >= 0")
    from .wave import evaluate_wave, minimal_profile
    prof = profile if profile is not None else minimal_profile(model)
    origin, x = _grid(dx, left, right)
    u = np.zeros_like(x)
    sel = x <= 0
    u[sel] = evaluate_wave(prof, model, gamma * (x[sel] - a))
    u[0] = 1.0
    return FieldState(Equation(equation), 0.0, origin, dx, u)


# runs ---------------------------------------------------------------------

@dataclass
class RunConfig:
    model: NonlinearityModel
    equation: Equation | str = Equation.RDE
    dx: float = defaults.DX
    dt: float | None = None
    left: float = defaults.WINDOW_LEFT
    right: float = defaults.WINDOW_RIGHT
    level: float = 0.5
    t_end: float = 0.0
    snapshot_times: tuple = ()
    trace_every: int = defaults.TRACE_EVERY
    initial: dict = field(default_factory=lambda: {"kind": "step", "x0": 0.0, "width": 0.0})
    recenter: bool = True
    flux: str = "upwind"

    def __post_init__(self):
        self.equation = Equation(self.equation)
        _mode(self.equation, self.model, self.dx, self.flux)
        if self.dt is None:
            self.dt = defaults.CFL * self.dx**2
        if self.dt > stability_bound(self.model, self.dx):
            raise ValueError(f"dt={self.dt} exceeds the stability bound")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "equation": self.equation.value,
            "dx": self.dx,
            "dt": self.dt,
            "left": self.left,
            "right": self.right,
            "level": self.level,
            "t_end": self.t_end,
            "snapshot_times": [float(t) for t in self.snapshot_times],
            "trace_every": self.trace_every,
            "initial": dict(self.initial),
            "recenter": self.recenter,
            "flux": self.flux,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class Trajectory:
    config: RunConfig
    snapshots: list
    trace: FrontTrace

    def at(self, t: float) -> FieldState:
        return min(self.snapshots, key=lambda s: abs(s.t - t))


def initial_state(cfg: RunConfig, profile=None) -> FieldState:
    init = dict(cfg.initial)
    kind = init.pop("kind", "step")
    common = dict(equation=cfg.equation, dx=cfg.dx, left=cfg.left, right=cfg.right)
    if kind == "step":
        return make_initial_step(init.get("x0", 0.0), init.get("width", 0.0), model=cfg.model,
                                 profile=profile, **common)
    if kind == "scaled_wave":
        return make_initial_scaled_wave(cfg.model, init.get("gamma", 1.2), init.get("a", 0.0),
                                        profile=profile, **common)
    raise ValueError(f"unknown initial data kind {kind!r}")


def run(cfg: RunConfig, state: FieldState | None = None, profile=None) -> Trajectory:
    """Evolve to t_end, storing snapshots at the scheduled times.

    Snapshot times are rounded to whole steps; the integer step count, not
    an accumulated float, defines t.
    """
    if state is None:
        state = initial_state(cfg, profile)
    dt = cfg.dt
    coeffs = _poly_array(cfg.model)
    mode = _mode(cfg.equation, cfg.model, cfg.dx, cfg.flux)
    total = int(round(cfg.t_end / dt))
    marks = sorted({min(max(int(round(t / dt)), 0), total) for t in cfg.snapshot_times} | {0, total})
    nl, _ = _window_cells(cfg.dx, cfg.left, cfg.right)
    center = nl
    cap = total // cfg.trace_every + 2 if cfg.trace_every > 0 else 0
    trace_t = np.empty(cap)
    trace_m = np.empty(cap)
    ntrace = 0
    u = state.u.copy()
    origin = state.frame_offset
    cells = 0
    done = 0
    snaps = []
    if 0 in marks:
        snaps.append(state)
    for mark in marks:
        if mark <= done:
            continue
        if coeffs is not None:
            cells, ntrace, status, _ = _advance(
                u, mark - done, dt, cfg.dx, coeffs, cfg.model.chi, cfg.model.lam, mode, center,
                cfg.level, cfg.recenter, cfg.trace_every, done, cells, origin, trace_t, trace_m,
                ntrace)
            _raise_status(status, done * dt)
        else:
            st = FieldState(cfg.equation, done * dt, origin + cells * cfg.dx, cfg.dx, u, done)
            for _ in range(mark - done):
                st = step(st, cfg.model, dt, level=cfg.level, flux=cfg.flux)
            u = st.u.copy()
        done = mark
        snap = FieldState(cfg.equation, done * dt, origin + cells * cfg.dx, cfg.dx, u.copy(), done)
        _check_window(snap)
        snaps.append(snap)
    trace = FrontTrace(trace_t[:ntrace].copy(), trace_m[:ntrace].copy(), ("u", cfg.level))
    return Trajectory(cfg, snaps, trace)


def _check_window(s: FieldState):
    if s.u[1] < 1.0 - 1e-6 or s.u[-2] > 1e-10:
        raise SolverError(f"window unhealthy at t={s.t}: u[1]={s.u[1]:.3g}, u[-2]={s.u[-2]:.3g}")


def triplet_schedule(times, dt: float, gap_steps: int = 10) -> list:
    """Snapshot times t - g dt, t, t + g dt for centred time differences."""
    out = []
    for t in times:
        out.extend([t - gap_steps * dt, t, t + gap_steps * dt])
    return sorted({round(v / dt) * dt for v in out if v >= 0})
