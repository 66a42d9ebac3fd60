"""Front positions, logarithmic-delay fits, tail amplitudes and shape distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.signal import savgol_filter

from . import defaults


@dataclass
class FrontTrace:
    """Lab-frame front positions m(t) sampled at uniformly spaced times."""

    times: np.ndarray
    m: np.ndarray
    level: tuple = ("u", 0.5)
    _mdot: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if self.times.shape != self.m.shape:
            raise ValueError("times and m must have the same length")

    @property
    def mdot(self) -> np.ndarray:
        """dm/dt by local quadratic regression over 21 samples."""
        if self._mdot is None:
            n = self.times.size
            if n < defaults.SG_WINDOW:
                raise ValueError("trace too short for the derivative filter")
            h = np.diff(self.times)
            if not np.allclose(h, h[0], rtol=1e-9, atol=1e-12):
                raise ValueError("front samples must be uniformly spaced in time")
            self._mdot = savgol_filter(self.m, defaults.SG_WINDOW, 2, deriv=1, delta=float(h[0]),
                                       mode="interp")
        return self._mdot


@dataclass
class AsymptoticEstimate:
    c_fit: float
    r_fit: float
    x0_fit: float
    window: tuple
    residual_norm: float
    tail_amplitude: float | None = None


def _u_level(level, model):
    if isinstance(level, (int, float)):
        return "u", float(level)
    kind, val = level
    if kind == "u":
        return "u", float(val)
    if kind == "alpha":
        if model is None:
            raise ValueError("an alpha-level needs the model")
        target = brentq(lambda v: float(model.alpha(np.array([v]))[0]) - val, 1e-14, 1.0,
                        xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return "u", target
    raise ValueError(f"unknown level kind {kind!r}")


def locate_front(state, level=0.5, model=None) -> float:
    """Lab position where u first drops below the level, linearly interpolated.

    ``level`` is a u-value, ("u", value) or ("alpha", value); the alpha form
    locates alpha(u) = value and needs ``model``.
    """
    _, lv = _u_level(level, model)
    u = state.u
    above = u >= lv
    idx = np.flatnonzero(above[:-1] & ~above[1:])
    if idx.size == 0:
        raise ValueError(f"level {lv} is not bracketed by the state")
    i = int(idx[0])
    frac = (u[i] - lv) / (u[i] - u[i + 1])
    return float(state.frame_offset + (i + frac) * state.dx)


def fit_log_correction(trace: FrontTrace, window=defaults.FIT_WINDOW) -> AsymptoticEstimate:
    """Least-squares fit of dm/dt = c - r/t, then x0 from m - c t + r log t.

    x0 is averaged over the upper half of the window.
    """
    t_min, t_max = (float(v) for v in window)
    if t_min <= 0 or t_max < 2.0 * t_min:
        raise ValueError("fit window must span at least one doubling of time")
    t = trace.times
    if t.size == 0 or t_min < t[0] or t_max > t[-1] + 1e-9:
        raise ValueError(f"window {window} is not inside the trace [{t[0] if t.size else 0}, "
                         f"{t[-1] if t.size else 0}]")
    sel = (t >= t_min) & (t <= t_max + 1e-9)
    ts, ms, md = t[sel], trace.m[sel], trace.mdot[sel]
    X = np.column_stack([np.ones_like(ts), -1.0 / ts])
    (c, r), *_ = np.linalg.lstsq(X, md, rcond=None)
    upper = ts >= 0.5 * (t_min + t_max)
    x0 = float(np.mean(ms[upper] - c * ts[upper] + r * np.log(ts[upper])))
    resid = ms - (c * ts - r * np.log(ts) + x0)
    return AsymptoticEstimate(float(c), float(r), x0, (t_min, t_max),
                              float(np.sqrt(np.mean(resid**2))))


def delay_curve(trace: FrontTrace, c: float) -> np.ndarray:
    return trace.m - c * trace.times


def frame_position(t: float, r: float, speed: float = 2.0) -> float:
    """Lab position of the moving-frame origin, speed t - r log(t + 1)."""
    return speed * t - r * math.log1p(t)


def sample_lab(state, x_lab) -> np.ndarray:
    """u at lab positions by linear interpolation of log u (exact on exponentials)."""
    x = state.x
    xq = np.atleast_1d(np.asarray(x_lab, dtype=float))
    if np.any(xq < x[0]) or np.any(xq > x[-1]):
        raise ValueError("probe point outside the window")
    pos = (xq - x[0]) / state.dx
    i = np.clip(np.floor(pos).astype(int), 0, state.n - 2)
    th = pos - i
    a, b = state.u[i], state.u[i + 1]
    with np.errstate(divide="ignore"):
        la, lb = np.log(a), np.log(b)
    out = np.where((a > 0) & (b > 0), np.exp((1 - th) * la + th * lb), (1 - th) * a + th * b)
    return out if np.ndim(x_lab) else float(out[0])


def _shift_for(regime) -> tuple[float, bool]:
    name = getattr(getattr(regime, "regime", regime), "value", regime)
    if name == "PushmiPullyu":
        return 0.5, False
    if name in ("SemiFKPP", "FKPP"):
        return 1.5, True
    raise ValueError(f"no tail amplitude functional for regime {name}")


def tail_amplitude(state, gamma: float = defaults.TAIL_GAMMA, regime="PushmiPullyu", *,
                   speed: float = 2.0) -> float:
    """e^{t^g} u~(t, t^g), divided by t^g in the semi-FKPP case.

    u~ is the state viewed from speed t - r log(t+1), r = 1/2 or 3/2.
    """
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    r, semi = _shift_for(regime)
    t = state.t
    if t <= 0:
        raise ValueError("tail amplitude needs t > 0")
    y = t**gamma
    val = sample_lab(state, frame_position(t, r, speed) + y)
    amp = math.exp(y) * val
    return amp / y if semi else amp


def _wave_half_point(wave):
    U = wave.U
    k = int(np.flatnonzero((U[:-1] >= 0.5) & (U[1:] < 0.5))[0])
    return wave.x_grid[k] + wave.dx * (U[k] - 0.5) / (U[k] - U[k + 1])


def shape_convergence(state, wave) -> tuple[float, float]:
    """(shift, sup |u(x) - U(x - shift)|) with the 1/2-levels matched."""
    m = locate_front(state, 0.5)
    shift = m - _wave_half_point(wave)
    x = state.x - shift
    lo, hi = wave.x_grid[0], wave.x_grid[-1]
    sel = (x >= lo) & (x <= hi)
    if sel.sum() < 2:
        raise ValueError("state and wave do not overlap")
    spline = CubicSpline(wave.x_grid, wave.U)
    return float(shift), float(np.max(np.abs(state.u[sel] - spline(x[sel]))))


def x0_drift(trace: FrontTrace, est: AsymptoticEstimate, windows=None) -> tuple[float, list]:
    """Spread of the x0 estimate across sub-windows, holding (c, r) from ``est``.

    By default the fit window is split into dyadic pieces [T, 2T]. Returns
    (max - min, per-window means of m - c t + r log t).
    """
    if windows is None:
        lo, hi = est.window
        windows = []
        while 2 * lo <= hi * (1 + 1e-12):
            windows.append((lo, 2 * lo))
            lo *= 2
    t = trace.times
    vals = []
    for a, b in windows:
        sel = (t >= a) & (t <= b + 1e-9)
        if not sel.any():
            raise ValueError(f"window {(a, b)} holds no trace samples")
        vals.append(float(np.mean(trace.m[sel] - est.c_fit * t[sel] + est.r_fit * np.log(t[sel]))))
    return max(vals) - min(vals), vals
