"""Functionals evaluated on solver snapshots.

All weighted integrals are formed in log space (weight exponent plus log of
the integrand) so that e^{c x} factors never overflow on wide windows.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson, trapezoid

from .nonlinearity import NonlinearityModel
from .stencils import d1_4th, d1_order

RHO_CUT = 1e-8


# shape defect ----------------------------------------------------------------

@dataclass
class ShapeDefectField:
    x: np.ndarray
    w: np.ndarray
    t: float
    equation: str

    @property
    def min_w(self) -> float:
        return float(np.min(self.w))

    @property
    def argmin(self) -> float:
        return float(self.x[int(np.argmin(self.w))])

    def tail(self, m: float):
        """(x - m, w) for the profile seen from the front position m."""
        return self.x - m, self.w


def _lab_dx(u, dx, order=2):
    return d1_order(u, dx, order)


def shape_defect(state, profile, order: int = 2) -> ShapeDefectField:
    """w = -u_x - eta(u).

    The default second-order central stencil is the solver's own; it keeps
    w >= 0 exact on step data. ``order`` 4 or 6 removes most of the stencil
    error on smooth states.
    """
    w = -_lab_dx(state.u, state.dx, order) - profile(state.u)
    return ShapeDefectField(state.x, w, state.t, str(getattr(state.equation, "value", state.equation)))


def forced_rcl_residual(prev, cur, nxt, model: NonlinearityModel, profile, order: int = 2):
    """Residual of the RCL operator on an RDE run, and -lam A'(u) w.

    R = u_t + lam A'(u) D u - u_xx - lam^2 (u - A) at the middle snapshot,
    with D the shape-defect stencil, u_t a centred time difference and u_xx
    the solver's Laplacian. For chi = 1 the two returned arrays agree up to
    time-differencing error whatever the sign of w.
    """
    x, up, uc, un, dx = _triplet(prev, cur, nxt)
    ut = (un - up) / (nxt.t - prev.t)
    lam = model.lam
    ux = _lab_dx(uc, dx, order)
    uxx = np.zeros_like(uc)
    uxx[1:-1] = (uc[2:] - 2 * uc[1:-1] + uc[:-2]) / dx**2
    R = ut + lam * model.dA(uc) * ux - uxx - lam**2 * model.zeta(uc)
    w = -ux - profile(uc)
    h = max(1, order // 2)
    return x[h:-h], R[h:-h], (-lam * model.dA(uc) * w)[h:-h]


# energy -----------------------------------------------------------------------

def _log_weighted_trapz(logw, f, dx):
    """trapz of e^{logw} f, computed without forming e^{logw} alone."""
    with np.errstate(divide="ignore"):
        lf = np.where(f != 0, np.log(np.abs(f)), -np.inf)
    vals = np.sign(f) * np.exp(logw + lf)
    return float(trapezoid(vals, dx=dx)), vals


@dataclass
class EnergyRecord:
    t: float
    E: float
    dissipation: float = float("nan")
    truncation: float = 0.0


def energy(state, profile, c: float, order: int = 2) -> EnergyRecord:
    """E_c = 1/2 int e^{c xi} w^2 with xi = x - c t.

    Nodes within the stencil half-width of either Dirichlet end are left out.
    """
    h = order // 2
    xi = (state.x - c * state.t)[h:-h]
    w = shape_defect(state, profile, order).w[h:-h]
    E2, vals = _log_weighted_trapz(c * xi, w * w, state.dx)
    E = 0.5 * E2
    edge = 0.5 * float(vals[-2]) if vals.size > 1 else 0.0
    if E > 0 and edge > 1e-10 * E:
        warnings.warn(f"energy integrand not decayed at the right edge ({edge:.3g})")
    return EnergyRecord(state.t, E, truncation=edge)


def _common(a, b):
    """Index slices of two snapshots restricted to their shared lab nodes."""
    if abs(a.dx - b.dx) > 1e-15:
        raise ValueError("snapshots use different grids")
    shift = int(round((b.frame_offset - a.frame_offset) / a.dx))
    if abs(b.frame_offset - a.frame_offset - shift * a.dx) > 1e-9 * a.dx:
        raise ValueError("snapshots are not on a common lattice")
    lo_a = max(0, shift)
    lo_b = max(0, -shift)
    n = min(a.n - lo_a, b.n - lo_b)
    if n < 3:
        raise ValueError("snapshots do not overlap")
    return slice(lo_a, lo_a + n), slice(lo_b, lo_b + n)


def _triplet(prev, cur, nxt):
    """Shared nodes of three snapshots as (x, u_prev, u, u_next)."""
    sp, sc = _common(prev, cur)
    x = cur.x[sc]
    up, uc = prev.u[sp], cur.u[sc]
    fake = type("S", (), {})()
    fake.dx, fake.frame_offset, fake.n = cur.dx, x[0], x.size
    sn, sf = _common(nxt, fake)
    return x[sf], up[sf], uc[sf], nxt.u[sn], cur.dx


def moving_time_derivative(prev, cur, nxt, c: float, order: int = 2):
    """(x, u, d_t u~) with u~ the state in the frame moving at speed c.

    Lab-frame centred time difference plus c u_x; no interpolation.
    """
    x, up, uc, un, dx = _triplet(prev, cur, nxt)
    dt = nxt.t - prev.t
    ut = (un - up) / dt
    return x, uc, ut + c * _lab_dx(uc, dx, order), dx


def energy_dissipation(prev, cur, nxt, profile, c: float, order: int = 2):
    """(dE/dt by centred difference, -int e^{c xi} (d_t u~)^2) at the middle snapshot."""
    e0, e2 = energy(prev, profile, c, order).E, energy(nxt, profile, c, order).E
    dEdt = (e2 - e0) / (nxt.t - prev.t)
    x, _, tut, dx = moving_time_derivative(prev, cur, nxt, c, order)
    diss, _ = _log_weighted_trapz(c * (x - c * cur.t), tut * tut, dx)
    return dEdt, -diss


def _potential_N(profile):
    """N(u) = int_0^u eta, interpolated as N/u^2 so small-u values keep their scaling."""
    u = profile.u_fine
    N = cumulative_trapezoid(profile.eta_fine, u, initial=0.0)
    g = np.empty_like(N)
    g[1:] = N[1:] / u[1:] ** 2
    g[0] = 0.5 * profile.eta_prime_0

    def N_of(v):
        v = np.asarray(v, dtype=float)
        return v * v * np.interp(v, u, g)
    return N_of


@dataclass
class EnergyEquivalence:
    E: float
    E_tilde: float
    difference: float
    divergent: bool


def energy_equivalence(state, profile, c: float) -> EnergyEquivalence:
    """Compare E_c with int e^{c xi}(u_xi^2/2 + V_c(u)), V_c = -c N_c + eta^2/2.

    Uses fourth-order derivatives and Simpson quadrature: the two integrals
    agree only up to integration by parts, which the discrete forms honour
    to the order of the rule. Pulled waves (2 lam_c = c) are flagged.
    """
    divergent = 2.0 * profile.eta_prime_0 <= c * (1 + 1e-9)
    xi = state.x - c * state.t
    u = state.u
    ux = d1_4th(u, state.dx)
    eta = profile(u)
    N = _potential_N(profile)(u)
    wt = np.exp(c * xi)
    with np.errstate(over="ignore", invalid="ignore"):
        E = 0.5 * simpson(wt * (ux + eta) ** 2, dx=state.dx)
        Et = simpson(wt * (0.5 * ux**2 - c * N + 0.5 * eta**2), dx=state.dx)
    E, Et = float(E), float(Et)
    if not (np.isfinite(E) and np.isfinite(Et)):
        divergent = True
    return EnergyEquivalence(E, Et, abs(E - Et), divergent)


# weighted Hopf-Cole -----------------------------------------------------------

def hopf_cole_exponent(state, model: NonlinearityModel, speed: float | None = None):
    """Gamma(x) = lam (xi + sqrt(chi) int_x^inf alpha(u)), xi = x - speed t."""
    if model.chi < 0:
        raise ValueError("chi must be nonnegative")
    lam = model.lam
    c = 2.0 * lam if speed is None else speed
    a = model.alpha(state.u)
    rev = cumulative_trapezoid(a[::-1], dx=state.dx, initial=0.0)[::-1]
    tail = model.alpha_prime_0 * state.u[-2]
    integral = rev + tail
    return lam * ((state.x - c * state.t) + math.sqrt(model.chi) * integral)


@dataclass
class HopfColeResult:
    x: np.ndarray
    gamma: np.ndarray
    log_v: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))


def hopf_cole(prev, cur, nxt, model: NonlinearityModel, speed: float | None = None) -> HopfColeResult:
    """v = e^Gamma u and the scaled residual e^{-Gamma}(v_t - v_xx) at ``cur``.

    Times are centred differences over the three snapshots in the moving
    frame; all exponentials enter as differences of Gamma so nothing overflows.
    """
    c = 2.0 * model.lam if speed is None else speed
    g = {id(s): hopf_cole_exponent(s, model, c) for s in (prev, cur, nxt)}
    sp, sc = _common(prev, cur)
    sn, sc2 = _common(nxt, cur)
    lo = max(sc.start, sc2.start)
    hi = min(sc.stop, sc2.stop)
    ip = slice(sp.start + lo - sc.start, sp.start + hi - sc.start)
    inn = slice(sn.start + lo - sc2.start, sn.start + hi - sc2.start)
    gc = g[id(cur)][lo:hi]
    uc = cur.u[lo:hi]
    W_prev = np.exp(g[id(prev)][ip] - gc) * prev.u[ip]
    W_next = np.exp(g[id(nxt)][inn] - gc) * nxt.u[inn]
    # lab-frame time derivative of V = e^Gamma u, scaled by e^{-Gamma}
    Vt = (W_next - W_prev) / (nxt.t - prev.t)
    dx = cur.dx
    ep = np.exp(gc[2:] - gc[1:-1]) * uc[2:]
    em = np.exp(gc[:-2] - gc[1:-1]) * uc[:-2]
    Vx = (ep - em) / (2 * dx)
    Vxx = (ep - 2 * uc[1:-1] + em) / dx**2
    # moving-frame derivative at fixed xi: d_t|x + c d_x
    res = Vt[1:-1] + c * Vx - Vxx
    with np.errstate(divide="ignore"):
        logv = gc + np.log(uc)
    return HopfColeResult(cur.x[lo:hi][1:-1], gc[1:-1], logv[1:-1], res)


def hopf_cole_link(state, model, profile, speed=None):
    """(e^{-Gamma} v_x, -w) which agree up to stencil error."""
    gam = hopf_cole_exponent(state, model, speed)
    u = state.u
    dx = state.dx
    ep = np.exp(gam[2:] - gam[1:-1]) * u[2:]
    em = np.exp(gam[:-2] - gam[1:-1]) * u[:-2]
    vx = (ep - em) / (2 * dx)
    w = shape_defect(state, profile).w[1:-1]
    return vx, -w


def calibrate_hopf_cole(model: NonlinearityModel, dx: float, dt: float, gap_steps: int = 10,
                        t0: float = 1.0, profile=None) -> float:
    """Tolerance for hopf_cole residuals at a given (dx, dt).

    The residual vanishes identically on the chi = 1 minimal wave, so the
    model is switched to chi = 1 (same A and lambda), its wave is evolved by
    the solver, and 3x the largest |residual| is returned.
    """
    from .solver import Equation, FieldState, RunConfig, run
    from .wave import evaluate_wave, minimal_profile
    model = model.with_params(chi=1.0)
    prof = profile if profile is not None else minimal_profile(model)
    nl, nr = int(round(60 / dx)), int(round(120 / dx))
    x = dx * np.arange(-nl, nr + 1)
    u = evaluate_wave(prof, model, x)
    u[0] = 1.0
    start = FieldState(Equation.RDE, 0.0, float(x[0]), dx, u)
    n0 = int(round(t0 / dt))
    marks = tuple(k * dt for k in (n0 - gap_steps, n0, n0 + gap_steps))
    cfg = RunConfig(model, Equation.RDE, dx=dx, dt=dt, left=60, right=120, t_end=marks[-1],
                    snapshot_times=marks, trace_every=0, recenter=False)
    snaps = run(cfg, state=start).snapshots[1:]
    res = hopf_cole(*snaps, model, prof.c).residual
    return 3.0 * float(np.max(np.abs(res)))


# supersolution weight --------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


@dataclass
class SupersolutionWeight:
    u_grid: np.ndarray
    F: np.ndarray
    model: NonlinearityModel = field(repr=False)
    _reg: np.ndarray = field(repr=False, default=None)
    _k: float = 1.0

    def _h(self, v):
        m = self.model
        v = np.asarray(v, dtype=float)
        inner = (v > 0) & (v < 1)
        vi = v[inner]
        out = np.full(v.shape, (m.alpha_prime_0 - 1.0 / self._k) / m.lam)
        out[inner] = m.alpha(vi) / (m.lam * m.zeta(vi)) - 1.0 / (m.lam * self._k * (1.0 - vi))
        return out

    def _partial(self, a, b):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * np.sum(_GL_W * self._h(nodes), axis=-1)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        uc = np.clip(u, 0.0, 1.0)
        h = self.u_grid[1] - self.u_grid[0]
        k = np.minimum((uc / h).astype(int), self.u_grid.size - 2)
        reg = self._reg[k] + self._partial(self.u_grid[k], uc)
        with np.errstate(divide="ignore"):
            out = np.exp(-reg) * (1.0 - uc) ** (1.0 / (self.model.lam * self._k))
        return out


def supersolution_F(model: NonlinearityModel, n_cells: int = 2048) -> SupersolutionWeight:
    """F(u) = exp(-int_0^u alpha/eta_*) for the pushmi-pullyu profile eta_* = lam (u - A).

    The integrand behaves like 1/(alpha'(1)(1 - u)) at u = 1; that part is
    integrated exactly and the bounded remainder by Gauss-Legendre per cell.
    """
    if abs(model.chi - 1.0) > 1e-12:
        raise ValueError("the supersolution weight is defined for chi = 1 models")
    k = model.alpha_prime_1
    if not k > 0:
        raise ValueError("alpha'(1) must be positive")
    ug = np.linspace(0.0, 1.0, n_cells + 1)
    w = SupersolutionWeight(ug, np.empty(0), model, None, k)
    cells = w._partial(ug[:-1], ug[1:])
    w._reg = np.concatenate([[0.0], np.cumsum(cells)])
    w.F = w(ug)
    return w


def log_weight(weight: SupersolutionWeight, u):
    with np.errstate(divide="ignore"):
        return np.log(weight(u))


# relative entropy ------------------------------------------------------------

@dataclass
class EntropyRecord:
    t: float
    phi2: float
    dissipation: float
    y_cut: float


def _frame_y(state, speed, r=0.0):
    return state.x - (speed * state.t - r * math.log1p(state.t))


def relative_entropy(state, weight: SupersolutionWeight, speed: float = 2.0,
                     y_cut: float | None = None) -> EntropyRecord:
    """Phi2 = int p^2 / rho and int phi_x^2 rho, p = e^y u, rho = F(u), phi = p/rho.

    y = x - speed t is the moving-frame coordinate. The window is cut on the
    left where rho < 1e-8; pass ``y_cut`` to share one cut between snapshots.
    """
    y = _frame_y(state, speed)
    u = state.u
    rho = weight(u)
    keep = rho >= RHO_CUT
    if not keep.any():
        raise ValueError("weight underflows across the whole window")
    if y_cut is None:
        y_cut = float(y[np.argmax(keep)])
    sel = y >= y_cut - 1e-9 * state.dx
    sel[-1] = False  # Dirichlet node
    if sel.sum() < 3:
        raise ValueError("cut leaves fewer than 3 nodes")
    y, u, rho = y[sel], u[sel], rho[sel]
    with np.errstate(divide="ignore"):
        logphi = y + np.log(u) - np.log(rho)
    phi = np.exp(logphi)
    phi2 = float(trapezoid(phi * phi * rho, dx=state.dx))
    phix = _lab_dx(phi, state.dx)
    diss = float(trapezoid(phix * phix * rho, dx=state.dx))
    return EntropyRecord(state.t, phi2, diss, y_cut)


def entropy_decrement(s0, s1, weight, speed: float = 2.0):
    """(dPhi2/dt, -2 int phi_x^2 rho averaged over both ends) on a common cut."""
    a = relative_entropy(s0, weight, speed)
    b = relative_entropy(s1, weight, speed)
    cut = max(a.y_cut, b.y_cut)
    a = relative_entropy(s0, weight, speed, cut)
    b = relative_entropy(s1, weight, speed, cut)
    rate = (b.phi2 - a.phi2) / (s1.t - s0.t)
    return rate, -(a.dissipation + b.dissipation)


def nash_weight_condition(state, weight: SupersolutionWeight) -> float:
    """max over nodes of rhobar2 / (max(1, rhobar^2) rho) on the cut window."""
    rho = weight(state.u)
    keep = rho >= RHO_CUT
    if not keep.any():
        raise ValueError("weight underflows across the whole window")
    rho = rho[int(np.argmax(keep)):]
    rb = cumulative_trapezoid(rho, dx=state.dx, initial=0.0)
    rbb = cumulative_trapezoid(rb, dx=state.dx, initial=0.0)
    ratio = rbb / (np.maximum(1.0, rb**2) * rho)
    return float(np.max(ratio))


# exponential moment and tail monitors ---------------------------------------

@dataclass
class MomentRecord:
    t: float
    I: float
    truncated: bool


def exponential_moment(state, speed: float = 2.0, r: float = 0.5) -> MomentRecord:
    """I(t) = int e^x u~ dx in the frame speed t - r log(t + 1)."""
    y = _frame_y(state, speed, r)
    I, vals = _log_weighted_trapz(y, state.u, state.dx)
    edge = float(vals[-2])
    truncated = I > 0 and edge > 1e-12 * I
    if truncated:
        warnings.warn(f"exponential moment truncated at the right edge (t={state.t})")
    return MomentRecord(state.t, I, truncated)


def w_tail_monitor(sdf: ShapeDefectField, t: float, m: float, equation: str = "RCL") -> float:
    """sup over x > 1 of w(t, x + m) divided by the decay envelope."""
    if t < 1:
        raise ValueError("the tail envelopes apply for t >= 1")
    x = sdf.x - m
    sel = (x > 1.0)
    x, w = x[sel], sdf.w[sel]
    lt = math.log(t)
    if str(equation).upper().endswith("RCL"):
        log_env = np.log(x) - x - x * x / (5 * t) - lt
    else:
        log_env = np.log(x + 1 + lt) - x - (x + lt) ** 2 / (5 * t) - lt
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(w > 0, np.exp(np.log(np.abs(w)) - log_env), 0.0)
    return float(np.max(ratio)) if ratio.size else 0.0


# ledger ---------------------------------------------------------------------------

@dataclass
class DiagnosticLedger:
    rows: list = field(default_factory=list)

    def add(self, t, name, value, tolerance, passed):
        self.rows.append((float(t), str(name), float(value), float(tolerance), bool(passed)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "name", "value", "tolerance", "pass"])
            for t, n, v, tol, ok in self.rows:
                wr.writerow([f"{t:.17g}", n, f"{v:.17g}", f"{tol:.17g}", "pass" if ok else "fail"])
