"""Traveling-wave profiles eta_c(u), minimal speeds, wave shapes and tail fits.

A wave U with -U' = eta(U) turns U'' + cU' + f(U) = 0 into the first-order
problem eta (c - eta') = f. Profiles are obtained by shooting from the saddle
at u = 1 down to u = 0; near u = 0 the unknown q = eta/u is integrated in
s = log u, where its limits are the roots of q^2 - c q + lam^2 = 0.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .nonlinearity import NonlinearityModel, Regime, classify
from .stencils import d1_4th, d2_4th

EPS_START = 1e-6
U_FLOOR = 1e-9
U_SWITCH = 1e-2
RTOL = 1e-12
ATOL = 1e-15
# bisection floor in s = log u: near the pushed threshold the two indicial
# roots nearly coincide and eta/u drifts away from the wrong one only slowly
S_DEEP = -200.0


class DecayClass(str, enum.Enum):
    PURE_EXPONENTIAL = "PureExponential"
    LINEAR_PREFACTOR = "LinearPrefactor"


@dataclass
class ConnectionFailure:
    """Shooting did not reach u = 0 along an admissible direction.

    ``u_hit`` is the largest u at which eta >= c u was observed; from there on
    eta/u can no longer approach a root of the indicial equation.
    """

    c: float
    u_hit: float
    reason: str

    def __bool__(self):
        return False


@dataclass
class WaveProfile:
    u_grid: np.ndarray
    eta: np.ndarray
    c: float
    eta_prime_0: float
    eta_prime_1: float
    # finer table (log-clustered at both ends) used for interpolation
    u_fine: np.ndarray = field(repr=False, default=None)
    eta_fine: np.ndarray = field(repr=False, default=None)
    q_floor: float = float("nan")

    def __post_init__(self):
        if self.u_fine is None:
            self.u_fine = np.asarray(self.u_grid, dtype=float)
            self.eta_fine = np.asarray(self.eta, dtype=float)
        self._ratio = None

    def _ratio_interp(self):
        if self._ratio is None:
            u = self.u_fine
            inner = (u > 0) & (u < 1)
            uu = np.concatenate([[0.0], u[inner], [1.0]])
            rr = np.concatenate([[self.eta_prime_0],
                                 self.eta_fine[inner] / (u[inner] * (1 - u[inner])),
                                 [-self.eta_prime_1]])
            self._ratio = PchipInterpolator(uu, rr, extrapolate=False)
        return self._ratio

    def ratio(self, u):
        """r(u) = eta(u) / (u (1 - u)), smooth and positive on [0, 1]."""
        return self._ratio_interp()(np.clip(u, 0.0, 1.0))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.ratio(u) * u * (1.0 - u)

    def residual(self, model: NonlinearityModel) -> np.ndarray:
        """eta (c - eta') - f on the uniform grid, eta' by fourth-order differences."""
        h = self.u_grid[1] - self.u_grid[0]
        deta = d1_4th(self.eta, h)
        return self.eta * (self.c - deta) - model.f(self.u_grid)


@dataclass
class TravelingWave:
    x_grid: np.ndarray
    U: np.ndarray
    c: float
    lambda_c: float
    D: float = float("nan")
    B: float = float("nan")
    profile: WaveProfile | None = field(default=None, repr=False)

    @property
    def dx(self):
        return float(self.x_grid[1] - self.x_grid[0])

    def residuals(self, model: NonlinearityModel):
        """(second-order residual, first-order residual) on interior nodes."""
        h = self.dx
        U1 = d1_4th(self.U, h)
        U2 = d2_4th(self.U, h)
        r2 = U2 + self.c * U1 + model.f(np.clip(self.U, 0, 1))
        r1 = -U1 - self.profile(self.U)
        return r2[3:-3], r1[3:-3]


@dataclass
class DecayFit:
    lambda_c: float
    D: float
    B: float
    classification: DecayClass
    noise_floor: float
    window: tuple


# shooting -------------------------------------------------------------------

def _roots(c, lam):
    disc = c * c - 4 * lam * lam
    if disc < 0:
        return ()
    sq = math.sqrt(disc)
    return (0.5 * (c - sq), 0.5 * (c + sq))


def _slope_at_one(model, c):
    fp1 = model.f_prime_1
    return 0.5 * (c - math.sqrt(c * c - 4.0 * fp1))


def _shoot(model, c, s_floor, check_root=True):
    """Integrate eta from u = 1 to u = exp(s_floor); a failure or the pieces."""
    lam = model.lam
    f = model.f
    e1 = _slope_at_one(model, c)          # negative slope at u = 1
    u0 = 1.0 - EPS_START
    eta0 = -e1 * EPS_START

    def rhs_u(u, y):
        return [c - float(f(u)) / y[0]]

    def cert_u(u, y):
        return y[0] - c * u
    cert_u.terminal = True
    cert_u.direction = 1

    with np.errstate(all="raise"):
        try:
            s1 = solve_ivp(rhs_u, (u0, U_SWITCH), [eta0], method="DOP853", rtol=RTOL,
                           atol=ATOL, events=cert_u, dense_output=True)
        except FloatingPointError as exc:
            raise ArithmeticError(f"non-finite f evaluation while shooting at c={c}") from exc
    if s1.status == -1:
        raise ArithmeticError(f"profile integration failed at c={c}: {s1.message}")
    if s1.status == 1:
        return ConnectionFailure(c, float(s1.t_events[0][0]), "eta reached c*u")

    fu_over_u = lambda u: float(f(u)) / u  # noqa: E731

    def rhs_s(s, y):
        u = math.exp(s)
        return [c - y[0] - fu_over_u(u) / y[0]]

    def cert_s(s, y):
        return y[0] - c
    cert_s.terminal = True
    cert_s.direction = 1

    q_sw = float(s1.y[0, -1]) / U_SWITCH
    s2 = solve_ivp(rhs_s, (math.log(U_SWITCH), s_floor), [q_sw], method="DOP853", rtol=RTOL,
                   atol=1e-13, events=cert_s, dense_output=True)
    if s2.status == -1:
        raise ArithmeticError(f"profile integration failed at c={c}: {s2.message}")
    if s2.status == 1:
        return ConnectionFailure(c, math.exp(float(s2.t_events[0][0])), "eta reached c*u")
    q_floor = float(s2.y[0, -1])
    roots = _roots(c, lam)
    if check_root and not any(0.9 * r <= q_floor <= 1.1 * r for r in roots):
        return ConnectionFailure(c, math.exp(s_floor), f"eta/u={q_floor:.6g} at the floor matches no root")
    return e1, u0, s1, s2, q_floor, roots


def solve_profile_ode(model: NonlinearityModel, c: float, *, n_grid: int = 8193,
                      root: str = "auto") -> WaveProfile | ConnectionFailure:
    """Shoot the profile ODE from u = 1 - 1e-6 down to u = 1e-9.

    ``root`` selects which indicial root is reported as eta'(0): "minus",
    "plus" or "auto" (the root closest to eta/u at the floor).
    """
    if not c > 0:
        raise ValueError("c must be positive")
    if n_grid < 4097:
        raise ValueError("profiles use at least 4097 grid points")
    shot = _shoot(model, c, math.log(U_FLOOR))
    if isinstance(shot, ConnectionFailure):
        return shot
    e1, u0, s1, s2, q_floor, roots = shot

    if root == "minus":
        lam_c = roots[0]
    elif root == "plus":
        lam_c = roots[1]
    else:
        lam_c = min(roots, key=lambda r: abs(r - q_floor))

    def eta_at(u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        top = u >= u0
        out[top] = -e1 * (1.0 - u[top])
        mid = (u >= U_SWITCH) & ~top
        out[mid] = s1.sol(u[mid])[0]
        low = (u >= U_FLOOR) & (u < U_SWITCH)
        out[low] = u[low] * s2.sol(np.log(u[low]))[0]
        tiny = (u > 0) & (u < U_FLOOR)
        out[tiny] = q_floor * u[tiny]
        out[u >= 1.0] = 0.0
        return out

    ug = np.linspace(0.0, 1.0, n_grid)
    eta = eta_at(ug)
    eta[0] = 0.0
    eta[-1] = 0.0
    ends = np.logspace(math.log10(U_FLOOR), math.log10(2 * U_SWITCH), 600)
    near1 = 1.0 - np.logspace(math.log10(EPS_START) - 1, -2, 300)
    uf = np.unique(np.concatenate([ug, ends, near1]))
    return WaveProfile(ug, eta, float(c), float(lam_c), float(e1), uf, eta_at(uf), q_floor)


def connects(model: NonlinearityModel, c: float, u_floor: float = U_FLOOR) -> bool:
    return not isinstance(_shoot(model, c, math.log(u_floor)), ConnectionFailure)


def minimal_speed(model: NonlinearityModel, tol: float = 1e-6, c_max: float | None = None) -> float:
    """Smallest c for which the shooting connects, by bisection.

    Every monostable f has c_* >= 2 lam, so the search starts there. The
    predicate shoots to u = exp(S_DEEP), far below the profile floor.
    """
    ok = lambda c: not isinstance(_shoot(model, c, S_DEEP), ConnectionFailure)  # noqa: E731
    lo = 2.0 * model.lam
    if ok(lo):
        return lo
    hi = lo * 1.25
    limit = c_max if c_max is not None else 64.0 * lo
    while not ok(hi):
        lo = hi
        hi *= 1.5
        if hi > limit:
            raise RuntimeError(f"no connecting speed found in [{2.0 * model.lam}, {limit}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _pushed_speed(model, c_hi, width=1e-5):
    """Speed at which eta/u sits exactly on the plus root at the profile floor.

    Just below c_* eta/u leaves the plus root upward, just above it drifts down
    toward the minus root, so the floor value changes sign across c_*.
    """
    s = math.log(U_FLOOR)

    def gap(c):
        shot = _shoot(model, c, s, check_root=False)
        if isinstance(shot, ConnectionFailure):
            return c
        return shot[4] - _roots(c, model.lam)[1]

    lo = c_hi - width
    while gap(lo) <= 0:
        lo -= width
    if gap(c_hi) >= 0:
        return c_hi
    return brentq(gap, lo, c_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def minimal_profile(model: NonlinearityModel, **kw) -> WaveProfile:
    """Profile at the minimal speed with the indicial root chosen by regime."""
    c = minimal_speed(model)
    pushed = classify(model).regime is Regime.PUSHED and c > 2 * model.lam + 1e-9
    if pushed:
        c = _pushed_speed(model, c)
    prof = solve_profile_ode(model, c, root="plus" if pushed else "minus", **kw)
    if not isinstance(prof, WaveProfile):
        raise RuntimeError(f"minimal-speed profile failed to connect: {prof}")
    return prof


# Hadeler-Rothe -------------------------------------------------------------

def hadeler_rothe_integrand(p, model: NonlinearityModel, u=None) -> np.ndarray:
    """p' + f/p on the grid, with L'Hopital limits where p vanishes at the ends."""
    p = np.asarray(p, dtype=float)
    if u is None:
        u = np.linspace(0.0, 1.0, p.size)
    u = np.asarray(u, dtype=float)
    if p.size < 3 or u.shape != p.shape:
        raise ValueError("p and u must be matching arrays with at least 3 nodes")
    if abs(p[0]) > 1e-14:
        raise ValueError("admissible p must vanish at u = 0")
    if np.any(p[1:-1] <= 0) or p[-1] < 0:
        raise ValueError("admissible p must be positive on (0, 1)")
    dp = np.gradient(p, u, edge_order=2)
    if dp[0] <= 0:
        raise ValueError("admissible p needs p'(0) > 0")
    fu = model.f(u)
    out = np.empty_like(p)
    out[1:-1] = dp[1:-1] + fu[1:-1] / p[1:-1]
    out[0] = dp[0] + float(model.df(np.array([u[0]]))[0]) / dp[0]
    if p[-1] > 0:
        out[-1] = dp[-1] + fu[-1] / p[-1]
    else:
        out[-1] = dp[-1] + float(model.df(np.array([u[-1]]))[0]) / dp[-1]
    return out


def hadeler_rothe_value(p, model: NonlinearityModel, u=None) -> float:
    """sup_u (p' + f/p); an upper bound for the minimal speed."""
    return float(np.max(hadeler_rothe_integrand(p, model, u)))


# wave shapes ---------------------------------------------------------------

def _alpha_inverse(model, level):
    return brentq(lambda v: float(model.alpha(np.array([v]))[0]) - level, 1e-12, 1.0,
                  xtol=1e-15, rtol=4 * np.finfo(float).eps)


def evaluate_wave(profile: WaveProfile, model: NonlinearityModel, xs) -> np.ndarray:
    """U at arbitrary sorted points, normalised by alpha(U(0)) = 1/2.

    log U is integrated to the right and log(1 - U) to the left so both tails
    keep full relative accuracy.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or np.any(np.diff(xs) < 0):
        raise ValueError("points must be a sorted 1-d array")
    U0 = _alpha_inverse(model, 0.5)
    r = profile.ratio
    out = np.empty_like(xs)

    def rhs_right(_, y):
        u = math.exp(y[0])
        return [-float(r(u)) * (1.0 - u)]

    def rhs_left(_, z):
        u = -math.expm1(z[0])
        return [float(r(u)) * u]

    pos = xs >= 0
    if pos.any():
        xr = xs[pos]
        sr = solve_ivp(rhs_right, (0.0, max(xr[-1], 1e-12)), [math.log(U0)], method="DOP853",
                       t_eval=xr, rtol=1e-12, atol=1e-12)
        if not sr.success:
            raise ArithmeticError("wave integration failed")
        out[pos] = np.exp(sr.y[0])
    if (~pos).any():
        xl = xs[~pos][::-1]
        sl = solve_ivp(rhs_left, (0.0, xl[-1]), [math.log1p(-U0)], method="DOP853",
                       t_eval=xl, rtol=1e-12, atol=1e-12)
        if not sl.success:
            raise ArithmeticError("wave integration failed")
        out[~pos] = -np.expm1(sl.y[0][::-1])
    return out


def integrate_wave(profile: WaveProfile, model: NonlinearityModel,
                   x_extent=(30.0, 40.0), dx: float = 0.05) -> TravelingWave:
    """Solve -U' = eta(U) with alpha(U(0)) = 1/2 on [-left, right]."""
    left, right = (float(v) for v in x_extent)
    if left <= 0 or right <= 0 or dx <= 0:
        raise ValueError("extents and dx must be positive")
    nl = int(round(left / dx))
    nr = int(round(right / dx))
    x = dx * np.arange(-nl, nr + 1)
    U = evaluate_wave(profile, model, x)
    if U[-1] >= 1e-8:
        raise ValueError(f"right extent {right} too small: U={U[-1]:.3g} at the edge")
    wave = TravelingWave(x, U, profile.c, profile.eta_prime_0, profile=profile)
    if U[-1] < 1e-7:
        try:
            fit = decay_asymptotics(wave)
            wave.D, wave.B = fit.D, fit.B
        except ValueError:
            pass
    return wave


def _ols(x, y):
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(x.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return coef, np.sqrt(np.diag(cov))


def decay_asymptotics(wave: TravelingWave, lambda_c: float | None = None) -> DecayFit:
    """Fit e^{lambda_c x} U = D x + B on the far field.

    The noise floor is the larger of the OLS standard error of D and the
    spread between slopes fitted on the two halves of the window, which
    catches systematic curvature that the OLS error alone misses.
    """
    lam = wave.lambda_c if lambda_c is None else lambda_c
    x, U = wave.x_grid, wave.U
    if U[-1] > 1e-8:
        raise ValueError("tail not resolved to U < 1e-8")
    # start deep enough that the O(U^2) correction to the linear tail is negligible
    x_lo = x[int(np.argmax(U < 1e-4))]
    x_hi = x[int(np.argmax(U < 1e-8))]
    sel = (x >= x_lo) & (x <= x_hi)
    if sel.sum() < 20:
        raise ValueError("tail window too short for a stable fit")
    xs, ys = x[sel], np.exp(lam * x[sel]) * U[sel]
    (B, D), se = _ols(xs, ys)
    h = xs.size // 2
    (_, d1), _ = _ols(xs[:h], ys[:h])
    (_, d2), _ = _ols(xs[h:], ys[h:])
    noise = max(float(se[1]), abs(d1 - d2))
    cls = DecayClass.PURE_EXPONENTIAL if abs(D) < 10.0 * noise else DecayClass.LINEAR_PREFACTOR
    return DecayFit(float(lam), float(D), float(B), cls, noise, (float(x_lo), float(x_hi)))


@dataclass
class BoundsReport:
    lower_violation: float
    upper_violation: float
    passed: bool


def profile_bounds_check(profile: WaveProfile, model: NonlinearityModel,
                         slack: float = 1e-8) -> BoundsReport:
    """Check lam sqrt(chi) (u - A) <= eta <= lam (u - A) at every node."""
    if not 0.0 <= model.chi <= 1.0:
        raise ValueError("the sandwich applies to 0 <= chi <= 1")
    z = model.lam * model.zeta(profile.u_grid)
    lower = float(np.max(math.sqrt(model.chi) * z - profile.eta))
    upper = float(np.max(profile.eta - z))
    return BoundsReport(lower, upper, lower <= slack and upper <= slack)
