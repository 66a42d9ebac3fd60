"""Monostable nonlinearities of the form f(u) = lam^2 (u - A(u)) (1 + chi A'(u)).

A model is the pair (A, chi) together with the linear growth rate lam^2 = f'(0).
A is supplied with analytic first and second derivatives. Polynomial models also
carry their coefficients so that compiled kernels can evaluate them directly.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

ENDPOINT_TOL = 1e-10
GRID_TOL = 1e-8
PUSHMI_TOL = 1e-12


class Regime(str, enum.Enum):
    FKPP = "FKPP"
    SEMI_FKPP = "SemiFKPP"
    PUSHMI_PULLYU = "PushmiPullyu"
    PUSHED = "Pushed"


@dataclass(frozen=True)
class NonlinearityModel:
    """Immutable description of f through A, chi and lam.

    ``poly`` holds the coefficients of A in increasing powers when A is a
    polynomial (``None`` otherwise). ``spec`` is the JSON-ready description
    used for round-tripping through configuration files.
    """

    A: ArrayFn
    dA: ArrayFn
    d2A: ArrayFn
    chi: float
    lam: float = 1.0
    poly: tuple[float, ...] | None = None
    spec: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.chi >= 0 and math.isfinite(self.chi)):
            raise ValueError(f"chi must be a finite nonnegative number, got {self.chi}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")

    # f and its derivative -------------------------------------------------
    def f(self, u):
        u = np.asarray(u, dtype=float)
        return self.lam**2 * (u - self.A(u)) * (1.0 + self.chi * self.dA(u))

    def df(self, u):
        u = np.asarray(u, dtype=float)
        a1 = self.dA(u)
        return self.lam**2 * ((1.0 - a1) * (1.0 + self.chi * a1)
                              + (u - self.A(u)) * self.chi * self.d2A(u))

    def zeta(self, u):
        u = np.asarray(u, dtype=float)
        return u - self.A(u)

    def alpha(self, u):
        """A(u)/u, continued by 0 at u = 0."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        nz = u != 0
        out[nz] = self.A(u[nz]) / u[nz]
        return out

    def dalpha(self, u):
        u = np.asarray(u, dtype=float)
        out = np.full_like(u, 0.5 * float(self.d2A(np.array([0.0]))[0]))
        nz = u != 0
        un = u[nz]
        out[nz] = (self.dA(un) * un - self.A(un)) / un**2
        return out

    @property
    def alpha_prime_0(self) -> float:
        return 0.5 * float(self.d2A(np.array([0.0]))[0])

    @property
    def alpha_prime_1(self) -> float:
        return float(self.dA(np.array([1.0]))[0]) - 1.0

    @property
    def f_prime_1(self) -> float:
        return float(self.df(np.array([1.0]))[0])

    def with_params(self, *, chi: float | None = None, lam: float | None = None) -> "NonlinearityModel":
        chi = self.chi if chi is None else chi
        lam = self.lam if lam is None else lam
        spec = None
        if self.spec is not None:
            spec = dict(self.spec, chi=chi, **{"lambda": lam})
        return NonlinearityModel(self.A, self.dA, self.d2A, chi, lam, self.poly, spec)

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ValueError("model was built from callables and has no serializable form")
        return dict(self.spec)


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    chi_fkpp: float
    minimal_speed_prediction: float


@dataclass(frozen=True)
class Violation:
    invariant: str
    u: float
    value: float


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def names(self) -> set[str]:
        return {v.invariant for v in self.violations}


# construction -------------------------------------------------------------

def _poly_funcs(coeffs: Sequence[float]):
    c = np.asarray(coeffs, dtype=float)
    p = np.polynomial.Polynomial(c)
    p1, p2 = p.deriv(1), p.deriv(2)

    def A(u):
        return p(np.asarray(u, dtype=float))

    def dA(u):
        return p1(np.asarray(u, dtype=float))

    def d2A(u):
        return p2(np.asarray(u, dtype=float))

    return A, dA, d2A


def from_polynomial(coeffs: Sequence[float], chi: float, lam: float = 1.0,
                    spec: dict | None = None) -> NonlinearityModel:
    """Model with A(u) = sum_i coeffs[i] u^i."""
    coeffs = tuple(float(c) for c in coeffs)
    A, dA, d2A = _poly_funcs(coeffs)
    if spec is None:
        spec = {"family": "custom-poly", "coeffs": list(coeffs), "chi": chi, "lambda": lam}
    return NonlinearityModel(A, dA, d2A, float(chi), float(lam), coeffs, spec)


def build_power_family(n: int, chi: float, lam: float = 1.0) -> NonlinearityModel:
    """A(u) = u^n."""
    if int(n) != n or n < 2:
        raise ValueError(f"power family needs an integer n >= 2, got {n}")
    n = int(n)
    coeffs = [0.0] * n + [1.0]
    spec = {"family": "power", "n": n, "chi": chi, "lambda": lam}
    return from_polynomial(coeffs, chi, lam, spec)


def build_voting_family(coeffs, lam: float = 1.0, chi: float = 0.0) -> NonlinearityModel:
    """A(u) = sum_k a_k u^k with a_k >= 0, k >= 2 and sum a_k = 1."""
    pairs = [(int(k), float(a)) for k, a in (coeffs.items() if isinstance(coeffs, dict) else coeffs)]
    if not pairs:
        raise ValueError("empty coefficient list")
    for k, a in pairs:
        if k < 2:
            raise ValueError(f"voting family powers must be >= 2, got {k}")
        if a < 0:
            raise ValueError(f"negative coefficient a_{k} = {a}")
    total = math.fsum(a for _, a in pairs)
    if abs(total - 1.0) > 1e-12:
        raise ValueError(f"coefficients must sum to 1, got {total!r}")
    kmax = max(k for k, _ in pairs)
    poly = [0.0] * (kmax + 1)
    for k, a in pairs:
        poly[k] += a
    spec = {"family": "voting", "coeffs": [[k, a] for k, a in pairs], "chi": chi, "lambda": lam}
    return from_polynomial(poly, chi, lam, spec)


def from_dict(d: dict) -> NonlinearityModel:
    """Inverse of ``NonlinearityModel.to_dict``."""
    try:
        fam = d["family"]
        chi = float(d.get("chi", 0.0))
        lam = float(d.get("lambda", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad model description: {d!r}") from exc
    if fam == "power":
        return build_power_family(int(d["n"]), chi, lam)
    if fam == "voting":
        return build_voting_family([tuple(p) for p in d["coeffs"]], lam, chi)
    if fam == "custom-poly":
        return from_polynomial(d["coeffs"], chi, lam)
    raise ValueError(f"unknown model family {fam!r}")


def dumps(model: NonlinearityModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def loads(text: str) -> NonlinearityModel:
    return from_dict(json.loads(text))


# checks -------------------------------------------------------------------

def _check_tabulated(u, A, report: ValidationReport, dA=None, d2A=None):
    """Shared monotone/convex checks for A and alpha sampled on u."""
    if abs(A[0]) > ENDPOINT_TOL:
        report.violations.append(Violation("A(0)=0", float(u[0]), float(A[0])))
    if abs(A[-1] - 1.0) > ENDPOINT_TOL:
        report.violations.append(Violation("A(1)=1", float(u[-1]), float(A[-1])))
    h = np.diff(u)
    analytic = dA is not None
    if dA is None:
        dA = np.gradient(A, u, edge_order=2)
    if d2A is None:
        slopes = np.diff(A) / h
        d2 = np.diff(slopes) / (0.5 * (h[1:] + h[:-1]))
        d2A = np.concatenate([[d2[0]], d2, [d2[-1]]])
        conv_tol = GRID_TOL + 1e-6 * np.max(np.abs(d2))
    else:
        conv_tol = GRID_TOL
    if abs(dA[0]) > (ENDPOINT_TOL if analytic else 1e-6):
        report.violations.append(Violation("A'(0)=0", float(u[0]), float(dA[0])))
    for i in np.flatnonzero(dA < -GRID_TOL):
        report.violations.append(Violation("A' >= 0", float(u[i]), float(dA[i])))
    for i in np.flatnonzero(d2A < -conv_tol):
        report.violations.append(Violation("A'' >= 0", float(u[i]), float(d2A[i])))
    alpha = np.zeros_like(A)
    alpha[1:] = A[1:] / u[1:]
    da = np.diff(alpha)
    for i in np.flatnonzero(da < -GRID_TOL):
        report.violations.append(Violation("alpha increasing", float(u[i]), float(da[i])))
    # second differences of alpha on the uniform grid
    dda = np.diff(alpha, 2)
    for i in np.flatnonzero(dda < -GRID_TOL * max(1.0, float(np.max(np.abs(dda))))):
        report.violations.append(Violation("alpha convex", float(u[i + 1]), float(dda[i])))


def validate(model: NonlinearityModel, grid_points: int = 1025) -> ValidationReport:
    """Check the structural assumptions on A and f over a uniform grid."""
    if grid_points < 64:
        raise ValueError(f"grid_points must be >= 64, got {grid_points}")
    u = np.linspace(0.0, 1.0, int(grid_points))
    report = ValidationReport()
    A = model.A(u)
    dA = model.dA(u)
    d2A = model.d2A(u)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(dA)) and np.all(np.isfinite(d2A))):
        report.violations.append(Violation("finite", float("nan"), float("nan")))
        return report
    _check_tabulated(u, A, report, dA, d2A)
    f = model.f(u)
    if abs(f[0]) > ENDPOINT_TOL:
        report.violations.append(Violation("f(0)=0", 0.0, float(f[0])))
    if abs(f[-1]) > ENDPOINT_TOL:
        report.violations.append(Violation("f(1)=0", 1.0, float(f[-1])))
    for i in np.flatnonzero(f[1:-1] <= 0) + 1:
        report.violations.append(Violation("f > 0", float(u[i]), float(f[i])))
    df0 = float(model.df(np.array([0.0]))[0])
    if abs(df0 - model.lam**2) > ENDPOINT_TOL * max(1.0, model.lam**2):
        report.violations.append(Violation("f'(0)=lambda^2", 0.0, df0))
    return report


def evaluate_f(model: NonlinearityModel, u):
    """f(u); raises if any u lies outside [0, 1]."""
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("u must lie in [0, 1]")
    out = model.f(arr)
    return float(out) if np.ndim(u) == 0 else out


def evaluate_df(model: NonlinearityModel, u):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("u must lie in [0, 1]")
    out = model.df(arr)
    return float(out) if np.ndim(u) == 0 else out


def _fkpp_ratio(model, u):
    u = np.asarray(u, dtype=float)
    A = model.A(u)
    return A / (model.dA(u) * (u - A))


def chi_fkpp(model: NonlinearityModel) -> float:
    """Infimum over (0,1) of A / (A' (u - A))."""
    a2 = float(model.d2A(np.array([0.0]))[0])
    # interior: uniform plus log-clustered near both ends
    uni = np.linspace(0.0, 1.0, 20001)[1:-1]
    lo = np.logspace(-8, -1, 2000)
    hi = 1.0 - np.logspace(-8, -1, 2000)
    grid = np.concatenate([uni, lo, hi])
    with np.errstate(divide="ignore", invalid="ignore"):
        r = _fkpp_ratio(model, grid)
    r = r[np.isfinite(r)]
    best = float(np.min(r)) if r.size else math.inf
    if a2 > 0:
        # A ~ a2 u^2/2 near 0 gives the limit 1/2; the u -> 1 side diverges
        best = min(best, 0.5)
    else:
        # degenerate at 0: Richardson extrapolation of v(u) = v0 + k u^p
        with np.errstate(divide="ignore", invalid="ignore"):
            v1, v2, v3 = _fkpp_ratio(model, np.array([1e-3, 1e-4, 1e-5]))
        d12, d23 = v1 - v2, v2 - v3
        if np.all(np.isfinite([v1, v2, v3])) and d23 != 0 and d12 / d23 > 1.0:
            best = min(best, float(v3 - d23 / (d12 / d23 - 1.0)))
    return best


def predicted_speed(chi: float, lam: float) -> float:
    if chi <= 1.0:
        return 2.0 * lam
    return lam * (1.0 / math.sqrt(chi) + math.sqrt(chi))


def classify(model: NonlinearityModel) -> RegimeClassification:
    cf = chi_fkpp(model)
    chi = model.chi
    if abs(chi - 1.0) <= PUSHMI_TOL:
        regime = Regime.PUSHMI_PULLYU
    elif chi > 1.0:
        regime = Regime.PUSHED
    elif chi <= cf:
        regime = Regime.FKPP
    else:
        regime = Regime.SEMI_FKPP
    speed = 2.0 * model.lam if regime is Regime.PUSHMI_PULLYU else predicted_speed(chi, model.lam)
    return RegimeClassification(regime, cf, speed)


@dataclass
class Decomposition:
    chi: float
    u: np.ndarray
    A: np.ndarray
    report: ValidationReport


def recover_decomposition(eta_star, c_star: float, lam: float = 1.0) -> Decomposition:
    """Invert the pushed-wave construction.

    ``eta_star`` is a WaveProfile (anything with ``u_grid`` and ``eta``) or a
    pair of arrays ``(u, eta)``. chi is the larger root of
    c/lam = 1/sqrt(chi) + sqrt(chi) and A = u - eta / (lam sqrt(chi)).
    """
    if c_star < 2.0 * lam * (1.0 - 1e-14):
        raise ValueError(f"c_star={c_star} is below 2*lambda={2 * lam}")
    if hasattr(eta_star, "u_grid"):
        u = np.asarray(eta_star.u_grid, dtype=float)
        eta = np.asarray(eta_star.eta, dtype=float)
    else:
        u, eta = (np.asarray(a, dtype=float) for a in eta_star)
    if np.any(eta[1:-1] <= 0):
        raise ValueError("eta_star must be positive on (0, 1)")
    k = c_star / lam
    s = 0.5 * (k + math.sqrt(max(k * k - 4.0, 0.0)))
    chi = s * s
    A = u - eta / (lam * s)
    report = ValidationReport()
    _check_tabulated(u, A, report)
    return Decomposition(chi, u, A, report)
