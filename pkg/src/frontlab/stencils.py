"""Finite-difference stencils shared by the solver, waves and diagnostics."""

import numpy as np


def d1_central(u, dx):
    """Second-order first derivative; one-sided second-order at the ends."""
    return np.gradient(u, dx, edge_order=2)


def d1_upwind(u, dx):
    """Backward difference (u_i - u_{i-1})/dx; the first node copies its neighbour."""
    out = np.empty_like(u)
    out[1:] = (u[1:] - u[:-1]) / dx
    out[0] = out[1]
    return out


def d2_central(u, dx):
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (dx * dx)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


# fourth-order tables: central, then one-sided for the two nodes at each end
_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_F1 = np.array([[-25.0, 48.0, -36.0, 16.0, -3.0],
                [-3.0, -10.0, 18.0, -6.0, 1.0]]) / 12.0
_F2 = np.array([[45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
                [10.0, -15.0, -4.0, 14.0, -6.0, 1.0]]) / 12.0


def d1_4th(u, h):
    u = np.asarray(u, dtype=float)
    n = u.size
    if n < 5:
        raise ValueError("need at least 5 samples")
    out = np.empty(n)
    out[2:-2] = (_C1[0] * u[:-4] + _C1[1] * u[1:-3] + _C1[3] * u[3:-1] + _C1[4] * u[4:])
    out[0] = _F1[0] @ u[:5]
    out[1] = _F1[1] @ u[:5]
    out[-1] = -(_F1[0] @ u[::-1][:5])
    out[-2] = -(_F1[1] @ u[::-1][:5])
    return out / h


def d2_4th(u, h):
    u = np.asarray(u, dtype=float)
    n = u.size
    if n < 6:
        raise ValueError("need at least 6 samples")
    out = np.empty(n)
    out[2:-2] = (_C2[0] * u[:-4] + _C2[1] * u[1:-3] + _C2[2] * u[2:-2]
                 + _C2[3] * u[3:-1] + _C2[4] * u[4:])
    out[0] = _F2[0] @ u[:6]
    out[1] = _F2[1] @ u[:6]
    out[-1] = _F2[0] @ u[::-1][:6]
    out[-2] = _F2[1] @ u[::-1][:6]
    return out / (h * h)


def d1_order(u, dx, order: int = 2):
    """Central first derivative of the given even order (2, 4 or 6).

    Nodes too close to the ends for the wide stencils fall back to the
    second-order rule, and the two end nodes use first-order one-sided
    differences.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    out[0] = (u[1] - u[0]) / dx
    out[-1] = (u[-1] - u[-2]) / dx
    if order == 2:
        return out
    if order == 4:
        out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * dx)
        return out
    if order == 6:
        out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * dx)
        out[3:-3] = (-u[:-6] + 9 * u[1:-5] - 45 * u[2:-4] + 45 * u[4:-2]
                     - 9 * u[5:-1] + u[6:]) / (60 * dx)
        return out
    raise ValueError("order must be 2, 4 or 6")
