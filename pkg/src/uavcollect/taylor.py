"""First-order lower bounds used to convexify the AO subproblems.

Every function here returns a global under-estimator of a convex term (or,
for the rate terms, of a function convex in the linearized argument) that
is exact at the expansion point.  The subproblem builders evaluate the same
formulas to get their affine coefficients.
"""
import numpy as np

from .model import LOG2E


def square_lb(x, x0):
    """x**2 >= x0**2 + 2 x0 (x - x0)."""
    return x0**2 + 2 * x0 * (x - x0)


def rate_over_distance(dist2, gp, h2):
    return np.log2(1 + gp / (dist2 + h2))


def rate_distance_slope(dist2_0, gp, h2):
    """Magnitude of d/d(dist2) of log2(1 + gp / (dist2 + h2)) at dist2_0."""
    d0 = dist2_0 + h2
    return LOG2E * gp / (d0 * (d0 + gp))


def rate_over_distance_lb(dist2, dist2_0, gp, h2):
    """Tangent of the rate (convex in squared horizontal distance) at dist2_0."""
    return rate_over_distance(dist2_0, gp, h2) - rate_distance_slope(dist2_0, gp, h2) * (dist2 - dist2_0)


def induced_slack_rhs(omega, du, v0):
    """omega**2 + ||du||**2 / v0**2, the convex side of the induced-power slack."""
    du = np.asarray(du, dtype=float)
    return omega**2 + np.sum(du * du, axis=-1) / v0**2


def induced_slack_rhs_lb(omega, du, omega0, du0, v0):
    du = np.asarray(du, dtype=float)
    du0 = np.asarray(du0, dtype=float)
    return (
        square_lb(omega, omega0)
        - np.sum(du0 * du0, axis=-1) / v0**2
        + 2.0 / v0**2 * np.sum(du0 * du, axis=-1)
    )


def ratio_sq_lb(eps, tau, eps0, tau0):
    """eps**2 / tau >= tangent plane at (eps0, tau0)."""
    return eps0**2 / tau0 + 2 * eps0 / tau0 * (eps - eps0) - eps0**2 / tau0**2 * (tau - tau0)


def inv_product_rate(s, i):
    """log2(1 + 1 / (s i)); jointly convex for s, i > 0."""
    return np.log2(1 + 1 / (s * i))


def inv_product_rate_grad(s0, i0):
    """Partial derivatives (d/ds, d/di) of ``inv_product_rate`` at (s0, i0); both negative."""
    return -LOG2E / (s0 + s0**2 * i0), -LOG2E / (i0 + i0**2 * s0)


def inv_product_rate_lb(s, i, s0, i0):
    gs, gi = inv_product_rate_grad(s0, i0)
    return inv_product_rate(s0, i0) + gs * (s - s0) + gi * (i - i0)


def interference_rate_lb(i, i0, s):
    """Tangent in the interference term only, signal term held fixed."""
    return inv_product_rate(s, i0) - LOG2E * (i - i0) / (i0 + s * i0**2)


def dist_sq_lb(u, u0, w):
    u, u0, w = (np.asarray(a, dtype=float) for a in (u, u0, w))
    g = u0 - w
    return np.sum(g * g, axis=-1) + 2 * np.sum(g * (u - u0), axis=-1)
