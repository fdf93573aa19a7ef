"""Pure numpy implementations of the pointwise kernels.

Every function here has a twin with the same signature in ``_kernels.pyx``.
Vector fields are float64 arrays of shape ``(3, n1, n2, n3)``.
"""

import numpy as np


def squared_magnitude(u):
    return u[0] * u[0] + u[1] * u[1] + u[2] * u[2]


def damping_force(u, a, alpha):
    """Return ``a |u|^(2 alpha) u`` sampled pointwise."""
    s = squared_magnitude(u)
    return (a * s**alpha) * u


def exact_damping(u, a, alpha, tau):
    """Advance ``du/dt = -a |u|^(2 alpha) u`` by ``tau`` with the closed-form solution.

    The direction of u is preserved and
    ``|u(tau)| = |u0| (1 + 2 alpha a tau |u0|^(2 alpha))^(-1/(2 alpha))``.
    """
    s = squared_magnitude(u)
    factor = (1.0 + (2.0 * alpha * a * tau) * s**alpha) ** (-1.0 / (2.0 * alpha))
    return u * factor


def power_sum(u, p):
    """Sum of ``|u|^p`` over all grid points."""
    s = squared_magnitude(u)
    return float(np.sum(s ** (0.5 * p)))


def weighted_square_sum(m2, f, alpha):
    """Sum of ``m2^alpha |f|^2`` where ``m2`` is a squared weight magnitude."""
    return float(np.sum(m2**alpha * squared_magnitude(f)))


def monotonicity_scan(U, V, alpha):
    """Pointwise damping monotonicity for pairs of 3-vectors.

    ``U`` and ``V`` have shape ``(m, 3)``.  Returns ``(D, ratio)`` where
    ``D = (|u|^(2a) u - |v|^(2a) v) . (u - v)`` and
    ``ratio = D / (|u - v|^2 (|u| + |v|)^(2a))``; ratio is NaN where the
    denominator vanishes.
    """
    su = np.einsum("ij,ij->i", U, U)
    sv = np.einsum("ij,ij->i", V, V)
    W = U - V
    fu = su**alpha
    fv = sv**alpha
    D = np.einsum("ij,ij->i", fu[:, None] * U - fv[:, None] * V, W)
    denom = np.einsum("ij,ij->i", W, W) * (np.sqrt(su) + np.sqrt(sv)) ** (2.0 * alpha)
    ratio = np.full_like(D, np.nan)
    ok = denom > 0.0
    ratio[ok] = D[ok] / denom[ok]
    return D, ratio
