"""Randomised checks of the functional inequalities behind the energy estimates.

Each check evaluates both sides of an inequality on every sample of an
ensemble and reduces to an :class:`InequalityReport`.  Checks with constant 1
(Hölder, Young, the periodic trace bound, pointwise monotonicity) are hard:
a sample exceeding its bound by more than ``HARD_TOL`` relative marks the
report violated.  Checks with an unknown constant report the worst ratio as
the empirical constant.

All Lebesgue norms use the same grid quadrature, so the discrete Hölder and
Young inequalities hold exactly for grid sums.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .diagnostics import lp_norm, mixed_norm
from .spectral import (
    GridSpec,
    PhysicalField,
    SpectralField,
    fft_inverse,
    parseval_sum,
    random_divergence_free,
    random_scalar_field,
)

__all__ = [
    "HARD_TOL",
    "InequalityReport",
    "check_ladyzhenskaya",
    "check_dual_bound",
    "check_interpolation_p1",
    "check_trace_p2",
    "check_damping_monotonicity",
    "check_triple_product",
    "calibrate_gamma",
    "triple_product_epsilons",
    "scalar_ensemble",
    "velocity_ensemble",
    "slice_vanishing_ensemble",
    "triple_ensemble",
    "random_vector_pairs",
    "write_reports_csv",
]

HARD_TOL = 1e-8
REPORT_COLUMNS = ("name", "n_samples", "max_ratio", "empirical_constant", "violated")


@dataclass(frozen=True)
class InequalityReport:
    name: str
    n_samples: int
    max_ratio: float
    violated: bool
    empirical_constant: float
    n_skipped: int = 0
    details: dict = field(default_factory=dict, compare=False)

    def as_row(self):
        return (self.name, self.n_samples, self.max_ratio, self.empirical_constant, self.violated)


def _reduce(name, lhs, rhs, hard, skipped=0, details=None):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    max_ratio = float(np.max(ratio)) if ratio.size else 0.0
    violated = not math.isfinite(max_ratio)
    if hard:
        violated = violated or bool(np.any(lhs > rhs * (1.0 + HARD_TOL)))
    return InequalityReport(
        name=name,
        n_samples=int(lhs.size),
        max_ratio=max_ratio,
        violated=violated,
        empirical_constant=max_ratio,
        n_skipped=skipped,
        details=details or {},
    )


def _phys(c: SpectralField) -> np.ndarray:
    return fft_inverse(c.coefficients, c.grid)


def _grid_l2sq(values: np.ndarray, grid: GridSpec) -> float:
    return grid.cell_volume * float(np.sum(values * values))


# -- checks ---------------------------------------------------------------------

def check_ladyzhenskaya(samples: Iterable[SpectralField]) -> InequalityReport:
    """``||psi||_4 <= C ||psi||_2^(1/4) ||grad psi||_2^(3/4)`` on mean-zero scalars."""
    lhs, rhs, skipped = [], [], 0
    for psi in samples:
        g = psi.grid
        l2 = math.sqrt(parseval_sum(psi.coefficients, g))
        if l2 == 0.0:
            skipped += 1
            continue
        grad = math.sqrt(parseval_sum(psi.coefficients, g, g.ksq))
        lhs.append(lp_norm(PhysicalField(_phys(psi), g), 4))
        rhs.append(l2**0.25 * grad**0.75)
    return _reduce("ladyzhenskaya", lhs, rhs, hard=False, skipped=skipped)


def _velocity_gradient_phys(u: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    g = u.grid
    c = u.coefficients
    stacked = np.concatenate([c] + [c * g.derivative_symbol(j) for j in (1, 2, 3)])
    phys = fft_inverse(stacked, g)
    u_phys = phys[:3]
    # grads[i, j] = d_j u_i
    grads = np.stack([phys[3 + 3 * j : 6 + 3 * j] for j in range(3)], axis=1)
    return u_phys, grads


def check_dual_bound(samples: Iterable[SpectralField]) -> InequalityReport:
    """Hölder step ``||(u.grad)u||_(4/3) <= ||u||_4 ||grad u||_2`` (constant 1)."""
    lhs, rhs = [], []
    for u in samples:
        g = u.grid
        u_phys, grads = _velocity_gradient_phys(u)
        conv = np.einsum("jxyz,ijxyz->ixyz", u_phys, grads)
        lhs.append(lp_norm(PhysicalField(conv, g), 4.0 / 3.0))
        grad_l2 = math.sqrt(_grid_l2sq(grads, g))
        rhs.append(lp_norm(PhysicalField(u_phys, g), 4) * grad_l2)
    return _reduce("dual_bound", lhs, rhs, hard=True)


def check_interpolation_p1(samples: Iterable[SpectralField]) -> InequalityReport:
    """``||psi||_(L^2_v(L^4_h)) <= C ||grad_h psi||_2^(1/2) ||psi||_2^(1/2)``.

    Samples should have zero horizontal mean on every slice; samples with
    ``grad_h psi = 0`` are skipped and counted in ``details["degenerate"]``.
    """
    lhs, rhs, degenerate = [], [], 0
    for psi in samples:
        g = psi.grid
        gh = math.sqrt(parseval_sum(psi.coefficients, g, g.kh2))
        l2 = math.sqrt(parseval_sum(psi.coefficients, g))
        if gh <= 1e-14 * max(l2, 1e-300):
            degenerate += 1
            continue
        lhs.append(mixed_norm(PhysicalField(_phys(psi), g), 4, 2, order="v_then_h"))
        rhs.append(math.sqrt(gh * l2))
    return _reduce("interpolation_p1", lhs, rhs, hard=False, skipped=degenerate,
                   details={"degenerate": degenerate})


def check_trace_p2(samples: Iterable[SpectralField], periodic: bool = True) -> InequalityReport:
    """``sup_x3 ||psi(., x3)||_(L^2_h)^2 <= |psi|_2^2 / L3 + 2 ||psi||_2 ||d3 psi||_2``.

    With ``periodic=False`` the ``1/L3`` term is dropped; that form holds for
    fields vanishing on some horizontal slice.
    """
    lhs, rhs = [], []
    for psi in samples:
        g = psi.grid
        d1, d2, _ = g.spacing
        both = fft_inverse(np.stack((psi.coefficients, psi.coefficients * g.derivative_symbol(3))), g)
        values, dz = both
        slices = d1 * d2 * np.sum(values * values, axis=(0, 1))
        l2sq = _grid_l2sq(values, g)
        bound = 2.0 * math.sqrt(l2sq) * math.sqrt(_grid_l2sq(dz, g))
        if periodic:
            bound += l2sq / g.box_lengths[2]
        lhs.append(float(np.max(slices)))
        rhs.append(bound)
    name = "trace_p2_periodic" if periodic else "trace_p2_vanishing_slice"
    return _reduce(name, lhs, rhs, hard=True)


def check_damping_monotonicity(pairs, alpha: float) -> InequalityReport:
    """Pointwise ``kappa |u - v|^2 (|u| + |v|)^(2 alpha) <= (|u|^(2a) u - |v|^(2a) v).(u - v)``.

    ``pairs`` is a tuple of two ``(m, 3)`` arrays.  ``D >= 0`` is the hard part;
    ``details["kappa"]`` is the smallest observed ratio and the reported
    ``max_ratio`` is its reciprocal (the constant in ``denominator <= C D``).
    """
    U, V = (np.asarray(x, dtype=np.float64) for x in pairs)
    D, ratio = kernels.monotonicity_scan(U, V, alpha)
    ok = np.isfinite(ratio)
    skipped = int(np.count_nonzero(~ok))
    denom = np.zeros_like(D)
    denom[ok] = D[ok] / np.where(ratio[ok] != 0, ratio[ok], np.inf)
    scale = np.where(ok, np.abs(D) + denom, 1.0)
    negative = bool(np.any(D < -HARD_TOL * scale))
    kappa = float(np.min(ratio[ok])) if np.any(ok) else math.nan
    max_ratio = 1.0 / kappa if kappa > 0 else math.inf
    return InequalityReport(
        name=f"damping_monotonicity_alpha={alpha:g}",
        n_samples=int(D.size),
        max_ratio=max_ratio,
        violated=negative or not math.isfinite(max_ratio),
        empirical_constant=max_ratio,
        n_skipped=skipped,
        details={"kappa": kappa, "min_D": float(np.min(D)) if D.size else 0.0},
    )


def triple_product_epsilons(params, gamma_hat: float) -> tuple[float, float]:
    """``eps0 = nu / (2 gamma)`` and ``eps1 = a nu (1 + 4 alpha) / gamma^2``."""
    eps0 = params.nu / (2.0 * gamma_hat)
    eps1 = params.a * params.nu * (1.0 + 4.0 * params.alpha) / gamma_hat**2
    return eps0, eps1


def check_triple_product(
    triples: Iterable[tuple], alpha: float, eps0=None, eps1=None, params=None, gamma_hat=None
) -> InequalityReport:
    """Hölder-Young bound on ``int |f| |g| |h|``.

        int |f||g||h| <= eps1/(4 eps0) || |f|^alpha g ||^2
                         + eps1^(1/(1-alpha))/(4 eps0) ||g||^2 + eps0 ||h||^2

    Triples are ``PhysicalField`` scalars.  Without explicit epsilons they are
    derived from ``params`` and ``gamma_hat`` by :func:`triple_product_epsilons`.
    """
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha!r}")
    if eps0 is None or eps1 is None:
        if params is None or gamma_hat is None:
            raise ValueError("give eps0 and eps1, or params and gamma_hat")
        eps0, eps1 = triple_product_epsilons(params, gamma_hat)
    if not (eps0 > 0 and eps1 > 0):
        raise ValueError(f"eps0 and eps1 must be positive, got {eps0!r}, {eps1!r}")
    c1 = eps1 / (4.0 * eps0)
    c2 = eps1 ** (1.0 / (1.0 - alpha)) / (4.0 * eps0)
    lhs, rhs = [], []
    for f, g_, h in triples:
        grid = f.grid
        dv = grid.cell_volume
        fa, ga, ha = np.abs(f.values), np.abs(g_.values), np.abs(h.values)
        lhs.append(dv * float(np.sum(fa * ga * ha)))
        rhs.append(
            c1 * dv * float(np.sum(fa ** (2.0 * alpha) * ga * ga))
            + c2 * dv * float(np.sum(ga * ga))
            + eps0 * dv * float(np.sum(ha * ha))
        )
    return _reduce(f"triple_product_alpha={alpha:g}", lhs, rhs, hard=True,
                   details={"eps0": eps0, "eps1": eps1})


def _trilinear_ratio(u: SpectralField, alpha: float) -> float:
    """``|int (u.grad)u . d3^2 u| / inf_eps RHS`` for the convective estimate with gamma = 1."""
    g = u.grid
    c = u.coefficients
    dz = g.derivative_symbol(3)
    u_phys, grads = _velocity_gradient_phys(u)
    extra = fft_inverse(np.concatenate((c * dz, c * dz * dz)), g)
    dz_u, dzz_u = extra[:3], extra[3:]
    dv = g.cell_volume
    conv = np.einsum("jxyz,ijxyz->ixyz", u_phys, grads)
    lhs = abs(dv * float(np.sum(conv * dzz_u)))
    X = dv * kernels.weighted_square_sum(kernels.squared_magnitude(u_phys), dz_u, alpha)
    Y = parseval_sum(c, g, np.abs(dz) ** 2)
    Z = parseval_sum(c, g, g.kh2 * np.abs(dz) ** 2)
    if X <= 0 or Y <= 0 or Z <= 0:
        return math.nan
    # min over eps1 of eps1 X + eps1^(1/(1-a)) Y, then min over eps0 of M/(4 eps0) + eps0 Z
    M = alpha * (alpha - 1.0) ** (-(alpha - 1.0) / alpha) * X ** (1.0 / alpha) * Y ** ((alpha - 1.0) / alpha)
    return lhs / math.sqrt(M * Z)


def calibrate_gamma(samples: Sequence[SpectralField], alphas: Sequence[float]) -> dict:
    """Empirical constant of the convective estimate per ``alpha``.

    For each sample the ratio of ``|int (u.grad)u . d3^2 u|`` to the bound with
    unit constant, minimised over both epsilons, is computed in closed form;
    the result maps ``alpha`` to the ensemble maximum, plus
    ``"gamma_hat"`` (max over alpha) and ``"spread"`` (max/min - 1).
    """
    out = {}
    for alpha in alphas:
        ratios = [_trilinear_ratio(u, alpha) for u in samples]
        out[float(alpha)] = float(np.nanmax(ratios))
    values = [out[float(a)] for a in alphas]
    out["gamma_hat"] = max(values)
    out["spread"] = max(values) / min(values) - 1.0
    return out


# -- ensembles ------------------------------------------------------------------

def scalar_ensemble(grid: GridSpec, n: int, slope: float = -5.0 / 3.0, seed: int = 0,
                    horizontal_mean_zero: bool = False, kmax=None):
    """``n`` seeded mean-zero scalar fields with random energies spanning two decades."""
    rng = np.random.default_rng([seed, 1])
    energies = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
    for i in range(n):
        yield random_scalar_field(grid, slope, seed=[seed, 2, i], energy=float(energies[i]), kmax=kmax,
                                  horizontal_mean_zero=horizontal_mean_zero)


def velocity_ensemble(grid: GridSpec, n: int, slope: float = -5.0 / 3.0, seed: int = 0, kmax=None):
    rng = np.random.default_rng([seed, 3])
    energies = 10.0 ** rng.uniform(-1.0, 1.0, size=n)
    for i in range(n):
        yield random_divergence_free(grid, slope, seed=[seed, 4, i], energy=float(energies[i]), kmax=kmax)


def slice_vanishing_ensemble(grid: GridSpec, n: int, slope: float = -5.0 / 3.0, seed: int = 0):
    """Scalars ``phi(x) (1 - cos(k3 (x3 - c))) / 2`` vanishing on one horizontal slice."""
    from .spectral import fft_forward

    rng = np.random.default_rng([seed, 5])
    _, _, x3 = grid.coordinates()
    k = 2.0 * np.pi / grid.box_lengths[2]
    for i in range(n):
        phi = random_scalar_field(grid, slope, seed=[seed, 6, i])
        c = grid.box_lengths[2] * np.floor(rng.uniform(0, grid.n_v)) / grid.n_v
        bump = 0.5 * (1.0 - np.cos(k * (x3 - c)))
        yield SpectralField(fft_forward(_phys(phi) * bump), grid)


def triple_ensemble(grid: GridSpec, n: int, slope: float = -5.0 / 3.0, seed: int = 0):
    fields = list(scalar_ensemble(grid, 3 * n, slope, seed))
    for i in range(n):
        yield tuple(PhysicalField(_phys(fields[3 * i + j]), grid) for j in range(3))


def random_vector_pairs(m: int, seed: int = 0):
    """``m`` pairs of 3-vectors with magnitudes spread over six decades.

    One tenth of the pairs are exactly antiparallel and one tenth share a
    direction, which are the extreme configurations for the monotonicity ratio.
    """
    rng = np.random.default_rng([seed, 7])
    U = rng.standard_normal((m, 3)) * 10.0 ** rng.uniform(-3, 3, (m, 1))
    V = rng.standard_normal((m, 3)) * 10.0 ** rng.uniform(-3, 3, (m, 1))
    k = m // 10
    V[:k] = -U[:k] * rng.uniform(0.01, 100.0, (k, 1))
    V[k : 2 * k] = U[k : 2 * k] * rng.uniform(0.01, 100.0, (k, 1))
    return U, V


def write_reports_csv(path, reports: Sequence[InequalityReport]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            name, n, mr, ec, v = r.as_row()
            writer.writerow((name, n, repr(mr), repr(ec), str(v).lower()))
