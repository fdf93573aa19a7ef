"""Twin runs and the Gronwall envelope for the difference of two solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .dynamics import BlowUpError, PhysicsParams, StepperConfig, step
from .spectral import SpectralVelocityField, fft_inverse, parseval_sum

__all__ = [
    "TwinRunRecord",
    "GronwallReport",
    "TwinRunAborted",
    "twin_record",
    "twin_run",
    "gronwall_envelope",
    "fit_order",
    "perturbation_sweep",
]


@dataclass(frozen=True)
class TwinRunRecord:
    t: float
    w_energy: float
    grad_h_w: float
    weighted_w: float
    L_of_t: float

    def as_row(self):
        return (self.t, self.w_energy, self.grad_h_w, self.weighted_w, self.L_of_t)


TWIN_COLUMNS = ("t", "w_energy", "grad_h_w", "weighted_w", "L_of_t")


@dataclass(frozen=True)
class GronwallReport:
    c_empirical: float
    envelope_satisfied: bool
    decay_order: float = math.nan
    c_used: float = math.nan
    c_sharp: float = math.nan
    sharp_satisfied: bool = False

    def as_row(self):
        return (self.c_empirical, self.envelope_satisfied, self.decay_order,
                self.c_used, self.c_sharp, self.sharp_satisfied)


GRONWALL_COLUMNS = ("c_empirical", "envelope_satisfied", "decay_order", "c_used", "c_sharp", "sharp_satisfied")


class TwinRunAborted(BlowUpError):
    def __init__(self, message, records, t=None):
        super().__init__(message, t=t)
        self.records = records


def twin_record(u: SpectralVelocityField, v: SpectralVelocityField, alpha: float,
                t: float = 0.0, c_hat: float = 1.0) -> TwinRunRecord:
    """Diagnostics of ``w = u - v``; ``L_of_t`` is ``c_hat`` times the bracket built from ``u``."""
    g = u.grid
    cu, cv = u.coefficients, v.coefficients
    cw = cu - cv
    kh2 = g.kh2
    kz2 = np.abs(g.derivative_symbol(3)) ** 2
    phys = fft_inverse(np.concatenate((cu, cv, cw)), g)
    mu = np.sqrt(kernels.squared_magnitude(phys[:3]))
    mv = np.sqrt(kernels.squared_magnitude(phys[3:6]))
    weighted = g.cell_volume * kernels.weighted_square_sum((mu + mv) ** 2, phys[6:], alpha)
    bracket = parseval_sum(cu, g, kh2 * kz2) + parseval_sum(cu, g, kz2) + parseval_sum(cu, g, kh2)
    return TwinRunRecord(
        t=float(t),
        w_energy=parseval_sum(cw, g),
        grad_h_w=parseval_sum(cw, g, kh2),
        weighted_w=weighted,
        L_of_t=c_hat * bracket,
    )


def twin_run(
    u0: SpectralVelocityField,
    v0: SpectralVelocityField,
    params: PhysicsParams,
    config: StepperConfig,
    t_end: float,
    record_every: int = 1,
    c_hat: float = 1.0,
) -> list[TwinRunRecord]:
    """Evolve ``u`` and ``v`` with identical settings, recording ``w`` diagnostics.

    A blow-up of either member raises :class:`TwinRunAborted` carrying the
    records gathered so far.
    """
    if u0.grid != v0.grid:
        raise ValueError("twins must share one grid")
    if not (u0.projected and v0.projected):
        raise ValueError("twin initial data must be projected")
    n_steps = int(round(t_end / config.dt))
    u, v = u0, v0
    records = [twin_record(u, v, params.alpha, 0.0, c_hat)]
    for n in range(1, n_steps + 1):
        try:
            u = step(u, params, config)
            v = step(v, params, config)
        except BlowUpError as err:
            raise TwinRunAborted(str(err), records, t=(n - 1) * config.dt) from err
        if n % record_every == 0 or n == n_steps:
            records.append(twin_record(u, v, params.alpha, n * config.dt, c_hat))
    return records


def _cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(0.5 * np.diff(t) * (y[1:] + y[:-1]))))


def gronwall_envelope(
    records: Sequence[TwinRunRecord],
    c_hat=None,
    params: PhysicsParams | None = None,
    kappa: float = 0.0,
    rtol: float = 1e-12,
) -> GronwallReport:
    """Check ``|w(t)|^2 <= |w0|^2 exp(C int_0^t L)`` with ``L`` taken from the records.

    ``c_empirical`` is the smallest ``C`` (relative to the records' ``L_of_t``)
    that makes the envelope hold at every record.  With ``params`` the sharper
    integral form

        |w|^2 + nu int |grad_h w|^2 + 2 a kappa int |(|u|+|v|)^alpha w|^2
            <= |w0|^2 + C int L |w|^2

    is checked too, giving ``c_sharp`` and ``sharp_satisfied`` at ``c_used``.
    A zero initial difference that later becomes non-zero is a uniqueness
    failure and reported as an unsatisfied envelope with infinite constant.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    t = np.array([r.t for r in records])
    W = np.array([r.w_energy for r in records])
    S = np.array([r.L_of_t for r in records])
    W0 = W[0]
    I = _cumtrapz(t, S)

    if W0 == 0.0:
        if np.any(W > 0.0):
            return GronwallReport(math.inf, False, c_used=math.inf, c_sharp=math.inf)
        return GronwallReport(0.0, True, c_used=0.0 if c_hat is None else float(c_hat),
                              c_sharp=0.0, sharp_satisfied=True)

    growth = W > W0 * (1.0 + rtol)
    with np.errstate(divide="ignore", invalid="ignore"):
        needed = np.where(growth, np.where(I > 0, np.log(W / W0) / I, np.inf), 0.0)
    c_emp = max(0.0, float(np.max(needed)))
    c_used = c_emp if c_hat is None else float(c_hat)
    with np.errstate(over="ignore"):
        envelope = W <= W0 * np.exp(c_used * I) * (1.0 + rtol)
    report = dict(c_empirical=c_emp, envelope_satisfied=bool(np.all(envelope)), c_used=c_used)

    if params is not None:
        G = np.array([r.grad_h_w for r in records])
        Wd = np.array([r.weighted_w for r in records])
        lhs = W + params.nu * _cumtrapz(t, G) + 2.0 * params.a * kappa * _cumtrapz(t, Wd)
        J = _cumtrapz(t, S * W)
        excess = lhs - W0
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(excess > rtol * W0, np.where(J > 0, excess / J, np.inf), 0.0)
        c_sharp = max(0.0, float(np.max(need)))
        report["c_sharp"] = c_sharp
        report["sharp_satisfied"] = bool(np.all(lhs <= W0 + c_used * J + rtol * W0))
    return GronwallReport(**report)


def fit_order(deltas: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log(values)`` against ``log(deltas)``."""
    x = np.log(np.asarray(deltas, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def perturbation_sweep(
    u0: SpectralVelocityField,
    direction: SpectralVelocityField,
    deltas: Sequence[float],
    params: PhysicsParams,
    config: StepperConfig,
    t_end: float,
    record_every: int = 1,
):
    """Twin runs from ``u0`` and ``u0 + delta * direction``.

    Returns ``(final ||w(T)||_2 per delta, fitted order, list of record lists)``.
    """
    finals, runs = [], []
    for d in deltas:
        v0 = u0 + direction * d
        recs = twin_run(u0, v0, params, config, t_end, record_every)
        runs.append(recs)
        finals.append(math.sqrt(recs[-1].w_energy))
    return finals, fit_order(deltas, finals), runs
