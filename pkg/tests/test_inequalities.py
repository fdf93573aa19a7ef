import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfdarcy.dynamics import PhysicsParams
from bfdarcy.inequalities import (
    HARD_TOL,
    _reduce,
    calibrate_gamma,
    check_damping_monotonicity,
    check_dual_bound,
    check_interpolation_p1,
    check_ladyzhenskaya,
    check_trace_p2,
    check_triple_product,
    random_vector_pairs,
    scalar_ensemble,
    slice_vanishing_ensemble,
    triple_ensemble,
    triple_product_epsilons,
    velocity_ensemble,
    write_reports_csv,
)
from bfdarcy.spectral import (
    PhysicalField,
    SpectralField,
    fft_forward,
    make_grid,
    random_scalar_field,
    velocity_from_physical,
)

PI = math.pi


def scalar_spec(grid, fn):
    x1, x2, x3 = grid.coordinates()
    return SpectralField(fft_forward(np.broadcast_to(fn(x1, x2, x3), grid.shape).astype(float)), grid)


def const_phys(grid, value):
    return PhysicalField(np.full(grid.shape, float(value)), grid)


# -- Ladyzhenskaya --------------------------------------------------------------

def test_ladyzhenskaya_cos(grid16):
    rep = check_ladyzhenskaya([scalar_spec(grid16, lambda x1, x2, x3: np.cos(x1))])
    # ||cos||_4 = (3 pi^3)^(1/4), ||cos||_2 = ||sin||_2 = (4 pi^3)^(1/2)
    assert rep.max_ratio == pytest.approx((3 * PI**3) ** 0.25 / (4 * PI**3) ** 0.5, rel=1e-12)


def test_ladyzhenskaya_skips_zero(grid8):
    zero = SpectralField(np.zeros(grid8.spectral_shape, complex), grid8)
    rep = check_ladyzhenskaya([zero, scalar_spec(grid8, lambda x1, x2, x3: np.cos(x2))])
    assert rep.n_skipped == 1 and rep.n_samples == 1


@given(lam=st.floats(1e-3, 1e3))
@settings(max_examples=20, deadline=None)
def test_ladyzhenskaya_scale_invariant(lam):
    g = make_grid(8, 8)
    psi = random_scalar_field(g, seed=4)
    r1 = check_ladyzhenskaya([psi]).max_ratio
    r2 = check_ladyzhenskaya([psi * lam]).max_ratio
    assert r2 == pytest.approx(r1, rel=1e-12)


def test_ladyzhenskaya_ensemble(grid16):
    rep = check_ladyzhenskaya(scalar_ensemble(grid16, 60, seed=3))
    assert not rep.violated and rep.n_samples == 60
    assert 0 < rep.empirical_constant < 1


# -- dual bound -------------------------------------------------------------------

def test_dual_bound_shear(grid16):
    _, x2, _ = grid16.coordinates()
    u = np.zeros((3,) + grid16.shape)
    u[0] = np.sin(x2)
    rep = check_dual_bound([velocity_from_physical(u, grid16)])
    assert rep.max_ratio <= 1e-15 and not rep.violated


def test_dual_bound_zero(grid8):
    rep = check_dual_bound([velocity_from_physical(np.zeros((3,) + grid8.shape), grid8)])
    assert rep.max_ratio == 0.0 and not rep.violated


def test_dual_bound_ensemble(grid16):
    rep = check_dual_bound(velocity_ensemble(grid16, 40, seed=1))
    assert not rep.violated and rep.max_ratio <= 1.0


# -- (p1) -----------------------------------------------------------------------

def test_p1_cos(grid16):
    rep = check_interpolation_p1([scalar_spec(grid16, lambda x1, x2, x3: np.cos(x1))])
    expected = math.sqrt(2 * PI) * (1.5 * PI**2) ** 0.25 / (2 * PI**1.5)
    assert rep.max_ratio == pytest.approx(expected, rel=1e-12)


def test_p1_vertical_mode_is_degenerate(grid16):
    rep = check_interpolation_p1([scalar_spec(grid16, lambda x1, x2, x3: np.cos(x3))])
    assert rep.n_samples == 0 and rep.details["degenerate"] == 1 and not rep.violated


def test_p1_ensemble(grid16):
    rep = check_interpolation_p1(scalar_ensemble(grid16, 60, seed=2, horizontal_mean_zero=True))
    assert not rep.violated and 0 < rep.empirical_constant < 1


# -- (p2) -------------------------------------------------------------------------

def test_trace_constant_is_equality(grid8):
    rep = check_trace_p2([scalar_spec(grid8, lambda *x: 1.0 + 0 * x[0])])
    assert rep.max_ratio == pytest.approx(1.0, rel=1e-14) and not rep.violated


def test_trace_cos_x3(grid16):
    rep = check_trace_p2([scalar_spec(grid16, lambda x1, x2, x3: np.cos(x3))])
    bound = 2 * PI**2 + 8 * PI**3
    assert rep.max_ratio == pytest.approx((2 * PI) ** 2 / bound, rel=1e-12)


def test_trace_random_and_vanishing(grid16):
    assert not check_trace_p2(scalar_ensemble(grid16, 60, seed=5)).violated
    assert not check_trace_p2(slice_vanishing_ensemble(grid16, 60, seed=5), periodic=False).violated


def test_trace_vanishing_form_fails_without_vanishing(grid8):
    # the form without 1/L3 needs a zero slice; constants break it
    rep = check_trace_p2([scalar_spec(grid8, lambda *x: 1.0 + 0 * x[0])], periodic=False)
    assert rep.violated and math.isinf(rep.max_ratio)


# -- monotonicity -----------------------------------------------------------------

def test_monotonicity_antiparallel_units():
    U = np.array([[1.0, 0.0, 0.0]])
    rep = check_damping_monotonicity((U, -U), 1.0)
    assert rep.details["kappa"] == pytest.approx(0.25, rel=1e-15)
    assert rep.max_ratio == pytest.approx(4.0)


def test_monotonicity_equal_pair_skipped():
    U = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    rep = check_damping_monotonicity((U, U.copy()), 1.5)
    assert rep.n_skipped == 2 and rep.details["min_D"] == 0.0


@given(lam=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_monotonicity_ratio_scale_invariant(lam, seed):
    from bfdarcy import kernels

    U, V = random_vector_pairs(50, seed)
    _, r1 = kernels.monotonicity_scan(U, V, 1.5)
    _, r2 = kernels.monotonicity_scan(lam * U, lam * V, 1.5)
    assert np.allclose(r1, r2, rtol=1e-10)


@pytest.mark.parametrize("alpha,kappa", [(1.0, 0.25), (1.25, 2 ** -2.5), (1.5, 0.125), (2.0, 0.0625)])
def test_monotonicity_constant(alpha, kappa):
    # the minimum sits at antiparallel equal-length pairs: 2^(-2 alpha)
    rep = check_damping_monotonicity(random_vector_pairs(200_000, seed=1), alpha)
    assert not rep.violated and rep.details["min_D"] >= 0
    assert rep.details["kappa"] == pytest.approx(kappa, rel=1e-3)
    assert rep.details["kappa"] >= kappa * (1 - 1e-12)


# -- triple product ----------------------------------------------------------------

def test_triple_product_zero(grid8):
    z = const_phys(grid8, 0.0)
    rep = check_triple_product([(z, z, z)], 2.0, 1.0, 1.0)
    assert rep.max_ratio == 0.0 and not rep.violated


def test_triple_product_ones(grid8):
    one = const_phys(grid8, 1.0)
    rep = check_triple_product([(one, one, one)], 2.0, 1.0, 1.0)
    # RHS = (1/4 + 1/4 + 1) (2 pi)^3
    assert rep.max_ratio == pytest.approx(1 / 1.5, rel=1e-14)


def test_triple_product_epsilons_from_params():
    params = PhysicsParams(0.1, 2.0, 1.5)
    e0, e1 = triple_product_epsilons(params, 4.0)
    assert e0 == pytest.approx(0.1 / 8) and e1 == pytest.approx(2.0 * 0.1 * 7.0 / 16)


@pytest.mark.parametrize("alpha", [1.25, 2.0])
def test_triple_product_ensemble(grid16, alpha):
    triples = list(triple_ensemble(grid16, 40, seed=2))
    for eps0, eps1 in ((1.0, 1.0), (0.05, 20.0), (3.0, 0.01)):
        assert not check_triple_product(triples, alpha, eps0, eps1).violated
    rep = check_triple_product(triples, alpha, params=PhysicsParams(0.05, 1.0, alpha), gamma_hat=0.02)
    assert not rep.violated


def test_triple_product_rejects_bad_epsilon(grid8):
    one = const_phys(grid8, 1.0)
    with pytest.raises(ValueError):
        check_triple_product([(one, one, one)], 2.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        check_triple_product([(one, one, one)], 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        check_triple_product([(one, one, one)], 2.0)


# -- report semantics ----------------------------------------------------------------

def test_hard_violation_flagged():
    rep = _reduce("x", [1.0 + 2 * HARD_TOL], [1.0], hard=True)
    assert rep.violated and rep.empirical_constant == rep.max_ratio
    assert not _reduce("x", [1.0 + 0.5 * HARD_TOL], [1.0], hard=True).violated
    assert not _reduce("x", [5.0], [1.0], hard=False).violated


def test_reports_csv(tmp_path, grid8):
    rep = check_trace_p2([scalar_spec(grid8, lambda *x: 1.0 + 0 * x[0])])
    write_reports_csv(tmp_path / "r.csv", [rep])
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["name", "n_samples", "max_ratio", "empirical_constant", "violated"]
    assert rows[1][0] == "trace_p2_periodic" and rows[1][4] == "false"
    assert float(rows[1][2]) == rep.max_ratio


def test_ensembles_deterministic(grid8):
    a = [s.coefficients for s in scalar_ensemble(grid8, 3, seed=9)]
    b = [s.coefficients for s in scalar_ensemble(grid8, 3, seed=9)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


# -- gamma calibration ------------------------------------------------------------

def test_gamma_calibration_is_positive_and_finite(grid16):
    out = calibrate_gamma(list(velocity_ensemble(grid16, 20, seed=0)), [1.25, 1.5, 2.0])
    assert all(0 < out[a] < math.inf for a in (1.25, 1.5, 2.0))
    assert out["gamma_hat"] == max(out[a] for a in (1.25, 1.5, 2.0))


@pytest.mark.xfail(strict=True, reason="empirical gamma varies by about 37% across alpha in [1.1, 2]; see notes")
def test_gamma_stable_across_alpha(grid16):
    out = calibrate_gamma(list(velocity_ensemble(grid16, 100, seed=0)), [1.1, 1.25, 1.5, 1.75, 2.0])
    assert out["spread"] < 0.2
