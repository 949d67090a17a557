import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gammaw.field_expr import DomainError, coord_field, dot_field, normsq_field, parse_field
from gammaw.gamma_calculus import (
    WeightVanishesError,
    apply_L,
    apply_L_symbolic,
    gamma,
    gamma2,
    gamma2_w,
    gamma2_w_definitional,
    gamma_field,
    gamma_integrand,
    gamma_integrand_field,
    gamma_w,
    gamma_w_field,
    point_report,
    sqrt_defect,
    sqrt_gamma_w_field,
)
from gammaw.presets import gaussian_problem, make_problem, pq_problem
from gammaw.verifier import random_problem, random_smooth_field


def test_apply_L_ou_generator(p2):
    # L(x0^2) = 2 - 2 x0^2 for the Gaussian potential
    f = parse_field("x0^2", 2)
    assert apply_L(p2, f, [1.5, 0.3]) == pytest.approx(2.0 - 2.0 * 1.5**2)
    lf = apply_L_symbolic(p2, f)
    assert lf.value([1.5, 0.3]) == pytest.approx(2.0 - 2.0 * 1.5**2)


def test_gamma_is_gradient_dot(p2):
    f = parse_field("x0*x1", 2)
    g = parse_field("x0 + x1^2", 2)
    x = [0.7, -0.4]
    want = np.array([-0.4, 0.7]) @ np.array([1.0, -0.8])
    assert gamma(p2, f, g, x) == pytest.approx(want)


def test_gamma_w_adds_weighted_product(p2):
    f = coord_field(0, 2)
    assert gamma_w(p2, f, f, [1.0, 0.0]) == pytest.approx(3.0)
    # cross term: gamma_w(f, g) = grad f . grad g + W^2 f g
    g = coord_field(1, 2)
    x = [1.0, 2.0]
    assert gamma_w(p2, f, g, x) == pytest.approx((1.0 + 1.0 + 4.0) * 1.0 * 2.0)


def test_gamma2_w_exponential_at_origin(p2):
    f = dot_field([1.0, 0.0]).exp()
    assert gamma2_w(p2, f, [0.0, 0.0]) == pytest.approx(5.0)
    assert gamma2_w_definitional(p2, f, [0.0, 0.0]) == pytest.approx(5.0)


def test_zero_weight_collapses_to_classical(p2_noweight):
    p = p2_noweight
    f = parse_field("exp(0.3*x0) + x1^2", 2)
    for x in ([0.0, 0.0], [1.0, -2.0], [0.5, 0.25]):
        assert gamma_w(p, f, f, x) == pytest.approx(gamma(p, f, f, x))
        assert gamma2_w(p, f, x) == pytest.approx(gamma2(p, f, x))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_leibniz_identity(seed):
    # Gamma(f,g) = (L(fg) - f Lg - g Lf) / 2 pointwise
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    p = random_problem(rng, dim)
    f = random_smooth_field(rng, dim)
    g = random_smooth_field(rng, dim)
    x = rng.uniform(-2, 2, size=dim)
    try:
        lhs = 0.5 * (
            apply_L(p, f * g, x) - f.value(x) * apply_L(p, g, x) - g.value(x) * apply_L(p, f, x)
        )
        rhs = gamma(p, f, g, x)
    except DomainError:
        return
    scale = max(abs(lhs), abs(rhs), 1.0)
    assert abs(lhs - rhs) <= 1e-9 * scale


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gamma2_w_matches_definitional(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 4))
    p = random_problem(rng, dim)
    f = random_smooth_field(rng, dim)
    x = rng.uniform(-2, 2, size=dim)
    try:
        a = gamma2_w(p, f, x)
        b = gamma2_w_definitional(p, f, x)
    except DomainError:
        return
    assert abs(a - b) <= 1e-8 * max(abs(a), abs(b), 1.0)


def test_gamma_fields_match_pointwise(p2, rng):
    f = parse_field("exp(0.2*x0)*x1", 2)
    g = parse_field("x0 + 0.5*x1^2", 2)
    gf = gamma_field(p2, f, g)
    gwf = gamma_w_field(p2, f, g)
    for _ in range(25):
        x = rng.uniform(-2, 2, size=2)
        assert gf.value(x) == pytest.approx(gamma(p2, f, g, x), rel=1e-12, abs=1e-12)
        assert gwf.value(x) == pytest.approx(gamma_w(p2, f, g, x), rel=1e-12, abs=1e-12)


def test_sqrt_gamma_w_field(p2):
    f = parse_field("x0^2 + 1", 2)
    h = sqrt_gamma_w_field(p2, f)
    x = np.array([1.0, 2.0])
    want = 2.0 + math.sqrt(6.0) * 2.0  # |grad f| + W f
    assert h.value(x) == pytest.approx(want)


def test_curvature_integrand_values():
    p2 = gaussian_problem(2)
    assert gamma_integrand(p2, [0.0, 0.0]) == pytest.approx(2.0)
    p1 = gaussian_problem(1)
    # at |x|^2 = 1: lap W/W = 1/2 - 1/4, 3|W'|^2/W^2 = 3/4, U'W'/W = 1/2
    assert gamma_integrand(p1, [1.0]) == pytest.approx(-1.0)
    u = 0.5
    assert gamma_integrand(p1, [1.0]) == pytest.approx(4 * u * u + (1 - 3) * u - 1)


def test_curvature_integrand_pq_spot():
    p = pq_problem(2.0, 1.0, 1)
    assert gamma_integrand(p, [0.0]) == pytest.approx(1.0)
    # q=1 weight is sqrt1sq, so the integrand matches the gaussian problem's
    pg = gaussian_problem(1)
    for r in (0.5, 1.0, 2.0):
        assert gamma_integrand(p, [r]) == pytest.approx(gamma_integrand(pg, [r]))


def test_curvature_integrand_scale_invariant_in_w(p2):
    scaled = make_problem(2, "gaussian", "7*sqrt(1+normsq(x))")
    for x in ([0.0, 0.0], [1.0, 1.0], [0.3, -2.0]):
        assert gamma_integrand(scaled, x) == pytest.approx(gamma_integrand(p2, x))


def test_curvature_integrand_field_matches(p2, rng):
    field = gamma_integrand_field(p2)
    for _ in range(30):
        x = rng.uniform(-4, 4, size=2)
        assert field.value(x) == pytest.approx(gamma_integrand(p2, x), rel=1e-10, abs=1e-10)


def test_vanishing_weight_rejected(p2_noweight):
    with pytest.raises(WeightVanishesError):
        gamma_integrand(p2_noweight, [1.0, 1.0])
    with pytest.raises(DomainError):
        gamma_integrand_field(p2_noweight)
    # a weight that crosses zero at a specific point
    p = make_problem(1, "gaussian", "x0")
    with pytest.raises(WeightVanishesError):
        gamma_integrand(p, [0.0])
    # lap W = 0, 3|W'|^2/W^2 = 3, U'W'/W = 1 at x0 = 1
    assert gamma_integrand(p, [1.0]) == pytest.approx(-4.0)


def test_sqrt_defect_constant_g():
    for dim in (2, 3):
        p = gaussian_problem(dim)
        lhs, bound = sqrt_defect(p, parse_field("1", dim), np.zeros(dim), rho=1.0, c=2.0)
        assert lhs == pytest.approx(dim - 1.0)
        assert bound == pytest.approx(-2.0)


def test_sqrt_defect_zero_weight(p2_noweight):
    g = parse_field("x0^2 + x1^2", 2)
    x = [1.0, 1.0]
    lhs, bound = sqrt_defect(p2_noweight, g, x, rho=1.0, c=0.5)
    assert lhs == 0.0
    assert bound == pytest.approx(-0.5 * math.hypot(2.0, 2.0))


def test_point_report_consistency(p2):
    f = parse_field("exp(0.1*x0) * (1 + x1)", 2)
    x = [0.4, -0.2]
    rep = point_report(p2, f, x)
    assert rep.gamma == pytest.approx(gamma(p2, f, f, x))
    assert rep.gamma2 == pytest.approx(gamma2(p2, f, x))
    assert rep.gamma_w == pytest.approx(gamma_w(p2, f, f, x))
    assert rep.gamma2_w == pytest.approx(gamma2_w(p2, f, x))
    assert rep.lf == pytest.approx(apply_L(p2, f, x))
    assert rep.gamma_w >= rep.gamma  # W^2 f^2 >= 0


def test_iterated_L_stays_symbolic(p2):
    f = parse_field("x0^2 * x1", 2)
    llf = apply_L_symbolic(p2, apply_L_symbolic(p2, f))
    x = np.array([0.9, -1.1])
    h = 1e-4
    # compare L(Lf) against a finite-difference Laplacian-drift of Lf
    lf = apply_L_symbolic(p2, f)
    lap = sum(
        (lf.value(x + h * e) - 2 * lf.value(x) + lf.value(x - h * e)) / h**2
        for e in np.eye(2)
    )
    drift = x @ lf.jet(x, 2).gradient
    assert llf.value(x) == pytest.approx(lap - drift, rel=1e-5, abs=1e-4)
