import math

import numpy as np
import pytest

from gammaw.curvature_bounds import (
    BoundEstimate,
    SearchConfig,
    _diverging,
    check_pointwise_cd,
    estimate_c,
    estimate_gamma,
    estimate_rho,
)
from gammaw.field_expr import parse_field
from gammaw.gamma_calculus import gamma_integrand, sqrt_defect
from gammaw.presets import gaussian_problem, make_problem, pq_problem
from gammaw.verifier import random_smooth_field


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(radii_schedule=(10.0, 10.0, 100.0))
    with pytest.raises(ValueError):
        SearchConfig(tol=0.0)
    with pytest.raises(ValueError):
        SearchConfig(box_radius=-1.0)


def test_diverging_rule():
    assert _diverging([-1.0, -3.0, -6.0], tol=1e-6)
    assert not _diverging([-1.0, -3.0], tol=1e-6)  # too short
    assert not _diverging([-1.0, -3.0, -4.5], tol=1e-6)  # last drop smaller
    assert not _diverging([-1.0, -1.0, -2.0], tol=1e-6)  # a flat step
    assert not _diverging([-1.0, -3.0, -math.inf], tol=1e-6)  # non-finite entry
    assert not _diverging([5.0, 4.0, 2.0], tol=10.0)  # drops below tol


def test_rho_gaussian_exact(fast_search):
    est = estimate_rho(gaussian_problem(2), fast_search)
    assert est.value == 1.0
    assert not est.diverging
    assert np.allclose(est.witness, 0.0)


def test_rho_nonconvex_potential(fast_search):
    # U = |x|^2/2 + cos(x0) not expressible; use quartic double well instead
    p = make_problem(1, "x0^4/4 - x0^2/2", "sqrt1sq")
    est = estimate_rho(p, fast_search)
    # U'' = 3 x0^2 - 1, global min -1 at 0
    assert est.value == pytest.approx(-1.0, abs=1e-6)
    assert not est.diverging
    assert abs(est.witness[0]) < 1e-3


def test_rho_diverging(fast_search):
    # U = -x0^4: Hessian unbounded below as the box grows
    p = make_problem(1, "-x0^4", "sqrt1sq")
    est = estimate_rho(p, fast_search)
    assert est.diverging
    assert est.value == -math.inf
    assert len(est.trace) == 3
    assert est.trace[0] > est.trace[1] > est.trace[2]


@pytest.mark.parametrize(
    "dim,expected,witness_r2",
    [(1, -1.25, 3.0), (2, -1.0625, 7.0), (3, -1.0, None)],
)
def test_gamma_sqrt_weight_constants(fast_search, dim, expected, witness_r2):
    est = estimate_gamma(gaussian_problem(dim), fast_search)
    assert not est.diverging
    assert est.value == pytest.approx(expected, abs=1e-6)
    if witness_r2 is not None:
        assert float(est.witness @ est.witness) == pytest.approx(witness_r2, abs=1e-3)
    # witness reproduces the reported infimum
    assert gamma_integrand(gaussian_problem(dim), est.witness) == pytest.approx(
        est.value, abs=1e-9
    )


def test_gamma_zero_weight(fast_search, p2_noweight):
    est = estimate_gamma(p2_noweight, fast_search)
    assert est.value == math.inf
    assert not est.diverging
    assert est.witness is None


def test_gamma_trace_monotone(fast_search):
    # enlarging the box can only lower the infimum estimate
    est = estimate_gamma(gaussian_problem(2), fast_search)
    t = est.trace
    assert all(b <= a + 1e-12 for a, b in zip(t, t[1:]))


def test_gamma_seed_reproducible(fast_search):
    a = estimate_gamma(gaussian_problem(2), fast_search)
    b = estimate_gamma(gaussian_problem(2), fast_search)
    assert a.value == b.value
    assert np.array_equal(a.witness, b.witness)
    assert a.trace == b.trace


def test_c_gaussian_sqrt_weight(fast_search):
    p = gaussian_problem(1)
    est = estimate_c(p, 1.0, fast_search)
    assert not est.diverging
    # branch a: 2 sup |W'| = 2 sup |x|/sqrt(1+x^2) = 2
    assert est.value == pytest.approx(2.0, abs=1e-4)


def test_c_zero_weight(fast_search, p2_noweight):
    est = estimate_c(p2_noweight, 1.0, fast_search)
    assert est.value == 0.0
    assert not est.diverging


def test_c_diverging_quadratic_weight(fast_search):
    # W = 1 + |x|^2 has unbounded gradient, so c diverges
    p = make_problem(2, "gaussian", "1 + normsq(x)")
    est = estimate_c(p, 1.0, fast_search)
    assert est.diverging
    assert est.value == math.inf


def test_c_bounds_sqrt_defect(fast_search, rng):
    # the estimated c makes the defect inequality hold for nonnegative g
    p = gaussian_problem(2)
    c = estimate_c(p, 1.0, fast_search).value + 1e-9
    for _ in range(40):
        h = random_smooth_field(rng, 2, depth=2)
        g = 1.0 + h * h if rng.integers(0, 2) else (0.2 * h).exp()
        x = rng.uniform(-4, 4, size=2)
        lhs, bound = sqrt_defect(p, g, x, rho=1.0, c=c)
        scale = max(1.0, abs(lhs), abs(bound))
        assert lhs >= bound - 1e-9 * scale


def test_pointwise_cd_no_violations(fast_search, rng, p2):
    kappa = estimate_gamma(p2, fast_search).value
    pts = rng.uniform(-3, 3, size=(150, 2))
    for src in ("exp(0.3*x0)", "x0^2 - x1", "1 + x0*x1"):
        rep = check_pointwise_cd(p2, parse_field(src, 2), kappa, pts)
        assert rep.n_checked == 150
        assert rep.n_violations == 0
        assert rep.n_domain_errors == 0
        assert rep.worst_margin is not None


def test_pointwise_cd_detects_violations(p2):
    # kappa far above the true curvature must generate violations
    f = parse_field("exp(0.5*x0)", 2)
    pts = np.array([[4.0, 0.0], [5.0, 0.0], [6.0, 0.0]])
    rep = check_pointwise_cd(p2, f, 10.0, pts)
    assert rep.n_violations > 0
    assert rep.worst_margin < 0
    assert rep.worst_point is not None


def test_pointwise_cd_counts_domain_errors(p2_noweight):
    p = make_problem(1, "gaussian", "sqrt(x0)")
    f = parse_field("x0^2", 1)
    pts = np.array([[1.0], [-1.0], [4.0]])
    rep = check_pointwise_cd(p, f, -1.0, pts)
    assert rep.n_domain_errors == 1
    assert rep.n_checked == 3


def test_pq_gamma_matches_sqrt_weight(fast_search):
    # q = 1 reproduces the sqrt weight results for the p = 2 potential
    est_pq = estimate_gamma(pq_problem(2.0, 1.0, 2), fast_search)
    est_g = estimate_gamma(gaussian_problem(2), fast_search)
    assert est_pq.value == pytest.approx(est_g.value, abs=1e-6)


def test_pq_boundary_divergence(fast_search):
    # supercritical potential growth makes the drift term dominate
    est = estimate_gamma(pq_problem(3.0, 1.0, 2), fast_search)
    assert est.diverging
    assert est.value == -math.inf


def test_bound_estimate_shape():
    est = BoundEstimate(value=1.0, witness=np.zeros(2), diverging=False, trace=[1.0])
    assert est.trace == [1.0]
