import math

import numpy as np
import pytest

from gammaw.field_expr import const_field, dot_field, parse_field
from gammaw.presets import gaussian_problem, make_problem
from gammaw.semigroup_mc import (
    AggregatePathFailure,
    GaussianNoise,
    MCConfig,
    PathBlowUpError,
    ZeroNoise,
    em_path,
    estimate_fk_term,
    estimate_grad_Qt,
    estimate_Qt,
    estimate_Qt_sq,
    gaussian_exp_moment,
    mehler_fk_term,
    mehler_grad_Qt,
    mehler_Qt,
    taylor_Qt,
)


def test_mc_config_validation():
    with pytest.raises(ValueError):
        MCConfig(n_paths=1)
    with pytest.raises(ValueError):
        MCConfig(dt=0.0)


def test_t_zero_is_exact(p2, small_mc):
    f = parse_field("exp(0.3*x0) + x1", 2)
    x = [0.7, -0.2]
    est = estimate_Qt(p2, f, x, 0.0, small_mc)
    assert est.mean == f.value(x)
    assert est.stderr == 0.0
    sq = estimate_Qt_sq(p2, f, x, 0.0, small_mc)
    assert sq.mean == f.value(x) ** 2
    assert mehler_Qt(p2, f, x, 0.0) == f.value(x)


def test_zero_noise_follows_drift(p2):
    # gaussian drift -x discretizes to x (1 - dt)^k exactly
    cfg = MCConfig(n_paths=2, dt=0.1, seed=0, antithetic=False)
    x0 = np.array([2.0, -1.0])
    end = em_path(p2, x0, 0.5, cfg, ZeroNoise())
    assert np.allclose(end, x0 * (1.0 - 0.1) ** 5, rtol=0, atol=1e-15)


def test_zero_noise_dt_halving(p2):
    # deterministic Euler error against e^{-t} shrinks linearly in dt
    x0 = np.array([1.0, 0.0])
    errs = []
    for dt in (0.02, 0.01, 0.005):
        cfg = MCConfig(n_paths=2, dt=dt, seed=0, antithetic=False)
        end = em_path(p2, x0, 1.0, cfg, ZeroNoise())
        errs.append(abs(end[0] - math.exp(-1.0)))
    assert 1.7 < errs[0] / errs[1] < 2.3
    assert 1.7 < errs[1] / errs[2] < 2.3


def test_conservativity_exact(p2, small_mc):
    est = estimate_Qt(p2, const_field(1.0, 2), [0.3, 0.4], 0.7, small_mc)
    assert est.mean == 1.0
    assert est.stderr == 0.0


def test_antithetic_cancels_linear_part(p2):
    # linear dynamics + linear f: pair averages are deterministic
    cfg = MCConfig(n_paths=1000, dt=0.01, seed=5, antithetic=True)
    est = estimate_Qt(p2, parse_field("x0", 2), [1.0, 0.0], 0.5, cfg)
    assert est.stderr < 1e-14
    assert est.mean == pytest.approx((1.0 - 0.01) ** 50, abs=1e-12)


def test_determinism_bit_identical(p2, small_mc):
    f = parse_field("exp(0.2*x0)*x1 + 1", 2)
    a = estimate_Qt(p2, f, [0.5, 0.5], 0.4, small_mc)
    b = estimate_Qt(p2, f, [0.5, 0.5], 0.4, small_mc)
    assert a.mean == b.mean
    assert a.stderr == b.stderr
    c = estimate_Qt(p2, f, [0.5, 0.5], 0.4, small_mc, stream=(9,))
    assert c.mean != a.mean


def test_noise_streams_are_stable():
    noise = GaussianNoise(42)
    a = noise.normals((1, 2), (4, 3))
    b = noise.normals((1, 2), (4, 3))
    assert np.array_equal(a, b)
    c = noise.normals((1, 3), (4, 3))
    assert not np.array_equal(a, c)


def test_mehler_first_two_moments(p2):
    x = np.array([0.8, -0.3])
    t = 0.6
    d = math.exp(-t)
    assert mehler_Qt(p2, parse_field("x0", 2), x, t) == pytest.approx(d * x[0], abs=1e-12)
    want = d * d * x[0] ** 2 + (1 - d * d)
    assert mehler_Qt(p2, parse_field("x0^2", 2), x, t) == pytest.approx(want, abs=1e-12)


def test_mehler_exponential_closed_form(p2):
    a = np.array([0.4, -0.2])
    f = dot_field(a).exp()
    x = np.array([1.0, 2.0])
    t = 0.3
    d = math.exp(-t)
    want = math.exp(float(a @ x) * d + 0.5 * (1 - d * d) * float(a @ a))
    assert mehler_Qt(p2, f, x, t) == pytest.approx(want, rel=1e-14)


def test_mehler_semigroup_composition(p2):
    # Q_s Q_t = Q_{s+t} on the exponential family
    a = np.array([0.5, 0.1])
    x = np.array([-0.4, 0.9])
    s, t = 0.25, 0.4
    d = math.exp(-t)
    c = math.exp(0.5 * (1 - d * d) * float(a @ a))
    qt_f = c * dot_field(a * d).exp()
    lhs = mehler_Qt(p2, qt_f, x, s)
    rhs = mehler_Qt(p2, dot_field(a).exp(), x, s + t)
    assert lhs == pytest.approx(rhs, rel=1e-13)


def test_mehler_requires_gaussian():
    p = make_problem(2, "normsq(x)", "sqrt1sq")
    with pytest.raises(ValueError):
        mehler_Qt(p, parse_field("x0", 2), [0.0, 0.0], 0.1)


def test_mehler_grad_matches_finite_difference(p2):
    f = parse_field("x0^2 * exp(0.1*x1)", 2)
    x = np.array([0.6, -0.8])
    t = 0.5
    g = mehler_grad_Qt(p2, f, x, t)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (mehler_Qt(p2, f, x + e, t) - mehler_Qt(p2, f, x - e, t)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_mc_matches_mehler(p2):
    cfg = MCConfig(n_paths=8000, dt=5e-3, seed=7)
    for src in ("exp(0.3*x0)", "x0^2 + x1"):
        f = parse_field(src, 2)
        x = [0.5, -0.5]
        t = 0.5
        est = estimate_Qt(p2, f, x, t, cfg)
        ref = mehler_Qt(p2, f, x, t)
        assert abs(est.mean - ref) < 4 * est.stderr + 5e-3


def test_qt_sq_is_unbiased(p2):
    cfg = MCConfig(n_paths=8000, dt=5e-3, seed=13)
    f = parse_field("x0 + exp(0.2*x1)", 2)
    x = [0.4, 0.1]
    t = 0.4
    est = estimate_Qt_sq(p2, f, x, t, cfg)
    ref = mehler_Qt(p2, f, x, t) ** 2
    assert abs(est.mean - ref) < 4 * est.stderr + 5e-3
    # squaring a single-replica mean would be biased upward by Var(f)/n visibly
    assert est.stderr > 0


def test_taylor_short_time(p2):
    f = parse_field("x0^2*x1 + x1", 2)
    x = [0.7, 0.9]
    for t in (1e-3, 1e-2):
        assert taylor_Qt(p2, f, x, t) == pytest.approx(
            mehler_Qt(p2, f, x, t), rel=1e-5, abs=10 * t**3
        )


def test_fk_term_trivial_cases(p2, p2_noweight, small_mc):
    f = parse_field("x0", 2)
    est = estimate_fk_term(p2, f, [0.0, 0.0], 0.0, 5, small_mc)
    assert est.mean == 0.0 and est.stderr == 0.0
    est = estimate_fk_term(p2_noweight, f, [0.0, 0.0], 0.5, 5, small_mc)
    assert est.mean == 0.0 and est.stderr == 0.0
    assert mehler_fk_term(p2_noweight, f, [0.0, 0.0], 0.5) == 0.0


def test_fk_term_needs_odd_nodes(p2, small_mc):
    with pytest.raises(ValueError):
        estimate_fk_term(p2, parse_field("x0", 2), [0.0, 0.0], 0.5, 4, small_mc)


def test_fk_term_against_mehler(p2):
    cfg = MCConfig(n_paths=6000, dt=5e-3, seed=17)
    f = dot_field([0.5, 0.0]).exp()
    x = [0.2, -0.1]
    t = 0.3
    est = estimate_fk_term(p2, f, x, t, 9, cfg)
    ref = mehler_fk_term(p2, f, x, t)
    assert abs(est.mean - ref) < 4 * est.stderr + 2e-2 * abs(ref)


def test_fk_term_const_f_closed_form(p2):
    # f = 1: the integrand is 2 Q_s(W^2) with W^2 = 1 + |x|^2, so from x = 0
    # the integral is 2 int_0^t (1 + 2(1-e^{-2s})) ds = 6t - 4t... computed below
    t = 0.25
    want = 0.0
    nodes = np.linspace(0.0, t, 2001)
    vals = 2.0 * (1.0 + 2.0 * (1.0 - np.exp(-2.0 * nodes)))
    want = float(np.trapezoid(vals, nodes))
    got = mehler_fk_term(p2, const_field(1.0, 2), np.zeros(2), t)
    assert got == pytest.approx(want, rel=1e-6)


def test_grad_qt_gaussian_shortcut(p2, small_mc):
    f = parse_field("exp(0.2*x0)", 2)
    est = estimate_grad_Qt(p2, f, [0.3, 0.0], 0.4, small_mc)
    assert not est.unusable
    assert np.array_equal(est.stderr, np.zeros(2))
    assert np.allclose(est.grad, mehler_grad_Qt(p2, f, [0.3, 0.0], 0.4))


def test_grad_qt_crn_constant_field():
    # common random numbers cancel exactly for constant f
    p = make_problem(2, "normsq(x)/2 + 0.01*x0^4", "sqrt1sq")
    cfg = MCConfig(n_paths=500, dt=0.01, seed=3)
    est = estimate_grad_Qt(p, const_field(3.0, 2), [0.5, 0.5], 0.2, cfg)
    assert np.array_equal(est.grad, np.zeros(2))
    assert np.array_equal(est.stderr, np.zeros(2))


def test_grad_qt_stderr_cap_flags_unusable():
    p = make_problem(2, "normsq(x)/2 + 0.01*x0^4", "sqrt1sq")
    cfg = MCConfig(n_paths=100, dt=0.02, seed=3, stderr_cap=1e-12)
    f = parse_field("exp(0.5*x0)*x1", 2)
    est = estimate_grad_Qt(p, f, [0.5, 0.5], 0.3, cfg)
    assert est.unusable


def test_blow_up_detection():
    p = make_problem(1, "-x0^4", "zero")
    cfg = MCConfig(n_paths=50, dt=0.1, seed=0, antithetic=False)
    with pytest.raises(PathBlowUpError):
        em_path(p, [3.0], 2.0, cfg, ZeroNoise())
    with pytest.raises(AggregatePathFailure):
        estimate_Qt(p, parse_field("x0", 1), [3.0], 2.0, cfg)


def test_gaussian_exp_moment():
    mean = np.array([1.0, -2.0])
    b = np.array([0.3, 0.4])
    want = math.exp(0.3 - 0.8 + 0.5 * 0.7 * 0.25)
    assert gaussian_exp_moment(mean, 0.7, b) == pytest.approx(want, rel=1e-15)
