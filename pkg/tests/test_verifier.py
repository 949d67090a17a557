import math

import numpy as np
import pytest

from gammaw.field_expr import parse_field
from gammaw.presets import gaussian_problem
from gammaw.semigroup_mc import MCConfig
from gammaw.verifier import (
    NegativeBatteryError,
    OptimalityTable,
    VerificationReport,
    _verdict,
    battery,
    degenerate_w_check,
    exp_field,
    optimality_study,
    random_smooth_field,
    random_weight_field,
    run_battery,
    verify_commutation,
    verify_sqrt_commutation,
    verify_variance,
)


def test_verdict_rules():
    assert _verdict(1.0, 0.0, 1.0, 0.0) == "pass"  # exact tie
    assert _verdict(1.0, 0.0, 2.0, 0.0) == "pass"
    assert _verdict(1.0, 1e-6, 0.9, 1e-6) == "fail"
    # wide error bars: no verdict either way
    assert _verdict(1.0, 0.5, 0.9, 1e-6) == "inconclusive"
    assert _verdict(1.0, 1e-6, 0.9, 0.5) == "inconclusive"
    assert _verdict(1.0, math.inf, 2.0, 0.0) == "inconclusive"
    assert _verdict(1.0, math.nan, 2.0, 0.0) == "inconclusive"
    # slightly below zero but within the noise band
    assert _verdict(1.0, 0.01, 0.99, 0.01) == "pass"
    # stderr cap scales with the magnitude of the sides
    assert _verdict(100.0, 2.0, 110.0, 0.0) == "pass"


def test_battery_shape_and_positivity(rng):
    fields = battery(2)
    labels = [name for name, _ in fields]
    assert labels == ["exp_a0.1", "exp_a1.0", "exp_diag", "poly_quad", "bump"]
    for _, f in fields:
        for _ in range(50):
            assert f.value(rng.uniform(-6, 6, size=2)) > 0.0


def test_exp_field(p2):
    f = exp_field([0.3, -0.1], 2)
    assert f.value([1.0, 2.0]) == pytest.approx(math.exp(0.1))


def test_commutation_passes_small_grid(p2):
    cfg = MCConfig(n_paths=4000, dt=5e-3, seed=21)
    f = exp_field([0.1, 0.0], 2)
    rep = verify_commutation(p2, f, -1.0, (0.1, 0.5), ((0.0, 0.0), (1.0, 1.0)), cfg)
    assert len(rep.cases) == 4
    assert rep.n_fail == 0
    assert rep.n_inconclusive == 0
    assert rep.passed


def test_commutation_margin_monotone_in_kappa(p2):
    # raising kappa shrinks the rhs, so margins can only drop
    cfg = MCConfig(n_paths=2000, dt=5e-3, seed=22)
    f = exp_field([1.0, 0.0], 2)
    grid = ((2.0, 0.0),)
    margins = []
    for kappa in (-2.0, -1.0, 0.0, 1.0):
        rep = verify_commutation(p2, f, kappa, (1.0,), grid, cfg)
        margins.append(rep.cases[0].margin)
    assert all(b < a for a, b in zip(margins, margins[1:]))


def test_commutation_detects_false_kappa(p2):
    # kappa far above the curvature bound must fail far from the origin
    cfg = MCConfig(n_paths=4000, dt=5e-3, seed=23)
    f = exp_field([0.1, 0.0], 2)
    rep = verify_commutation(p2, f, 5.0, (1.0,), ((10.0, 0.0),), cfg)
    assert rep.n_fail == 1
    assert not rep.passed


def test_t_zero_margins_vanish(p2, small_mc):
    f = exp_field([0.5, 0.0], 2)
    rep = verify_commutation(p2, f, -1.0, (0.0,), ((0.7, -0.3),), small_mc)
    case = rep.cases[0]
    assert case.margin == pytest.approx(0.0, abs=1e-12)
    assert case.verdict == "pass"


def test_variance_small_grid(p2):
    cfg = MCConfig(n_paths=4000, dt=5e-3, seed=24)
    f = exp_field([0.1, 0.0], 2)
    rep = verify_variance(p2, f, -1.0, (0.1,), ((0.0, 0.0),), cfg, time_nodes=5)
    assert rep.n_fail == 0
    assert rep.cases[0].meta["time_nodes"] == 5


def test_variance_t_zero(p2, small_mc):
    f = exp_field([0.2, 0.0], 2)
    rep = verify_variance(p2, f, -1.0, (0.0,), ((0.4, 0.4),), small_mc, time_nodes=5)
    case = rep.cases[0]
    assert case.lhs == pytest.approx(0.0, abs=1e-12)
    assert case.rhs == pytest.approx(0.0, abs=1e-12)
    assert case.verdict == "pass"


def test_sqrt_commutation_small_grid(p2):
    cfg = MCConfig(n_paths=4000, dt=5e-3, seed=25)
    f = exp_field([0.1, 0.0], 2)
    rep = verify_sqrt_commutation(p2, f, 1.0, 2.0, (0.1, 0.5), ((0.0, 0.0),), cfg)
    assert rep.n_fail == 0
    assert rep.meta["rho"] == 1.0 and rep.meta["c"] == 2.0


def test_sqrt_commutation_rejects_negative_f(p2, small_mc):
    with pytest.raises(NegativeBatteryError):
        verify_sqrt_commutation(
            p2, parse_field("x0", 2), 1.0, 2.0, (0.1,), ((0.0, 0.0),), small_mc
        )


def test_degenerate_w_check(p2):
    cfg = MCConfig(n_paths=4000, dt=5e-3, seed=26)
    rep = degenerate_w_check(p2, -1.0, (0.1, 1.0), ((0.0, 0.0), (2.0, 0.0)), cfg)
    assert rep.n_fail == 0
    for case in rep.cases:
        assert case.f_label == "W^2"
        assert case.lhs_se == 0.0
        assert case.lhs == pytest.approx(1.0 + case.x @ case.x)


def test_run_battery_merges(p2):
    cfg = MCConfig(n_paths=2000, dt=1e-2, seed=27)
    rep = run_battery(
        verify_commutation, p2, battery(2), -1.0, (0.1,), ((0.0, 0.0),), cfg
    )
    assert len(rep.cases) == 5
    assert {c.f_label for c in rep.cases} == {name for name, _ in battery(2)}


def test_report_merge_requires_same_check():
    a = VerificationReport(check_id="commutation")
    b = VerificationReport(check_id="variance")
    with pytest.raises(ValueError):
        a.merged(b)


def test_csv_schema_and_determinism(p2, tmp_path):
    cfg = MCConfig(n_paths=2000, dt=1e-2, seed=28)
    f = exp_field([0.1, 0.0], 2)

    def run():
        return verify_commutation(p2, f, -1.0, (0.1,), ((0.5, -0.5),), cfg)

    rep = run()
    lines = rep.csv_lines()
    assert lines[0] == "check_id,t,x0,x1,f_label,lhs,lhs_se,rhs,rhs_se,margin,verdict"
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert cells[0] == "commutation"
    assert float(cells[1]) == 0.1
    assert cells[-1] in ("pass", "fail", "inconclusive")
    # margin column is rhs - lhs of the same row
    assert float(cells[-2]) == pytest.approx(float(cells[7]) - float(cells[5]), abs=0)
    # reruns serialize byte-identically
    assert run().csv_lines() == lines
    out = tmp_path / "report.csv"
    rep.write_csv(out)
    assert out.read_text().strip().splitlines() == lines


def test_inconclusive_fraction_counts():
    rep = VerificationReport(check_id="x")
    assert rep.inconclusive_fraction == 0.0
    assert rep.passed


def test_optimality_study_reaches_limit(p2):
    table = optimality_study(
        p2, [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)], [10.0, 100.0, 1000.0]
    )
    assert isinstance(table, OptimalityTable)
    assert len(table.rows) == 9
    for row in table.rows:
        if row.radius == 1000.0:
            assert abs(row.ratio - row.limit) <= 1e-2
    assert table.best_kappa == pytest.approx(-1.0, abs=1e-2)
    assert table.check(1e-2)
    header = table.csv_lines()[0]
    assert header == "a0,a1,radius,ratio,limit,abs_err"


def test_optimality_study_validation(p2):
    from gammaw.presets import make_problem

    with pytest.raises(ValueError):
        optimality_study(gaussian_problem(1), [(0.1,)], [10.0])
    with pytest.raises(ValueError):
        optimality_study(make_problem(2, "normsq(x)", "sqrt1sq"), [(0.1, 0.0)], [10.0])


def test_random_fields_are_usable(rng):
    for _ in range(20):
        dim = int(rng.integers(1, 4))
        f = random_smooth_field(rng, dim)
        w = random_weight_field(rng, dim)
        for _ in range(10):
            x = rng.uniform(-3, 3, size=dim)
            assert math.isfinite(f.value(x))
            assert w.value(x) >= 0.0
