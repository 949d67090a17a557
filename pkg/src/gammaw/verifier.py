"""Inequality verification harness for the weighted semigroup bounds.

Each checker runs over a (t, x) grid, estimates both sides of its
inequality, and issues a three-valued verdict per case:

* ``pass``          margin >= -3 margin_stderr (plus a tiny roundoff slack);
* ``fail``          margin below the noise band with both sides estimated
                    tightly (relative standard error under the cap);
* ``inconclusive``  the noise is too large to call it either way.

Margins are rhs - lhs, so nonnegative means the inequality holds.  Every
case records the sampling configuration that produced it, and reports
serialize to a fixed CSV schema

    check_id, t, x0..x{n-1}, f_label, lhs, lhs_se, rhs, rhs_se, margin, verdict

with ``repr`` float formatting so reruns are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .field_expr import ProblemSpec, ScalarField, const_field, dot_field, normsq_field
from .gamma_calculus import (
    gamma2_w,
    gamma_w,
    gamma_w_field,
    sqrt_gamma_w_field,
)
from .semigroup_mc import (
    MCConfig,
    estimate_fk_term,
    estimate_grad_Qt,
    estimate_Qt,
    estimate_Qt_sq,
    mehler_grad_Qt,
    mehler_Qt,
)

__all__ = [
    "CaseResult",
    "VerificationReport",
    "battery",
    "exp_field",
    "verify_commutation",
    "verify_variance",
    "verify_sqrt_commutation",
    "degenerate_w_check",
    "optimality_study",
    "OptimalityRow",
    "OptimalityTable",
    "run_battery",
    "random_smooth_field",
    "random_weight_field",
    "random_problem",
]

STDERR_CAP_REL = 0.05  # relative stderr above which verdicts become inconclusive
PASS_SLACK_REL = 1e-9  # roundoff slack so exact equality cases pass at stderr 0


@dataclass(frozen=True)
class CaseResult:
    check_id: str
    t: float
    x: np.ndarray
    f_label: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    verdict: str
    meta: dict

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def margin_stderr(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)


@dataclass
class VerificationReport:
    check_id: str
    cases: list[CaseResult] = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    @property
    def n_fail(self) -> int:
        return sum(c.verdict == "fail" for c in self.cases)

    @property
    def n_inconclusive(self) -> int:
        return sum(c.verdict == "inconclusive" for c in self.cases)

    @property
    def passed(self) -> bool:
        return self.n_fail == 0

    @property
    def inconclusive_fraction(self) -> float:
        return self.n_inconclusive / len(self.cases) if self.cases else 0.0

    def merged(self, other: "VerificationReport") -> "VerificationReport":
        if other.check_id != self.check_id:
            raise ValueError("cannot merge reports of different checks")
        return VerificationReport(
            check_id=self.check_id,
            cases=self.cases + other.cases,
            meta={**self.meta, **other.meta},
        )

    def csv_lines(self) -> list[str]:
        if not self.cases:
            return []
        dim = self.cases[0].x.shape[0]
        header = ["check_id", "t"] + [f"x{i}" for i in range(dim)] + [
            "f_label",
            "lhs",
            "lhs_se",
            "rhs",
            "rhs_se",
            "margin",
            "verdict",
        ]
        lines = [",".join(header)]
        for c in self.cases:
            row = [c.check_id, repr(float(c.t))]
            row += [repr(float(v)) for v in c.x]
            row += [
                c.f_label,
                repr(float(c.lhs)),
                repr(float(c.lhs_se)),
                repr(float(c.rhs)),
                repr(float(c.rhs_se)),
                repr(float(c.margin)),
                c.verdict,
            ]
            lines.append(",".join(row))
        return lines

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")

    def summary(self) -> str:
        n = len(self.cases)
        lines = [
            f"check {self.check_id}: {n} cases, "
            f"{n - self.n_fail - self.n_inconclusive} pass, "
            f"{self.n_fail} fail, {self.n_inconclusive} inconclusive"
        ]
        if self.meta:
            lines.append("  config: " + ", ".join(f"{k}={v}" for k, v in sorted(self.meta.items())))
        if self.cases:
            worst = min(self.cases, key=lambda c: c.margin)
            lines.append(
                f"  worst margin {worst.margin:.6g} "
                f"(t={worst.t:g}, x={np.array2string(worst.x, separator=',')}, f={worst.f_label})"
            )
        return "\n".join(lines)


def _verdict(lhs: float, lhs_se: float, rhs: float, rhs_se: float) -> str:
    scale = max(abs(lhs), abs(rhs), 1.0)
    if not (math.isfinite(lhs_se) and math.isfinite(rhs_se)):
        return "inconclusive"
    if lhs_se > STDERR_CAP_REL * scale or rhs_se > STDERR_CAP_REL * scale:
        return "inconclusive"
    margin = rhs - lhs
    if margin >= -3.0 * math.hypot(lhs_se, rhs_se) - PASS_SLACK_REL * scale:
        return "pass"
    return "fail"


def _case(check_id, t, x, label, lhs, lhs_se, rhs, rhs_se, meta) -> CaseResult:
    return CaseResult(
        check_id=check_id,
        t=float(t),
        x=np.asarray(x, dtype=float),
        f_label=label,
        lhs=float(lhs),
        lhs_se=float(lhs_se),
        rhs=float(rhs),
        rhs_se=float(rhs_se),
        verdict=_verdict(lhs, lhs_se, rhs, rhs_se),
        meta=meta,
    )


def _meta(cfg: MCConfig, **extra) -> dict:
    return {
        "seed": cfg.seed,
        "n_paths": cfg.n_paths,
        "dt": cfg.dt,
        "antithetic": cfg.antithetic,
        **extra,
    }


# ---------------------------------------------------------------------------
# Test-function battery
# ---------------------------------------------------------------------------


def exp_field(a, dim: int) -> ScalarField:
    """f(x) = exp(a . x), the extremal family for the weighted bounds."""
    return dot_field(a, dim).exp()


def battery(dim: int) -> list[tuple[str, ScalarField]]:
    """Five positive test functions: three exponentials, a quadratic
    polynomial bounded away from zero, and a Gaussian bump."""
    e1 = np.zeros(dim)
    e1[0] = 1.0
    diag = np.full(dim, 0.5)
    x0 = ScalarField.parse("x0", dim)
    return [
        ("exp_a0.1", exp_field(0.1 * e1, dim)),
        ("exp_a1.0", exp_field(e1, dim)),
        ("exp_diag", exp_field(diag, dim)),
        ("poly_quad", 1.0 + x0 + x0 * x0),
        ("bump", (-normsq_field(dim)).exp()),
    ]


def run_battery(op, p: ProblemSpec, fields, *args, **kwargs) -> VerificationReport:
    """Run a verifier op over labelled fields and merge the reports."""
    report: VerificationReport | None = None
    for label, f in fields:
        r = op(p, f, *args, f_label=label, **kwargs)
        report = r if report is None else report.merged(r)
    return report if report is not None else VerificationReport(check_id="empty")


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------


def _lhs_gamma_w_of_qt(p: ProblemSpec, f: ScalarField, x, t: float, cfg: MCConfig):
    """GammaW(Q_t f)(x) and its stderr: exact via Mehler for Gaussian U,
    otherwise common-random-number finite differences plus a delta-method
    error bar."""
    w = p.W.value(x)
    if p.gaussian_U:
        qt = mehler_Qt(p, f, x, t)
        grad = mehler_grad_Qt(p, f, x, t)
        return float(grad @ grad) + w * w * qt * qt, 0.0, qt, grad
    gest = estimate_grad_Qt(p, f, x, t, cfg)
    qt_est = estimate_Qt(p, f, x, t, cfg, stream=(5,))
    grad, qt = gest.grad, qt_est.mean
    lhs = float(grad @ grad) + w * w * qt * qt
    var = float(np.sum((2.0 * grad * gest.stderr) ** 2))
    var += (2.0 * w * w * qt * qt_est.stderr) ** 2
    se = math.inf if gest.unusable else math.sqrt(var)
    return lhs, se, qt, grad


def verify_commutation(
    p: ProblemSpec,
    f: ScalarField,
    kappa: float,
    t_grid,
    x_grid,
    cfg: MCConfig,
    f_label: str = "f",
) -> VerificationReport:
    """GammaW(Q_t f) <= e^{-2 kappa t} Q_t(GammaW(f)) over the grid."""
    gw_f = gamma_w_field(p, f, f)
    report = VerificationReport("commutation", meta=_meta(cfg, kappa=kappa))
    for t in t_grid:
        for x in x_grid:
            lhs, lhs_se, _, _ = _lhs_gamma_w_of_qt(p, f, x, t, cfg)
            rhs_est = estimate_Qt(p, gw_f, x, t, cfg, stream=(0,))
            coef = math.exp(-2.0 * kappa * t)
            report.cases.append(
                _case(
                    "commutation", t, x, f_label,
                    lhs, lhs_se,
                    coef * rhs_est.mean, coef * rhs_est.stderr,
                    _meta(cfg, kappa=kappa),
                )
            )
    return report


def verify_variance(
    p: ProblemSpec,
    f: ScalarField,
    kappa: float,
    t_grid,
    x_grid,
    cfg: MCConfig,
    f_label: str = "f",
    time_nodes: int = 21,
) -> VerificationReport:
    """Q_t(f^2) - (Q_t f)^2 + 2 int_0^t Q_s(W^2 (Q_{t-s} f)^2) ds
    <= (1 - e^{-2 kappa t})/kappa Q_t(GammaW(f)), with the kappa -> 0
    coefficient meaning 2t."""
    gw_f = gamma_w_field(p, f, f)
    f_sq = f * f
    report = VerificationReport("variance", meta=_meta(cfg, kappa=kappa, time_nodes=time_nodes))
    for t in t_grid:
        for x in x_grid:
            qt_fsq = estimate_Qt(p, f_sq, x, t, cfg, stream=(6,))
            qt_sq = estimate_Qt_sq(p, f, x, t, cfg)
            fk = estimate_fk_term(p, f, x, t, time_nodes, cfg)
            lhs = qt_fsq.mean - qt_sq.mean + fk.mean
            lhs_se = math.sqrt(qt_fsq.stderr**2 + qt_sq.stderr**2 + fk.stderr**2)
            coef = _variance_coefficient(kappa, t)
            rhs_est = estimate_Qt(p, gw_f, x, t, cfg, stream=(0,))
            report.cases.append(
                _case(
                    "variance", t, x, f_label,
                    lhs, lhs_se,
                    coef * rhs_est.mean, coef * rhs_est.stderr,
                    _meta(cfg, kappa=kappa, time_nodes=time_nodes),
                )
            )
    return report


def _variance_coefficient(kappa: float, t: float) -> float:
    if kappa == 0.0:
        return 2.0 * t
    return (1.0 - math.exp(-2.0 * kappa * t)) / kappa


class NegativeBatteryError(ValueError):
    """The square-root commutation check needs a nonnegative test function."""


def _reject_negative(f: ScalarField, x_grid, dim: int) -> None:
    pts = [np.asarray(x, dtype=float) for x in x_grid]
    rng = np.random.default_rng(0)
    sample = rng.uniform(-6.0, 6.0, size=(512, dim))
    for x in list(pts) + list(sample):
        if f.value(x) < 0.0:
            raise NegativeBatteryError(f"test function is negative at {x!r}")


def verify_sqrt_commutation(
    p: ProblemSpec,
    f: ScalarField,
    rho: float,
    c: float,
    t_grid,
    x_grid,
    cfg: MCConfig,
    f_label: str = "f",
) -> VerificationReport:
    """sqrt(Gamma(Q_t f)) + W Q_t f <= e^{(c-rho)t} Q_t(sqrt(Gamma(f)) + W f)
    for nonnegative f."""
    _reject_negative(f, x_grid, p.dim)
    payload = sqrt_gamma_w_field(p, f)
    report = VerificationReport("sqrt", meta=_meta(cfg, rho=rho, c=c))
    for t in t_grid:
        for x in x_grid:
            w = p.W.value(x)
            if p.gaussian_U:
                qt = mehler_Qt(p, f, x, t)
                grad = mehler_grad_Qt(p, f, x, t)
                lhs = float(np.linalg.norm(grad)) + w * qt
                lhs_se = 0.0
            else:
                gest = estimate_grad_Qt(p, f, x, t, cfg)
                qt_est = estimate_Qt(p, f, x, t, cfg, stream=(5,))
                norm = float(np.linalg.norm(gest.grad))
                lhs = norm + w * qt_est.mean
                if gest.unusable:
                    lhs_se = math.inf
                else:
                    dir_se = (
                        float(np.linalg.norm(gest.grad * gest.stderr)) / norm
                        if norm > 0.0
                        else float(np.linalg.norm(gest.stderr))
                    )
                    lhs_se = math.hypot(dir_se, w * qt_est.stderr)
            rhs_est = estimate_Qt(p, payload, x, t, cfg, stream=(0,))
            coef = math.exp((c - rho) * t)
            report.cases.append(
                _case(
                    "sqrt", t, x, f_label,
                    lhs, lhs_se,
                    coef * rhs_est.mean, coef * rhs_est.stderr,
                    _meta(cfg, rho=rho, c=c),
                )
            )
    return report


def degenerate_w_check(
    p: ProblemSpec,
    kappa: float,
    t_grid,
    x_grid,
    cfg: MCConfig,
) -> VerificationReport:
    """W(x)^2 <= e^{-2 kappa t} Q_t(W^2)(x): the constant-function reduction
    of the commutation bound (take f = 1, so GammaW(f) = W^2)."""
    w_sq = p.W * p.W
    report = VerificationReport("degenerate", meta=_meta(cfg, kappa=kappa))
    for t in t_grid:
        for x in x_grid:
            w = p.W.value(x)
            rhs_est = estimate_Qt(p, w_sq, x, t, cfg, stream=(0,))
            coef = math.exp(-2.0 * kappa * t)
            report.cases.append(
                _case(
                    "degenerate", t, x, "W^2",
                    w * w, 0.0,
                    coef * rhs_est.mean, coef * rhs_est.stderr,
                    _meta(cfg, kappa=kappa),
                )
            )
    return report


# ---------------------------------------------------------------------------
# Optimality study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OptimalityRow:
    a: np.ndarray
    radius: float
    ratio: float
    limit: float  # -1 + |a|^2


@dataclass
class OptimalityTable:
    rows: list[OptimalityRow]
    radii: tuple[float, ...]

    @property
    def best_kappa(self) -> float:
        r_max = max(self.radii)
        return min(r.ratio for r in self.rows if r.radius == r_max)

    def check(self, tol: float = 1e-2) -> bool:
        r_max = max(self.radii)
        at_limit = all(
            abs(r.ratio - r.limit) <= tol for r in self.rows if r.radius == r_max
        )
        return at_limit and abs(self.best_kappa - (-1.0)) <= tol

    def csv_lines(self) -> list[str]:
        dim = self.rows[0].a.shape[0] if self.rows else 0
        header = [f"a{i}" for i in range(dim)] + ["radius", "ratio", "limit", "abs_err"]
        lines = [",".join(header)]
        for r in self.rows:
            vals = [repr(float(v)) for v in r.a]
            vals += [
                repr(float(r.radius)),
                repr(float(r.ratio)),
                repr(float(r.limit)),
                repr(abs(float(r.ratio - r.limit))),
            ]
            lines.append(",".join(vals))
        return lines


def optimality_study(p: ProblemSpec, a_list, radius_list) -> OptimalityTable:
    """Ratio Gamma2W(f_a)/GammaW(f_a) along x = r a/|a| for each a and r.

    The exponential is recentered as e^{a.(x - x_r)} before evaluating; both
    operators are quadratic in f, so the ratio is unchanged and the huge
    factor e^{2 a . x_r} never materializes.
    """
    if not p.gaussian_U:
        raise ValueError("the optimality study is for the Gaussian potential")
    if p.dim < 2:
        raise ValueError("the optimality study needs dim >= 2")
    rows: list[OptimalityRow] = []
    for a in a_list:
        a = np.asarray(a, dtype=float)
        norm = float(np.linalg.norm(a))
        direction = a / norm if norm > 0 else np.eye(p.dim)[0]
        limit = -1.0 + norm * norm
        for r in radius_list:
            x = float(r) * direction
            f = (dot_field(a, p.dim) - float(a @ x)).exp()
            ratio = gamma2_w(p, f, x) / gamma_w(p, f, f, x)
            rows.append(OptimalityRow(a=a, radius=float(r), ratio=float(ratio), limit=limit))
    return OptimalityTable(rows=rows, radii=tuple(float(r) for r in radius_list))


# ---------------------------------------------------------------------------
# Random smooth fields (for algebra identities and pointwise sweeps)
# ---------------------------------------------------------------------------


def random_smooth_field(rng: np.random.Generator, dim: int, depth: int = 3) -> ScalarField:
    """A random field that is C-infinity on all of R^n.

    Coefficients are kept small so values stay moderate on |x| <= 3; growth
    is at most exp(linear) times polynomial.
    """

    def leaf() -> ScalarField:
        k = rng.integers(0, 4)
        if k == 0:
            return const_field(rng.uniform(-2.0, 2.0), dim)
        if k == 1:
            i = int(rng.integers(0, dim))
            return ScalarField.parse(f"x{i}", dim)
        if k == 2:
            return dot_field(rng.uniform(-1.0, 1.0, size=dim), dim)
        return rng.uniform(0.05, 0.5) * normsq_field(dim)

    def gen(d: int) -> ScalarField:
        if d == 0:
            return leaf()
        k = rng.integers(0, 8)
        if k <= 1:
            return gen(d - 1) + gen(d - 1)
        if k == 2:
            return gen(d - 1) - gen(d - 1)
        if k == 3:
            return gen(d - 1) * gen(d - 1)
        if k == 4:
            return dot_field(rng.uniform(-0.7, 0.7, size=dim), dim).exp()
        if k == 5:
            g = gen(d - 1)
            return (1.0 + g * g).sqrt()
        if k == 6:
            g = gen(d - 1)
            return 1.0 / (1.0 + g * g)
        return (-rng.uniform(0.1, 1.0) * normsq_field(dim)).exp()

    return gen(depth)


def random_weight_field(rng: np.random.Generator, dim: int) -> ScalarField:
    """A random pointwise-nonnegative smooth weight."""
    k = rng.integers(0, 3)
    if k == 0:
        g = random_smooth_field(rng, dim, depth=2)
        return (1.0 + g * g).sqrt()
    if k == 1:
        g = random_smooth_field(rng, dim, depth=1)
        return 0.5 + g * g
    return dot_field(rng.uniform(-0.5, 0.5, size=dim), dim).exp()


def random_problem(rng: np.random.Generator, dim: int) -> ProblemSpec:
    """Random smooth (U, W) pair for pointwise identity sweeps."""
    return ProblemSpec(
        dim=dim,
        U=random_smooth_field(rng, dim, depth=2),
        W=random_weight_field(rng, dim),
    )
