"""Global bound estimation: rho, gamma, c, and the pointwise curvature check.

The three constants are extrema over all of R^n:

    rho   = inf_x  lambda_min(Hess U(x))
    gamma = inf_{W(x) != 0}  (lap W/W - 3|grad W|^2/W^2 - grad U . grad W/W)
    c     = max( 2 sup_x |grad W(x)|,
                 sup_{W(x) != 0} max(rho - LW/W, 0) )

Each is approximated over an increasing schedule of boxes [-R, R]^n: a dense
grid for n <= 2, plus deterministic probes (corners, axis endpoints,
log-spaced radial rays) and multistart Nelder-Mead refinement clamped to the
box.  Extrema that keep escaping to larger radii are reported as diverging
(value -inf or +inf) with the per-radius trace attached; the rule is a
heuristic and the trace is always kept so callers can judge.

``check_pointwise_cd`` tests the curvature inequality Gamma2W >= kappa GammaW
point by point and reports violations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _tape
from .field_expr import DomainError, ProblemSpec, ScalarField
from .gamma_calculus import (
    WEIGHT_EPS,
    WeightVanishesError,
    apply_L_symbolic,
    gamma2_w,
    gamma_field,
    gamma_integrand,
    gamma_integrand_field,
    gamma_w,
)

__all__ = [
    "SearchConfig",
    "BoundEstimate",
    "ViolationReport",
    "estimate_rho",
    "estimate_gamma",
    "estimate_c",
    "check_pointwise_cd",
]


@dataclass(frozen=True)
class SearchConfig:
    box_radius: float = 10.0
    radii_schedule: tuple[float, ...] = (10.0, 100.0, 1000.0)
    grid_per_axis: int = 64
    multistart_count: int = 8
    local_steps: int = 300
    seed: int = 0
    tol: float = 1e-6

    def __post_init__(self):
        if self.box_radius <= 0:
            raise ValueError("box_radius must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        radii = tuple(float(r) for r in self.radii_schedule)
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("radii_schedule must be strictly increasing")
        object.__setattr__(self, "radii_schedule", radii)


@dataclass
class BoundEstimate:
    """Estimated extremum with witness, per-radius trace, divergence verdict.

    ``value`` is +-inf when diverging; the witness then marks the extremum at
    the largest radius (and reproduces the last trace entry, not ``value``).
    """

    value: float
    witness: np.ndarray | None
    diverging: bool
    trace: list[float] = dc_field(default_factory=list)


@dataclass
class ViolationReport:
    n_checked: int
    n_violations: int
    n_domain_errors: int
    worst_margin: float | None
    worst_point: np.ndarray | None
    tol: float


# ---------------------------------------------------------------------------
# Candidate generation and the generic box extremizer
# ---------------------------------------------------------------------------


def _candidate_points(radius: float, dim: int, cfg: SearchConfig, rng: np.random.Generator) -> np.ndarray:
    pts: list[np.ndarray] = []
    if dim <= 2:
        axis = np.linspace(-radius, radius, cfg.grid_per_axis)
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
        pts.append(grid.reshape(-1, dim))
    if dim <= 6:
        corners = np.array(list(itertools.product((-radius, radius), repeat=dim)))
        pts.append(corners)
    eye = np.eye(dim)
    pts.append(radius * np.vstack([eye, -eye]))
    pts.append(np.zeros((1, dim)))

    dirs = [eye[i] for i in range(dim)]
    dirs.append(np.ones(dim) / math.sqrt(dim))
    extra = rng.standard_normal((6, dim))
    dirs.extend(d / np.linalg.norm(d) for d in extra)
    for d in dirs:
        r_max = radius / np.max(np.abs(d))
        radii = np.geomspace(1e-2, r_max, 40)
        ray = radii[:, None] * d[None, :]
        pts.append(ray)
        pts.append(-ray)

    pts.append(rng.uniform(-radius, radius, size=(256, dim)))
    return np.vstack(pts)


def _diverging(trace: Sequence[float], tol: float) -> bool:
    """Monotone unbounded-descent rule on a minimization trace.

    True iff every consecutive pair drops by more than tol and the last drop
    exceeds the first (needs >= 3 radii to ever trigger).
    """
    finite = [v for v in trace if math.isfinite(v)]
    if len(finite) != len(trace) or len(trace) < 3:
        return False
    drops = [a - b for a, b in zip(trace, trace[1:])]
    return all(d > tol for d in drops) and drops[-1] > drops[0]


def _extremize_min(
    batch_values: Callable[[np.ndarray], np.ndarray],
    local_objective: Callable[[np.ndarray], float],
    dim: int,
    cfg: SearchConfig,
) -> BoundEstimate:
    """Minimize over the radii schedule; batch_values returns NaN to skip."""
    rng = np.random.default_rng(cfg.seed)
    best_val = math.inf
    best_pt: np.ndarray | None = None
    trace: list[float] = []
    for radius in cfg.radii_schedule:
        cand = _candidate_points(radius, dim, cfg, rng)
        vals = batch_values(cand)
        ok = np.isfinite(vals)
        if ok.any():
            order = int(np.nanargmin(np.where(ok, vals, np.nan)))
            if vals[order] < best_val:
                best_val = float(vals[order])
                best_pt = cand[order].copy()
        # local refinement from the best few candidates plus random starts
        starts: list[np.ndarray] = []
        if ok.any():
            idx = np.argsort(np.where(ok, vals, np.inf))[:4]
            starts.extend(cand[i] for i in idx)
        starts.extend(rng.uniform(-radius, radius, size=(cfg.multistart_count, dim)))
        clamped = _clamped(local_objective, radius)
        for x0 in starts:
            res = minimize(
                clamped,
                np.clip(x0, -radius, radius),
                method="Nelder-Mead",
                options={
                    "maxiter": cfg.local_steps,
                    "xatol": 1e-10,
                    "fatol": 1e-13,
                },
            )
            if math.isfinite(res.fun) and res.fun < best_val:
                pt = np.clip(res.x, -radius, radius)
                val = clamped(pt)
                if val < best_val:
                    best_val = float(val)
                    best_pt = pt
        trace.append(best_val)
    diverging = _diverging(trace, cfg.tol)
    return BoundEstimate(
        value=-math.inf if diverging else best_val,
        witness=best_pt,
        diverging=diverging,
        trace=trace,
    )


def _clamped(objective: Callable[[np.ndarray], float], radius: float) -> Callable[[np.ndarray], float]:
    def wrapped(x: np.ndarray) -> float:
        return objective(np.clip(x, -radius, radius))

    return wrapped


def _negated(est: BoundEstimate) -> BoundEstimate:
    return BoundEstimate(
        value=-est.value,
        witness=est.witness,
        diverging=est.diverging,
        trace=[-v for v in est.trace],
    )


# ---------------------------------------------------------------------------
# rho: infimum of the smallest Hessian eigenvalue of U
# ---------------------------------------------------------------------------


def estimate_rho(p: ProblemSpec, s: SearchConfig) -> BoundEstimate:
    """inf over the box schedule of lambda_min(Hess U); exact 1 for Gaussian U."""
    if p.gaussian_U:
        return BoundEstimate(
            value=1.0,
            witness=np.zeros(p.dim),
            diverging=False,
            trace=[1.0] * len(s.radii_schedule),
        )
    n = p.dim
    entries = [[p.U.diff(i).diff(j) for j in range(n)] for i in range(n)]

    def batch(pts: np.ndarray) -> np.ndarray:
        m = pts.shape[0]
        hess = np.empty((m, n, n))
        bad = np.zeros(m, dtype=bool)
        for i in range(n):
            for j in range(i, n):
                vals, err = _tape.eval_values(entries[i][j], pts)
                hess[:, i, j] = hess[:, j, i] = vals
                bad |= err != 0
        out = np.full(m, np.nan)
        if (~bad).any():
            out[~bad] = np.linalg.eigvalsh(hess[~bad])[:, 0]
        return out

    def local(x: np.ndarray) -> float:
        try:
            return float(np.linalg.eigvalsh(p.U.jet(x, 2).hessian)[0])
        except DomainError:
            return math.inf

    return _extremize_min(batch, local, n, s)


# ---------------------------------------------------------------------------
# gamma: infimum of the curvature integrand over {W != 0}
# ---------------------------------------------------------------------------


def estimate_gamma(p: ProblemSpec, s: SearchConfig) -> BoundEstimate:
    """inf of the curvature integrand; +inf for W = 0 (empty domain)."""
    if p.W.is_zero():
        return BoundEstimate(
            value=math.inf,
            witness=None,
            diverging=False,
            trace=[math.inf] * len(s.radii_schedule),
        )
    integrand = gamma_integrand_field(p)

    def batch(pts: np.ndarray) -> np.ndarray:
        w_vals, w_err = _tape.eval_values(p.W, pts)
        vals, err = _tape.eval_values(integrand, pts)
        skip = (err != 0) | (w_err != 0) | (np.abs(w_vals) < WEIGHT_EPS)
        return np.where(skip, np.nan, vals)

    def local(x: np.ndarray) -> float:
        try:
            return gamma_integrand(p, x)
        except (WeightVanishesError, DomainError):
            return math.inf

    return _extremize_min(batch, local, p.dim, s)


# ---------------------------------------------------------------------------
# c: max of the two supremum branches
# ---------------------------------------------------------------------------


def estimate_c(p: ProblemSpec, rho: float, s: SearchConfig) -> BoundEstimate:
    """max(2 sup|grad W|, sup over {W != 0} of (LW/W - rho)_-), by box search.

    Diverging means c = +inf and the square-root commutation bound carries no
    information for this weight.
    """
    if p.W.is_zero():
        return BoundEstimate(
            value=0.0,
            witness=np.zeros(p.dim),
            diverging=False,
            trace=[0.0] * len(s.radii_schedule),
        )
    grad_norm_sq = gamma_field(p, p.W, p.W)
    lw_over_w = apply_L_symbolic(p, p.W) / p.W

    def batch_a(pts: np.ndarray) -> np.ndarray:
        vals, err = _tape.eval_values(grad_norm_sq, pts)
        out = 2.0 * np.sqrt(np.maximum(vals, 0.0))
        return np.where(err != 0, np.nan, -out)  # negated: extremizer minimizes

    def local_a(x: np.ndarray) -> float:
        try:
            j = p.W.jet(x, 2)
        except DomainError:
            return math.inf
        return -2.0 * float(np.linalg.norm(j.gradient))

    def batch_b(pts: np.ndarray) -> np.ndarray:
        w_vals, w_err = _tape.eval_values(p.W, pts)
        vals, err = _tape.eval_values(lw_over_w, pts)
        skip = (err != 0) | (w_err != 0) | (np.abs(w_vals) < WEIGHT_EPS)
        neg_part = np.maximum(rho - vals, 0.0)
        return np.where(skip, np.nan, -neg_part)

    lw_field = apply_L_symbolic(p, p.W)

    def local_b(x: np.ndarray) -> float:
        try:
            w = p.W.value(x)
            if abs(w) < WEIGHT_EPS:
                return math.inf
            lw = lw_field.value(x)
        except DomainError:
            return math.inf
        return -max(rho - lw / w, 0.0)

    est_a = _negated(_extremize_min(batch_a, local_a, p.dim, s))
    est_b = _negated(_extremize_min(batch_b, local_b, p.dim, s))
    # combine on traces: a branch's own divergence verdict must not leak an
    # inf into the max when the other branch dominates everywhere
    val_a, val_b = est_a.trace[-1], est_b.trace[-1]
    trace = [max(a, b) for a, b in zip(est_a.trace, est_b.trace)]
    diverging = _diverging([-v for v in trace], s.tol)
    pick = est_a if val_a >= val_b else est_b
    return BoundEstimate(
        value=math.inf if diverging else max(val_a, val_b),
        witness=pick.witness,
        diverging=diverging,
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Pointwise curvature-dimension check
# ---------------------------------------------------------------------------


def check_pointwise_cd(
    p: ProblemSpec,
    f: ScalarField,
    kappa: float,
    points: np.ndarray,
    tol: float = 1e-8,
) -> ViolationReport:
    """Check Gamma2W(f) >= kappa GammaW(f) at each point.

    A point is a violation when margin < -tol * scale with
    scale = max(1, |Gamma2W|, |kappa GammaW|), so the threshold tracks the
    magnitude of the quantities instead of punishing large fields for
    roundoff.  Domain errors are counted, not raised.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n_violations = 0
    n_domain = 0
    worst_margin: float | None = None
    worst_point: np.ndarray | None = None
    for x in pts:
        try:
            g2w = gamma2_w(p, f, x)
            gw = gamma_w(p, f, f, x)
        except DomainError:
            n_domain += 1
            continue
        margin = g2w - kappa * gw
        scale = max(1.0, abs(g2w), abs(kappa * gw))
        if margin < -tol * scale:
            n_violations += 1
        if worst_margin is None or margin < worst_margin:
            worst_margin = margin
            worst_point = x.copy()
    return ViolationReport(
        n_checked=pts.shape[0],
        n_violations=n_violations,
        n_domain_errors=n_domain,
        worst_margin=worst_margin,
        worst_point=worst_point,
        tol=tol,
    )
