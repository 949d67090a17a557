"""Semigroup evaluation for L = Laplacian - grad U . grad.

Three routes to Q_t f(x) = E[f(X_t) | X_0 = x] for dX = -grad U(X) ds
+ sqrt(2) dB:

* Euler-Maruyama Monte Carlo (:func:`estimate_Qt` and friends), the general
  workhorse, with counter-based noise so every estimate is reproducible and
  common-random-number differencing is exact;
* the closed Ornstein-Uhlenbeck law for the Gaussian potential
  (:func:`mehler_Qt`), evaluated by Gauss-Hermite quadrature or, for
  exponentials e^{a.x}, in closed form;
* the short-time expansion f + t Lf + (t^2/2) LLf (:func:`taylor_Qt`).

:func:`estimate_fk_term` computes the path-integral correction
2 int_0^t Q_s(W^2 (Q_{t-s} f)^2) ds that the weighted variance inequality
carries.  The inner square is estimated without bias by multiplying two
conditionally independent continuations of each path; per-path accumulation
across the time quadrature keeps the reported standard error honest despite
the shared outer trajectory.

Noise streams are labeled tuples hashed into independent Philox states, so
paths are reproducible per (seed, stream, step) regardless of chunking or
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _tape
from .field_expr import Const, Dot, Exp, Mul, Node, ProblemSpec, ScalarField
from .gamma_calculus import apply_L_symbolic

__all__ = [
    "MCConfig",
    "MCEstimate",
    "GradEstimate",
    "GaussianNoise",
    "ZeroNoise",
    "PathBlowUpError",
    "AggregatePathFailure",
    "em_path",
    "estimate_Qt",
    "estimate_Qt_sq",
    "mehler_Qt",
    "mehler_grad_Qt",
    "taylor_Qt",
    "estimate_fk_term",
    "mehler_fk_term",
    "estimate_grad_Qt",
]

_BLOWUP_RADIUS = 1e8
_MAX_FAIL_FRACTION = 0.01


class PathBlowUpError(RuntimeError):
    """A single simulated path left the overflow guard region."""


class AggregatePathFailure(RuntimeError):
    """More than the tolerated fraction of paths failed."""


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    antithetic: bool = True
    stderr_cap: float | None = None  # absolute per-component cap for gradient estimates

    def __post_init__(self):
        if self.n_paths < 2:
            raise ValueError("n_paths must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int  # number of samples the stderr is based on (pairs when antithetic)
    dt: float


@dataclass(frozen=True)
class GradEstimate:
    grad: np.ndarray
    stderr: np.ndarray
    unusable: bool
    n_paths: int
    dt: float
    h: float


class GaussianNoise:
    """Counter-based standard normal generator.

    Each (label, shape) request derives an independent Philox state from
    (seed, label), so repeated requests are bit-identical and disjoint labels
    give independent streams.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def normals(self, label: tuple[int, ...], shape) -> np.ndarray:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(v) for v in label))
        return np.random.Generator(np.random.Philox(ss)).standard_normal(shape)


class ZeroNoise:
    """Deterministic drift-only stream for tests."""

    def normals(self, label: tuple[int, ...], shape) -> np.ndarray:
        return np.zeros(shape)


# ---------------------------------------------------------------------------
# Euler-Maruyama core
# ---------------------------------------------------------------------------


def _split_steps(t: float, dt: float) -> tuple[int, float]:
    k = int(math.floor(t / dt + 1e-9))
    rem = t - k * dt
    if rem < 1e-12 * max(dt, 1.0):
        rem = 0.0
    return k, rem


def _noise_block(noise, stream: tuple[int, ...], step: int, m: int, n: int, antithetic: bool) -> np.ndarray:
    if antithetic:
        half = noise.normals((*stream, step), (m // 2, n))
        return np.concatenate([half, -half], axis=0)
    return noise.normals((*stream, step), (m, n))


def _simulate(
    p: ProblemSpec,
    x0: np.ndarray,
    t: float,
    cfg: MCConfig,
    noise,
    stream: tuple[int, ...],
    n_paths: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve paths to time t; returns (endpoints, alive mask).

    ``x0`` is a single start (n,) broadcast to all paths, or per-path starts
    (m, n).  Failed paths freeze at their last finite state.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        m = n_paths if n_paths is not None else cfg.n_paths
        if cfg.antithetic and m % 2:
            m += 1
        X = np.repeat(x0[None, :], m, axis=0)
    else:
        X = x0.copy()
        m = X.shape[0]
    n = p.dim
    alive = np.ones(m, dtype=bool)
    k, rem = _split_steps(t, cfg.dt)
    schedule = [cfg.dt] * k + ([rem] if rem > 0.0 else [])
    for step, dt_s in enumerate(schedule):
        xi = _noise_block(noise, stream, step, m, n, cfg.antithetic)
        _, grads, err = _tape.eval_values_grads(p.U, X)
        bad_grad = alive & (err != 0)
        alive &= ~bad_grad
        new_x = X - grads * dt_s + math.sqrt(2.0 * dt_s) * xi
        blown = alive & (np.max(np.abs(new_x), axis=1) > _BLOWUP_RADIUS)
        alive &= ~blown
        X[alive] = new_x[alive]
    return X, alive


def em_path(p: ProblemSpec, x0, t: float, cfg: MCConfig, noise) -> np.ndarray:
    """Single Euler-Maruyama endpoint; raises on blow-up."""
    single = replace(cfg, antithetic=False)
    X, alive = _simulate(p, np.asarray(x0, dtype=float), t, single, noise, stream=(0,), n_paths=1)
    if not alive[0]:
        raise PathBlowUpError(f"path from {x0} left |x| <= {_BLOWUP_RADIUS:g} before t={t}")
    return X[0]


def _pair_samples(values: np.ndarray, ok: np.ndarray, antithetic: bool) -> np.ndarray:
    """Collapse raw path values into i.i.d. samples (pair averages if antithetic)."""
    if antithetic:
        half = values.shape[0] // 2
        both = ok[:half] & ok[half:]
        return 0.5 * (values[:half][both] + values[half:][both])
    return values[ok]


def _mc_stats(samples: np.ndarray, cfg: MCConfig) -> MCEstimate:
    n = samples.shape[0]
    mean = float(np.mean(samples)) if n else math.nan
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(mean=mean, stderr=stderr, n_paths=n, dt=cfg.dt)


def _check_failures(ok: np.ndarray, what: str) -> None:
    frac = 1.0 - float(np.mean(ok))
    if frac > _MAX_FAIL_FRACTION:
        raise AggregatePathFailure(f"{what}: {100 * frac:.1f}% of paths failed")


def estimate_Qt(
    p: ProblemSpec,
    f: ScalarField,
    x,
    t: float,
    cfg: MCConfig,
    stream: tuple[int, ...] = (0,),
) -> MCEstimate:
    """Monte Carlo Q_t f(x) with standard error."""
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return MCEstimate(mean=f.value(x), stderr=0.0, n_paths=cfg.n_paths, dt=cfg.dt)
    noise = GaussianNoise(cfg.seed)
    X, alive = _simulate(p, x, t, cfg, noise, stream)
    vals, err = _tape.eval_values(f, X)
    ok = alive & (err == 0)
    _check_failures(ok, "estimate_Qt")
    return _mc_stats(_pair_samples(vals, ok, cfg.antithetic), cfg)


def estimate_Qt_sq(
    p: ProblemSpec,
    f: ScalarField,
    x,
    t: float,
    cfg: MCConfig,
    streams: tuple[tuple[int, ...], tuple[int, ...]] = ((7,), (8,)),
) -> MCEstimate:
    """Unbiased (Q_t f(x))^2 via the product of two independent replicas.

    Squaring a single ensemble mean would be biased upward by its variance;
    f(Z) f(Z') with Z, Z' independent has expectation exactly (Q_t f)^2.
    """
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        v = f.value(x)
        return MCEstimate(mean=v * v, stderr=0.0, n_paths=cfg.n_paths, dt=cfg.dt)
    noise = GaussianNoise(cfg.seed)
    prods = None
    ok = None
    for stream in streams:
        X, alive = _simulate(p, x, t, cfg, noise, stream)
        vals, err = _tape.eval_values(f, X)
        good = alive & (err == 0)
        prods = vals if prods is None else prods * vals
        ok = good if ok is None else ok & good
    _check_failures(ok, "estimate_Qt_sq")
    return _mc_stats(_pair_samples(prods, ok, cfg.antithetic), cfg)


# ---------------------------------------------------------------------------
# Closed-form Ornstein-Uhlenbeck (Gaussian potential) oracles
# ---------------------------------------------------------------------------


def _exp_family(root: Node) -> tuple[float, np.ndarray] | None:
    """Match c * exp(a . x) (or a constant, as a = 0); returns (c, a)."""
    if isinstance(root, Const):
        return root.c, None
    if isinstance(root, Exp) and isinstance(root.a, Dot):
        return 1.0, np.asarray(root.a.coeffs, dtype=float)
    if isinstance(root, Mul):
        left, right = root.a, root.b
        if isinstance(left, Const) and isinstance(right, Exp) and isinstance(right.a, Dot):
            return left.c, np.asarray(right.a.coeffs, dtype=float)
        if isinstance(right, Const) and isinstance(left, Exp) and isinstance(left.a, Dot):
            return right.c, np.asarray(left.a.coeffs, dtype=float)
    return None


def gaussian_exp_moment(mean: np.ndarray, var: float, b: np.ndarray) -> float:
    """E[exp(b . Y)] for Y ~ N(mean, var I)."""
    return math.exp(float(b @ mean) + 0.5 * var * float(b @ b))


def _ou_law(x: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    decay = math.exp(-t)
    return decay * x, 1.0 - decay * decay


def _hermite_points(mean: np.ndarray, var: float, quad_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite nodes/weights for N(mean, var I) expectation."""
    n = mean.shape[0]
    z, w = np.polynomial.hermite.hermgauss(quad_order)
    scale = math.sqrt(2.0 * var)
    grids = np.meshgrid(*([z] * n), indexing="ij")
    pts = mean[None, :] + scale * np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * n), indexing="ij"):
        weights *= g.ravel() / math.sqrt(math.pi)
    return pts, weights


def _require_gaussian(p: ProblemSpec, who: str) -> None:
    if not p.gaussian_U:
        raise ValueError(f"{who} needs the Gaussian potential (gaussian_U flag)")


def mehler_Qt(p: ProblemSpec, f: ScalarField, x, t: float, quad_order: int = 40) -> float:
    """Q_t f(x) for Gaussian U: exact for c e^{a.x}, Gauss-Hermite otherwise."""
    _require_gaussian(p, "mehler_Qt")
    x = np.asarray(x, dtype=float)
    if t == 0.0:
        return f.value(x)
    mean, var = _ou_law(x, t)
    fam = _exp_family(f.root)
    if fam is not None:
        c, a = fam
        return c if a is None else c * gaussian_exp_moment(mean, var, a)
    pts, weights = _hermite_points(mean, var, quad_order)
    vals, err = _tape.eval_values(f, pts)
    if np.any(err != 0):
        bad = int(np.argmax(err != 0))
        raise _tape_domain_error(err[bad], pts[bad])
    return float(weights @ vals)


def mehler_grad_Qt(p: ProblemSpec, f: ScalarField, x, t: float, quad_order: int = 40) -> np.ndarray:
    """grad Q_t f(x) = e^{-t} Q_t(grad f)(x) for Gaussian U."""
    _require_gaussian(p, "mehler_grad_Qt")
    decay = math.exp(-t)
    return np.array(
        [decay * mehler_Qt(p, f.diff(i), x, t, quad_order) for i in range(p.dim)]
    )


def _tape_domain_error(code: int, point: np.ndarray):
    from .field_expr import DomainError

    return DomainError(f"{_tape.err_message(int(code))} at {point!r}")


def taylor_Qt(p: ProblemSpec, f: ScalarField, x, t: float) -> float:
    """Short-time expansion f + t Lf + (t^2/2) L(Lf) at x."""
    lf = apply_L_symbolic(p, f)
    llf = apply_L_symbolic(p, lf)
    x = np.asarray(x, dtype=float)
    return f.value(x) + t * lf.value(x) + 0.5 * t * t * llf.value(x)


# ---------------------------------------------------------------------------
# Feynman-Kac-type correction term
# ---------------------------------------------------------------------------


def _simpson_weights(t: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    if nodes < 3 or nodes % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of nodes >= 3")
    s = np.linspace(0.0, t, nodes)
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (t / (nodes - 1)) / 3.0
    return s, w


def estimate_fk_term(
    p: ProblemSpec,
    f: ScalarField,
    x,
    t: float,
    time_nodes: int,
    cfg: MCConfig,
) -> MCEstimate:
    """Monte Carlo 2 int_0^t Q_s(W^2 (Q_{t-s} f)^2)(x) ds.

    One ensemble carries the outer trajectory; at each Simpson node every
    path spawns two independent continuations Z, Z' to time t, and the
    unbiased sample for the inner square is f(Z) f(Z').  Totals are kept per
    path so the standard error reflects the correlation across nodes.
    """
    x = np.asarray(x, dtype=float)
    if t == 0.0 or p.W.is_zero():
        return MCEstimate(mean=0.0, stderr=0.0, n_paths=cfg.n_paths, dt=cfg.dt)
    s_nodes, weights = _simpson_weights(t, time_nodes)
    noise = GaussianNoise(cfg.seed)
    w_sq = p.W * p.W

    m = cfg.n_paths
    if cfg.antithetic and m % 2:
        m += 1
    Y = np.repeat(x[None, :], m, axis=0)
    ok = np.ones(m, dtype=bool)
    acc = np.zeros(m)
    for j, (s_j, w_j) in enumerate(zip(s_nodes, weights)):
        if j > 0:
            seg = s_j - s_nodes[j - 1]
            Y, seg_alive = _simulate(p, Y, seg, cfg, noise, stream=(3, j))
            ok &= seg_alive
        w2_vals, w2_err = _tape.eval_values(w_sq, Y)
        Z, za = _simulate(p, Y, t - s_j, cfg, noise, stream=(4, j, 0))
        Zp, zpa = _simulate(p, Y, t - s_j, cfg, noise, stream=(4, j, 1))
        fz, ez = _tape.eval_values(f, Z)
        fzp, ezp = _tape.eval_values(f, Zp)
        node_ok = za & zpa & (w2_err == 0) & (ez == 0) & (ezp == 0)
        ok &= node_ok
        contrib = 2.0 * w_j * w2_vals * fz * fzp
        acc += np.where(node_ok, contrib, 0.0)
    _check_failures(ok, "estimate_fk_term")
    return _mc_stats(_pair_samples(acc, ok, cfg.antithetic), cfg)


def mehler_fk_term(
    p: ProblemSpec,
    f: ScalarField,
    x,
    t: float,
    s_nodes: int | None = None,
    quad_order: int | None = None,
) -> float:
    """Deterministic 2 int_0^t Q_s(W^2 (Q_{t-s} f)^2)(x) ds for Gaussian U.

    The inner semigroup is closed-form for c e^{a.x} (dense Simpson grid);
    general f falls back to nested Gauss-Hermite at reduced order.
    """
    _require_gaussian(p, "mehler_fk_term")
    x = np.asarray(x, dtype=float)
    if t == 0.0 or p.W.is_zero():
        return 0.0
    fam = _exp_family(f.root)
    if s_nodes is None:
        s_nodes = 201 if fam is not None else 41
    if quad_order is None:
        quad_order = 40 if fam is not None else 20
    grid, weights = _simpson_weights(t, s_nodes)
    w_sq = p.W * p.W
    total = 0.0
    for s_j, w_j in zip(grid, weights):
        mean, var = _ou_law(x, s_j)
        pts, gh_w = _hermite_points(mean, var, quad_order)
        w2_vals, err = _tape.eval_values(w_sq, pts)
        if np.any(err != 0):
            bad = int(np.argmax(err != 0))
            raise _tape_domain_error(err[bad], pts[bad])
        inner = _qt_values(p, f, fam, pts, t - s_j, quad_order)
        total += 2.0 * w_j * float(gh_w @ (w2_vals * inner * inner))
    return total


def _qt_values(
    p: ProblemSpec,
    f: ScalarField,
    fam: tuple[float, np.ndarray] | None,
    pts: np.ndarray,
    u: float,
    quad_order: int,
) -> np.ndarray:
    """Q_u f at each row of pts (Gaussian U), vectorized."""
    if fam is not None:
        c, a = fam
        if a is None:
            return np.full(pts.shape[0], c)
        decay = math.exp(-u)
        var = 1.0 - decay * decay
        return c * math.exp(0.5 * var * float(a @ a)) * np.exp(pts @ (decay * a))
    if u == 0.0:
        vals, err = _tape.eval_values(f, pts)
        if np.any(err != 0):
            bad = int(np.argmax(err != 0))
            raise _tape_domain_error(err[bad], pts[bad])
        return vals
    decay = math.exp(-u)
    var = 1.0 - decay * decay
    zero = np.zeros(p.dim)
    inner_pts, inner_w = _hermite_points(zero, var, quad_order)
    n_out, n_in = pts.shape[0], inner_pts.shape[0]
    combined = (decay * pts)[:, None, :] + inner_pts[None, :, :]
    vals, err = _tape.eval_values(f, combined.reshape(n_out * n_in, p.dim))
    if np.any(err != 0):
        bad = int(np.argmax(err != 0))
        raise _tape_domain_error(err[bad], combined.reshape(-1, p.dim)[bad])
    return vals.reshape(n_out, n_in) @ inner_w


# ---------------------------------------------------------------------------
# Gradient of Q_t f
# ---------------------------------------------------------------------------


def estimate_grad_Qt(
    p: ProblemSpec,
    f: ScalarField,
    x,
    t: float,
    cfg: MCConfig,
    h: float = 1e-3,
) -> GradEstimate:
    """grad Q_t f(x): Mehler route for Gaussian U, else central differences
    with common random numbers (the same noise stream drives both x +- h e_i,
    so the difference cancels almost all Monte Carlo variance)."""
    x = np.asarray(x, dtype=float)
    if p.gaussian_U:
        grad = mehler_grad_Qt(p, f, x, t)
        return GradEstimate(
            grad=grad,
            stderr=np.zeros(p.dim),
            unusable=False,
            n_paths=0,
            dt=cfg.dt,
            h=0.0,
        )
    noise = GaussianNoise(cfg.seed)
    grad = np.zeros(p.dim)
    stderr = np.zeros(p.dim)
    n_used = cfg.n_paths
    for i in range(p.dim):
        e = np.zeros(p.dim)
        e[i] = h
        xp, ap = _simulate(p, x + e, t, cfg, noise, stream=(1,))
        xm, am = _simulate(p, x - e, t, cfg, noise, stream=(1,))
        vp, ep_ = _tape.eval_values(f, xp)
        vm, em_ = _tape.eval_values(f, xm)
        ok = ap & am & (ep_ == 0) & (em_ == 0)
        _check_failures(ok, "estimate_grad_Qt")
        diffs = (vp - vm) / (2.0 * h)
        est = _mc_stats(_pair_samples(diffs, ok, cfg.antithetic), cfg)
        grad[i], stderr[i] = est.mean, est.stderr
        n_used = est.n_paths
    unusable = bool(cfg.stderr_cap is not None and np.any(stderr > cfg.stderr_cap))
    return GradEstimate(
        grad=grad,
        stderr=stderr,
        unusable=unusable,
        n_paths=n_used,
        dt=cfg.dt,
        h=h,
    )
