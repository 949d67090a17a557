"""Command-line front-end.

Subcommands:

* ``check-curvature``  estimate the Hessian floor rho, the weight-curvature
  constant gamma, kappa = min(rho, gamma), the drift constant c, and run a
  pointwise curvature sweep.
* ``verify {commutation|variance|sqrt|degenerate}``  Monte Carlo checks of
  the corresponding semigroup inequality over the configured grids; writes
  one CSV row per (t, x, f) case.
* ``optimality``  far-field ratio table for the exponential family.
* ``reproduce-paper``  run the pinned verification suite (criteria 1-10)
  and write per-criterion artifacts.

Exit codes: 0 ok, 1 fail verdicts (or violations), 2 bad configuration,
3 domain/sampling errors, 4 too many inconclusive verdicts.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import acceptance
from .config import ConfigError, RunConfig
from .curvature_bounds import check_pointwise_cd, estimate_c, estimate_gamma, estimate_rho
from .field_expr import DomainError, ProblemSpec
from .gamma_calculus import WeightVanishesError
from .semigroup_mc import AggregatePathFailure, PathBlowUpError
from .verifier import (
    battery,
    degenerate_w_check,
    exp_field,
    optimality_study,
    random_smooth_field,
    run_battery,
    verify_commutation,
    verify_sqrt_commutation,
    verify_variance,
)

__all__ = ["main", "cmd_check_curvature", "cmd_verify", "cmd_reproduce_paper", "cmd_optimality"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_INCONCLUSIVE = 4

INCONCLUSIVE_FRACTION_LIMIT = 0.2


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.default()
    if args.override:
        cfg.apply_overrides(args.override)
    if args.seed is not None:
        cfg.apply_overrides([f"search.seed={args.seed}", f"mc.seed={args.seed}"])
    if getattr(args, "out", None):
        cfg.out_path = args.out
    return cfg


def _fmt_bound(value: float) -> str:
    if value == -math.inf:
        return "DIVERGENT (-inf)"
    if value == math.inf:
        return "+inf"
    return f"{value:.9f}"


def _cli_battery(cfg: RunConfig):
    fields = []
    for a in cfg.a_list():
        label = "exp_a(" + ",".join(f"{v:g}" for v in a) + ")"
        fields.append((label, exp_field(a, cfg.dim)))
    base = dict(battery(cfg.dim))
    fields.append(("poly_quad", base["poly_quad"]))
    fields.append(("bump", base["bump"]))
    return fields


def _resolve_kappa(cfg: RunConfig, p: ProblemSpec, out) -> float:
    if cfg.kappa != "auto":
        return float(cfg.kappa)
    rho = estimate_rho(p, cfg.search)
    gam = estimate_gamma(p, cfg.search)
    kappa = min(rho.value, gam.value)
    out(f"kappa = min(rho, gamma) = min({_fmt_bound(rho.value)}, {_fmt_bound(gam.value)}) = {_fmt_bound(kappa)}")
    return kappa


def cmd_check_curvature(cfg: RunConfig) -> int:
    p = cfg.build_problem()
    print(f"problem: dim={cfg.dim}, U={cfg.u_spec}, W={cfg.w_spec}")
    rho = estimate_rho(p, cfg.search) if cfg.rho == "auto" else None
    rho_value = rho.value if rho is not None else float(cfg.rho)
    print(f"rho:   {_fmt_bound(rho_value)}")
    gam = estimate_gamma(p, cfg.search)
    print(f"gamma: {_fmt_bound(gam.value)}")
    kappa = min(rho_value, gam.value)
    print(f"kappa = min(rho, gamma): {_fmt_bound(kappa)}")
    if rho is not None and rho.diverging:
        print("rho is unbounded below; no curvature bound applies")
        return EXIT_FAIL
    if math.isfinite(rho_value):
        c_est = estimate_c(p, rho_value, cfg.search)
        print(f"c (rho={rho_value:g}): {_fmt_bound(c_est.value)}")
    if kappa == -math.inf:
        print("pointwise bound inapplicable (kappa = -inf); skipping violation sweep")
        return EXIT_OK

    rng = np.random.default_rng(cfg.search.seed)
    fields = battery(cfg.dim) + [
        (f"random_{i}", random_smooth_field(rng, cfg.dim)) for i in range(20)
    ]
    viol = derr = checked = 0
    worst = math.inf
    for _, f in fields:
        pts = rng.uniform(-3.0, 3.0, (40, cfg.dim))
        rep = check_pointwise_cd(p, f, kappa, pts)
        viol += rep.n_violations
        derr += rep.n_domain_errors
        checked += rep.n_checked
        worst = min(worst, rep.worst_margin)
    print(
        f"pointwise check (kappa={_fmt_bound(kappa)}): {viol} violations on "
        f"{checked} samples ({derr} domain errors), worst margin {worst:.3e}"
    )
    return EXIT_FAIL if viol > 0 else EXIT_OK


def _write_report(report, cfg: RunConfig) -> None:
    if cfg.out_format == "pretty":
        with open(cfg.out_path, "w", encoding="utf-8") as fh:
            fh.write(report.summary() + "\n")
    else:
        report.write_csv(cfg.out_path)
    print(f"wrote {cfg.out_path}")


def cmd_verify(cfg: RunConfig, which: str) -> int:
    p = cfg.build_problem()
    t_grid = cfg.t_values
    x_grid = cfg.x_grid()
    if which == "sqrt":
        rho = estimate_rho(p, cfg.search).value if cfg.rho == "auto" else float(cfg.rho)
        if not math.isfinite(rho):
            raise ConfigError("sqrt check needs a finite rho")
        if cfg.c == "auto":
            c_est = estimate_c(p, rho, cfg.search)
            if c_est.diverging or not math.isfinite(c_est.value):
                raise ConfigError("sqrt check needs a finite c, but the estimate diverges")
            c = c_est.value
        else:
            c = float(cfg.c)
        print(f"rho={rho:g}, c={c:g}")
        report = run_battery(
            verify_sqrt_commutation, p, _cli_battery(cfg), rho, c, t_grid, x_grid, cfg.mc
        )
    else:
        kappa = _resolve_kappa(cfg, p, print)
        if kappa == -math.inf:
            raise ConfigError("kappa = -inf: the inequality carries no content for this problem")
        if which == "commutation":
            report = run_battery(verify_commutation, p, _cli_battery(cfg), kappa, t_grid, x_grid, cfg.mc)
        elif which == "variance":
            if kappa == 0.0:
                print("kappa = 0: using the limiting coefficient 2t")
            report = run_battery(verify_variance, p, _cli_battery(cfg), kappa, t_grid, x_grid, cfg.mc)
        elif which == "degenerate":
            report = degenerate_w_check(p, kappa, t_grid, x_grid, cfg.mc)
        else:
            raise ConfigError(f"unknown verify target {which!r}")
    print(report.summary())
    _write_report(report, cfg)
    if report.n_fail > 0:
        return EXIT_FAIL
    if report.inconclusive_fraction > INCONCLUSIVE_FRACTION_LIMIT:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_optimality(cfg: RunConfig) -> int:
    p = cfg.build_problem()
    table = optimality_study(p, cfg.a_list(), cfg.search.radii_schedule)
    for line in table.csv_lines():
        print(line)
    print(f"best kappa: {table.best_kappa:.6f}")
    with open(cfg.out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(table.csv_lines()) + "\n")
    print(f"wrote {cfg.out_path}")
    return EXIT_OK if table.check(1e-2) else EXIT_FAIL


def cmd_reproduce_paper(output_dir, overrides: dict | None = None, criteria=None) -> int:
    results = acceptance.run_all(criteria=criteria, overrides=overrides)
    acceptance.write_artifacts(results, output_dir)
    for r in results:
        print(r.summary_text())
    code = acceptance.exit_code(results)
    print(f"artifacts in {output_dir}; exit {code}")
    return code


def _parse_override_dict(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gammaw",
        description="Weighted carre-du-champ toolkit: curvature constants and semigroup inequality checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--seed", type=int, help="override both search and MC seeds")
        sp.add_argument("--out", help="output path (CSV, or directory for reproduce-paper)")
        sp.add_argument(
            "--override", action="append", metavar="KEY=VALUE",
            help="config override such as mc.n_paths=1000 (repeatable)",
        )

    common(sub.add_parser("check-curvature", help="curvature constants and pointwise sweep"))
    sp = sub.add_parser("verify", help="Monte Carlo inequality verification")
    sp.add_argument("which", choices=("commutation", "variance", "sqrt", "degenerate"))
    common(sp)
    common(sub.add_parser("optimality", help="far-field ratio study"))
    sp = sub.add_parser("reproduce-paper", help="run the pinned verification suite")
    sp.add_argument("--criteria", help="comma-separated criterion ids (default: all)")
    common(sp)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "reproduce-paper":
            overrides = _parse_override_dict(args.override)
            if args.seed is not None:
                overrides.setdefault("mc.seed", str(args.seed))
                overrides.setdefault("search.seed", str(args.seed))
            criteria = None
            if args.criteria:
                criteria = [int(s) for s in args.criteria.split(",") if s.strip()]
            return cmd_reproduce_paper(args.out or "reproduction", overrides or None, criteria)
        cfg = _load_config(args)
        if args.command == "check-curvature":
            return cmd_check_curvature(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.which)
        if args.command == "optimality":
            return cmd_optimality(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, WeightVanishesError, PathBlowUpError, AggregatePathFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
