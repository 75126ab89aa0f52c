"""Command-line interface.

Exit codes: 0 success, 2 input error, 3 solver non-convergence on more
than 1% of rows (or a failed fit).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import pipeline
from .cost_model import coefficient_report
from .errors import FitFailed, ParseError, TaskAutoError
from .io import write_csv, write_kv
from .scaling_law import (ScalingLawParams, design_grid, fit_scaling_law, generate_synthetic_observations,
                          read_observations, write_observations)

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
NOT_CONVERGED_LIMIT = 0.01


def _config(args) -> pipeline.RunConfig:
    overrides = {}
    if args.cost_mode is not None:
        overrides["cost_mode"] = args.cost_mode
    if args.deployment is not None:
        overrides["deployment"] = args.deployment
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config is not None:
        cfg = pipeline.RunConfig.from_file(args.config, **overrides)
    else:
        cfg = pipeline.RunConfig.from_mapping({}, **overrides)
    if args.seed is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=args.seed))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    if args.observations:
        obs = read_observations(args.observations)
    else:
        obs = generate_synthetic_observations(cfg.law, design_grid(), noise_sd=args.noise,
                                              replicates=args.replicates, seed=cfg.seed)
    try:
        result = fit_scaling_law(obs, restarts=args.restarts, split_seed=cfg.seed, seed=cfg.seed)
    except FitFailed as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_kv(out / "scaling_params.kv", result.params.to_dict())
    report = {"train_r2": result.train_r2, "test_r2": result.test_r2,
              "restarts_converged": result.restarts_converged, "observations": len(obs)}
    (out / "fit_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"train R2 {result.train_r2:.5f}  test R2 {result.test_r2:.5f}  "
          f"({result.restarts_converged}/{args.restarts} restarts converged)")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    if args.kind == "experiments":
        obs = generate_synthetic_observations(cfg.law, design_grid(), noise_sd=args.noise,
                                              replicates=args.replicates, seed=cfg.seed)
        write_observations(out / "observations.csv", obs)
        print(f"wrote {len(obs)} observations")
        return EXIT_OK
    tables = pipeline.make_fixture(args.rows, cfg.seed, n_invalid=args.invalid, n_missing_wage=args.missing_wage)
    if args.firm_sizes:
        codes = sorted(set(tables["wages"]["naics"]))
        tables["firm_sizes"] = pipeline.make_firm_size_table(codes, cfg.seed)
    pipeline.write_fixture(out, tables)
    print(f"wrote fixture with {args.rows} valid rows to {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _config(args)
    if args.scale != 1.0:
        cfg = replace(cfg, employee_scale=args.scale)
    if args.pooling_key is not None:
        cfg = replace(cfg, pooling_key=args.pooling_key)
    out = _out_dir(args)
    t0 = time.perf_counter()
    result = pipeline.run_files(args.data, cfg)
    result.write(out)
    s = result.summary
    print(f"{s['output_rows']} rows decided, {s['rejected_rows']} rejected in {time.perf_counter() - t0:.1f}s; "
          f"regimes {s['regime_counts']}; automation rate {s['automation_rate']:.4f}")
    if result.not_converged_share > NOT_CONVERGED_LIMIT:
        print(f"{s['not_converged_rows']} rows did not converge", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_aggregate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    df = pd.read_csv(args.decisions, dtype={"soc_code": str, "task_id": str, "dwa_id": str, "naics": str},
                     keep_default_na=False, na_values=[""])
    missing = [c for c in pipeline.OUTPUT_COLUMNS if c not in df.columns]
    if missing:
        raise ParseError(f"decisions file is missing columns {missing}", line=1)
    outcomes = pipeline.outcomes_from_frame(df)
    rollups = pipeline.occupation_rollups(outcomes, tau_weighted=args.tau_weighted)
    summary = pipeline.summarize(outcomes, cfg, n_input=len(df), n_rejected=0, decisions=df)
    write_csv(out / "occupations.csv", rollups)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{len(rollups)} occupations; automation rate {summary['automation_rate']:.4f} "
          f"(tau-weighted {summary['automation_rate_tau_weighted']:.4f})")
    return EXIT_OK


def cmd_elasticity(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    report = pipeline.report_elasticities(cfg.law)
    write_csv(out / "elasticities.csv", report)
    (data_term, baseline), err = pipeline.best_elasticity_convention(report)
    cols = ["n_class", "scenario", *pipeline.ELASTICITY_FIELDS]
    best = report[(report.data_term == data_term) & (report.baseline == baseline)][cols]
    with pd.option_context("display.float_format", "{:.3f}".format, "display.width", 120):
        print(best.to_string(index=False))
    print(f"closest convention: data term {data_term}, baseline {baseline}; "
          f"max relative cell deviation on 2 and 10 classes {err:.3f}")
    return EXIT_OK


def cmd_coeffs(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    report = coefficient_report(cfg.cost_params)
    elapsed = time.perf_counter() - t0
    if args.out is not None:
        out = _out_dir(args)
        (out / "coefficients.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
    width = max(len(k) for k in report)
    for key, value in report.items():
        print(f"{key:<{width}}  {value:.6g}")
    print(f"computed in {elapsed * 1e3:.2f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key-value config file")
    common.add_argument("--cost-mode", choices=("reduced", "structural"))
    common.add_argument("--deployment", choices=("firm", "pooled"))
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: current directory)")

    parser = argparse.ArgumentParser(prog="taskauto", description="Cost-minimising AI automation of vision tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit the scaling law to observations")
    p.add_argument("--observations", help="CSV with n_class,data,steps,model_size,loss; synthetic if omitted")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.01)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic experiments or task fixtures")
    p.add_argument("kind", choices=("experiments", "fixture"))
    p.add_argument("--rows", type=int, default=500)
    p.add_argument("--invalid", type=int, default=0)
    p.add_argument("--missing-wage", type=int, default=0)
    p.add_argument("--firm-sizes", action="store_true", help="also write coarse firm-size bins per industry")
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.01)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("optimize", parents=[common], help="decide every task row")
    p.add_argument("--data", required=True, help="directory with survey.csv, complexity.csv, wages.csv")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every headcount")
    p.add_argument("--pooling-key", choices=("occupation_task", "occupation_task_naics"))
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("aggregate", parents=[common], help="occupation rollups from a decisions file")
    p.add_argument("--decisions", required=True)
    p.add_argument("--tau-weighted", action="store_true", help="use the time-share weighted denominator")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("elasticity", parents=[common], help="performance elasticities at the reference bundles")
    p.set_defaults(func=cmd_elasticity)

    p = sub.add_parser("coeffs", parents=[common], help="recompute the reduced cost coefficients")
    p.set_defaults(func=cmd_coeffs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ParseError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TaskAutoError as exc:
        if isinstance(exc, ValueError):
            print(f"input error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        raise


if __name__ == "__main__":
    sys.exit(main())
