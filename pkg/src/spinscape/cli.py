"""Command-line front end for the synthesis and robustness pipeline.

Exit codes: 0 success, 2 configuration/validation error, 3 completed with an
empty result set.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .lattice import BiasVector, NOMINAL_PARAMS, time_unit
from .dynamics import fidelity_trace
from .biasopt import optimize_biases
from .dmdopt import DMDOptimConfig, make_context, optimize_pattern, validate_solution
from .sensitivity import sensitivity_record
from .pipeline import (ConfigError, ControllerDatabase, PipelineConfig,
                       antisymmetric_target, config_hash, emit_report,
                       filter_controllers, run_pipeline)
from . import report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EMPTY = 3


def _load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_json(args.config)
    else:
        cfg = PipelineConfig.from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_optimize_bias(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    candidates = optimize_biases(replace(cfg.stage1, seed=cfg.seed),
                                 cfg.problem, NOMINAL_PARAMS)
    path = out / "bias_candidates.json"
    path.write_text(json.dumps([c.to_dict() for c in candidates],
                               indent=2, sort_keys=True))
    best = candidates[0]
    print(f"{len(candidates)} candidates -> {path}")
    print(f"best: e={best.error:.3e} T={best.transfer_time:.2f}")
    return EXIT_OK if any(c.converged for c in candidates) else EXIT_EMPTY


def cmd_optimize_dmd(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    target = BiasVector(json.loads(args.target))
    tau = time_unit(cfg.zeta, cfg.lattice)
    results = []
    for color in cfg.stage2.colors:
        ctx = make_context(cfg.optics[color], cfg.lattice, cfg.zeta,
                           cfg.problem.n_sites)
        dmd_cfg = DMDOptimConfig(
            target=antisymmetric_target(target), color=color,
            heights=cfg.stage2.heights, counts=cfg.stage2.counts,
            index_span=cfg.stage2.index_span,
            power_range=cfg.stage2.power_range,
            budget=cfg.stage2.budget, seed=cfg.seed)
        sol = optimize_pattern(dmd_cfg, ctx)
        sol = validate_solution(sol, cfg.problem, NOMINAL_PARAMS,
                                cfg.thresholds, tau)
        results.append(sol.to_dict())
        print(f"{color}: objective={sol.objective:.4e} accepted={sol.accepted}")
    path = out / "dmd_solutions.json"
    path.write_text(json.dumps(results, indent=2, sort_keys=True))
    print(f"-> {path}")
    return EXIT_OK if any(r["accepted"] for r in results) else EXIT_EMPTY


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    delta = BiasVector(json.loads(args.delta))
    if not delta.is_dynamical():
        print("bias vector reaches the |delta| = 1 singularity", file=sys.stderr)
        return EXIT_CONFIG
    tau = time_unit(cfg.zeta, cfg.lattice)
    t_max = args.t_max if args.t_max else cfg.thresholds.t_max_normalized(tau)
    trace = fidelity_trace(delta, cfg.problem, NOMINAL_PARAMS, t_max)
    report.trace_files(out / "trace", trace.times, trace.errors,
                       trace.times * tau * 1e3, trace.t_min, trace.e_min)
    print(f"e_min={trace.e_min:.4e} at T={trace.t_min:.2f} "
          f"({trace.t_min * tau * 1e3:.2f} ms) -> {out}/trace.csv")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    db = ControllerDatabase.from_json(args.database)
    updated = []
    for rec in db.records:
        if rec.accepted and rec.sensitivity is None:
            ctx = make_context(cfg.optics[rec.color], cfg.lattice, cfg.zeta,
                               cfg.problem.n_sites)
            rec = replace(rec, sensitivity=sensitivity_record(
                rec.solution, ctx, cfg.problem, NOMINAL_PARAMS))
        updated.append(rec)
    db = replace(db, records=tuple(updated))
    path = out / "controllers.json"
    db.to_json(path)
    n = sum(1 for r in db.records if r.sensitivity is not None)
    print(f"{n} sensitivity records -> {path}")
    return EXIT_OK if n else EXIT_EMPTY


def cmd_report(args) -> int:
    cfg = _load_config(args)
    db = ControllerDatabase.from_json(args.database)
    if args.filter:
        db = filter_controllers(db, cfg.thresholds)
    summary = emit_report(db, cfg.out_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if summary["records"] else EXIT_EMPTY


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    db = run_pipeline(cfg, n_workers=args.threads)
    db.to_json(out / "controllers.json")
    emit_report(db, out)
    print(f"stage-1 survivors: {db.diagnostics.get('stage1_survivors', 0)}, "
          f"stage-2 runs: {db.diagnostics.get('stage2_runs', 0)}, "
          f"accepted: {len(db.accepted)}")
    print(f"database -> {out / 'controllers.json'}")
    return EXIT_OK if db.accepted else EXIT_EMPTY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinscape",
        description="Synthesize and analyze static energy-landscape controllers "
                    "for lattice spin chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None,
                       help="pipeline configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker processes for stage-2 searches")

    p = sub.add_parser("optimize-bias", help="stage 1: bias/time synthesis")
    common(p)
    p.set_defaults(func=cmd_optimize_bias)

    p = sub.add_parser("optimize-dmd", help="stage 2: pattern search for a target")
    common(p)
    p.add_argument("--target", required=True,
                   help="JSON list of target biases, e.g. '[0.9,0.8,0.8,0.9]'")
    p.set_defaults(func=cmd_optimize_dmd)

    p = sub.add_parser("evaluate", help="fidelity trace for a bias vector")
    common(p)
    p.add_argument("--delta", required=True, help="JSON list of biases")
    p.add_argument("--t-max", type=float, default=None,
                   help="trace window in normalized time units")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sensitivity", help="fill sensitivity records in a database")
    common(p)
    p.add_argument("--database", required=True, help="controllers.json path")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("report", help="emit CSV/SVG report from a database")
    common(p)
    p.add_argument("--database", required=True, help="controllers.json path")
    p.add_argument("--filter", action="store_true",
                   help="re-apply acceptance thresholds before reporting")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run both stages plus analysis end to end")
    common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
