"""End-to-end orchestration: bias synthesis, pattern synthesis, robustness report.

Stage 1 produces mirror-symmetric bias targets; survivors of the acceptance
filters become targets for per-(color, count, height) pattern searches;
validated solutions get sensitivity records; everything lands in a
deterministic, JSON-serializable controller database.

The default lattice alignment parks the chain a sixteenth of a spacing off
the projector axis.  A perfectly centered chain is a degenerate special
case: every mirror-symmetric pattern is then first-order insensitive to
alignment drift (symmetric d(delta)/dx against an antisymmetric error
gradient), so its drift sensitivity would vanish identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .lattice import (LatticeConfig, BiasVector, NOMINAL_PARAMS, bare_couplings,
                      time_unit)
from .dynamics import TransferProblem, fidelity_trace
from .optics import COLOR_WAVELENGTHS, OpticsConfig
from .biasopt import BiasOptimConfig, optimize_biases
from .dmdopt import (AcceptanceThresholds, DMDOptimConfig, DMDSolution,
                     make_context, optimize_pattern, validate_solution)
from .sensitivity import SensitivityRecord, sensitivity_record, correlations
from . import report


class ConfigError(ValueError):
    """A pipeline configuration field is missing, malformed, or inconsistent."""


#: Generic chain-to-projector alignment: potential minima sit d/16 off the
#: DMD array center rather than exactly on it.
DEFAULT_PIPELINE_PHASE = 7 * math.pi / 8


@dataclass(frozen=True)
class Stage2Config:
    colors: tuple = ("blue", "red")
    counts: tuple = (2, 4, 6)
    heights: tuple = tuple(range(1, 26))
    index_span: int = 24
    power_range: tuple = (0.0, 1.0)
    budget: int = 2000
    max_targets: int = 8         # distinct stage-1 survivors carried into stage 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PipelineConfig:
    lattice: LatticeConfig = field(
        default_factory=lambda: LatticeConfig(phase=DEFAULT_PIPELINE_PHASE))
    zeta: float = 18.0
    problem: TransferProblem = TransferProblem()
    optics: dict = field(default_factory=lambda: {
        "blue": OpticsConfig.blue(), "red": OpticsConfig.red()})
    stage1: BiasOptimConfig = BiasOptimConfig()
    stage2: Stage2Config = Stage2Config()
    thresholds: AcceptanceThresholds = AcceptanceThresholds()
    seed: int = 0
    out_dir: str = "out"

    def to_dict(self) -> dict:
        return {
            "lattice": self.lattice.to_dict(),
            "zeta": self.zeta,
            "problem": {"n_sites": self.problem.n_sites,
                        "initial": self.problem.initial,
                        "target": self.problem.target},
            "optics": {c: o.to_dict() for c, o in sorted(self.optics.items())},
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
            "thresholds": {"e_max": self.thresholds.e_max,
                           "t_max_ms": self.thresholds.t_max_ms},
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        try:
            lattice = LatticeConfig(**{"phase": DEFAULT_PIPELINE_PHASE,
                                       **data.get("lattice", {})})
            problem = TransferProblem(**data.get("problem", {}))
            default_step = lattice.spacing / 64
            optics = {}
            for color in ("blue", "red"):
                spec = dict(data.get("optics", {}).get(color, {}))
                spec.setdefault("grid_step", default_step)
                spec.setdefault("wavelength", COLOR_WAVELENGTHS[color])
                spec["color"] = color
                optics[color] = OpticsConfig(**spec)
            stage1 = BiasOptimConfig(**{"n_sites": problem.n_sites,
                                        **data.get("stage1", {})})
            s2 = dict(data.get("stage2", {}))
            for key in ("colors", "counts", "heights", "power_range"):
                if key in s2:
                    s2[key] = tuple(s2[key])
            stage2 = Stage2Config(**s2)
            thresholds = AcceptanceThresholds(**data.get("thresholds", {}))
            cfg = cls(lattice=lattice, zeta=float(data.get("zeta", 18.0)),
                      problem=problem, optics=optics, stage1=stage1,
                      stage2=stage2, thresholds=thresholds,
                      seed=int(data.get("seed", 0)),
                      out_dir=str(data.get("out_dir", "out")))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.zeta <= 0:
            raise ConfigError("zeta must be positive")
        unknown = set(cfg.stage2.colors) - set(cfg.optics)
        if unknown:
            raise ConfigError(f"stage2 colors {sorted(unknown)} lack optics configs")
        if cfg.stage1.n_sites != cfg.problem.n_sites:
            raise ConfigError("stage1 and problem chain lengths disagree")
        return cfg

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def config_hash(config: PipelineConfig) -> str:
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def antisymmetric_target(delta: BiasVector) -> BiasVector:
    """Sign pattern realizable by a mirror-symmetric projected potential.

    An even potential makes the well depths symmetric, so the bias vector it
    induces obeys delta_j = -delta_{n-j}.  The effective couplings depend
    only on delta^2, hence flipping the signs of the mirrored half keeps the
    dynamics of a symmetric stage-1 controller unchanged while making it
    optically reachable.  (a, b, b, a) -> (a, b, -b, -a); a self-paired
    middle element has no antisymmetric counterpart and maps to zero.
    """
    arr = delta.array.copy()
    n = len(arr)
    for j in range(n):
        mirror = n - 1 - j
        if j > mirror:
            arr[j] = -arr[mirror]
        elif j == mirror:
            arr[j] = 0.0
    return BiasVector(arr)


@dataclass(frozen=True)
class Controller:
    """One stage-2 outcome tied back to the stage-1 target that spawned it."""

    id: int
    color: str
    target: BiasVector           # stage-1 controller (mirror symmetric)
    target_time: float
    target_error: float
    optics_target: BiasVector    # antisymmetrized target used by the pattern search
    solution: DMDSolution
    sensitivity: SensitivityRecord = None

    @property
    def accepted(self) -> bool:
        return bool(self.solution.accepted)

    def to_dict(self) -> dict:
        return {"id": self.id, "color": self.color,
                "target_delta": list(self.target.values),
                "target_T": self.target_time, "target_e": self.target_error,
                "optics_target": list(self.optics_target.values),
                "solution": self.solution.to_dict(),
                "sensitivity": (self.sensitivity.to_dict()
                                if self.sensitivity else None),
                "accepted": self.accepted}


@dataclass(frozen=True)
class ControllerDatabase:
    config: dict
    config_hash: str
    seed: int
    records: tuple = ()
    stage1: tuple = ()           # every stage-1 candidate, for provenance
    diagnostics: dict = field(default_factory=dict)

    @property
    def accepted(self) -> tuple:
        return tuple(r for r in self.records if r.accepted)

    def to_dict(self) -> dict:
        return {"schema": 1, "config": self.config, "config_hash": self.config_hash,
                "seed": self.seed,
                "stage1_candidates": list(self.stage1),
                "records": [r.to_dict() for r in self.records],
                "diagnostics": self.diagnostics}

    def to_json(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerDatabase":
        from .optics import DMDPattern
        records = []
        for r in data["records"]:
            sol = r["solution"]
            solution = DMDSolution(
                pattern=DMDPattern.from_dict(sol["pattern"]), power=sol["power"],
                color=sol["color"], achieved=BiasVector(sol["achieved_delta"]),
                objective=sol["objective"], error=sol["e_min"],
                t_min=sol["t_min"], accepted=sol["accepted"],
                singular=sol["singular"])
            sens = (SensitivityRecord.from_dict(r["sensitivity"])
                    if r["sensitivity"] else None)
            records.append(Controller(
                id=r["id"], color=r["color"], target=BiasVector(r["target_delta"]),
                target_time=r["target_T"], target_error=r["target_e"],
                optics_target=BiasVector(r["optics_target"]),
                solution=solution, sensitivity=sens))
        return cls(config=data["config"], config_hash=data["config_hash"],
                   seed=data["seed"], records=tuple(records),
                   stage1=tuple(data.get("stage1_candidates", ())),
                   diagnostics=data.get("diagnostics", {}))

    @classmethod
    def from_json(cls, path) -> "ControllerDatabase":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _child_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _dedupe_targets(survivors, limit: int):
    seen = set()
    out = []
    for c in survivors:
        key = (tuple(np.round(c.delta.array, 6)), round(c.transfer_time, 3))
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
        if len(out) >= limit:
            break
    return out


def _stage2_task(args):
    idx, cfg_dict, color, count, height, target_values, seed = args
    config = PipelineConfig.from_dict(cfg_dict)
    ctx = make_context(config.optics[color], config.lattice, config.zeta,
                       config.problem.n_sites)
    dmd_cfg = DMDOptimConfig(
        target=BiasVector(target_values), color=color,
        heights=(height,), counts=(count,),
        index_span=config.stage2.index_span,
        power_range=config.stage2.power_range,
        budget=config.stage2.budget, seed=seed)
    return idx, optimize_pattern(dmd_cfg, ctx)


def run_pipeline(config: PipelineConfig, n_workers: int = 1) -> ControllerDatabase:
    """Run both synthesis stages plus validation and sensitivity analysis.

    Deterministic for a fixed config and seed: stage seeds derive from the
    pipeline seed, stage-2 runs are ordered survivor-major, and results are
    merged by task index regardless of worker scheduling.  Zero stage-1
    survivors is not an error; it yields an empty database whose
    diagnostics say what happened.
    """
    params = NOMINAL_PARAMS
    tau = time_unit(config.zeta, config.lattice)
    stage1_cfg = replace(config.stage1, seed=_child_seed(config.seed, 1))
    candidates = optimize_biases(stage1_cfg, config.problem, params)

    t_limit = config.thresholds.t_max_normalized(tau)
    survivors = [c for c in candidates
                 if c.error < config.thresholds.e_max and c.transfer_time < t_limit]
    targets = _dedupe_targets(survivors, config.stage2.max_targets)

    diagnostics = {
        "stage1_candidates": len(candidates),
        "stage1_survivors": len(survivors),
        "stage2_targets": len(targets),
        "tau_seconds": tau,
        "t_limit_normalized": t_limit,
    }
    cfg_dict = config.to_dict()
    digest = config_hash(config)
    stage1_dump = [c.to_dict() for c in candidates]

    if not targets:
        diagnostics["note"] = "no stage-1 candidate met the thresholds"
        return ControllerDatabase(config=cfg_dict, config_hash=digest,
                                  seed=config.seed, records=(),
                                  stage1=tuple(stage1_dump),
                                  diagnostics=diagnostics)

    # the dynamics are blind to a global sign flip of the biases, but the
    # optics are not; both flips of the antisymmetrized target get a search
    tasks = []
    task_meta = []
    for ti, cand in enumerate(targets):
        base = antisymmetric_target(cand.delta)
        for color in config.stage2.colors:
            for count in config.stage2.counts:
                for height in config.stage2.heights:
                    for flip in (1.0, -1.0):
                        optics_target = BiasVector(flip * base.array)
                        seed = _child_seed(config.seed, 2, ti, ord(color[0]),
                                           count, height, int(flip > 0))
                        tasks.append((len(tasks), cfg_dict, color, count, height,
                                      list(optics_target.values), seed))
                        task_meta.append((cand, color, optics_target))

    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            solutions = dict(pool.map(_stage2_task, tasks))
    else:
        solutions = dict(map(_stage2_task, tasks))

    # sensitivity derivatives run on a refined grid: the extraction's
    # parabolic refinement quantizes well depths at the grid scale, which
    # the drift oracles would otherwise see as noise
    fine_contexts = {
        color: make_context(
            replace(config.optics[color],
                    grid_step=config.lattice.spacing / 256),
            config.lattice, config.zeta, config.problem.n_sites)
        for color in config.stage2.colors}
    records = []
    for i, (cand, color, optics_target) in enumerate(task_meta):
        sol = validate_solution(solutions[i], config.problem, params,
                                config.thresholds, tau)
        sens = None
        if sol.accepted:
            sens = sensitivity_record(sol, fine_contexts[color], config.problem,
                                      params)
        records.append(Controller(
            id=i, color=color, target=cand.delta,
            target_time=cand.transfer_time, target_error=cand.error,
            optics_target=optics_target,
            solution=sol, sensitivity=sens))

    diagnostics["stage2_runs"] = len(records)
    diagnostics["accepted"] = sum(r.accepted for r in records)
    return ControllerDatabase(config=cfg_dict, config_hash=digest, seed=config.seed,
                              records=tuple(records), stage1=tuple(stage1_dump),
                              diagnostics=diagnostics)


def filter_controllers(db: ControllerDatabase,
                       thresholds: AcceptanceThresholds) -> ControllerDatabase:
    """Subset of records meeting the thresholds; applying it twice changes nothing."""
    tau = db.diagnostics.get("tau_seconds")
    if tau is None:
        cfg = PipelineConfig.from_dict(db.config)
        tau = time_unit(cfg.zeta, cfg.lattice)
    t_limit = thresholds.t_max_normalized(tau)
    kept = tuple(r for r in db.records
                 if r.solution.error is not None
                 and r.solution.error < thresholds.e_max
                 and r.solution.t_min is not None
                 and r.solution.t_min < t_limit)
    return replace(db, records=kept)


def emit_report(db: ControllerDatabase, out_dir) -> dict:
    """Write traces, scatter data, the correlation table, and a JSON summary.

    Returns the summary dict.  Correlations need at least three accepted
    records; with fewer the table is replaced by a warning row.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = PipelineConfig.from_dict(db.config)
    tau = time_unit(cfg.zeta, cfg.lattice)
    t_limit = cfg.thresholds.t_max_normalized(tau)

    for rec in db.records:
        sol = rec.solution
        if sol.error is None or not sol.achieved.is_dynamical():
            continue
        trace = fidelity_trace(sol.achieved, cfg.problem, NOMINAL_PARAMS, t_limit)
        report.trace_files(out / "traces" / f"{rec.id:04d}",
                           trace.times, trace.errors,
                           trace.times * tau * 1e3, trace.t_min, trace.e_min)

    points = []
    for rec in db.records:
        if rec.sensitivity is None:
            continue
        s = rec.sensitivity
        points.append({"id": rec.id, "min_gap": s.min_gap, "e": s.error,
                       "T_ms": s.transfer_time * tau * 1e3,
                       "abs_s_x": abs(s.s_x), "abs_s_p": abs(s.s_p),
                       "color": rec.color})
    x_keys = ["min_gap", "e", "T_ms"]
    if points:
        report.scatter_files(out / "scatter_x", points, x_keys, "abs_s_x",
                             "|d(error)/dx|  (1/a)")
        report.scatter_files(out / "scatter_p", points, x_keys, "abs_s_p",
                             "|d(error)/dp|  (1/E_R)")

    table = []
    if len(points) >= 3:
        for key in x_keys:
            xs = [p[key] for p in points]
            r_x, rho_x = correlations(xs, [p["abs_s_x"] for p in points])
            r_p, rho_p = correlations(xs, [p["abs_s_p"] for p in points])
            label = {"min_gap": "min_gap", "e": "e", "T_ms": "T"}[key]
            table.append([label, r_x, rho_x, r_p, rho_p])
        report.correlation_table(out / "table1.csv", table)
    else:
        report.write_csv(out / "table1.csv", ["warning"],
                         [[f"correlations need >= 3 accepted records, have {len(points)}"]])

    summary = {
        "config_hash": db.config_hash,
        "seed": db.seed,
        "records": len(db.records),
        "accepted": len(db.accepted),
        "correlation_rows": len(table),
        "generated_unix_time": _time.time(),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
