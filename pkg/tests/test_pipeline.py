import json
import math
from pathlib import Path

import numpy as np
import pytest

from spinscape.lattice import BiasVector, LatticeConfig, NOMINAL_PARAMS
from spinscape.dynamics import fidelity_error
from spinscape.optics import DMDPattern
from spinscape.dmdopt import AcceptanceThresholds, DMDSolution
from spinscape.sensitivity import SensitivityRecord
from spinscape.pipeline import (ConfigError, Controller, ControllerDatabase,
                                PipelineConfig, antisymmetric_target,
                                config_hash, emit_report, filter_controllers,
                                run_pipeline)

TINY = {
    "lattice": {"depth": 10.0},
    "zeta": 10.0,
    "stage1": {"t_max": 30000.0, "restarts": 6, "max_iterations": 200},
    "stage2": {"colors": ["blue"], "counts": [2], "heights": [1],
               "index_span": 10, "budget": 40, "max_targets": 1},
    "seed": 1,
}


@pytest.fixture(scope="module")
def tiny_db():
    return run_pipeline(PipelineConfig.from_dict(TINY))


class TestConfig:
    def test_roundtrip_through_json(self):
        cfg = PipelineConfig.from_dict(TINY)
        again = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()

    def test_default_alignment_off_center(self):
        cfg = PipelineConfig.from_dict({})
        sites = cfg.lattice.site_positions(5)
        assert abs(sites[2]) == pytest.approx(cfg.lattice.spacing / 16, rel=1e-9)

    def test_hash_sensitive_to_every_field(self):
        base = PipelineConfig.from_dict(TINY)
        h0 = config_hash(base)
        for change in (
            {"zeta": 10.5},
            {"seed": 2},
            {"lattice": {"depth": 10.0, "phase": 1.0}},
            {"stage1": {"t_max": 30000.0, "restarts": 7}},
            {"stage2": {**TINY["stage2"], "budget": 41}},
            {"thresholds": {"e_max": 2e-2}},
            {"problem": {"n_sites": 5, "initial": 1, "target": 4}},
        ):
            cfg = PipelineConfig.from_dict({**TINY, **change})
            assert config_hash(cfg) != h0

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({**TINY, "zeta": -1.0})
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict({**TINY, "stage1": {"restarts": 0}})
        with pytest.raises(ConfigError):
            PipelineConfig.from_dict(
                {**TINY, "stage2": {**TINY["stage2"], "colors": ["green"]}})

    def test_antisymmetric_target(self):
        t = antisymmetric_target(BiasVector([0.3, -0.7, -0.7, 0.3]))
        assert t.values == (0.3, -0.7, 0.7, -0.3)
        mid = antisymmetric_target(BiasVector([0.4, 0.9, 0.4]))
        assert mid.values == (0.4, 0.0, -0.4)


def synthetic_record(i, min_gap, color="blue", s_x=None, s_p=None,
                     error=5e-3, t_min=15000.0):
    delta = [0.1, 1 - min_gap, -(1 - min_gap), -0.1]
    solution = DMDSolution(
        pattern=DMDPattern(indices=[-2 - i, 2 + i]), power=0.2, color=color,
        achieved=BiasVector(delta), objective=0.01,
        error=error, t_min=t_min, accepted=True)
    sens = SensitivityRecord(
        xi=(0.1, 0.2, -0.2, -0.1), ddelta_dx=(1.0, 1.0, 1.0, 1.0),
        ddelta_dp=(0.5, 0.5, 0.5, 0.5),
        s_x=min_gap if s_x is None else s_x,
        s_p=2 * min_gap if s_p is None else s_p,
        min_gap=min_gap, error=error, transfer_time=t_min)
    return Controller(id=i, color=color, target=BiasVector(delta),
                      target_time=t_min, target_error=error,
                      optics_target=BiasVector(delta), solution=solution,
                      sensitivity=sens)


def synthetic_db(records):
    cfg = PipelineConfig.from_dict(TINY)
    return ControllerDatabase(config=cfg.to_dict(), config_hash=config_hash(cfg),
                              seed=1, records=tuple(records),
                              diagnostics={"tau_seconds": 4.0425955269921036e-06})


class TestDatabase:
    def test_roundtrip_lossless(self, tiny_db, tmp_path):
        path = tmp_path / "controllers.json"
        tiny_db.to_json(path)
        again = ControllerDatabase.from_json(path)
        assert again.to_dict() == tiny_db.to_dict()
        # numeric fields survive the text round trip exactly
        path2 = tmp_path / "again.json"
        again.to_json(path2)
        assert path.read_text() == path2.read_text()

    def test_stored_error_recomputable(self, tiny_db):
        cfg = PipelineConfig.from_dict(tiny_db.config)
        for rec in tiny_db.records:
            sol = rec.solution
            if sol.error is None or not sol.achieved.is_dynamical():
                continue
            again = fidelity_error(sol.achieved, sol.t_min, cfg.problem,
                                   NOMINAL_PARAMS)
            assert again == pytest.approx(sol.error, abs=1e-12)

    def test_determinism_byte_identical(self, tiny_db, tmp_path):
        again = run_pipeline(PipelineConfig.from_dict(TINY))
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        tiny_db.to_json(p1)
        again.to_json(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_no_timestamps_in_database(self, tiny_db):
        dump = json.dumps(tiny_db.to_dict())
        assert "time_unix" not in dump and "timestamp" not in dump


class TestFilter:
    def test_wide_open_keeps_everything(self):
        db = synthetic_db([synthetic_record(i, 0.1 * (i + 1)) for i in range(4)])
        kept = filter_controllers(db, AcceptanceThresholds(e_max=1.1, t_max_ms=1e9))
        assert len(kept.records) == 4

    def test_impossible_thresholds_empty(self):
        db = synthetic_db([synthetic_record(i, 0.1) for i in range(4)])
        kept = filter_controllers(db, AcceptanceThresholds(e_max=1e-12,
                                                           t_max_ms=1e-6))
        assert kept.records == ()

    def test_idempotent(self):
        db = synthetic_db([synthetic_record(i, 0.05 * (i + 1), error=1e-3 * (i + 1))
                           for i in range(5)])
        thr = AcceptanceThresholds(e_max=3.5e-3, t_max_ms=130.0)
        once = filter_controllers(db, thr)
        twice = filter_controllers(once, thr)
        assert len(once.records) == 3
        assert [r.id for r in once.records] == [r.id for r in twice.records]


class TestReport:
    def test_constructed_identity_correlation(self, tmp_path):
        # |s_x| equal to min_gap by construction: the emitted correlation
        # table must show r = rho = 1 for the x-drift column
        records = [synthetic_record(i, g) for i, g in
                   enumerate([0.05, 0.11, 0.23, 0.31])]
        db = synthetic_db(records)
        emit_report(db, tmp_path)
        rows = (tmp_path / "table1.csv").read_text().strip().splitlines()
        assert rows[0].split(",")[0] == "quantity"
        table = {r.split(",")[0]: r.split(",")[1:] for r in rows[1:]}
        assert len(table) == 3
        assert set(table) == {"min_gap", "T", "e"}
        assert all(len(v) == 4 for v in table.values())
        r_x, rho_x = float(table["min_gap"][0]), float(table["min_gap"][1])
        assert r_x == pytest.approx(1.0, abs=1e-12)
        assert rho_x == pytest.approx(1.0, abs=1e-12)

    def test_trace_svg_marks_csv_argmin(self, tmp_path):
        records = [synthetic_record(0, 0.08)]
        db = synthetic_db(records)
        emit_report(db, tmp_path)
        csv_path = tmp_path / "traces" / "0000.csv"
        rows = [line.split(",") for line in
                csv_path.read_text().strip().splitlines()[1:]]
        ts = np.array([float(r[0]) for r in rows])
        es = np.array([float(r[2]) for r in rows])
        svg = (tmp_path / "traces" / "0000.svg").read_text()
        marked = float(svg.split("min ")[1].split("<")[0])
        grid_min = es.min()
        assert marked <= grid_min + 1e-15
        # the marked minimum lies within one grid step of the csv argmin
        assert abs(marked - grid_min) <= abs(np.diff(np.sort(es))[:2].sum()) + 1e-12

    def test_too_few_records_warns(self, tmp_path):
        db = synthetic_db([synthetic_record(0, 0.1), synthetic_record(1, 0.2)])
        emit_report(db, tmp_path)
        content = (tmp_path / "table1.csv").read_text()
        assert "warning" in content

    def test_expected_files_exist(self, tmp_path):
        records = [synthetic_record(i, 0.05 + 0.07 * i,
                                    color="blue" if i % 2 else "red")
                   for i in range(4)]
        db = synthetic_db(records)
        summary = emit_report(db, tmp_path)
        for name in ("scatter_x.csv", "scatter_x.svg", "scatter_p.csv",
                     "scatter_p.svg", "table1.csv", "summary.json"):
            assert (tmp_path / name).exists(), name
        for extra in ("scatter_x_vs_e.svg", "scatter_x_vs_T_ms.svg",
                      "scatter_p_vs_e.svg"):
            assert (tmp_path / extra).exists(), extra
        assert summary["accepted"] == 4
        loaded = json.loads((tmp_path / "summary.json").read_text())
        assert loaded["config_hash"] == db.config_hash


class TestEmptyResult:
    def test_zero_survivors_yields_empty_database(self):
        # thresholds nothing can meet: completes with diagnostics, no raise
        config = PipelineConfig.from_dict(
            {**TINY, "thresholds": {"e_max": 1e-9, "t_max_ms": 0.001}})
        db = run_pipeline(config)
        assert db.records == ()
        assert db.diagnostics["stage1_survivors"] == 0
        assert "note" in db.diagnostics
