"""
Tests for the experiment config, the artifact writers and the CLI.
"""

import contextlib
import csv
import io
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
import yaml

from . import LabTestCase
from src.config import ExperimentConfig, InitialDatum, load_config, parse_config
from src.diagnostics import FIT_MIN_POINTS, Classification, Evidence, OutcomeReport
from src.errors import ConfigError
from src.functionals import FieldSpecFactory, FunctionalReport, Membership
from src.grid import make_grid
from src.harness import (
    DatumResult,
    cmd_classify,
    gate_violations,
    read_trace_csv,
    trace_columns,
    write_trace_csv,
)
from src.main import main
from src.solver import SolverConfig, evolve

SMALL_GRID = {"n": 1024, "r_max": 50.0}
REPO_ROOT = Path(__file__).resolve().parents[1]


class TempDirTestCase(unittest.TestCase):
    """Gives each test a scratch directory."""

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, data, name="config.yaml") -> Path:
        path = self.tmp / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path


class TestConfig(TempDirTestCase):
    """Test cases for parse_config and load_config."""

    def test_defaults(self):
        config = parse_config({})
        self.assertEqual(config.dim, 5)
        self.assertEqual(config.grid.n, 4096)
        self.assertEqual(config.grid.r_max, 100.0)
        self.assertIsNone(config.solver)

    def test_lambda_alias(self):
        config = parse_config({"initial_data": [{"kind": "ground_state", "amplitude": 0.7, "lambda": 0.75}]})
        datum = config.initial_data[0]
        self.assertEqual(datum.lam, 0.75)
        spec = datum.to_spec(5)
        self.assertEqual(spec.lam, 0.75)

    def test_rejections(self):
        bad = [
            {"colour": "blue"},
            {"grid": {"n": 128, "rmax": 10.0}},
            {"initial_data": [{"kind": "gaussian", "amplitude": 1.0}]},
            {"initial_data": [{"kind": "gaussian", "amplitude": 1.0, "width": 1.0, "lambda": 0.5}]},
            {"initial_data": [{"kind": "ground_state", "amplitude": 1.0, "width": 1.0}]},
            {"initial_data": [{"kind": "soliton", "amplitude": 1.0}]},
            {"virial_radii": [2.0, -1.0]},
            {"sweep": {"parameter": "amplitude", "values": []}},
            {"solver": {"dt": 1.0, "t_final": 0.5}},
            {"solver": {"dt": 1e-3, "t_final": 0.0}},
            {"verify": {"samples": 0}},
        ]
        for data in bad:
            with self.assertRaises(ConfigError, msg=str(data)):
                parse_config(data)

    def test_root_must_be_mapping(self):
        with self.assertRaises(ConfigError):
            parse_config([1, 2, 3])

    def test_load_errors(self):
        with self.assertRaises(ConfigError):
            load_config(self.tmp / "missing.yaml")
        broken = self.tmp / "broken.yaml"
        broken.write_text("grid: [n: 1\n", encoding="utf-8")
        with self.assertRaises(ConfigError):
            load_config(broken)

    def test_empty_file_gives_defaults(self):
        empty = self.tmp / "empty.yaml"
        empty.write_text("", encoding="utf-8")
        self.assertEqual(load_config(empty), ExperimentConfig())

    def test_with_value(self):
        datum = InitialDatum(kind="gaussian", amplitude=1.0, width=1.0)
        self.assertEqual(datum.with_value("amplitude", 3.0).amplitude, 3.0)
        with self.assertRaises(ConfigError):
            datum.with_value("lambda", 0.5)
        ground = InitialDatum(kind="ground_state", amplitude=1.0)
        self.assertEqual(ground.with_value("lambda", 0.5).lam, 0.5)
        with self.assertRaises(ConfigError):
            ground.with_value("width", 2.0)

    def test_require_solver(self):
        with self.assertRaises(ConfigError):
            parse_config({}).require_solver()
        cfg = parse_config({"solver": {"dt": 1e-3, "t_final": 1.0, "sponge": True}}).require_solver()
        self.assertEqual(cfg, SolverConfig(dt=1e-3, t_final=1.0, sponge=True))

    def test_shipped_configs_load(self):
        for path in sorted(REPO_ROOT.joinpath("configs").glob("*.yaml")):
            with self.subTest(config=path.name):
                self.assertIsInstance(load_config(path), ExperimentConfig)

    def test_dichotomy_samples_enough_for_concavity(self):
        solver = load_config(REPO_ROOT / "configs" / "dichotomy.yaml").require_solver()
        # a concavity fit must fit in the first percent of the run
        window = FIT_MIN_POINTS * solver.observe_every * solver.dt
        self.assertLessEqual(window, 0.01 * solver.t_final)


class TestReadme(unittest.TestCase):

    def test_equation_signs(self):
        text = (REPO_ROOT / "README.md").read_text(encoding="utf-8")
        self.assertIn("i u_t + Δu = -|u|^{4/(d-2)} u + |u|^{4/(d-1)} u", text)
        self.assertNotIn("|u|^{4/d} u", text)
        self.assertIn("focusing energy-critical term and a defocusing mass-supercritical term", text)


class TestTraceCsv(TempDirTestCase):
    """Test cases for the trace writer."""

    def test_written_trace_reads_back(self):
        grid = make_grid(5, 512, 30.0)
        cfg = SolverConfig(dt=1e-3, t_final=0.02, observe_every=5)
        trace = evolve(FieldSpecFactory.create_gaussian(5, 0.5, 2.0), grid, cfg, virial_radii=(2.0, 5.0))
        path = self.tmp / "trace.csv"
        write_trace_csv(path, trace)

        header, values = read_trace_csv(path)
        self.assertEqual(header, trace_columns((2.0, 5.0)))
        self.assertEqual(header[:3], ["t", "mass", "energy"])
        self.assertIn("dt2vR_5", header)
        self.assertIn("ldt2vR_2", header)
        self.assertIn("sob_5", header)
        self.assertEqual(header[-1], "glassey_defect")
        self.assertEqual(values.shape, (len(trace), 25))
        np.testing.assert_array_equal(values[:, 0], trace.times)
        np.testing.assert_array_equal(values[:, 1], trace.mass_series)
        self.assertNotIn(b"\r", path.read_bytes())


class TestGate(unittest.TestCase):
    """Test cases for gate_violations."""

    def _result(self, index, membership, verdict):
        datum = InitialDatum(kind="gaussian", amplitude=1.0, width=1.0)
        rep = FunctionalReport.from_integrals(5, 1.0, 1.0, 1.0, 1.0)
        outcome = None if verdict is None else OutcomeReport(verdict, Evidence())
        return DatumResult(index, datum, rep, membership, outcome=outcome)

    def test_contradictions(self):
        results = [
            self._result(0, Membership.K_MINUS, Classification.DISPERSIVE_CONFIRMED),
            self._result(1, Membership.K_PLUS, Classification.BLOW_UP_CONFIRMED),
            self._result(2, Membership.ABOVE_THRESHOLD, Classification.BLOW_UP_CONFIRMED),
            self._result(3, Membership.K_MINUS, Classification.UNDECIDED),
            self._result(4, Membership.K_MINUS, Classification.BLOW_UP_CONFIRMED),
            self._result(5, Membership.K_PLUS, Classification.DISPERSIVE_CONFIRMED),
            self._result(6, Membership.K_MINUS, None),
        ]
        violations = gate_violations(results)
        self.assertEqual(len(violations), 2)
        self.assertTrue(violations[0].startswith("datum 0"))
        self.assertTrue(violations[1].startswith("datum 1"))

    def test_summary_entry(self):
        entry = self._result(3, Membership.K_MINUS, Classification.UNDECIDED).to_dict()
        self.assertEqual(entry["membership"], "K_MINUS")
        self.assertEqual(entry["classification"], "UNDECIDED")
        self.assertEqual(entry["datum"]["kind"], "gaussian")
        self.assertNotIn("outcome", entry)

    def test_numpy_evidence_serializes(self):
        datum = InitialDatum(kind="gaussian", amplitude=1.0, width=1.0)
        rep = FunctionalReport.from_integrals(5, 1.0, 1.0, 1.0, 1.0)
        evidence = Evidence(critical_norm_halved=np.bool_(True), exterior_decayed=np.bool_(False))
        result = DatumResult(0, datum, rep, Membership.K_PLUS,
                             outcome=OutcomeReport(Classification.UNDECIDED, evidence))
        payload = json.loads(json.dumps(result.to_dict()))
        self.assertIs(payload["evidence"]["critical_norm_halved"], True)
        self.assertIs(payload["evidence"]["exterior_decayed"], False)


class TestCommands(TempDirTestCase, LabTestCase):
    """Test cases for the commands and their exit codes."""

    def setUp(self):
        TempDirTestCase.setUp(self)
        LabTestCase.setUp(self)

    def run_main(self, command, data, *extra):
        path = self.write_config(data)
        return main([command, "--config", str(path), "--output", str(self.tmp / "out"), *extra])

    def test_missing_config(self):
        self.assertEqual(main(["threshold", "--config", str(self.tmp / "nope.yaml")]), 1)

    def test_low_dimension_is_grid_error(self):
        self.assertEqual(self.run_main("threshold", {"dim": 2}), 2)

    def test_coarse_threshold_grid(self):
        self.assertEqual(self.run_main("threshold", {"grid": {"n": 64, "r_max": 100.0}}), 2)

    def test_zero_final_time(self):
        data = {"grid": SMALL_GRID, "solver": {"dt": 1e-3, "t_final": 0.0},
                "initial_data": [{"kind": "gaussian", "amplitude": 0.1, "width": 2.0}]}
        self.assertEqual(self.run_main("simulate", data), 1)

    def test_bad_jobs(self):
        self.assertEqual(self.run_main("threshold", {}, "--jobs", "0"), 1)

    def test_radius_too_large(self):
        data = {"grid": SMALL_GRID, "solver": {"dt": 1e-3, "t_final": 0.01},
                "initial_data": [{"kind": "gaussian", "amplitude": 0.1, "width": 2.0}],
                "virial_radii": [40.0]}
        self.assertEqual(self.run_main("simulate", data), 1)

    def test_threshold_command(self):
        self.assertEqual(self.run_main("threshold", {}), 0)
        payload = json.loads((self.tmp / "out" / "threshold.json").read_text(encoding="utf-8"))
        self.assertTrue(payload["holds"])
        self.assert_rel_close(payload["m"], self.m, 1e-12)
        self.assertEqual(list(payload), sorted(payload))

    def test_classify_command(self):
        config = parse_config({
            "initial_data": [
                {"kind": "gaussian", "amplitude": 0.0, "width": 1.0},
                {"kind": "gaussian", "amplitude": 1.0, "width": 1.0},
                {"kind": "gaussian", "amplitude": 10.0, "width": 1.0},
                {"kind": "gaussian", "amplitude": 30.0, "width": 1.0},
                {"kind": "ground_state", "amplitude": 0.7, "lambda": 0.75},
            ],
        })
        with contextlib.redirect_stdout(io.StringIO()):
            self.assertEqual(cmd_classify(config, self.tmp), 0)
        payload = json.loads((self.tmp / "classify.json").read_text(encoding="utf-8"))
        self.assertEqual(
            [row["membership"] for row in payload["data"]],
            ["K_PLUS", "K_PLUS", "ABOVE_THRESHOLD", "K_MINUS", "K_MINUS"],
        )

    def test_classify_needs_data(self):
        self.assertEqual(self.run_main("classify", {}), 1)

    def test_simulate_command(self):
        data = {"grid": SMALL_GRID, "solver": {"dt": 1e-3, "t_final": 0.05, "observe_every": 10},
                "initial_data": [{"kind": "gaussian", "amplitude": 0.1, "width": 2.0}],
                "virial_radii": [5.0]}
        self.assertEqual(self.run_main("simulate", data, "--jobs", "2"), 0)
        out = self.tmp / "out"
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        self.assertEqual(summary["gate_violations"], [])
        self.assertEqual(summary["data"][0]["outcome"], "REACHED_T_FINAL")
        self.assertTrue(all(isinstance(flag, bool) for flag in summary["data"][0]["evidence"].values()))
        self.assertTrue((out / "trace_0.csv").exists())

    def test_dichotomy_needs_sweep(self):
        data = {"grid": SMALL_GRID, "solver": {"dt": 1e-3, "t_final": 0.01},
                "initial_data": [{"kind": "gaussian", "amplitude": 0.1, "width": 2.0}]}
        self.assertEqual(self.run_main("dichotomy", data), 1)

    def test_dichotomy_outcomes_follow_membership(self):
        data = {
            "solver": {"dt": 1e-4, "t_final": 2.0, "blowup_factor": 25.0, "dt_min": 1e-10, "observe_every": 5},
            "initial_data": [{"kind": "gaussian", "amplitude": 1.0, "width": 1.0}],
            "virial_radii": [2.0],
            "sweep": {"parameter": "amplitude", "values": [0.5, 30.0]},
        }
        self.assertEqual(self.run_main("dichotomy", data), 0)
        with open(self.tmp / "out" / "dichotomy.csv", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        self.assertEqual([row["membership"] for row in rows], ["K_PLUS", "K_MINUS"])
        self.assertNotEqual(rows[0]["classification"], "BLOW_UP_CONFIRMED")
        self.assertEqual(rows[0]["outcome"], "REACHED_T_FINAL")
        self.assertEqual(rows[1]["outcome"], "BLOW_UP")
        self.assertEqual(rows[1]["classification"], "BLOW_UP_CONFIRMED")

    def test_coarse_verify_fails(self):
        self.assertEqual(self.run_main("verify", {"grid": {"n": 64, "r_max": 100.0}, "verify": {"samples": 5}}), 5)
        payload = json.loads((self.tmp / "out" / "verify.json").read_text(encoding="utf-8"))
        self.assertFalse(payload["passed"])
        self.assertFalse(payload["checks"]["ground_state.pde_residual"]["passed"])

    def test_verify_is_reproducible(self):
        data = {"seed": 7, "verify": {"samples": 20}}
        path = self.write_config(data)
        first = self.tmp / "first"
        second = self.tmp / "second"
        main(["verify", "--config", str(path), "--output", str(first)])
        main(["verify", "--config", str(path), "--output", str(second)])
        self.assertEqual((first / "verify.json").read_bytes(), (second / "verify.json").read_bytes())

        checks = json.loads((first / "verify.json").read_text(encoding="utf-8"))["checks"]
        for name in (
            "solver.energy_drift_order",
            "solver.splitting_order",
            "diagnostics.first_virial_identity.mass_localizing",
            "diagnostics.second_virial_identity.mass_localizing",
            "diagnostics.local_virial_bound",
            "diagnostics.radial_sobolev_ratio",
            "diagnostics.virial_concavity_checked",
            "variational.energy_sandwich_for_positive_k",
        ):
            self.assertIn(name, checks)


if __name__ == '__main__':
    unittest.main()
