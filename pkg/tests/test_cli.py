# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import contextlib
import csv
import io
import pathlib
import tempfile
import unittest

from loylab.cli import main

TWO_LEVEL = """\
model:
  generic:
    m0: 2.0
    h1_parallel: [[0.0, 0.001], [0.001, 0.0]]
    channels:
      - energy_min: 0.0
        energy_max: 4.0
        points: 40
        coupling: {family: constant, g: [0.05, 0.04]}
methods: [loy, improved]
times: {stop: 2.0, count: 5}
"""

THREE_LEVEL = """\
model:
  generic:
    m0: 2.0
    h1_parallel: [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    channels:
      - energy_min: 0.0
        energy_max: 4.0
        points: 20
        coupling: {family: constant, g: [0.05, 0.04, 0.03]}
methods: [improved]
"""

FL_DESK = """\
model:
  friedrichs_lee: {preset: desk}
methods: [loy, improved]
grid_points: 1000
eta: 0.02
cpt: true
"""


def read_table(p):
    """Rows of a CSV output as dicts, skipping the ``#`` header lines."""
    lines = [line for line in p.read_text().splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def diag_difference_cell(p):
    for row in read_table(p):
        if row["quantity"] == "diag_difference":
            return complex(float(row["re"]), float(row["im"]))
    raise AssertionError("no diag_difference row in %s" % p)


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self._td = tempfile.TemporaryDirectory()
        self.root = pathlib.Path(self._td.name)

    def tearDown(self):
        self._td.cleanup()

    def run_cli(self, text, action, *extra, out="out"):
        config = self.root / "run.yaml"
        config.write_text(text)
        out_dir = self.root / out

        stdout = io.StringIO()
        stderr = io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = main(["--config", str(config), "--out", str(out_dir), *extra, action])

        self.stderr = stderr.getvalue()
        return code, out_dir


class TestHeff(CliTestCase):
    def test_writes_outputs(self):
        code, out = self.run_cli(TWO_LEVEL, "heff")

        self.assertEqual(code, 0)
        for name in ("heff_loy.csv", "heff_improved.csv", "report.txt", "run.log"):
            self.assertTrue((out / name).exists(), name)

        lines = (out / "heff_loy.csv").read_text().splitlines()
        self.assertIn("# method=loy", lines)
        self.assertIn("# grid_points=40", lines)
        self.assertIn("quantity,row,col,re,im", lines)
        self.assertTrue(any(line.startswith("diag_difference,1,2,") for line in lines))

        report = (out / "report.txt").read_text()
        self.assertIn("improved: H = ", report)
        self.assertIn("weak coupling", report)

    def test_deterministic(self):
        _, first = self.run_cli(TWO_LEVEL, "heff", out="a")
        _, second = self.run_cli(TWO_LEVEL, "heff", out="b")

        for name in ("heff_loy.csv", "heff_improved.csv", "report.txt"):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes())

    def test_method_override(self):
        code, out = self.run_cli(TWO_LEVEL, "heff", "--method", "iterate")

        self.assertEqual(code, 0)
        self.assertFalse((out / "heff_loy.csv").exists())
        self.assertTrue((out / "heff_iterate.csv").exists())
        self.assertTrue((out / "iterate_history.csv").exists())
        self.assertIn("converged: True", (out / "report.txt").read_text())

        history = [float(row["delta_v"]) for row in read_table(out / "iterate_history.csv")]
        self.assertGreater(len(history), 2)
        for previous, current in zip(history, history[1:]):
            self.assertLess(current, previous)

    def test_cpt_residual_reported(self):
        code, out = self.run_cli(TWO_LEVEL + "cpt: true\n", "heff")

        self.assertEqual(code, 0)
        self.assertIn("CPT residual", (out / "report.txt").read_text())

    def test_cpt_fl_diagonal_difference(self):
        code, out = self.run_cli(FL_DESK, "heff")

        self.assertEqual(code, 0)
        self.assertLess(abs(diag_difference_cell(out / "heff_loy.csv")), 1e-12)
        # close to Im m12 gamma_s / (4 gap) = 1e-3 * 0.02 / 8
        improved = diag_difference_cell(out / "heff_improved.csv")
        self.assertGreater(abs(improved), 1e-6)
        self.assertLess(abs(improved), 1e-5)


class TestExitCodes(CliTestCase):
    def test_configuration_error(self):
        code, _ = self.run_cli(TWO_LEVEL + "eta: -1.0\n", "heff")
        self.assertEqual(code, 1)
        self.assertIn("configuration error", self.stderr)

    def test_missing_file(self):
        with contextlib.redirect_stderr(io.StringIO()):
            code = main(["--config", "/nonexistent/run.yaml", "heff"])
        self.assertEqual(code, 1)

    def test_model_error(self):
        code, _ = self.run_cli(THREE_LEVEL, "heff")
        self.assertEqual(code, 2)

    def test_failure_leaves_no_partial_output(self):
        code, out = self.run_cli(THREE_LEVEL, "heff", "--method", "loy", "--method", "improved")

        self.assertEqual(code, 2)
        self.assertFalse((out / "heff_loy.csv").exists())
        self.assertFalse((out / "report.txt").exists())
        self.assertIn("invalid model: improved: ", (out / "run.log").read_text())

    def test_fl_estimate_needs_fl_model(self):
        code, _ = self.run_cli(TWO_LEVEL, "fl-estimate")
        self.assertEqual(code, 1)


class TestActions(CliTestCase):
    def test_evolve(self):
        code, out = self.run_cli(TWO_LEVEL, "evolve")

        self.assertEqual(code, 0)
        for name in (
            "trajectory_exact.csv",
            "trajectory_loy.csv",
            "comparison_loy.csv",
            "trajectory_improved.csv",
            "report.txt",
        ):
            self.assertTrue((out / name).exists(), name)

        lines = (out / "trajectory_loy.csv").read_text().splitlines()
        columns = lines.index("time,a1_re,a1_im,a2_re,a2_im,p,norm,budget")
        self.assertEqual(len(lines) - columns - 1, 5)
        self.assertEqual(lines[columns + 1].split(",")[0], "0")
        self.assertIn("max |p(t) - p(-t)|", (out / "report.txt").read_text())

        rows = read_table(out / "trajectory_exact.csv")
        self.assertEqual(len(rows), 5)
        for row in rows:
            self.assertLess(abs(float(row["evenness"])), 1e-12)

    def test_diagnose(self):
        code, out = self.run_cli(TWO_LEVEL, "diagnose")

        self.assertEqual(code, 0)
        lines = (out / "diagnose.csv").read_text().splitlines()
        columns = "time,parallel_norm,perpendicular_norm,ratio,violated,weak_ratio"
        first = lines[lines.index(columns) + 1].split(",")
        self.assertEqual(first[0], "0")
        self.assertEqual(first[4], "1")
        self.assertIn("violated at", (out / "report.txt").read_text())

    def test_fl_estimate(self):
        text = "model:\n  friedrichs_lee: {preset: desk}\nmethods: [improved]\ngrid_points: 50\n"
        code, out = self.run_cli(text, "fl-estimate")

        self.assertEqual(code, 0)
        lines = (out / "fl_estimate.csv").read_text().splitlines()
        self.assertIn("quantity,formula,re,im", lines)
        quantities = [line.split(",")[0] for line in lines if not line.startswith("#")]
        for name in ("exact", "approx2", "numeric", "kaon_coefficient", "gamma_12"):
            self.assertIn(name, quantities)

    def test_sweep(self):
        text = TWO_LEVEL + "sweep:\n  parameters:\n    eta: [0.05, 0.1]\n"
        code, out = self.run_cli(text, "sweep", "--run", "heff")

        self.assertEqual(code, 0)
        self.assertTrue((out / "run-000" / "heff_loy.csv").exists())
        self.assertIn("# eta=0.10000000000000001", (out / "run-001" / "heff_loy.csv").read_text())

        lines = (out / "sweep_index.csv").read_text().splitlines()
        self.assertIn("# runs=2", lines)
        self.assertIn("name,output,seed,eta", lines)
        self.assertEqual(lines[-1], "run-001,%s,1,0.1" % (out / "run-001"))


if __name__ == "__main__":
    unittest.main()
