import json
import math
import subprocess
import sys

import numpy as np
import pytest

from advrobust.cli import ingest, render_report, run
from advrobust.design import DesignedPsi
from advrobust.errors import ParseError


def write(path, text):
    path.write_text(text)
    return str(path)


def invoke(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = run([*argv, "--out", str(out)])
    report = json.loads((out / "report.json").read_text())
    return code, report, out


class TestIngest:
    @pytest.mark.parametrize("text, expected", [("1\n2\n3\n", [1, 2, 3]), ("x\n1\n2\n", [1, 2]), ("1,a\n2.5,b\n", [1, 2.5])])
    def test_examples(self, tmp_path, text, expected):
        assert ingest(write(tmp_path / "d.csv", text)).tolist() == expected

    def test_parse_error_line(self, tmp_path):
        with pytest.raises(ParseError) as info:
            ingest(write(tmp_path / "d.csv", "1\nfoo\n"))
        assert info.value.line == 2
        assert "line 2" in str(info.value)

    @pytest.mark.parametrize("text", ["1\nnan\n", "inf\n", "\n", "x\n"])
    def test_rejects(self, tmp_path, text):
        with pytest.raises(ParseError):
            ingest(write(tmp_path / "d.csv", text))


class TestCommands:
    def test_fit_mean(self, tmp_path):
        data = write(tmp_path / "d.csv", "1\n2\n3\n")
        code, rep, _ = invoke(tmp_path, "--command", "fit", "--psi", "mean", "--data", data)
        assert code == 0 and rep["status"] == "ok"
        assert rep["results"]["estimate"] == pytest.approx(2.0, abs=1e-12)
        assert rep["inputs"]["psi"] == "mean"
        assert {"version", "seed", "schema_version", "diagnostics"} <= set(rep)

    def test_attack_and_aif(self, tmp_path):
        data = write(tmp_path / "d.csv", "-1\n0.2\n0.4\n3\n")
        code, rep, _ = invoke(tmp_path, "--command", "attack", "--psi", "huber", "--b", "1.5",
                              "--data", data, "--eta", "0.01", "--p", "2")
        assert code == 0
        res = rep["results"]
        assert res["budget_used"] == pytest.approx(1e-4, rel=1e-9)
        assert res["realized_shift"] == pytest.approx(res["predicted_shift"], rel=1e-2)
        code, rep2, _ = invoke(tmp_path, "--command", "aif", "--psi", "huber", "--b", "1.5",
                               "--data", data, "--p", "2", name="aif")
        assert code == 0
        assert rep2["results"]["aif"] == pytest.approx(res["predicted_shift"] / 0.01, rel=1e-9)

    def test_finite_eta_solver(self, tmp_path):
        data = write(tmp_path / "d.csv", "-1\n0.2\n0.4\n3\n")
        code, rep, _ = invoke(tmp_path, "--command", "aif", "--psi", "mean", "--data", data,
                              "--p", "1", "--solver", "finite-eta")
        assert code == 0
        assert rep["results"]["method"] == "finite-eta-extrapolation"
        assert rep["results"]["aif"] == pytest.approx(1.0, rel=1e-6)

    def test_aif_pop_huber(self, tmp_path):
        code, rep, _ = invoke(tmp_path, "--command", "aif-pop", "--psi", "huber", "--b", "1.5",
                              "--model", "normal", "--p", "2")
        assert code == 0
        assert rep["results"]["aif"] == pytest.approx(1.0744, abs=1e-4)

    def test_converge(self, tmp_path):
        code, rep, out = invoke(tmp_path, "--command", "converge", "--psi", "mean", "--model", "normal",
                                "--p", "2", "--n-grid", "50,500", "--seed", "3")
        assert code == 0
        lines = (out / "convergence.csv").read_text().splitlines()
        assert lines[0] == "N,empirical_aif,population_aif,rel_error"
        assert len(lines) == 3

    def test_design_min(self, tmp_path):
        code, rep, out = invoke(tmp_path, "--command", "design-min", "--model", "uniform(0,1)", "--kind", "scale")
        assert code == 0
        assert rep["diagnostics"]["aif"] == pytest.approx(math.sqrt(3), rel=1e-10)
        assert (out / "design.json").exists()

    def test_design_tradeoff_round_trip(self, tmp_path):
        code, rep, out = invoke(tmp_path, "--command", "design-tradeoff", "--model", "exponential", "--xi", "3")
        assert code == 0
        res = rep["results"]
        assert res["a"] == pytest.approx(4.8, abs=0.05)
        assert max(res["kkt_residuals"][k] for k in ("normalization", "fisher", "slackness1")) < 1e-6
        psi = np.loadtxt(out / "psi.csv", delimiter=",", skiprows=1)
        assert psi[:, 1].min() == pytest.approx(-1.0, abs=1e-9)
        assert np.all(np.diff(psi[:, 1]) >= -1e-12)
        design = str(out / "design.json")
        code, back, _ = invoke(tmp_path, "--command", "aif-pop", "--psi", design, "--model", "exponential",
                               "--p", "2", name="pop")
        assert code == 0
        assert back["results"]["aif"] == pytest.approx(res["aif"], abs=1e-8)
        assert back["results"]["gamma_star"] == pytest.approx(3.0, abs=1e-6)

    def test_design_tradeoff_generic_solver(self, tmp_path):
        code, rep, _ = invoke(tmp_path, "--command", "design-tradeoff", "--model", "exponential", "--xi", "3",
                              "--solver", "generic")
        assert code == 0
        assert rep["results"]["a"] == pytest.approx(4.80101, abs=1e-4)

    def test_tradeoff_curve(self, tmp_path):
        code, rep, out = invoke(tmp_path, "--command", "tradeoff-curve", "--model", "exponential",
                                "--xi-grid", "1.5,2,3,5,10")
        assert code == 0
        curve = np.loadtxt(out / "tradeoff_curve.csv", delimiter=",", skiprows=1)
        assert curve.shape == (5, 3)
        assert np.all(np.diff(curve[:, 1]) <= 1e-12)

    @pytest.mark.parametrize(
        "args, expected",
        [
            (["--weights", "trimmed", "--alpha", "0.25", "--n", "8", "--p", "2"], math.sqrt(2)),
            (["--weights", "median", "--n", "7", "--p", "1"], 7.0),
            (["--weights", "mean", "--n", "5", "--p", "inf"], 1.0),
        ],
    )
    def test_l_aif(self, tmp_path, args, expected):
        code, rep, _ = invoke(tmp_path, "--command", "l-aif", *args)
        assert code == 0
        assert rep["results"]["aif"] == pytest.approx(expected, rel=1e-12)

    def test_l_aif_with_data(self, tmp_path):
        data = write(tmp_path / "d.csv", "0\n1\n3\n")
        code, rep, _ = invoke(tmp_path, "--command", "l-aif", "--weights", "mean", "--p", "2", "--data", data)
        assert code == 0
        assert rep["results"]["estimate"] == pytest.approx(4 / 3)
        assert rep["results"]["ordering_safety_eta"] == pytest.approx(1 / (2 * math.sqrt(3)))


class TestExitCodes:
    def test_parse_error(self, tmp_path):
        data = write(tmp_path / "d.csv", "1\nfoo\n")
        code, rep, _ = invoke(tmp_path, "--command", "fit", "--psi", "mean", "--data", data)
        assert code == 2
        assert "line 2" in rep["error"]

    def test_missing_file(self, tmp_path):
        code, rep, _ = invoke(tmp_path, "--command", "fit", "--psi", "mean", "--data", str(tmp_path / "none.csv"))
        assert code == 2

    def test_infeasible_budget(self, tmp_path):
        code, rep, _ = invoke(tmp_path, "--command", "design-tradeoff", "--model", "normal", "--xi", "1.2")
        assert code == 1
        assert rep["status"] == "domain-error"
        assert rep["min_feasible_xi"] == pytest.approx(math.sqrt(math.pi / 2), rel=2e-4)

    def test_no_root(self, tmp_path):
        data = write(tmp_path / "d.csv", "0\n0\n0\n")
        code, rep, _ = invoke(tmp_path, "--command", "fit", "--psi", "gaussian-scale-mle", "--data", data)
        assert code == 1

    @pytest.mark.parametrize(
        "argv",
        [
            ["--command", "fit", "--psi", "mean"],
            ["--command", "design-tradeoff", "--model", "normal"],
            ["--command", "l-aif", "--p", "2"],
            ["--command", "bogus"],
        ],
    )
    def test_usage_errors(self, tmp_path, argv):
        with pytest.raises(SystemExit) as info:
            run([*argv, "--out", str(tmp_path)])
        assert info.value.code == 2


class TestDeterminism:
    def test_byte_identical(self, tmp_path):
        argv = ["--command", "converge", "--psi", "huber", "--b", "1.5", "--model", "normal", "--p", "2",
                "--n-grid", "30,300", "--seed", "11"]
        _, _, a = invoke(tmp_path, *argv, name="a")
        _, _, b = invoke(tmp_path, *argv, name="b")
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        assert (a / "convergence.csv").read_bytes() == (b / "convergence.csv").read_bytes()

    def test_render_nonfinite(self):
        text = render_report({"x": math.inf, "y": np.float64("nan"), "z": np.arange(2)})
        assert json.loads(text) == {"x": "inf", "y": "nan", "z": [0, 1]}


def test_console_entry_point(tmp_path):
    data = write(tmp_path / "d.csv", "1\n2\n3\n")
    proc = subprocess.run(
        [sys.executable, "-m", "advrobust.cli", "--command", "fit", "--psi", "mean", "--data", data,
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["estimate"] == 2.0
