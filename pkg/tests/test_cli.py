import json

import numpy as np
import pytest

from ridgererand.cli import main
from ridgererand.core import CovariateMatrix, compute_spectrum, load_covariates, save_covariates
from ridgererand.calibrate import DesignBudget, calibrate_threshold

from conftest import make_x


@pytest.fixture
def xfile(tmp_path):
    p = tmp_path / "x.csv"
    save_covariates(make_x(100, 10, 0.5, seed=1), p)
    return p


def run(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def design(tmp_path, xfile, capsys, *extra, name="d"):
    out = tmp_path / name
    code, stdout, err = run(["design", xfile, "--out-dir", out, *extra], capsys)
    assert code == 0, err
    return out, json.loads((out / "design.json").read_text()), stdout


def test_design_outputs(tmp_path, xfile, capsys):
    out, doc, stdout = design(tmp_path, xfile, capsys)
    assert doc["schema_version"] == 1
    assert doc["criterion"]["kind"] == "ridge"
    assert doc["criterion"]["lambda"] in (0.01, 0.02)
    assert "lambda*" in stdout and "threshold" in stdout and "1 - v_hat" in stdout
    w = np.loadtxt(out / "assignment.csv", skiprows=1)
    assert w.sum() == 50 and doc["assignment"] == w.astype(int).tolist()
    assert all(0 < v < 1 for v in doc["v_hat"])
    trace = (out / "calibration.csv").read_text().splitlines()
    assert trace[0] == "lambda,a_lambda,mean_v_hat,objective,admitted"


def test_design_threshold_recomputable(tmp_path, xfile, capsys):
    _, doc, _ = design(tmp_path, xfile, capsys)
    x = load_covariates(xfile, doc["n_treated"])
    a = calibrate_threshold(compute_spectrum(x), doc["criterion"]["lambda"], DesignBudget(p_a=doc["p_a"]))
    assert abs(a - doc["criterion"]["threshold"]) <= 1e-8


def test_design_deterministic(tmp_path, xfile, capsys):
    a, _, _ = design(tmp_path, xfile, capsys, "--seed", 7, name="a")
    b, _, _ = design(tmp_path, xfile, capsys, "--seed", 7, name="b")
    for f in ("assignment.csv", "design.json", "calibration.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_lambda_zero_equals_mahalanobis(tmp_path, xfile, capsys):
    a, _, sa = design(tmp_path, xfile, capsys, "--lambda", 0, name="a")
    b, _, sb = design(tmp_path, xfile, capsys, "--criterion", "mahalanobis", name="b")
    assert sa == sb
    for f in ("assignment.csv", "design.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_duplicate_column(tmp_path, capsys):
    x = make_x(100, 4, 0.3)
    p = tmp_path / "dup.csv"
    save_covariates(CovariateMatrix(np.column_stack([x.values, x.values[:, 0]]), 50), p)
    code, _, err = run(["design", p, "--criterion", "mahalanobis", "--out-dir", tmp_path], capsys)
    assert code == 1 and "ridge" in err
    code, _, err = run(["design", p, "--out-dir", tmp_path], capsys)
    assert code == 0, err


def test_design_other_criteria(tmp_path, xfile, capsys):
    _, doc, _ = design(tmp_path, xfile, capsys, "--criterion", "truncated", "--k-e", 3, name="t")
    assert doc["criterion"]["k_e"] == 3
    _, doc, _ = design(tmp_path, xfile, capsys, "--criterion", "euclidean", "--standardize", name="e")
    assert doc["covariates"]["standardized"] is True
    _, doc, _ = design(tmp_path, xfile, capsys, "--lambda", 0.05, name="r")
    assert doc["criterion"]["lambda"] == 0.05
    code, _, _ = run(["design", xfile, "--criterion", "euclidean", "--lambda", 0.3], capsys)
    assert code == 1


def test_design_config_file(tmp_path, xfile, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# design settings\np-a = 0.2\nseed = 9\ncriterion = mahalanobis\n")
    _, doc, _ = design(tmp_path, xfile, capsys, "--config", cfg, "--seed", 3)
    assert doc["p_a"] == 0.2 and doc["seed"] == 3 and doc["criterion"]["kind"] == "mahalanobis"
    cfg.write_text("bogus = 1\n")
    code, _, err = run(["design", xfile, "--config", cfg], capsys)
    assert code == 1 and "bogus" in err


def test_numerical_failure_exit_code(tmp_path, xfile, capsys):
    code, _, err = run(["design", xfile, "--criterion", "mahalanobis", "--p-a", 0.001, "--max-draws", 1,
                        "--out-dir", tmp_path], capsys)
    assert code == 2 and "no acceptable assignment" in err


def test_user_error_exit_codes(tmp_path, capsys):
    assert run(["design", tmp_path / "missing.csv"], capsys)[0] == 1
    assert run(["design"], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1


def outcomes(tmp_path, y, name="y.csv"):
    p = tmp_path / name
    p.write_text("y\n" + "\n".join(repr(float(v)) for v in y) + "\n")
    return p


def infer(tmp_path, xfile, capsys, out, y, *extra):
    args = ["infer", xfile, out / "assignment.csv", outcomes(tmp_path, y), "--design", out / "design.json", *extra]
    code, stdout, err = run(args, capsys)
    assert code == 0, err
    return json.loads(stdout)


def test_infer_constant_outcomes(tmp_path, xfile, capsys):
    out, _, _ = design(tmp_path, xfile, capsys)
    res = infer(tmp_path, xfile, capsys, out, np.full(100, 2.0), "--reps", 99)
    assert res["p_value"] == 1.0


def test_infer_shift_brackets_tau(tmp_path, xfile, capsys):
    out, doc, _ = design(tmp_path, xfile, capsys)
    w = np.array(doc["assignment"])
    x = load_covariates(xfile, 50).values
    y = x.sum(axis=1) + 0.7 * w
    res = infer(tmp_path, xfile, capsys, out, y, "--reps", 199, "--profile", tmp_path / "p.csv")
    assert res["ci_lower"] <= 0.7 <= res["ci_upper"]
    assert (tmp_path / "p.csv").read_text().startswith("tau0,p_value\n")


def test_infer_min_p(tmp_path, xfile, capsys):
    out, doc, _ = design(tmp_path, xfile, capsys)
    w = np.array(doc["assignment"])
    res = infer(tmp_path, xfile, capsys, out, 100.0 * w, "--reps", 999)
    assert res["p_value"] == pytest.approx(0.001)


def test_infer_errors(tmp_path, xfile, capsys):
    out, _, _ = design(tmp_path, xfile, capsys)
    y = outcomes(tmp_path, np.zeros(100))
    code, _, err = run(["infer", xfile, out / "assignment.csv", y, "--design", tmp_path / "none.json"], capsys)
    assert code == 1 and "design sidecar not found" in err
    short = outcomes(tmp_path, np.zeros(60), "short.csv")
    code, _, err = run(["infer", xfile, out / "assignment.csv", short, "--design", out / "design.json"], capsys)
    assert code == 1 and "60 rows" in err


def test_simulate_figure1(tmp_path, capsys):
    code, stdout, _ = run(["simulate", "--preset", "figure1", "--out-dir", tmp_path], capsys)
    assert code == 0 and "euclidean" in stdout
    assert len((tmp_path / "figure1.csv").read_text().splitlines()) == 4001


def test_simulate_config_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "s.txt"
    cfg.write_text("K-grid = 10\nrho-grid = 0.5\nreplications = 50\npermutations = 0\nseed = 4\n")
    for name in ("a", "b"):
        code, stdout, err = run(["simulate", "--config", cfg, "--replications", 8, "--out-dir", tmp_path / name],
                                capsys)
        assert code == 0, err
    a, b = (tmp_path / "a" / "metrics.csv").read_bytes(), (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b
    rows = a.decode().splitlines()
    assert len(rows) == 4 and ",8," in rows[1]


def test_simulate_invalid_spec(tmp_path, capsys):
    code, _, err = run(["simulate", "--N", 2, "--rho-grid", "1.5", "--out-dir", tmp_path], capsys)
    assert code == 1 and "N must" in err and "rho_grid" in err


def test_dist(capsys):
    code, stdout, _ = run(["dist", "cdf", "--weights", "1", "--q", "3.841459"], capsys)
    assert code == 0 and float(stdout) == pytest.approx(0.95, abs=1e-4)
    code, stdout, _ = run(["dist", "quantile", "--weights", "1,1,1,1,1,1,1,1,1,1", "--p", "0.1"], capsys)
    assert float(stdout) == pytest.approx(4.865, abs=1e-3)
    assert run(["dist", "cdf", "--weights", "2", "--q", "1"], capsys)[0] == 1
    assert run(["dist", "quantile", "--weights", "0.5", "--p", "1.5"], capsys)[0] == 1
