import json
import os
import subprocess
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[2]
DATA = ROOT / "tests" / "data" / "gaussian_small.csv"
SPEC = ROOT / "tests" / "data" / "gaussian_small.spec"
CLI = os.environ.get("GLMMLASSO_CLI", str(ROOT / "build" / "glmmlasso"))


def run(*args, env=None, check=None):
    e = dict(os.environ)
    if env:
        e.update(env)
    p = subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=e, timeout=600)
    if check is not None:
        assert p.returncode == check, p.stdout + p.stderr
    return p


def model_args():
    return ["--data", DATA, "--spec", SPEC]


def load_data():
    rows = np.genfromtxt(DATA, delimiter=",", names=True, dtype=None, encoding="utf-8")
    subj = np.array(rows["subject"])
    X = np.column_stack([np.ones(len(rows)), rows["x1"], rows["x2"], rows["x3"]])
    return X, np.asarray(rows["y"], float), subj


def marginal(fit):
    X, y, subj = load_data()
    s2 = fit["random_effects"][0]["covariance"][0][0]
    Z = (subj[:, None] == np.unique(subj)[None, :]).astype(float)
    V = fit["phi"] * np.eye(len(y)) + s2 * Z @ Z.T
    return X, y, V


@pytest.fixture(scope="module")
def fit0(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit0")
    run("fit", *model_args(), "--lambda", 0, "--out", out, check=0)
    return out, json.loads((out / "fit.json").read_text())


def test_unpenalized_fit_is_generalized_least_squares(fit0):
    _, doc = fit0
    fit = doc["fit"]
    X, y, V = marginal(fit)
    Vi = np.linalg.inv(V)
    gls = np.linalg.solve(X.T @ Vi @ X, X.T @ Vi @ y)
    assert np.max(np.abs(np.array(fit["beta"]) - gls)) < 1e-6
    # f is -2 log-likelihood of the gaussian marginal model
    r = y - X @ gls
    _, logdet = np.linalg.slogdet(V)
    neg2ll = len(y) * np.log(2 * np.pi) + logdet + r @ Vi @ r
    assert abs(fit["objective"]["f"] - neg2ll) < 1e-6 * abs(neg2ll)
    assert fit["convergence"]["converged"]


def test_unpenalized_fit_matches_statsmodels(fit0):
    sm = pytest.importorskip("statsmodels.formula.api")
    pd = pytest.importorskip("pandas")
    d = pd.read_csv(DATA)
    r = sm.mixedlm("y ~ x1 + x2 + x3", d, groups=d.subject).fit(reml=False)
    fit = fit0[1]["fit"]
    assert np.allclose(fit["beta"], r.fe_params.values, atol=1e-4)
    assert abs(fit["objective"]["f"] + 2 * r.llf) < 1e-4


def test_rescore_round_trip(fit0, tmp_path):
    out, doc = fit0
    p = run("rescore", *model_args(), "--fit", out / "fit.json", check=0)
    assert "ok" in p.stdout
    doc["fit"]["objective"]["q_la"] += 1e-3
    bad = tmp_path / "tampered.json"
    bad.write_text(json.dumps(doc))
    p = run("rescore", *model_args(), "--fit", bad)
    assert p.returncode == 2 and "MISMATCH" in p.stdout


def test_path_starts_empty_and_marks_choices(tmp_path):
    run("fit", *model_args(), "--path", "--n-lambda", 6, "--out", tmp_path, check=0)
    doc = json.loads((tmp_path / "fit.json").read_text())
    recs = doc["path"]["records"]
    assert len(recs) == 6
    assert recs[0]["nonzero"] == [] or all(e["name"] == "(Intercept)" for e in recs[0]["nonzero"])
    assert sum(r["bic_best"] for r in recs) == 1
    assert sum(r["aic_best"] for r in recs) == 1
    run("rescore", *model_args(), "--fit", tmp_path / "fit.json", check=0)


def test_two_stage_hybrid(tmp_path):
    run("fit", *model_args(), "--two-stage", "hybrid", "--n-lambda", 6, "--out", tmp_path, check=0)
    doc = json.loads((tmp_path / "fit.json").read_text())
    ts = doc["two_stage"]
    assert ts["kind"] == "hybrid"
    assert ts["stage2"]["lambda"] == 0
    assert {e["name"] for e in ts["stage2"]["nonzero"]} <= set(ts["selected"]) | {"(Intercept)"}


def test_config_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(f"[fit]\ndata = {DATA}\nspec = {SPEC}\nlambda = 5\nout = {tmp_path / 'o'}\n")
    run("--config", cfg, "fit", check=0)
    assert (tmp_path / "o" / "fit.json").exists()
    cfg.write_text(f"[fit]\ndata = {DATA}\nspec = {SPEC}\nlambda = 5\nbogus = 1\n")
    assert run("--config", cfg, "fit").returncode == 1


def test_input_errors(tmp_path):
    assert run("fit", *model_args(), "--lambda", -1).returncode == 1
    assert run("fit", *model_args(), "--lambda", 0, "--family", "gamma", "--out", tmp_path).returncode == 1
    assert run("fit", "--data", DATA, "--model", "response = nope", "--lambda", 0, "--out", tmp_path).returncode == 1
    broken = tmp_path / "broken.csv"
    broken.write_text("subject,x1,x2,x3,y\ns1,1,2,3\n")
    p = run("fit", "--data", broken, "--spec", SPEC, "--lambda", 0, "--out", tmp_path)
    assert p.returncode == 1 and "input error" in p.stderr
    assert run("simulate", "no_such_design", "--out", tmp_path).returncode == 1
    assert run("bogus").returncode == 1


def test_compare_self_is_exact(tmp_path):
    run("compare", "--self", *model_args(), "--n-lambda", 5, "--out", tmp_path, check=0)
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    mean = next(l for l in lines if l.startswith("mean,")).split(",")
    assert float(mean[3]) == 0.0 and float(mean[4]) == 0.0


def test_simulate_custom_is_worker_independent(tmp_path):
    design = "family=bernoulli; N=16; n_C=6; p=8; beta0=0.2,1,-1; theta2=1"
    args = ["simulate", "custom", "--custom", design, "--replicates", 3, "--n-lambda", 6,
            "--methods", "glmmlasso", "oracle"]
    run(*args, "--workers", 1, "--out", tmp_path / "a", check=0)
    run(*args, "--out", tmp_path / "b", env={"GLMMLASSO_WORKERS": "3"}, check=0)
    a = (tmp_path / "a" / "custom_replicates.csv").read_text()
    b = (tmp_path / "b" / "custom_replicates.csv").read_text()
    assert a == b and len(a.splitlines()) == 1 + 3 * 2


def test_designs_lists_named_designs():
    p = run("designs", check=0)
    names = p.stdout.split()
    assert "logistic_H1" in names and "poisson_L1" in names and "growing_p" in names
