"""End-to-end checks of the mzoibts executable."""

import csv
import json
import math
import os
import pathlib
import subprocess

import jsonschema
import pytest

BIN = os.environ.get("MZOIBTS_BIN", "build/mzoibts")
ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMAS = ROOT / "schemas"

TRUTH = {
    "beta1": [2.944],
    "beta2": [-2.197],
    "beta3": [0.847, -0.01, -0.5, -0.3],
    "beta4": [math.log(20.0), math.log(33.0 / 20.0)],
}


def run(*args, env=None):
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, env=e)


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def schema(name):
    return json.loads((SCHEMAS / name).read_text())


def its_block(n):
    return {"tau": n // 2 + 1, "t0": (n + 1) / 2, "transform": "log"}


def simulate(tmp, n, seed, theta=TRUTH, rho=0.5, family="gaussian", name="series.csv"):
    cfg = write_json(tmp / f"sim_{name}.json", {
        "n": n, "its": its_block(n), "theta": theta,
        "copula": {"family": family, "rho": rho}, "seed": seed,
    })
    out = tmp / name
    r = run("simulate", "--config", cfg, "--output", out)
    assert r.returncode == 0, r.stderr
    return out


def fit_config(tmp, data, n, se=None, name="fit.json", **extra):
    doc = {"data_path": str(data), "its": its_block(n), "copula": {"family": "gaussian"},
           "se": se or {"method": "hac"}, "seed": 3}
    doc.update(extra)
    return write_json(tmp / name, doc)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_simulate_study_config(tmp_path):
    out = simulate(tmp_path, 60, 11)
    rows = read_rows(out)
    assert len(rows) == 60
    assert list(rows[0].keys()) == ["t", "y"]
    assert [int(r["t"]) for r in rows] == list(range(1, 61))
    assert all(0.0 <= float(r["y"]) <= 1.0 for r in rows)


def test_simulate_is_byte_identical_per_seed(tmp_path):
    a = simulate(tmp_path, 80, 5, name="a.csv").read_bytes()
    b = simulate(tmp_path, 80, 5, name="b.csv").read_bytes()
    c = simulate(tmp_path, 80, 6, name="c.csv").read_bytes()
    assert a == b
    assert a != c


def test_simulate_seed_flag_overrides_config(tmp_path):
    cfg = write_json(tmp_path / "s.json", {
        "n": 30, "theta": TRUTH, "its": its_block(30),
        "copula": {"family": "frank", "rho": 3.3}, "seed": 1,
    })
    a = run("simulate", "--config", cfg, "--seed", 9)
    b = run("simulate", "--config", cfg, "--seed", 9)
    c = run("simulate", "--config", cfg)
    assert a.returncode == 0 and a.stdout == b.stdout and a.stdout != c.stdout


def test_simulate_infeasible_theta_exits_3(tmp_path):
    theta = dict(TRUTH, beta1=[0.0], beta2=[3.0], beta3=[-4.0, 0.0, 0.0, 0.0])
    cfg = write_json(tmp_path / "s.json", {
        "n": 20, "theta": theta, "its": its_block(20), "copula": {"family": "gaussian", "rho": 0.2},
    })
    r = run("simulate", "--config", cfg)
    assert r.returncode == 3, r.stderr
    assert "infeasible" in r.stderr


def test_fit_writes_schema_valid_result(tmp_path):
    data = simulate(tmp_path, 60, 2)
    out = tmp_path / "res.json"
    r = run("fit", "--config", fit_config(tmp_path, data, 60), "--output", out)
    assert r.returncode == 0, r.stderr
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, schema("fit_result.schema.json"))
    assert set(doc) == {"estimates", "std_errors", "conf_intervals", "tests", "copula",
                        "changepoint", "diagnostics"}
    assert len(doc["estimates"]) == 8
    for h in ("level_change", "trend_change", "level_and_trend_change"):
        assert 0.0 <= doc["tests"][h]["p_value"] <= 1.0
    assert doc["changepoint"]["tau"] == 31
    fitted = read_rows(tmp_path / "res_fitted.csv")
    assert len(fitted) == 60 and list(fitted[0]) == ["t", "y", "v_t"]
    assert all(0.0 < float(row["v_t"]) < 1.0 for row in fitted)


def test_fit_with_candidates_reports_cbic(tmp_path):
    data = simulate(tmp_path, 60, 4)
    cfg = fit_config(tmp_path, data, 60)
    doc = json.loads(cfg.read_text())
    doc["its"] = {"candidates": [29, 30, 31, 32, 33], "transform": "log"}
    write_json(cfg, doc)
    r = run("fit", "--config", cfg)
    assert r.returncode == 0, r.stderr
    res = json.loads(r.stdout)
    jsonschema.validate(res, schema("fit_result.schema.json"))
    cp = res["changepoint"]
    assert cp["selected"] is True
    best = min(cp["candidates"], key=lambda c: c["cbic"])
    assert cp["tau"] == best["tau"]
    assert cp["t0"] == cp["tau"]


def test_bad_y_exits_2_citing_row(tmp_path):
    data = tmp_path / "bad.csv"
    data.write_text("t,y\n1,0.2\n2,0.3\n3,1.2\n" + "".join(f"{t},0.5\n" for t in range(4, 30)))
    r = run("fit", "--config", fit_config(tmp_path, data, 29))
    assert r.returncode == 2
    assert "row 3" in r.stderr or "line 4" in r.stderr, r.stderr


@pytest.mark.parametrize("doc, needle", [
    ("{not json", "parse"),
    (json.dumps({"data_path": "x.csv", "its": {"tau": 3, "candidates": [3]}}), "exactly one"),
    (json.dumps({"data_path": "x.csv", "its": {"tau": 3}, "colour": 1}), "colour"),
    (json.dumps({"data_path": "x.csv", "its": {"tau": 3}, "se": {"method": "jackknife"}}), "se.method"),
    (json.dumps({"hello": 1}), "cannot tell"),
])
def test_bad_configs_exit_2(tmp_path, doc, needle):
    cfg = tmp_path / "c.json"
    cfg.write_text(doc)
    r = run("validate-config", "--config", cfg)
    assert r.returncode == 2
    assert needle in r.stderr, r.stderr


def test_missing_config_and_bad_flags_exit_2(tmp_path):
    assert run("fit", "--config", tmp_path / "nope.json").returncode == 2
    assert run("fit").returncode == 2
    assert run("frobnicate").returncode == 2


def test_validate_config_accepts_each_kind(tmp_path):
    data = simulate(tmp_path, 40, 1)
    assert run("validate-config", "--config", fit_config(tmp_path, data, 40)).returncode == 0
    sim = write_json(tmp_path / "s.json", {"n": 40, "theta": TRUTH, "its": its_block(40),
                                           "copula": {"family": "amh", "rho": 0.3}})
    assert run("validate-config", "--config", sim).returncode == 0
    mc = write_json(tmp_path / "m.json", {"n": [40, 60], "K": 2, "theta": TRUTH,
                                          "its": {"transform": "log"},
                                          "copula": {"family": "gaussian", "rho": 0.5}})
    r = run("validate-config", "--config", mc)
    assert r.returncode == 0, r.stderr


def test_no_interior_values_exits_3_with_diagnostics(tmp_path):
    data = tmp_path / "atoms.csv"
    data.write_text("y\n" + "".join(f"{(t * 7) % 3 // 2}\n" for t in range(40)))
    out = tmp_path / "res.json"
    r = run("fit", "--config", fit_config(tmp_path, data, 40), "--output", out)
    assert r.returncode == 3, r.stderr
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, schema("fit_result.schema.json"))
    assert doc["diagnostics"]["status"] == "numerical_failure"
    assert doc["diagnostics"]["error"]


def test_bootstrap_fit_independent_of_workers(tmp_path):
    data = simulate(tmp_path, 60, 8)
    cfg = fit_config(tmp_path, data, 60, se={"method": "bootstrap", "R": 20})
    a = run("fit", "--config", cfg, "--workers", 1)
    b = run("fit", "--config", cfg, "--workers", 8)
    assert a.returncode == 0, a.stderr
    assert a.stdout == b.stdout
    res = json.loads(a.stdout)
    assert res["diagnostics"]["bootstrap"]["used"] + res["diagnostics"]["bootstrap"]["failed"] == 20


def mc_doc(**extra):
    doc = {"n": 60, "K": 2, "theta": TRUTH, "its": {"t0": 30.5, "transform": "log"},
           "copula": {"family": "gaussian", "rho": 0.5}, "se": {"method": "bootstrap", "R": 10},
           "seed": 12}
    doc.update(extra)
    return doc


def strip_wall(doc):
    doc["config"].pop("output_path", None)
    for rep in doc["reports"]:
        rep.pop("wall_seconds")
    return doc


def test_mc_study_smoke_and_worker_invariance(tmp_path):
    cfg = write_json(tmp_path / "mc.json", mc_doc())
    out1, out8 = tmp_path / "r1.json", tmp_path / "r8.json"
    assert run("mc-study", "--config", cfg, "--workers", 1, "--output", out1).returncode == 0
    assert run("mc-study", "--config", cfg, "--workers", 8, "--output", out8).returncode == 0
    d1, d8 = json.loads(out1.read_text()), json.loads(out8.read_text())
    jsonschema.validate(d1, schema("mc_report.schema.json"))
    assert strip_wall(d1) == strip_wall(d8)
    rep = d1["reports"][0]
    assert rep["K"] == 2 and rep["converged"] + rep["failed"] == 2 and rep["converged"] >= 1
    table = read_rows(tmp_path / "r1_table.csv")
    assert {"bias", "se", "mean_se", "coverage", "power"} <= {row["metric"] for row in table}
    assert (tmp_path / "r1_table.csv").read_bytes() == (tmp_path / "r8_table.csv").read_bytes()


def test_mc_study_several_lengths_and_selection(tmp_path):
    cfg = write_json(tmp_path / "mc.json", mc_doc(n=[40, 60], se={"method": "hac"}, select_tau=True,
                                                  candidate_offsets=[-1, 0, 1]))
    r = run("mc-study", "--config", cfg, "--workers", 2)
    assert r.returncode == 0, r.stderr
    doc = json.loads(r.stdout)
    jsonschema.validate(doc, schema("mc_report.schema.json"))
    assert [rep["n"] for rep in doc["reports"]] == [40, 60]
    assert doc["config"]["candidate_offsets"] == [-1, 0, 1]
    assert all(0.0 <= rep["tau_selected_rate"] <= 1.0 for rep in doc["reports"])


def test_log_level_env(tmp_path):
    data = simulate(tmp_path, 40, 3)
    cfg = fit_config(tmp_path, data, 40)
    quiet = run("fit", "--config", cfg, env={"MZOIBTS_LOG": "error"})
    chatty = run("fit", "--config", cfg, env={"MZOIBTS_LOG": "debug"})
    assert quiet.returncode == chatty.returncode == 0
    assert quiet.stdout == chatty.stdout
    assert quiet.stderr == ""
    assert chatty.stderr != ""
    assert run("fit", "--config", cfg, env={"MZOIBTS_LOG": "loud"}).returncode == 2


def test_round_trip_recovers_truth(tmp_path):
    n = 2000
    data = simulate(tmp_path, n, 31, rho=0.3)
    r = run("fit", "--config", fit_config(tmp_path, data, n))
    assert r.returncode == 0, r.stderr
    res = json.loads(r.stdout)
    flat = [v for k in ("beta1", "beta2", "beta3", "beta4") for v in TRUTH[k]]
    names = list(res["estimates"])
    for name, truth in zip(names, flat):
        est, se = res["estimates"][name], res["std_errors"][name]
        assert abs(est - truth) <= 3 * se, (name, est, truth, se)
    for h in ("level_change", "trend_change", "level_and_trend_change"):
        assert res["tests"][h]["p_value"] is not None
    assert all(res["tests"]["coefficients"][k]["p_value"] is not None for k in names)


def test_null_series_rarely_rejects(tmp_path):
    # no intervention effect and no time trend
    theta = dict(TRUTH, beta3=[0.5, 0.0, 0.0, 0.0], beta4=[math.log(20.0), 0.0])
    # n = 200 keeps both atoms present in every run
    n, runs, level, trend = 200, 50, 0, 0
    for s in range(runs):
        data = simulate(tmp_path, n, 100 + s, theta=theta, rho=0.0, name=f"null{s}.csv")
        r = run("fit", "--config", fit_config(tmp_path, data, n, name=f"null{s}.json"))
        assert r.returncode == 0, r.stderr
        tests = json.loads(r.stdout)["tests"]
        level += tests["level_change"]["reject"]
        trend += tests["trend_change"]["reject"]
    assert level <= 0.1 * runs and trend <= 0.1 * runs, (level, trend)
