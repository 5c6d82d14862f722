import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from fairmask import cli
from fairmask.dataset import ColumnRoles, DatasetView, load_csv, write_csv
from fairmask.harness import ExperimentPlan, make_biased_dataset, plan_from_dict, run_plan
from fairmask.measures import evaluate_all

ROLE_ARGS = ["--label", "label", "--protected", "group"]
ROLES = ColumnRoles("label", "group")


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def biased_csv(tmp_path):
    path = tmp_path / "d.csv"
    write_csv(DatasetView.full(make_biased_dataset(n=400, seed=2)), path)
    return path


def test_measure_parity(tmp_path, capsys):
    path = tmp_path / "p.csv"
    path.write_text("x,label,group\n1,1,a\n2,0,a\n3,1,b\n4,0,b\n")
    code, out, _ = run(capsys, "measure", "--input", path, *ROLE_ARGS)
    assert code == 0
    report = json.loads(out)
    assert report["scores"] == {"sdp_avg": 0.0, "sdp_max": 0.0, "sdp_sum": 0.0}
    assert report["k"] == 2 and report["group_sizes"] == {"a": 2, "b": 2}


def test_measure_extreme_two_groups(tmp_path, capsys):
    path = tmp_path / "e.csv"
    path.write_text("x,label,group\n1,1,a\n2,1,a\n3,0,b\n")
    report = json.loads(run(capsys, "measure", "--input", path, *ROLE_ARGS)[1])
    assert report["scores"]["sdp_sum"] == report["scores"]["sdp_max"] == 1.0


def test_measure_matches_library(biased_csv, capsys):
    report = json.loads(run(capsys, "measure", "--input", biased_csv, *ROLE_ARGS)[1])
    assert report["scores"] == evaluate_all(DatasetView.full(load_csv(biased_csv, ROLES)))


def test_measure_errors(tmp_path, biased_csv, capsys):
    code, _, err = run(capsys, "measure", "--input", biased_csv, "--label", "nope", "--protected", "group")
    assert code == 2 and "nope" in err
    code, _, _ = run(capsys, "measure", "--input", tmp_path / "missing.csv", *ROLE_ARGS)
    assert code == 2


def test_generate(biased_csv, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    code, out, _ = run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--seed", 4, "--output", a)
    assert code == 0
    summary = json.loads(out)
    assert summary["rows"] == 400 and "label" in summary["ks"]
    run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--seed", 4, "--output", b)
    assert a.read_bytes() == b.read_bytes()
    real = load_csv(biased_csv, ROLES)
    fake = load_csv(a, ROLES, like=real)
    assert fake.n == real.n and fake.feature_names == real.feature_names
    run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--rows", 50, "--output", b)
    assert len(b.read_text().splitlines()) == 51


def test_generate_external_passthrough(biased_csv, tmp_path, capsys):
    ext, out = tmp_path / "ext.csv", tmp_path / "out.csv"
    run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--output", ext, "--seed", 1)
    code, _, _ = run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--external", ext, "--output", out)
    assert code == 0 and out.read_bytes() == ext.read_bytes()


def test_optimize_original_returns_cleaned_input(tmp_path, capsys):
    src = tmp_path / "in.csv"
    src.write_text("x,c,label,group\n1.5,a,1,p\n2,b,0,q\n,a,1,q\n-3.25,b,1,p\n7,a,0,q\n")
    out = tmp_path / "out.csv"
    code, _, _ = run(
        capsys, "optimize", "--input", src, *ROLE_ARGS, "--solver", "original", "--output", out
    )
    assert code == 0
    assert load_csv(out, ROLES).same_content(load_csv(src, ROLES))
    lines = src.read_text().splitlines()
    assert out.read_text().splitlines() == [lines[0], lines[1], lines[2], lines[4], lines[5]]


def test_optimize_privacy_has_no_real_rows(biased_csv, tmp_path, capsys):
    # synthetic file built from half the real rows plus copula rows
    real = load_csv(biased_csv, ROLES)
    syn = tmp_path / "syn.csv"
    run(capsys, "generate", "--input", biased_csv, *ROLE_ARGS, "--output", syn, "--rows", 200)
    copies = pd.read_csv(biased_csv, dtype=str).iloc[:100]
    pd.concat([pd.read_csv(syn, dtype=str), copies]).to_csv(syn, index=False)
    out = tmp_path / "fair.csv"
    code, _, _ = run(
        capsys, "optimize", "--input", biased_csv, *ROLE_ARGS, "--mode", "privacy",
        "--synthetic", syn, "--pop", 20, "--gens", 20, "--output", out,
    )
    assert code == 0
    fair = load_csv(out, ROLES, like=real)
    real_rows = {r.tobytes() for r in real.rows()}
    assert fair.n > 0
    assert not any(r.tobytes() in real_rows for r in fair.rows())


def test_optimize_report_and_reproducibility(biased_csv, tmp_path, capsys):
    out, report = tmp_path / "fair.csv", tmp_path / "r.json"
    code, _, _ = run(
        capsys, "optimize", "--input", biased_csv, *ROLE_ARGS, "--mode", "merge", "--generate",
        "--measure", "sdp_max", "--pop", 20, "--gens", 30, "--seed", 5,
        "--output", out, "--report", report, "--provenance-column", "source",
    )
    assert code == 0
    rep = json.loads(report.read_text())
    for part in ("before", "after", "baseline_pool"):
        assert set(rep[part]["scores"]) == {"sdp_sum", "sdp_avg", "sdp_max"}
    assert rep["after"]["scores"]["sdp_max"] == pytest.approx(rep["objective"]["best"])
    assert rep["popcount"] == rep["selected_rows"] == len(out.read_text().splitlines()) - 1
    assert rep["seed"] == 5 and rep["config"]["measure"] == "sdp_max"
    assert rep["evaluations"] > 0 and rep["runtime_seconds"] >= 0
    assert set(pd.read_csv(out)["source"]) <= {"real", "synthetic"}

    # replay from the echoed config alone
    config = tmp_path / "config.json"
    config.write_text(json.dumps(rep["config"]))
    again = tmp_path / "again.csv"
    code, _, _ = run(capsys, "optimize", "--config", config, "--output", again, "--report", tmp_path / "r2.json")
    assert code == 0 and again.read_bytes() == out.read_bytes()


def test_config_file_and_flag_precedence(biased_csv, tmp_path, capsys):
    config = tmp_path / "run.toml"
    config.write_text(
        f'input = "{biased_csv}"\nlabel = "label"\nprotected = "group"\n'
        'solver = "random"\npop = 10\nbudget = 30\nseed = 3\n'
    )
    report = tmp_path / "r.json"
    code, _, _ = run(capsys, "optimize", "--config", config, "--seed", 8, "--report", report)
    assert code == 0
    rep = json.loads(report.read_text())
    assert rep["config"]["seed"] == 8 and rep["config"]["solver"] == "random"
    assert rep["evaluations"] == 30


@pytest.mark.parametrize(
    "content, key",
    [
        ('{"mode": "sideways"}', "mode"),
        ('{"bogus": 1}', "bogus"),
        ('{"mode": "merge"}', "synthetic"),
        ('{"pop": 0}', "pop_size"),
    ],
)
def test_config_errors_name_the_key(biased_csv, tmp_path, capsys, content, key):
    config = tmp_path / "c.json"
    raw = json.loads(content)
    raw.update(input=str(biased_csv), label="label", protected="group")
    config.write_text(json.dumps(raw))
    code, _, err = run(capsys, "optimize", "--config", config)
    assert code == 2
    assert key in err


def test_optimize_missing_roles(biased_csv, capsys):
    code, _, err = run(capsys, "optimize", "--input", biased_csv)
    assert code == 2 and "label" in err


def test_after_not_worse_than_before(tmp_path, capsys):
    path = tmp_path / "d.csv"
    write_csv(DatasetView.full(make_biased_dataset(n=300, seed=0)), path)
    for seed in range(15):
        report = tmp_path / f"r{seed}.json"
        code, _, _ = run(
            capsys, "optimize", "--input", path, *ROLE_ARGS, "--pop", 10, "--gens", 10,
            "--selection", "roulette", "--seed", seed, "--report", report,
        )
        rep = json.loads(report.read_text())
        assert code == 0
        assert rep["after"]["scores"]["sdp_sum"] <= rep["before"]["scores"]["sdp_sum"]


def test_random_solver_falls_back_to_baseline(tmp_path, capsys):
    path = tmp_path / "d.csv"
    write_csv(DatasetView.full(make_biased_dataset(n=300, group_rates=(0.5, 0.5), seed=0)), path)
    report = tmp_path / "r.json"
    code, _, _ = run(
        capsys, "optimize", "--input", path, *ROLE_ARGS, "--solver", "random",
        "--budget", 1, "--report", report,
    )
    rep = json.loads(report.read_text())
    assert code == 0 and rep["fell_back_to_baseline"]
    assert rep["after"]["scores"]["sdp_sum"] == 0.0


def test_internal_failure_exit_code(biased_csv, capsys, monkeypatch):
    def explode(*args, **kwargs):
        raise RuntimeError("solver crashed")

    monkeypatch.setattr(cli, "solve", explode)
    code, _, err = run(capsys, "optimize", "--input", biased_csv, *ROLE_ARGS)
    assert code == 3 and "solver crashed" in err


def test_benchmark(tmp_path, capsys):
    plan = {
        "datasets": [{"name": "toy", "biased": {"n": 200, "seed": 1}}],
        "modes": ["remove", "add"],
        "solvers": [{"solver": "original"}, {"solver": "ga", "pop": 10, "gens": 5}],
        "repeats": 15,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = tmp_path / "results"
    code, printed, _ = run(capsys, "benchmark", "--plan", plan_path, "--out", out)
    assert code == 0 and "mean_score" in printed
    records = [json.loads(line) for line in (out / "results_raw.jsonl").read_text().splitlines()]
    assert len(records) == 4 * 15
    table = pd.read_csv(out / "results_table.csv", float_precision="round_trip")
    assert (table["trials"] == 15).all()

    library = run_plan(plan_from_dict(plan)).table
    cols = ["dataset", "mode", "measure", "solver", "trials", "failed", "mean_score", "std_score"]
    assert table[cols].to_csv(index=False) == library[cols].to_csv(index=False)


def test_benchmark_grid_toml(tmp_path, capsys):
    plan_path = tmp_path / "plan.toml"
    plan_path.write_text(
        'repeats = 1\n[[datasets]]\nname = "toy"\nbiased = { n = 100 }\n'
        '[[solvers]]\nsolver = "ga"\nselection = "tournament"\n'
    )
    code, printed, _ = run(
        capsys, "benchmark", "--plan", plan_path, "--grid", "--pop-sizes", "4,6", "--generations", "2,3",
        "--out", tmp_path / "g",
    )
    assert code == 0
    assert len(pd.read_csv(tmp_path / "g" / "grid_table.csv")) == 4


def test_benchmark_empty_plan(tmp_path, capsys):
    plan_path = tmp_path / "plan.json"
    plan_path.write_text("{}")
    code, _, err = run(capsys, "benchmark", "--plan", plan_path)
    assert code == 2 and "datasets" in err and "solvers" in err


def test_module_entry_point(biased_csv):
    proc = subprocess.run(
        [sys.executable, "-m", "fairmask", "measure", "--input", str(biased_csv), *ROLE_ARGS],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["k"] == 4
