import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from clusterinf.cli import main
from clusterinf.datasets import example_path, load_example, make_panel

sys.path.insert(0, str(Path(__file__).resolve().parent / "golden"))
from regenerate import CASES, HERE  # noqa: E402


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bundled_data_matches_generator():
    df = load_example()
    fresh = make_panel()
    assert list(df.columns) == list(fresh.columns)
    assert len(df) == len(fresh)
    np.testing.assert_allclose(df["y"], fresh["y"], atol=1e-6)


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden_output(name, capsys):
    code, out, _ = run(CASES[name], capsys)
    assert code == 0
    assert out == (HERE / name).read_text()


@pytest.mark.parametrize("name", ["fit.json", "ri.json", "simulate.json"])
def test_threads_do_not_change_output(name, capsys):
    _, one, _ = run(CASES[name] + ["--threads", "1"], capsys)
    _, eight, _ = run(CASES[name] + ["--threads", "8"], capsys)
    assert one == eight


def test_reports_carry_cluster_counts(capsys):
    for name in ("fit.json", "diagnose.json", "leveltest.json", "ri.json", "simulate.json"):
        rep = json.loads((HERE / name).read_text())
        blocks = rep.get("levels", [rep])
        for b in blocks:
            assert "G" in b and "N" in b
            assert "sizes" in b or "coarse_sizes" in b


def test_fit_table_has_every_method():
    rep = json.loads((HERE / "fit.json").read_text())
    state, none = rep["levels"]
    assert [r["method"] for r in state["rows"]] == ["HC1", "CV1", "CV3", "WCR"]
    assert none["G"] == none["N"] == 2304
    wald = json.loads((HERE / "fit_wald.json").read_text())["levels"][0]
    assert [r["method"] for r in wald["rows"]] == ["CV1", "WCR"]
    assert wald["wald"]["coefficients"] == ["educ", "age"]
    assert len(wald["wald"]["rows"]) == 2


def test_text_format(capsys):
    code, out, _ = run(CASES["fit.json"] + ["--format", "text"], capsys)
    assert code == 0
    assert "clustering: state" in out and "WCR" in out


def test_csv_outputs(tmp_path, capsys):
    csv = tmp_path / "reps.csv"
    code, _, _ = run(CASES["fit.json"] + ["--csv", str(csv)], capsys)
    assert code == 0
    assert len(pd.read_csv(csv)) == 999
    per = tmp_path / "clusters.csv"
    edf = tmp_path / "edf.csv"
    code, _, _ = run(CASES["diagnose.json"] + ["--csv", str(per), "--edf-csv", str(edf)], capsys)
    assert code == 0
    assert len(pd.read_csv(per)) == 24
    assert pd.read_csv(edf)["edf"].iloc[-1] == 1.0


def test_two_way_clustering(capsys):
    code, out, _ = run(["fit", "--outcome", "y", "--regressors", "educ,treat", "--coef", "treat",
                        "--cluster", "state,year", "--methods", "CV1"], capsys)
    assert code == 0
    lev = json.loads(out)["levels"][0]
    assert lev["G"] == 24 and lev["H"] == 8
    assert lev["rows"][0]["method"] == "TwoWayCV1"
    code, _, err = run(["fit", "--outcome", "y", "--regressors", "educ,treat", "--coef", "treat",
                        "--cluster", "state,year", "--methods", "CV1,WCR"], capsys)
    assert code == 2 and "two-way" in err


def test_missing_column_exit_2(capsys):
    code, _, err = run(["fit", "--outcome", "y", "--regressors", "income", "--coef", "income",
                        "--cluster", "state"], capsys)
    assert code == 2
    assert "income" in err


def test_one_cluster_refused(tmp_path, capsys):
    df = load_example().assign(one="all")
    path = tmp_path / "d.csv"
    df.to_csv(path, index=False)
    code, _, err = run(["fit", "--data", str(path), "--outcome", "y", "--regressors", "educ",
                        "--coef", "educ", "--cluster", "one", "--methods", "CV1"], capsys)
    assert code == 2 and "two clusters" in err


def test_numerical_failure_exit_3(tmp_path, capsys):
    df = load_example().assign(educ2=lambda d: 2 * d.educ)
    path = tmp_path / "d.csv"
    df.to_csv(path, index=False)
    code, _, err = run(["fit", "--data", str(path), "--outcome", "y", "--regressors",
                        "educ,educ2", "--coef", "educ", "--cluster", "state"], capsys)
    assert code == 3 and "numerical failure" in err


def test_missing_values_name_lines(tmp_path, capsys):
    df = load_example()
    df.loc[3, "educ"] = np.nan
    path = tmp_path / "d.csv"
    df.to_csv(path, index=False)
    code, _, err = run(["fit", "--data", str(path), "--outcome", "y", "--regressors", "educ",
                        "--coef", "educ", "--cluster", "state"], capsys)
    assert code == 2 and "[5]" in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[model]\noutcome = y\nregressors = educ,treat\ncoef = treat\n"
                   "cluster = state;none\n[bootstrap]\nboot-reps = 199\nseed = 7\n"
                   "methods = CV1,WCR\n")
    code, out, _ = run(["fit", "--config", str(cfg)], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["seed"] == 7 and len(rep["levels"]) == 2
    assert rep["levels"][0]["rows"][1]["B"] == 199
    code, out, _ = run(["fit", "--config", str(cfg), "--seed", "8"], capsys)
    assert json.loads(out)["seed"] == 8


@pytest.mark.parametrize("text, message", [
    ("[x]\nbogus = 1\n", ":2: unknown setting 'bogus'"),
    ("[x]\noutcome = y\nseed = abc\n", ":3: invalid value"),
    ("[x]\naux = mammen\n", ":2: 'aux' must be one of"),
])
def test_config_errors_name_lines(tmp_path, capsys, text, message):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    code, _, err = run(["fit", "--config", str(cfg)], capsys)
    assert code == 2
    assert message in err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--aux", "mammen"])
    assert exc.value.code == 2


def test_leveltest_fine_equals_coarse(capsys):
    code, out, _ = run(["leveltest", "--outcome", "y", "--regressors", "educ,treat",
                        "--coef", "treat", "--fine", "state", "--coarse", "state",
                        "--boot-reps", "99"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["tau"] == 0 and rep["degenerate"]


def test_ri_small_design_enumerates(tmp_path, capsys):
    rng = np.random.default_rng(0)
    g = np.repeat(np.arange(5), 4)
    df = pd.DataFrame({"g": g, "d": np.isin(g, [1, 3]).astype(int),
                       "y": rng.normal(size=20)})
    path = tmp_path / "d.csv"
    df.to_csv(path, index=False)
    code, out, _ = run(["ri", "--data", str(path), "--outcome", "y", "--treatment", "d",
                        "--cluster", "g"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["S"] == 9 and rep["enumerated"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "clusterinf", "diagnose", "--outcome", "y",
                           "--regressors", "educ,treat", "--coef", "treat", "--cluster", "state",
                           "--format", "text"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "g_star0" in proc.stdout


def test_example_path_exists():
    assert example_path().is_file()
