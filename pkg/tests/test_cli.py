import csv
import json
import subprocess
import sys
import warnings

import numpy as np
import pytest

from esag.cli import main
from esag.dist import EsagParams, log_density, sample, sample_rows
from esag.errors import IngestionError
from esag.io import IngestConfig, ingest, load_model
from esag.regress import Dataset, NullSpec, OptimizerConfig, fit, predict_params


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in r])
    return str(path)


def sphere_csv(path, n=80, seed=0, covariate=True):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    if covariate:
        z = (x - x.min()) / (x.max() - x.min()) + 1
        MU = np.array([2.0, -1.0, 1.5, 1.0]) + np.outer(z, [1.0, 0.5, 0.0, -0.5])
        Y = sample_rows(MU, np.tile([0.4, 0.2, -0.3, 0.1, 0.0], (n, 1)), rng)
    else:
        Y = sample(EsagParams.isotropic(np.array([1.0, 2.0, -1.0, 0.5])), n, rng)
    return write_csv(path, ["y1", "y2", "y3", "y4", "x"], np.column_stack([Y, x]))


def run(*argv):
    return main([str(a) for a in argv])


# ingestion --------------------------------------------------------------------


def test_compositional_square_root(tmp_path):
    p = write_csv(tmp_path / "c.csv", ["a", "b", "c", "d"], [[0.25] * 4, [0.1, 0.2, 0.3, 0.4]])
    data = ingest(IngestConfig(p, ("a", "b", "c", "d"), compositional=True))
    assert np.array_equal(data.responses[0], [0.5, 0.5, 0.5, 0.5])
    assert np.allclose(data.responses[1] ** 2, [0.1, 0.2, 0.3, 0.4])


def test_composition_off_simplex_names_row(tmp_path):
    p = write_csv(tmp_path / "c.csv", ["a", "b", "c"], [[0.2, 0.3, 0.5], [0.5, 0.5, 0.5]])
    with pytest.raises(IngestionError) as exc:
        ingest(IngestConfig(p, ("a", "b", "c"), compositional=True))
    assert exc.value.row == 2
    assert "row 2" in str(exc.value)


def test_negative_part_and_non_unit_rows(tmp_path):
    p = write_csv(tmp_path / "c.csv", ["a", "b", "c"], [[1.2, -0.2, 0.0]])
    with pytest.raises(IngestionError):
        ingest(IngestConfig(p, ("a", "b", "c"), compositional=True))
    p = write_csv(tmp_path / "s.csv", ["a", "b", "c"], [[1.0, 0.0, 0.0], [0.0, 1.0 + 1e-7, 0.0], [0.0, 0.0, 1.1]])
    with pytest.raises(IngestionError) as exc:
        ingest(IngestConfig(p, ("a", "b", "c")))
    assert exc.value.row == 3


def test_near_unit_rows_renormalized(tmp_path):
    p = write_csv(tmp_path / "s.csv", ["a", "b", "c"], [[0.6, 0.8 + 5e-7, 0.0]])
    y = ingest(IngestConfig(p, ("a", "b", "c"))).responses[0]
    assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-15)


def test_missing_value_names_row(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b,c\n1,0,0\n0,,1\n")
    with pytest.raises(IngestionError) as exc:
        ingest(IngestConfig(str(p), ("a", "b", "c")))
    assert exc.value.row == 2
    with pytest.raises(IngestionError):
        ingest(IngestConfig(str(p), ("a", "b", "zzz")))


def test_binary_covariate_standardizes_to_endpoints(tmp_path):
    p = write_csv(tmp_path / "b.csv", ["a", "b", "c", "loc"], [[1, 0, 0, 0], [0, 1, 0, 1], [0, 0, 1, 1]])
    data = ingest(IngestConfig(p, ("a", "b", "c"), ("loc",)))
    assert np.array_equal(data.covariates[:, 0], [1.0, 2.0, 2.0])


# exit codes ---------------------------------------------------------------------


def test_seed_mandatory(tmp_path, capsys):
    p = sphere_csv(tmp_path / "d.csv")
    for cmd in ("test", "predict", "simulate"):
        assert run(cmd, "--input", p, "--responses", "y1,y2,y3,y4", "--null", "isotropy") == 2
        assert "--seed" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    p = sphere_csv(tmp_path / "d.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("y1,y2\n1,zero\n")
    assert run("fit") == 2
    assert run("fit", "--input", bad, "--responses", "y1,y2") == 3
    assert run("fit", "--input", tmp_path / "nope.csv", "--responses", "y1") == 5
    assert run("fit", "--input", p, "--responses", "y1,y2,y3,y4", "--out", tmp_path / "no" / "r.json") == 5
    assert run("test", "--input", p, "--responses", "y1,y2,y3,y4", "--seed", 1) == 2
    assert run("fit", "--input", p, "--responses", "y1,y2,y3,y4", "--covariates", "x",
               "--maxiter", 1, "--restarts", 0, "--out", tmp_path / "r.json") == 4
    assert json.loads((tmp_path / "r.json").read_text())["converged"] is False


def test_command_flag_form(tmp_path):
    p = sphere_csv(tmp_path / "d.csv", covariate=False)
    out = tmp_path / "r.json"
    assert run("--command", "fit", "--input", p, "--responses", "y1,y2,y3,y4", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["command"] == "fit" and rep["schema_version"] == "esag-report/1"


# reports -----------------------------------------------------------------------------


def test_fit_report_round_trip(tmp_path):
    p = sphere_csv(tmp_path / "d.csv", n=120)
    out = tmp_path / "fit.json"
    assert run("fit", "--input", p, "--responses", "y1,y2,y3,y4", "--covariates", "x", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["config"]["responses"] == ["y1", "y2", "y3", "y4"]
    assert rep["result"]["fit"]["converged"] is True
    coeffs, rec = load_model(out)
    data = ingest(IngestConfig(p, ("y1", "y2", "y3", "y4"), ("x",)))
    fr = fit(data, NullSpec.full(), OptimizerConfig())
    held = sample(EsagParams.isotropic(np.array([1.0, 0.0, 0.0, 0.0])), 25, np.random.default_rng(1))
    for x0 in (-1.0, 0.3, 1.2):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = predict_params(coeffs, [x0], rec)
            b = predict_params(fr.coefficients, [x0], data.standardization_record)
        assert np.allclose(log_density(held, a), log_density(held, b), rtol=0, atol=1e-12)


@pytest.mark.parametrize("cmd,extra", [
    ("test", ["--null", "isotropy", "--statistic", "roc,d,m,lr", "-B", "6", "--mc-size", "50"]),
    ("predict", ["--x0", "0.0", "--x0", "1.0", "-B", "3", "-m", "200"]),
    ("simulate", ["--dgm", "V0", "-n", "40", "--reps", "3", "-B", "3", "--statistic", "roc,lr"]),
    ("simulate", ["--kind", "coverage", "-n", "40", "--reps", "3", "-B", "2", "-m", "100"]),
    ("gof", ["-B", "4"]),
])
def test_reports_byte_identical_across_workers(tmp_path, cmd, extra):
    p = sphere_csv(tmp_path / "d.csv", n=70)
    texts = []
    for w in (1, 4, 8):
        out = tmp_path / f"{cmd}{w}.json"
        code = run(cmd, "--input", p, "--responses", "y1,y2,y3,y4", "--covariates", "x",
                   "--seed", 17, "--workers", w, "--out", out, *extra)
        assert code == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1] == texts[2]
    rep = json.loads(texts[0])
    assert rep["config"]["seed"] == 17 and "workers" not in rep["config"]


def test_predict_binary_covariate_distinct_thresholds(tmp_path):
    rng = np.random.default_rng(3)
    loc = np.repeat([0.0, 1.0], 60)
    MU = np.where(loc[:, None] == 0, [3.0, 1.0, 0.5, 0.0], [1.0, 2.0, 0.0, 1.0]) * 4
    G = np.where(loc[:, None] == 0, [0.0] * 5, [1.0, -0.5, 0.5, 0.3, 0.2])
    Y = sample_rows(MU, G, rng)
    p = write_csv(tmp_path / "b.csv", ["y1", "y2", "y3", "y4", "loc"], np.column_stack([Y, loc]))
    out = tmp_path / "p.json"
    assert run("predict", "--input", p, "--responses", "y1,y2,y3,y4", "--covariates", "loc",
               "--x0", 0, "--x0", 1, "-B", 5, "-m", 500, "--seed", 2, "--out", out) == 0
    preds = json.loads(out.read_text())["result"]["predictions"]
    assert [pr["x0"] for pr in preds] == [[0.0], [1.0]]
    for a, b in zip(preds[0]["regions"], preds[1]["regions"]):
        assert a["level"] == b["level"] and a["threshold"] != b["threshold"]


def test_gof_report_has_histogram(tmp_path):
    p = sphere_csv(tmp_path / "d.csv", n=90)
    out = tmp_path / "g.json"
    assert run("gof", "--input", p, "--responses", "y1,y2,y3,y4", "--covariates", "x",
               "-B", 3, "--bins", 12, "--seed", 0, "--out", out) == 0
    g = json.loads(out.read_text())["result"]["gof"]
    assert len(g["T"]) == 90 and g["df"] == 3
    assert len(g["histogram"]["counts"]) == 12 and sum(g["histogram"]["counts"]) == 90


def test_profile_command(tmp_path):
    out = tmp_path / "pr.json"
    assert run("profile", "-n", 2000, "--seed", 0, "--out", out) == 0
    cells = json.loads(out.read_text())["result"]["profiles"]
    assert len(cells) == 9 and all(c["roc_star"] > 0 for c in cells)


def test_roc_cli_size_on_isotropic_data(tmp_path):
    spec = EsagParams.isotropic(np.array([2.0, -1.0, 1.0, 1.5]))
    big = 0
    for seed in range(20):
        Y = sample(spec, 100, np.random.default_rng(1000 + seed))
        p = write_csv(tmp_path / f"i{seed}.csv", ["y1", "y2", "y3", "y4"], Y)
        out = tmp_path / f"t{seed}.json"
        assert run("test", "--input", p, "--responses", "y1,y2,y3,y4", "--null", "isotropy",
                   "-B", 20, "--restarts", 0, "--seed", seed, "--out", out) == 0
        big += json.loads(out.read_text())["result"]["tests"]["roc"]["p_value"] > 0.05
    assert big >= 18


def test_console_script(tmp_path):
    p = sphere_csv(tmp_path / "d.csv", covariate=False)
    res = subprocess.run([sys.executable, "-m", "esag.cli", "fit", "--input", p, "--responses", "y1,y2,y3,y4"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["result"]["n"] == 80
