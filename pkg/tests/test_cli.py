import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from csmark import io
from csmark.cli import main, read_config
from csmark.errors import ParseError


def run(*argv):
    return main(["--log-level", "WARNING", *map(str, argv)])


@pytest.fixture
def data_file(tmp_path):
    path = tmp_path / "data.csv"
    assert run("simulate", "--n", 200, "--seed", 1, "--out", path) == 0
    return path


def test_simulate(tmp_path, data_file):
    lines = data_file.read_text().splitlines()
    assert lines[0] == "t,z" and len(lines) == 201
    again = tmp_path / "again.csv"
    run("simulate", "--n", 200, "--seed", 1, "--out", again, "--truth", tmp_path / "truth.csv")
    assert again.read_bytes() == data_file.read_bytes()
    assert (tmp_path / "truth.csv").read_text().startswith("x,y,t\n")
    manifest = io.read_json(tmp_path / "again.manifest.json")
    assert manifest["command"] == "simulate" and manifest["seed"] == 1
    assert set(manifest["artifacts"]) == {"data", "truth"}
    empty = tmp_path / "empty.csv"
    run("simulate", "--n", 0, "--out", empty)
    assert empty.read_text() == "t,z\n"


def test_fit_outputs(tmp_path, data_file):
    out = tmp_path / "fit"
    assert run("fit", "--data", data_file, "--prior", "lngl", "--iters", 500, "--out-dir", out) == 0
    meta = io.read_json(out / "meta.json")
    assert 0 < meta["acceptance"]["z"] < 1 and 0 < meta["acceptance"]["tau"] < 1
    assert meta["grid"] == {"m1": 1.0, "m2": 2.0, "j_bins": 25, "k_bins": 50}
    assert len(io.read_trace(out / "tau_trace.csv")) == 500
    w, g = io.read_weights(out / "posterior_mean.csv")
    assert (g.j_bins, g.k_bins) == (25, 50)
    assert io.read_json(out / "manifest.json")["acceptance"] == meta["acceptance"]


def test_fit_is_deterministic(tmp_path, data_file):
    for name in ("a", "b"):
        run("fit", "--data", data_file, "--prior", "dirichlet", "--bins-x", 5, "--bins-y", 10,
            "--iters", 300, "--seed", 4, "--out-dir", tmp_path / name)
    for f in ("posterior_mean.csv", "tau_trace.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_fit_single_iteration(tmp_path, data_file):
    run("fit", "--data", data_file, "--iters", 1, "--bins-x", 2, "--bins-y", 2, "--out-dir", tmp_path / "one")
    assert len(io.read_trace(tmp_path / "one" / "tau_trace.csv")) == 1


def test_fit_with_tuning(tmp_path, data_file):
    run("fit", "--data", data_file, "--bins-x", 5, "--bins-y", 10, "--iters", 200, "--tune",
        "--out-dir", tmp_path / "t")
    tuning = io.read_json(tmp_path / "t" / "meta.json")["tuning"]
    assert 0.25 <= tuning["accept_z"] <= 0.5 and 0.25 <= tuning["accept_tau"] <= 0.5


def test_fit_rejects_out_of_support(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,z\n0.5,0\n0.2,2.5\n")
    code = run("fit", "--data", bad, "--iters", 5, "--out-dir", tmp_path / "x")
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert code != 0
    assert err["error"] == "data-validation" and "observation 1" in err["message"]


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,z\n0.5\n")
    assert run("fit", "--data", bad, "--out-dir", tmp_path / "x") != 0
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "parse" and "line 2" in err["message"]
    assert run("fit", "--data", tmp_path / "missing.csv") != 0
    assert json.loads(capsys.readouterr().err.strip())["error"] == "io"


def test_evaluate(tmp_path):
    from csmark.grid import make_grid, true_bin_masses, BinWeights
    from csmark.sim import f0_density
    g = make_grid(1, 2, 5, 10)
    truth = tmp_path / "truth.csv"
    io.write_weights(truth, true_bin_masses(g, f0_density), g)
    run("evaluate", "--estimate", truth, "--out", tmp_path / "r0.json")
    r0 = io.read_json(tmp_path / "r0.json")
    assert r0["wasserstein_physical"] == pytest.approx(0, abs=1e-12)
    assert r0["wasserstein_index"] == pytest.approx(0, abs=1e-12)
    assert set(r0) == {"wasserstein_physical", "wasserstein_index", "grid", "inputs"}

    uni = tmp_path / "uniform.csv"
    io.write_weights(uni, BinWeights.uniform(g.p), g)
    run("evaluate", "--estimate", uni, "--out", tmp_path / "r1.json")
    r1 = io.read_json(tmp_path / "r1.json")
    assert r1["wasserstein_physical"] > 0 and r1["wasserstein_index"] > 0
    run("evaluate", "--estimate", uni, "--truth-csv", truth, "--out", tmp_path / "r2.json")
    assert io.read_json(tmp_path / "r2.json")["wasserstein_physical"] == pytest.approx(r1["wasserstein_physical"])

    other = tmp_path / "other.csv"
    g2 = make_grid(1, 2, 10, 5)
    io.write_weights(other, BinWeights.uniform(g2.p), g2)
    assert run("evaluate", "--estimate", uni, "--truth-csv", other, "--out", tmp_path / "r3.json") != 0


def test_mc_rows_and_summary(tmp_path):
    out = tmp_path / "mc"
    assert run("mc", "--n-list", 100, "--reps", 2, "--bins", "5/10", "--iters", 200, "--no-tune",
               "--out-dir", out) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert len(rows) == 4
    assert {r["prior"] for r in rows} == {"lngl", "dirichlet"}
    assert all(r["status"] == "ok" and float(r["wasserstein"]) > 0 for r in rows)
    summary = list(csv.DictReader((out / "summary.csv").open()))
    assert len(summary) == 2 and all(s["reps"] == "2" for s in summary)


def test_mc_records_failures(tmp_path, monkeypatch):
    import csmark.study
    from csmark.errors import ImputationError
    real = csmark.study.fit_and_score

    def flaky(prior, *args, **kwargs):
        if prior == "dirichlet":
            raise ImputationError("observation 3 has zero probability")
        return real(prior, *args, **kwargs)

    monkeypatch.setattr(csmark.study, "fit_and_score", flaky)
    out = tmp_path / "mc"
    assert run("mc", "--n-list", 20, "--reps", 2, "--bins", "2/2", "--iters", 20, "--no-tune",
               "--out-dir", out) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert [(r["prior"], r["status"]) for r in rows] == [
        ("lngl", "ok"), ("dirichlet", "imputation")] * 2
    assert rows[1]["wasserstein"] == "" and "zero probability" in rows[1]["error"]
    assert io.read_json(out / "manifest.json")["failed_rows"] == 2


def test_heatmap(tmp_path):
    w = tmp_path / "w.csv"
    w.write_text("0.25,0.25\n0.5,0\n")
    run("heatmap", "--weights", w, "--block", 2, "--out", tmp_path / "h.pgm")
    img = io.read_pgm(tmp_path / "h.pgm")
    assert img.shape == (4, 4)
    assert img[0, 0] == 255 and img[0, 3] == 0 and img[3, 0] == 128
    assert io.read_json(tmp_path / "h.json")["vmax"] == 0.5

    u = tmp_path / "u.csv"
    u.write_text("0.25,0.25\n0.25,0.25\n")
    run("heatmap", "--weights", u, "--out", tmp_path / "u.pgm")
    assert np.all(io.read_pgm(tmp_path / "u.pgm") == 255)

    bad = tmp_path / "bad.csv"
    bad.write_text("0.5,0.5\n0.1,oops\n")
    assert run("heatmap", "--weights", bad, "--out", tmp_path / "b.pgm") == 3


def test_heatmap_orientation(tmp_path):
    from csmark.grid import BinWeights, make_grid
    g = make_grid(1, 2, 25, 50)
    theta = np.zeros(g.p)
    theta[g.index_of(24, 49)] = 1.0  # latest time, largest mark
    io.write_weights(tmp_path / "pm.csv", BinWeights(theta), g)
    run("heatmap", "--weights", tmp_path / "pm.csv", "--out", tmp_path / "pm.pgm")
    img = io.read_pgm(tmp_path / "pm.pgm")
    assert img.shape == (50 * 8, 25 * 8)
    bright = np.argwhere(img == 255)
    assert bright.min(axis=0).tolist() == [0, 24 * 8] and len(bright) == 64


def test_config_precedence(tmp_path, data_file):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# study settings\niters = 7\nbins-x = 3\nbins_y = 4\nprior = dirichlet\n")
    run("fit", "--data", data_file, "--config", cfg, "--bins-y", 5, "--out-dir", tmp_path / "c")
    conf = io.read_json(tmp_path / "c" / "manifest.json")["config"]
    assert (conf["iters"], conf["bins_x"], conf["bins_y"], conf["prior"]) == (7, 3, 5, "dirichlet")
    assert conf["rho"] == 0.95
    cfg.write_text("itres = 3\n")
    assert run("fit", "--data", data_file, "--config", cfg) == 2
    cfg.write_text("just words\n")
    with pytest.raises(ParseError, match="line 1"):
        read_config(cfg)


def test_replay_reproduces_bytes(tmp_path, data_file):
    out = tmp_path / "fit"
    run("fit", "--data", data_file, "--bins-x", 5, "--bins-y", 10, "--iters", 300, "--tune",
        "--seed", 8, "--out-dir", out)
    assert run("replay", out / "manifest.json", "--out-root", tmp_path / "re") == 0
    for f in ("posterior_mean.csv", "tau_trace.csv"):
        assert (out / f).read_bytes() == (tmp_path / "re" / "fit" / f).read_bytes()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "csmark", "simulate", "--n", "3", "--out",
                          str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert res.returncode == 0
    bad = subprocess.run([sys.executable, "-m", "csmark", "fit", "--data", str(tmp_path / "nope.csv")],
                         capture_output=True, text=True)
    assert bad.returncode != 0 and json.loads(bad.stderr.strip().splitlines()[-1])["error"] == "io"
