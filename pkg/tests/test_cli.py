import csv
import json
import math

import pytest

from gaussqc.cli import main


def run(*argv):
    return main(["--quiet", *map(str, argv)])


@pytest.fixture
def vacuum_csv(tmp_path):
    path = tmp_path / "vac.csv"
    assert run("simulate", "--bp", 0, "--shots", 1000, "--seed", 1, "-o", path) == 0
    return path


@pytest.fixture(scope="module")
def twin_beam_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("tb") / "tb.csv"
    assert run("simulate", "--bp", 0.125, "--shots", 10 ** 6, "--seed", 4, "-o", path) == 0
    return path


def test_vacuum_analyze(vacuum_csv, tmp_path):
    out = tmp_path / "r.json"
    assert run("analyze", "-i", vacuum_csv, "-o", out, "--csv", tmp_path / "r.csv") == 0
    doc = json.loads(out.read_text())
    rep = doc["report"]
    assert (rep["mu"], rep["mu1"], rep["mu2"]) == (1.0, 1.0, 1.0)
    assert rep["entanglement_verdict"] == "separable"
    prov = doc["provenance"]
    assert prov["command"] == "analyze" and prov["config"]["modes"] == "1"
    assert len(prov["inputs"][str(vacuum_csv)]) == 64
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert len(rows) == 1 and float(rows[0]["mu"]) == 1.0


def test_vacuum_histogram_is_single_cell(vacuum_csv):
    data = [l for l in vacuum_csv.read_text().splitlines() if l and not l.startswith("#")]
    assert data[1:] == ["0,0,1000"]
    meta = json.loads(vacuum_csv.with_name("vac.csv.meta.json").read_text())
    assert meta["seed"] == 1 and "Philox" in meta["generator"]


def test_truncated_csv_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("c1,c2,count\n0,0,10\n1,1\n")
    assert run("analyze", "-i", bad) == 3
    assert "line 3" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert run("analyze", "-i", tmp_path / "nope.csv") == 2


def test_usage_error_exits_3():
    with pytest.raises(SystemExit) as exc:
        main(["analyze"])
    assert exc.value.code == 3


def test_simulate_validation(tmp_path):
    assert run("simulate", "--bp", 0.1, "--shots", 0, "-o", tmp_path / "x.csv") == 3
    assert run("simulate", "--bp", 0.1, "--shots", 10, "--efficiency", "0,1",
               "-o", tmp_path / "x.csv") == 3
    assert not (tmp_path / "x.csv").exists()


def test_simulate_is_byte_identical(tmp_path):
    args = ("simulate", "--bp", 0.3, "--bn", "0.1,0.2", "--modes", 3, "--efficiency", "0.6,0.7",
            "--dark", "0.01,0.02", "--shots", 20000, "--seed", 8)
    assert run(*args, "-o", tmp_path / "a.csv", "--shots-output", tmp_path / "a.shots") == 0
    assert run(*args, "-o", tmp_path / "b.csv", "--shots-output", tmp_path / "b.shots") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.shots").read_bytes() == (tmp_path / "b.shots").read_bytes()


def test_shots_input_and_grouping(tmp_path):
    shots = tmp_path / "s.csv"
    assert run("simulate", "--bp", 0.2, "--shots", 30001, "--seed", 2, "-o", tmp_path / "h.csv",
               "--shots-output", shots) == 0
    out = tmp_path / "r.json"
    assert run("analyze", "-i", shots, "--format", "shots", "--group", 10, "--modes", 10,
               "--bootstrap", 20, "-o", out) == 0
    rep = json.loads(out.read_text())["report"]
    assert rep["M"] == 10 and rep["per_mode"]
    # grouped into 3000 windows of 10 shots; per-mode means recover Bp
    assert json.loads(out.read_text())["moments"]["w"]["1,0"] == pytest.approx(2.0, rel=0.1)


def test_em_nonconvergence_exits_5(twin_beam_csv):
    assert run("analyze", "-i", twin_beam_csv, "--efficiency", "0.5,0.5", "--max-iter", 3) == 5


def test_sweep_small_grid(tmp_path):
    out = tmp_path / "atlas.csv"
    assert run("sweep", "--grid", "1.5:3:2", "--mu-samples", 4, "--delta-samples", 3,
               "-o", out, "--json", tmp_path / "atlas.json") == 0
    rows = list(csv.DictReader(l for l in out.open() if not l.startswith("#")))
    assert len(rows) == 4
    assert [(float(r["r1"]), float(r["r2"])) for r in rows] == [
        (1.5, 1.5), (1.5, 3.0), (3.0, 1.5), (3.0, 3.0)]
    cells = json.loads((tmp_path / "atlas.json").read_text())["cells"]
    assert all(c["bracket_violations"] == 0 for c in cells)


def test_sweep_descending_grid_exits_3(tmp_path):
    assert run("sweep", "--grid", "4:1:3", "-o", tmp_path / "a.csv") == 3


def test_sweep_contours_on_uncovered_grid_exits_4(tmp_path):
    assert run("sweep", "--grid", "3:4:2", "--mu-samples", 4, "--delta-samples", 3,
               "-o", tmp_path / "a.csv", "--contours", tmp_path / "c.csv") == 4


def test_report_merge_twin_beam(twin_beam_csv, tmp_path):
    out = tmp_path / "m.json"
    assert run("report-merge", "-i", twin_beam_csv, "--bootstrap", 50, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert abs(doc["lambda"] - 0.5) < 3 * doc["lambda_se"]
    assert abs(doc["g2"] - 6.0) < 3 * doc["g2_se"]
    assert doc["squeezed"] and doc["super_gaussian"]


def test_report_merge_thermal_product(tmp_path):
    # thermal arm times vacuum arm: the merged beam is a single thermal mode
    hist = tmp_path / "th.csv"
    assert run("simulate", "--bp", 0, "--bn", "0.5,0", "--shots", 10 ** 5, "--seed", 3,
               "-o", hist) == 0
    out = tmp_path / "m.json"
    assert run("report-merge", "-i", hist, "--bootstrap", 20, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["lambda"] >= 1 and not doc["squeezed"]
    assert doc["g2"] == pytest.approx(2.0, abs=3 * doc["g2_se"])


def test_report_merge_two_thermal_arms_exits_4(tmp_path, capsys):
    # two independent thermal arms merge into a two-mode field (g2 = 1.5):
    # no single-mode Gaussian reproduces it and the |C|^2 estimate is negative
    hist = tmp_path / "th2.csv"
    assert run("simulate", "--bp", 0, "--bn", 0.5, "--shots", 10 ** 5, "--seed", 3, "-o", hist) == 0
    assert run("report-merge", "-i", hist) == 4
    assert "NegativeCSquared" in capsys.readouterr().err


def test_report_merge_vacuum_exits_4(vacuum_csv, capsys):
    assert run("report-merge", "-i", vacuum_csv) == 4
    assert "ZeroMean" in capsys.readouterr().err


def test_super_unity_purity_is_not_clamped(tmp_path, capsys):
    # a pure twin beam sits at mu = 1; this sample lands above it
    hist = tmp_path / "h.csv"
    assert run("simulate", "--bp", 0.1, "--modes", 5, "--shots", 10 ** 5, "--seed", 6, "-o", hist) == 0
    assert run("analyze", "-i", hist, "--modes", 5, "--bootstrap", 0, "-o", tmp_path / "r.json") == 4
    assert "DomainError" in capsys.readouterr().err


def test_analyze_multimode_twin_beam(tmp_path):
    hist = tmp_path / "h.csv"
    assert run("simulate", "--bp", 0.1, "--bn", 0.01, "--modes", 10, "--shots", 10 ** 6,
               "--seed", 1, "-o", hist) == 0
    out = tmp_path / "r.json"
    assert run("analyze", "-i", hist, "--modes", 10, "--bootstrap", 50, "-o", out) == 0
    rep = json.loads(out.read_text())["report"]
    assert rep["E_min"] > 0 and rep["entanglement_verdict"] == "entangled"


def test_reduce_command(tmp_path):
    hist = tmp_path / "h.csv"
    assert run("simulate", "--bp", 0.1, "--bn", 0.02, "--modes", 5, "--shots", 10 ** 5, "--seed", 6,
               "-o", hist) == 0
    mom = tmp_path / "w.json"
    assert run("analyze", "-i", hist, "--modes", 5, "--bootstrap", 0, "-o", tmp_path / "r.json",
               "--moments-output", mom) == 0
    out = tmp_path / "per_mode.json"
    assert run("reduce", "-i", mom, "--modes", 5, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["M"] == 5
    assert doc["w"]["1,0"] == pytest.approx(0.1 + 0.02, rel=0.05)
    assert run("reduce", "-i", mom, "--modes", 0.5, "-o", out) == 3


def test_analyze_modes_auto(tmp_path):
    hist = tmp_path / "h.csv"
    assert run("simulate", "--bp", 0.1, "--modes", 10, "--shots", 2 * 10 ** 5, "--seed", 6,
               "-o", hist) == 0
    out = tmp_path / "r.json"
    assert run("analyze", "-i", hist, "--modes", "auto", "--bootstrap", 0, "-o", out) == 0
    assert math.isclose(json.loads(out.read_text())["report"]["M"], 10, rel_tol=0.1)


def test_report_merge_per_mode(tmp_path):
    hist = tmp_path / "h.csv"
    assert run("simulate", "--bp", 0.125, "--modes", 10, "--shots", 10 ** 6, "--seed", 5,
               "-o", hist) == 0
    out = tmp_path / "m.json"
    assert run("report-merge", "-i", hist, "--modes", 10, "--bootstrap", 50, "-o", out) == 0
    doc = json.loads(out.read_text())
    assert doc["M"] == 10
    assert abs(doc["lambda"] - 0.5) < 3 * doc["lambda_se"]
    assert abs(doc["g2"] - 6.0) < 3 * doc["g2_se"]
