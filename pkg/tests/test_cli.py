import csv
import json
import subprocess
import sys

import pytest

from parkdetect.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def tree(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def fig1_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--preset", "fig1", "--seed", 7, "--out", out) == 0
    return out


def test_simulate_writes_scenario(fig1_dir, capsys):
    assert json.loads((fig1_dir / "map.json").read_text())["spaces"].__len__() == 17
    truth = rows(fig1_dir / "truth.csv")
    assert sum(int(r["state"]) for r in truth) == 13
    manifest = json.loads((fig1_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7 and set(manifest["artifacts"]) == {"map.json", "truth.csv", "gps_0.csv", "radar_0.csv"}


def test_simulate_summary_line(tmp_path, capsys):
    run("simulate", "--seed", 1, "--out", tmp_path)
    assert capsys.readouterr().out.strip() == "spaces 17 passes 1 events 0 occupied 13"


def test_simulate_rerun_byte_identical(fig1_dir, tmp_path):
    run("simulate", "--preset", "fig1", "--seed", 7, "--out", tmp_path)
    assert tree(tmp_path) == tree(fig1_dir)


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PARKDETECT_OUT", str(tmp_path / "envout"))
    assert run("simulate", "--seed", 2) == 0
    assert (tmp_path / "envout" / "map.json").is_file()


def test_invalid_config_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--spaces", 0, "--seed", 1, "--out", tmp_path)
    assert exc.value.code == 2


def test_seed_required(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--out", tmp_path)
    assert exc.value.code == 2


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("simulate", "--seed", 1, "--out", blocker / "sub") == 1
    assert "cannot write" in capsys.readouterr().err


def test_detect_fig1(fig1_dir, tmp_path):
    assert run("detect", "--input", fig1_dir, "--method", "msc", "--bandwidth", 2.0, "--out", tmp_path) == 0
    est = rows(tmp_path / "estimates.csv")
    truth = {r["space_id"]: r["state"] for r in rows(fig1_dir / "truth.csv")}
    assert sum(r["state"] == "OCCUPIED" for r in est) == 13
    assert all((r["state"] == "OCCUPIED") == (truth[r["space_id"]] == "1") for r in est)
    for name in ("clusters.csv", "clusters_meta.json", "boundaries.csv", "gaps.csv", "manifest.json"):
        assert (tmp_path / name).is_file()


def test_detect_rerun_byte_identical(fig1_dir, tmp_path):
    run("detect", "--input", fig1_dir, "--out", tmp_path / "a")
    run("detect", "--input", fig1_dir, "--out", tmp_path / "b")
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_baseline_schema_parity(fig1_dir, tmp_path):
    run("detect", "--input", fig1_dir, "--out", tmp_path / "msc")
    run("detect", "--input", fig1_dir, "--method", "kmeans", "--out", tmp_path / "km")
    for name in ("estimates.csv", "clusters.csv", "boundaries.csv", "gaps.csv"):
        assert rows(tmp_path / "msc" / name)[0].keys() == rows(tmp_path / "km" / name)[0].keys()
    meta = json.loads((tmp_path / "km" / "clusters_meta.json").read_text())
    assert meta[0]["method"] == "KMEANS"


def test_detect_rejects_narrow_bandwidth(fig1_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("detect", "--input", fig1_dir, "--bandwidth", 0.5, "--out", tmp_path)
    assert exc.value.code == 2
    assert "admissible range" in capsys.readouterr().err


def test_detect_missing_input(tmp_path, capsys):
    assert run("detect", "--input", tmp_path / "nowhere", "--out", tmp_path) == 1
    assert "no such directory" in capsys.readouterr().err


def test_detect_malformed_row_named(fig1_dir, tmp_path, capsys):
    bad = tmp_path / "in"
    bad.mkdir()
    for name in ("map.json", "gps_0.csv"):
        (bad / name).write_bytes((fig1_dir / name).read_bytes())
    (bad / "radar_0.csv").write_text("t,sensor_id,zx_local,zy_local\n0.0,0,1.0,2.0\n0.02,x,1.0,2.0\n")
    assert run("detect", "--input", bad, "--out", tmp_path / "o") == 1
    assert "radar_0.csv:3" in capsys.readouterr().err


def test_tune_grid_rows(tmp_path, capsys):
    assert run("tune", "--preset", "fig1", "--seed", 0, "--grid", "1.5:0.25:5.5", "--out", tmp_path) == 0
    assert len(rows(tmp_path / "tuning.csv")) == 17
    assert len((tmp_path / "tuning.dat").read_text().splitlines()) == 17
    assert "optimum" in capsys.readouterr().out


def test_tune_rejects_out_of_range_grid(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("tune", "--seed", 0, "--grid", "1.0:0.5:2.0", "--out", tmp_path)
    assert exc.value.code == 2


def test_fuse_simulated_trips(tmp_path, capsys):
    assert run("fuse", "--preset", "fig1", "--trips", 5, "--seed", 3, "--e1", 0.15, "--e2", 0.05, "--out", tmp_path) == 0
    post = rows(tmp_path / "posterior.csv")
    assert len(post) == 17 and all(int(r["trip_count"]) == 5 for r in post)
    assert "trips 5" in capsys.readouterr().out


def test_fuse_from_estimate_files(fig1_dir, tmp_path):
    run("detect", "--input", fig1_dir, "--out", tmp_path / "d")
    est = tmp_path / "d" / "estimates.csv"
    assert run("fuse", "--estimates", est, est, "--map", fig1_dir / "map.json", "--out", tmp_path / "f") == 0
    post = rows(tmp_path / "f" / "posterior.csv")
    truth = {r["space_id"]: r["state"] for r in rows(fig1_dir / "truth.csv")}
    assert all((float(r["probability"]) > 0.5) == (truth[r["space_id"]] == "1") for r in post)


def test_fuse_rejects_bad_model(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("fuse", "--seed", 1, "--e1", 1.5, "--out", tmp_path)
    assert exc.value.code == 2


def test_eval_from_files(fig1_dir, tmp_path, capsys):
    run("detect", "--input", fig1_dir, "--out", tmp_path / "d")
    capsys.readouterr()
    assert run("eval", "--estimates", tmp_path / "d" / "estimates.csv", "--truth", fig1_dir / "truth.csv", "--out", tmp_path / "e") == 0
    assert capsys.readouterr().out.startswith("segments 1 type1 0.0000 type2 0.0000")


def test_eval_regression_line(tmp_path, capsys):
    argv = ["eval", "--preset", "onstreet", "--passes", 3, "--seed", 5, "--regress", "speed", "--out", tmp_path]
    assert run(*argv) == 0
    out = capsys.readouterr().out
    assert "slope" in out and "p_value" in out and "r2" in out
    (reg,) = rows(tmp_path / "regression.csv")
    assert 0.0 <= float(reg["p_value"]) <= 1.0


def test_eval_needs_truth_with_estimates(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("eval", "--estimates", tmp_path / "e.csv", "--out", tmp_path)
    assert exc.value.code == 2


def test_console_entry_exit_codes(tmp_path):
    cmd = [sys.executable, "-m", "parkdetect.cli"]
    ok = subprocess.run(cmd + ["simulate", "--seed", "0", "--out", str(tmp_path)], capture_output=True)
    assert ok.returncode == 0
    usage = subprocess.run(cmd + ["simulate", "--seed", "0", "--spaces", "-3"], capture_output=True)
    assert usage.returncode == 2
    missing = subprocess.run(cmd + ["detect", "--input", str(tmp_path / "none"), "--out", str(tmp_path)], capture_output=True)
    assert missing.returncode == 1
