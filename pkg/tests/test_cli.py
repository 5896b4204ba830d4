import csv
import json

import numpy as np
import pytest
import yaml

from obmsnav import cli
from obmsnav.pipelines import PIPELINES, Flags, PipelineError
from obmsnav.records import read_csv, read_header, sha256_file
from obmsnav.scenario import ConfigError, reference_scenario

SIM_FILES = (cli.TRUTH_FILE, cli.SENSOR_FILE, cli.SIM_META)


@pytest.fixture(scope="module")
def short_dir(tmp_path_factory, short_path):
    return cli.cmd_simulate(str(short_path), tmp_path_factory.mktemp("sim"))


@pytest.fixture(scope="module")
def short_runs(tmp_path_factory, short_dir):
    root = tmp_path_factory.mktemp("runs")
    return {p: (root / p, cli.cmd_run(str(short_dir), p, root / p)) for p in PIPELINES}


def test_simulate_is_idempotent(tmp_path, short_path, short_dir):
    again = cli.cmd_simulate(str(short_path), tmp_path / "b")
    for name in SIM_FILES:
        assert sha256_file(short_dir / name) == sha256_file(again / name)


def test_simulate_records_outages_and_hashes(short_dir):
    meta = json.loads((short_dir / cli.SIM_META).read_text())
    assert [o["duration"] for o in meta["outages"]] == [10.0]
    assert meta["hashes"][cli.SENSOR_FILE] == sha256_file(short_dir / cli.SENSOR_FILE)
    _, truth = read_csv(short_dir / cli.TRUTH_FILE, cli.NAV_COLUMNS)
    assert truth[-1, 0] == pytest.approx(meta["duration"])


def test_reference_outage_metadata(tmp_path):
    sc = reference_scenario()
    assert sorted(o.duration for o in sc.outages) == [8.0, 13.0, 20.0, 100.0]


def test_missing_waypoints_names_field(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"name": "x", "route": {"cruise_speed": 5.0}}))
    with pytest.raises(ConfigError, match="waypoints"):
        cli.cmd_simulate(str(bad), tmp_path / "out")
    assert cli.main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "out")]) == cli.EXIT_CONFIG
    assert "waypoints" in capsys.readouterr().err


def test_unknown_pipeline_lists_valid_names(short_dir, tmp_path):
    with pytest.raises(PipelineError) as exc:
        cli.cmd_run(str(short_dir), "kalman", tmp_path)
    for name in PIPELINES:
        assert name in str(exc.value)


def test_seed_with_stream_directory_rejected(short_dir, tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        cli.cmd_run(str(short_dir), "ins-odo", tmp_path, seed=3)


@pytest.mark.parametrize("pipeline", PIPELINES)
def test_run_outputs(short_runs, pipeline):
    out, meta = short_runs[pipeline]
    for name in ("estimate.csv", "errors.csv", "stats.csv", "stats.txt", "cdf.csv", cli.RUN_META):
        assert (out / name).is_file()
    assert (out / "states.csv").is_file() == (pipeline in ("5g-obms", "ins-odo"))
    hdr = read_header(out / "estimate.csv")
    _, est = read_csv(out / "estimate.csv", cli.NAV_COLUMNS)
    assert hdr["run"]["pipeline"] == pipeline and hdr["seed"] == 7
    assert hdr["inputs"] == meta["inputs"]
    assert np.all(np.isfinite(est))
    assert len(meta["stats_3d"]["windows"]) == 1


def test_states_table_layout(short_runs):
    out, _ = short_runs["5g-obms"]
    cols = ["t", *cli.STATE_NAMES, *(f"P_{n}" for n in cli.STATE_NAMES), "mode"]
    _, states = read_csv(out / "states.csv", cols)
    assert states.shape[1] == 32
    assert set(np.unique(states[:, -1])) <= set(cli.MODE_CODES.values())
    assert np.all(states[:, 16:31] >= 0)


def test_bias_removal_lowers_ins_only_max(short_dir, short_runs, tmp_path):
    _, with_removal = short_runs["ins-only"]
    without = cli.cmd_run(str(short_dir), "ins-only", tmp_path, Flags(bias_removal=False))
    assert with_removal["stats_3d"]["max"] < without["stats_3d"]["max"]


def test_compare_with_self_identical_columns(short_runs, tmp_path):
    out, _ = short_runs["5g-obms"]
    cli.cmd_compare([out, out], tmp_path)
    for name in ("compare_3d.csv", "compare_2d.csv"):
        lines = [ln for ln in (tmp_path / name).read_text().splitlines() if not ln.startswith("#")]
        rows = list(csv.reader(lines))
        assert rows[0] == ["metric", "5g-obms", "5g-obms#2"]
        assert all(r[1] == r[2] for r in rows[1:])
    assert (tmp_path / "cdf.csv").is_file()


def test_compare_needs_two_runs(short_runs):
    with pytest.raises(ConfigError):
        cli.cmd_compare([short_runs["ins-only"][0]])


def test_compare_refuses_mismatched_streams(short_path, short_runs, tmp_path):
    other = cli.cmd_run(str(short_path), "5g-obms", tmp_path / "other", seed=8)
    assert other["inputs"] != short_runs["5g-obms"][1]["inputs"]
    runs = [short_runs["5g-obms"][0], tmp_path / "other"]
    assert cli.main(["compare", *map(str, runs)]) == cli.EXIT_DATA


def test_tampered_streams_rejected(short_dir, tmp_path):
    copy = tmp_path / "sim"
    copy.mkdir()
    for name in SIM_FILES:
        (copy / name).write_bytes((short_dir / name).read_bytes())
    with open(copy / cli.SENSOR_FILE, "a") as fh:
        fh.write("\n")
    assert cli.main(["run", "--scenario", str(copy), "--pipeline", "ins-odo", "--out", str(tmp_path / "r")]) == cli.EXIT_DATA


def test_stats_command(short_runs, capsys):
    out, meta = short_runs["5g-obms"]
    text = cli.cmd_stats(out)
    assert text.splitlines()[0] == "5g-obms"
    assert cli.main(["stats", str(out)]) == cli.EXIT_OK
    assert capsys.readouterr().out == text
    # a wider tail changes only the window statistics
    wide = cli.cmd_stats(out, tail=5.0).splitlines()
    base = text.splitlines()
    assert wide[:8] == base[:8]
    assert wide[8] != base[8]


def test_main_run_flags(short_dir, tmp_path, capsys):
    args = ["run", "--scenario", str(short_dir), "--pipeline", "ins-odo", "--out", str(tmp_path)]
    assert cli.main([*args, "--no-stop-mechanism", "--no-odometer", "--gate-chi2", "16.27"]) == cli.EXIT_OK
    run = json.loads((tmp_path / cli.RUN_META).read_text())["run"]
    assert run == {"pipeline": "ins-odo", "bias_removal": True, "stop_mechanism": False, "odometer": False, "gate_chi2": 16.27}
    assert "RMS" in capsys.readouterr().out


@pytest.mark.slow
def test_noise_free_reference_obms(tmp_path):
    sc = reference_scenario()
    sc.noise_free = True
    path = tmp_path / "noise_free.yaml"
    path.write_text(yaml.safe_dump(sc.to_dict()))
    meta = cli.cmd_run(str(path), "5g-obms", tmp_path / "run")
    assert meta["stats_3d"]["rms"] < 0.05
