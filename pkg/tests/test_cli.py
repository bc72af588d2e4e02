"""Command-line plumbing: exit codes, outputs and the sweep grid."""

import json
import os

import pytest

from hrscache.cli import run

CSV_HEADER = "video_id,user_id,time,province,city\n"


@pytest.fixture()
def raw_trace(tmp_path):
    rows = [CSV_HEADER]
    for k in range(60):
        rows.append("v%d,u%d,%d,gd,sz\n" % (k % 4, k, k * 3600))
    path = tmp_path / "raw.csv"
    path.write_text("".join(rows))
    return str(path)


@pytest.fixture()
def gen_dir(tmp_path):
    out = tmp_path / "gen"
    assert run(["gen", "--out", str(out), "--videos", "10",
                "--horizon", "60", "--seed", "3"]) == 0
    return str(out)


def test_unknown_command_is_usage_error(capsys):
    assert run(["frobnicate"]) == 2


def test_unknown_flag_is_usage_error():
    assert run(["gen", "--out", "x", "--bogus", "1"]) == 2


def test_fit_missing_trace_is_usage_error(tmp_path):
    rc = run(["fit", "--trace", str(tmp_path / "nope"),
              "--out", str(tmp_path / "out")])
    assert rc == 2
    assert not (tmp_path / "out").exists()  # no partial outputs


def test_ingest_writes_dataset_and_folds(raw_trace, tmp_path):
    out = tmp_path / "ingested"
    assert run(["ingest", "--trace", raw_trace, "--out", str(out),
                "--fold", "1"]) == 0
    for name in ("events.csv", "negatives.csv", "meta.json",
                 "ingest_config.json", "train", "validation", "test"):
        assert (out / name).exists()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["catalog_size"] == 4


def test_gen_writes_trace_and_true_params(gen_dir):
    for name in ("events.csv", "meta.json", "true_params/params.csv"):
        assert os.path.exists(os.path.join(gen_dir, name))


def test_fit_then_simulate_round_trip(gen_dir, tmp_path):
    cfg = tmp_path / "fast.cfg"
    cfg.write_text("max_iters=5\nM=2000\n")
    fit_out = tmp_path / "fitted"
    assert run(["fit", "--trace", gen_dir, "--out", str(fit_out),
                "--config", str(cfg), "--seed", "1"]) == 0
    assert (fit_out / "params.csv").exists()
    assert (fit_out / "fit_log.csv").exists()

    sim_out = tmp_path / "sim.json"
    assert run(["simulate", "--trace", gen_dir, "--out", str(sim_out),
                "--policy", "LRU", "--capacity", "2"]) == 0
    payload = json.loads(sim_out.read_text())
    assert payload["policy"] == "LRU"
    assert 0.0 <= payload["hit_rate"] <= 1.0
    assert "config" in payload


def test_sweep_grid_cardinality(gen_dir, tmp_path):
    out = tmp_path / "sweep"
    assert run(["sweep", "--trace", gen_dir, "--out", str(out),
                "--capacity-pcts", "10,20,50", "--policies", "LRU,OPT,WLFU",
                "--fold", "1", "--seed", "0"]) == 0
    csv_lines = (out / "sweep.csv").read_text().splitlines()
    assert csv_lines[0].startswith("# config:")
    assert csv_lines[1] == "policy,capacity,hits,total,hit_rate"
    assert len(csv_lines) == 2 + 9  # 3 policies x 3 capacities
    jsons = sorted(p.name for p in out.glob("sweep_*.json"))
    assert len(jsons) == 9


def test_sweep_unknown_policy_is_usage_error(gen_dir, tmp_path):
    rc = run(["sweep", "--trace", gen_dir, "--out", str(tmp_path / "s"),
              "--policies", "LRU,FIFO"])
    assert rc == 2


def test_sweep_json_omits_wall_time(gen_dir, tmp_path):
    out = tmp_path / "sweep"
    assert run(["sweep", "--trace", gen_dir, "--out", str(out),
                "--capacity-pcts", "20", "--policies", "LRU"]) == 0
    payload = json.loads((out / "sweep_LRU_2.json").read_text())
    assert payload["wall_time_s"] is None


def test_report_weighted_average(tmp_path):
    cells = []
    for name, hits, total in (("a.json", 10, 100), ("b.json", 90, 100)):
        path = tmp_path / name
        path.write_text(json.dumps({
            "policy": "LRU", "capacity": 2, "hits": hits, "total": total,
            "hit_rate": hits / total, "per_day": [], "wall_time_s": 0.1}))
        cells.append(str(path))
    out = tmp_path / "report.json"
    assert run(["report", "--out", str(out)] + cells) == 0
    payload = json.loads(out.read_text())
    assert payload["weighted_hit_rate"] == pytest.approx(0.5)
    assert payload["total_requests"] == 200


def test_report_missing_input_is_usage_error(tmp_path):
    rc = run(["report", "--out", str(tmp_path / "r.json"),
              str(tmp_path / "absent.json")])
    assert rc == 2
