"""Metrics emission: pinned CSV/JSON formats and byte-level rerun identity."""

import json

from flmeta import RoundRecord
from flmeta.reporting import CSV_HEADER, emit_metrics

RECORDS = [
    RoundRecord(1, 0.5, 0.25, 800, 52432000, 800 / 50000),
    RoundRecord(2, 0.625, 0.3, 800, 52432000, 800 / 50000),
]


def test_csv_layout(tmp_path):
    csv_path, _ = emit_metrics(RECORDS, str(tmp_path / "out"))
    lines = open(csv_path).read().splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "1,0.500000,0.250000,800,52432000,0.016000"
    assert lines[2] == "2,0.625000,0.300000,800,52432000,0.016000"
    assert len(lines) == 3


def test_csv_ends_with_single_newline(tmp_path):
    csv_path, _ = emit_metrics(RECORDS, str(tmp_path / "out"))
    raw = open(csv_path, "rb").read()
    assert raw.endswith(b"\n") and not raw.endswith(b"\n\n")


def test_rerun_is_byte_identical(tmp_path):
    c1, j1 = emit_metrics(RECORDS, str(tmp_path / "a"), config_dict={"x": 1})
    c2, j2 = emit_metrics(RECORDS, str(tmp_path / "b"), config_dict={"x": 1})
    assert open(c1, "rb").read() == open(c2, "rb").read()
    assert open(j1, "rb").read() == open(j2, "rb").read()


def test_summary_contents(tmp_path):
    _, json_path = emit_metrics(RECORDS, str(tmp_path / "out"), config_dict={"k": 2})
    s = json.load(open(json_path))
    assert s["rounds"] == 2
    assert s["final_acc_composed"] == 0.625
    assert s["best_acc_composed"] == 0.625
    assert s["best_acc_avg_global"] == 0.3
    assert s["total_metadata_bytes"] == 2 * 52432000
    assert s["config"] == {"k": 2}


def test_summary_keys_sorted(tmp_path):
    _, json_path = emit_metrics(RECORDS, str(tmp_path / "out"))
    keys = list(json.load(open(json_path)).keys())
    assert keys == sorted(keys)


def test_empty_run(tmp_path):
    csv_path, json_path = emit_metrics([], str(tmp_path / "out"))
    assert open(csv_path).read() == CSV_HEADER + "\n"
    s = json.load(open(json_path))
    assert s["rounds"] == 0 and s["final_acc_composed"] is None
