import json
import time

import numpy as np

from splitlab import telemetry


def _trace(i, loss, acc):
    return telemetry.IterationTrace(epoch=0, iteration=i, loss=loss, accuracy_so_far=acc)


def test_identical_traces_give_identical_rows():
    traces = [_trace(0, 1.5, 0.25), _trace(1, 1.2, 0.5)]
    a = telemetry.epoch_summary(0, traces, 0.8, 1.0, {"x": 0.5}, {"ENC_ACT": 10}, {"ENC_ACT": 2})
    b = telemetry.epoch_summary(0, traces, 0.8, 1.0, {"x": 0.5}, {"ENC_ACT": 10}, {"ENC_ACT": 2})
    assert a == b


def test_epoch_summary_aggregates():
    traces = [_trace(0, 2.0, 0.5), _trace(1, 1.0, 0.75)]
    row = telemetry.epoch_summary(0, traces, None, 3.0, {}, {}, {})
    assert row.mean_loss == 1.5
    assert row.train_accuracy == 0.75
    assert row.test_accuracy is None


def _report():
    row = telemetry.epoch_summary(
        0, [_trace(0, 1.0, 0.5)], 0.9, 2.0, {"fit": 1.9}, {"BYE": 11}, {"BYE": 1}
    )
    return telemetry.RunReport(
        mode="split-he",
        role="client",
        he_set="s1",
        config={"batch_size": 4},
        model={"features": 448},
        epochs=[row],
        totals={"seconds": 2.5, "bytes": 4096, "bytes_sent": 2048, "bytes_received": 2048},
    )


def test_csv_row_matches_header_column_count():
    report = _report()
    assert len(report.csv_row().split(",")) == len(telemetry.CSV_HEADER.split(","))


def test_emit_and_load_json(tmp_path):
    report = _report()
    path = tmp_path / "r.json"
    telemetry.emit_report(report, path, "json")
    back = telemetry.load_report(path)
    assert back["schema_version"] == telemetry.SCHEMA_VERSION
    assert back["mode"] == "split-he"
    assert back["epochs"][0]["test_accuracy"] == 0.9
    assert back["totals"]["bytes"] == 4096


def test_emit_csv(tmp_path):
    path = tmp_path / "r.csv"
    telemetry.emit_report(_report(), path, "csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == telemetry.CSV_HEADER
    assert lines[1].startswith("s1,4,90.00,")


def test_timers_accumulate():
    t = telemetry.Timers()
    with t.span("a"):
        time.sleep(0.01)
    with t.span("a"):
        pass
    assert t.seconds["a"] >= 0.01


def test_final_test_accuracy_picks_last_measured():
    report = _report()
    report.epochs.append(
        telemetry.epoch_summary(1, [_trace(0, 0.5, 0.9)], None, 1.0, {}, {}, {})
    )
    assert report.final_test_accuracy() == 0.9
