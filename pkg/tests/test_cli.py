import json
import os
import socket
import subprocess
import sys
import threading
import time

import pytest

from splitlab import cli, telemetry


def test_train_local_synthetic(tmp_path, capsys):
    report = tmp_path / "r.json"
    csv = tmp_path / "r.csv"
    rc = cli.main([
        "train-local", "--synthetic", "40", "--profile", "mitbih", "--channels", "2",
        "--epochs", "1", "--batch", "4", "--seed", "3",
        "--report", str(report), "--report-csv", str(csv),
    ])
    assert rc == 0
    blob = json.loads(report.read_text())
    assert blob["mode"] == "local"
    assert csv.read_text().startswith(telemetry.CSV_HEADER)


def test_validation_error_exit_code():
    rc = cli.main(["train-local", "--epochs", "1"])  # no data source
    assert rc == cli.EXIT_VALIDATION


def test_attack_demo_writes_artifacts(tmp_path):
    out = tmp_path / "attack"
    rc = cli.main(["attack-demo", "--batch", "5", "--seed", "1",
                   "--length", "64", "--channels", "4", "--out-dir", str(out)])
    assert rc == 0
    blob = json.loads((out / "attack_report.json").read_text())
    assert blob["fixed_protocol"]["applicable"] is False
    assert all(s["pearson_r"] > 0.999 for s in blob["prior_protocol"]["oracle_per_sample"])
    assert (out / "reconstructed_0.csv").exists()
    assert (out / "truth_4.csv").exists()


def test_attack_demo_batch_precondition():
    rc = cli.main(["attack-demo", "--batch", "4"])
    assert rc == cli.EXIT_VALIDATION


def test_bench_he_toy(capsys):
    rc = cli.main(["bench-he", "--he-set", "toy", "--iters", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mul_plain_rescale" in out and "ciphertext bytes" in out and "slot_sum" in out


def test_client_without_server_is_network_error():
    # an unbound port refuses immediately
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    rc = cli.main([
        "split-client", "--host", "127.0.0.1", "--port", str(port),
        "--mode", "plain", "--synthetic", "16", "--channels", "2",
        "--epochs", "1", "--batch", "4",
    ])
    assert rc == cli.EXIT_NETWORK


def test_split_roles_over_loopback(tmp_path):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    server_report = tmp_path / "server.json"
    rc_holder = {}

    def serve():
        rc_holder["server"] = cli.main([
            "split-server", "--host", "127.0.0.1", "--port", str(port),
            "--accept-timeout", "20", "--report", str(server_report),
        ])

    th = threading.Thread(target=serve)
    th.start()
    time.sleep(0.3)
    client_report = tmp_path / "client.json"
    rc = cli.main([
        "split-client", "--host", "127.0.0.1", "--port", str(port),
        "--mode", "plain", "--synthetic", "24", "--channels", "2",
        "--epochs", "1", "--batch", "4", "--seed", "5",
        "--report", str(client_report),
    ])
    th.join()
    assert rc == 0 and rc_holder["server"] == 0
    cblob = json.loads(client_report.read_text())
    sblob = json.loads(server_report.read_text())
    assert cblob["mode"] == sblob["mode"] == "split-plain"
    assert cblob["totals"]["bytes_sent"] == sblob["totals"]["bytes_received"]


def test_server_parser_has_no_dataset_flags():
    # labels and data never reach the server role, structurally
    parser = cli.build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["split-server", "--data", "x.csv"])
    with pytest.raises(SystemExit):
        parser.parse_args(["split-server", "--synthetic", "10"])


def test_selftest_subcommand():
    # run as a subprocess so its own child processes are isolated
    proc = subprocess.run(
        [sys.executable, "-m", "splitlab.cli", "selftest", "--he-set", "toy"],
        capture_output=True, text=True, timeout=300,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "8/8 checks passed" in proc.stdout


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SPLITLAB_CHANNELS", "2")
    parser = cli.build_parser()
    args = parser.parse_args(["train-local", "--synthetic", "10"])
    assert args.channels == 2
