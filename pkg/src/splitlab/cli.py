"""Command-line entry point: one binary, every role and experiment.

Subcommands: train-local, split-server, split-client, attack-demo,
bench-he, selftest. Client and server are the same binary in different
roles, which keeps the config structs on both wire ends identical. Any
flag default can be overridden with SPLITLAB_<FLAG> environment variables
(dashes become underscores). Exit codes: 0 ok, 1 validation, 2 network,
3 protocol, 4 HE precision/depth.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import attack, ckks, data, nn, runtime, telemetry, wire
from .errors import (
    CapacityError,
    DepthError,
    FormatError,
    LevelError,
    ParameterError,
    PrecisionError,
    ProtocolError,
    ScaleError,
    ShapeError,
    SingularMatrixError,
    SplitLabError,
    SyncError,
)
from .util import derive_rng

EXIT_OK, EXIT_VALIDATION, EXIT_NETWORK, EXIT_PROTOCOL, EXIT_HE = 0, 1, 2, 3, 4

_VALIDATION_ERRORS = (
    ParameterError, FormatError, CapacityError, ShapeError, SyncError,
    SingularMatrixError,
)
_HE_ERRORS = (DepthError, PrecisionError, LevelError, ScaleError)


def _env(flag: str, fallback):
    return os.environ.get("SPLITLAB_" + flag.upper().replace("-", "_"), fallback)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=_env("data", None), help="training CSV path")
    p.add_argument("--data-test", default=_env("data_test", None),
                   help="held-out CSV; omit to split --data")
    p.add_argument("--synthetic", type=int, default=None, metavar="N",
                   help="generate N synthetic samples instead of loading CSV")
    p.add_argument("--profile", default=_env("profile", "mitbih"), choices=sorted(data.PROFILES))
    p.add_argument("--channels", type=int, default=int(_env("channels", 16)),
                   help="conv channel count of the default architecture")
    p.add_argument("--train-ratio", type=float, default=float(_env("train_ratio", 0.5)))


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=int(_env("epochs", 10)))
    p.add_argument("--lr", type=float, default=float(_env("lr", 0.001)))
    p.add_argument("--batch", type=int, default=int(_env("batch", 4)))
    p.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    p.add_argument("--report", default=_env("report", None), help="JSON report path")
    p.add_argument("--report-csv", default=_env("report_csv", None))
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--eval-limit", type=int, default=None,
                   help="cap on held-out samples per evaluation pass")
    p.add_argument("--per-iteration", action="store_true",
                   help="include raw per-iteration traces in the report")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="splitlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-local", help="non-split baseline training")
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser(
        "split-server",
        help="serve the linear layer (holds no data or labels in any mode)",
    )
    p.add_argument("--host", default=_env("host", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env("port", wire.DEFAULT_PORT)))
    p.add_argument("--report", default=_env("report", None))
    p.add_argument("--report-csv", default=_env("report_csv", None))
    p.add_argument("--accept-timeout", type=float, default=None)

    p = sub.add_parser("split-client", help="drive split training against a server")
    p.add_argument("--host", default=_env("host", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(_env("port", wire.DEFAULT_PORT)))
    p.add_argument("--mode", choices=("plain", "he"), default=_env("mode", "plain"))
    p.add_argument("--he-set", default=_env("he_set", "s1"),
                   choices=("s1", "s2", "toy", "s1mini"))
    p.add_argument("--refresh-every", type=int, default=int(_env("refresh_every", 1)))
    _add_data_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("attack-demo", help="gradient-inversion demo against the prior protocol")
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--length", type=int, default=128)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--out-dir", default=_env("out_dir", "attack-out"))

    p = sub.add_parser("bench-he", help="time each CKKS primitive")
    p.add_argument("--he-set", default="s1", choices=("s1", "s2", "toy", "s1mini"))
    p.add_argument("--iters", type=int, default=10)

    p = sub.add_parser("selftest", help="oracle-equivalence suite over loopback")
    p.add_argument("--he-set", default="toy", choices=("s1", "s2", "toy", "s1mini"))
    p.add_argument("--samples", type=int, default=40)
    return ap


def _load_datasets(args) -> tuple[data.Dataset, data.Dataset]:
    profile = data.get_profile(args.profile)
    if args.synthetic is not None and args.data:
        raise ParameterError("--synthetic and --data are mutually exclusive")
    if args.synthetic is not None:
        ds = data.synth_ecg(args.synthetic, profile, seed=args.seed)
        return data.split_train_test(ds, args.train_ratio, seed=args.seed)
    if not args.data:
        raise ParameterError("need --data PATH or --synthetic N")
    train = data.load_csv(args.data, profile)
    if args.data_test:
        return train, data.load_csv(args.data_test, profile)
    return data.split_train_test(train, args.train_ratio, seed=args.seed)


def _model_for(args, train_set: data.Dataset) -> nn.ModelSpec:
    channels, length = train_set.samples.shape[1], train_set.samples.shape[2]
    return nn.default_model_spec(channels, length, num_classes=train_set.num_classes,
                                 channels=args.channels)


def _train_cfg(args, train_set) -> nn.TrainConfig:
    return nn.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch,
        batch_count=max(1, len(train_set) // args.batch),
        seed=args.seed,
    )


def _emit(report: telemetry.RunReport, args) -> None:
    if getattr(args, "report", None):
        telemetry.emit_report(report, args.report, "json")
    if getattr(args, "report_csv", None):
        telemetry.emit_report(report, args.report_csv, "csv")


def cmd_train_local(args) -> int:
    tr, te = _load_datasets(args)
    spec = _model_for(args, tr)
    cfg = _train_cfg(args, tr)
    report = runtime.local_train(
        spec, cfg, tr, te, eval_every=args.eval_every or 1, per_iteration=args.per_iteration
    )
    _emit(report, args)
    acc = report.final_test_accuracy()
    print(f"local training done: final test accuracy "
          f"{'n/a' if acc is None else f'{100 * acc:.2f}%'}")
    return EXIT_OK


def cmd_split_server(args) -> int:
    print(f"listening on {args.host}:{args.port}", flush=True)
    conn, _ = wire.listen_one(args.host, args.port, timeout=args.accept_timeout)
    try:
        report = runtime.server_run(conn)
    finally:
        conn.close()
    _emit(report, args)
    audit = report.audit or {}
    print(f"session complete: mode={report.mode} leakage_free={audit.get('leakage_free')}")
    return EXIT_OK


def cmd_split_client(args) -> int:
    tr, te = _load_datasets(args)
    spec = _model_for(args, tr)
    cfg = _train_cfg(args, tr)
    conn = wire.connect(args.host, args.port)
    try:
        report = runtime.client_run(
            conn, spec=spec, cfg=cfg, train_set=tr, test_set=te,
            mode=args.mode, he_set=args.he_set if args.mode == "he" else "none",
            eval_every=args.eval_every, eval_limit=args.eval_limit,
            refresh_every=args.refresh_every, per_iteration=args.per_iteration,
        )
    finally:
        conn.close()
    _emit(report, args)
    acc = report.final_test_accuracy()
    print(f"split training done: mode={report.mode} final test accuracy "
          f"{'n/a' if acc is None else f'{100 * acc:.2f}%'}")
    return EXIT_OK


def cmd_attack_demo(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    spec = nn.default_model_spec(1, args.length, num_classes=5, channels=args.channels)
    if args.batch != spec.num_classes:
        raise ParameterError(
            f"the inversion needs batch size = class count ({spec.num_classes}); "
            f"got --batch {args.batch}"
        )
    rng = derive_rng(args.seed, "attack-demo")
    params = nn.init_client_params(spec, derive_rng(args.seed, "client-model"))
    w, b = nn.init_linear_params(spec, derive_rng(args.seed, "server-model"))
    profile = data.Profile("attack", 1, args.length, 5, ("0", "1", "2", "3", "4"))
    batch = data.synth_ecg(args.batch, profile, seed=args.seed)

    capture = attack.capture_gradients(spec, params, w, b, batch.samples, batch.labels)
    oracle = attack.oracle_leak(spec, params, w, b, batch.samples, rng)
    rec = attack.reconstruct_activation(oracle)
    metrics = attack.similarity_metrics(rec, capture.true_activation)
    for i, row in enumerate(rec):
        attack.export_chunks(row, os.path.join(args.out_dir, f"reconstructed_{i}.csv"))
        attack.export_chunks(
            capture.true_activation[i], os.path.join(args.out_dir, f"truth_{i}.csv")
        )
    fixed = attack.capture_gradients(
        spec, params, w, b, batch.samples, batch.labels, protocol="fixed"
    )
    report = {
        "prior_protocol": {
            "true_capture_condition_number": capture.leak.condition_number,
            "true_capture_invertible": capture.leak.condition_number < attack.COND_LIMIT,
            "oracle_per_sample": [
                {"pearson_r": r, "mse": m} for r, m in metrics
            ],
            "note": capture.note,
        },
        "fixed_protocol": {"applicable": fixed.applicable, "note": fixed.note},
    }
    path = os.path.join(args.out_dir, "attack_report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    worst = min(r for r, _ in metrics)
    print(f"prior protocol: reconstruction Pearson r >= {worst:.6f} across {args.batch} samples")
    print(f"fixed protocol: {fixed.note}")
    print(f"report and chunk CSVs in {args.out_dir}")
    return EXIT_OK


def cmd_bench_he(args) -> int:
    params = ckks.make_params(args.he_set)
    t0 = time.monotonic()
    ctx = ckks.CkksContext.generate(params, seed=1)
    keygen_s = time.monotonic() - t0
    rng = np.random.default_rng(0)
    v = rng.uniform(-1, 1, params.slots)
    w = rng.uniform(-1, 1, params.slots)
    pt = ctx.encode(w)
    ct = ctx.encrypt(v)
    ct2 = ctx.encrypt(w)
    prod = ckks.mul_plain_rescale(ct, pt)

    def timed(fn):
        fn()
        t = time.monotonic()
        for _ in range(args.iters):
            fn()
        return (time.monotonic() - t) / args.iters * 1000

    rows = [
        ("keygen", keygen_s * 1000),
        ("encode", timed(lambda: ctx.encode(w))),
        ("encrypt", timed(lambda: ctx.encrypt(v))),
        ("decrypt", timed(lambda: ctx.decrypt(ct))),
        ("add", timed(lambda: ckks.add(ct, ct2))),
        ("mul_plain_rescale", timed(lambda: ckks.mul_plain_rescale(ct, pt))),
        ("rotate", timed(lambda: ckks.rotate(ct, 1, ctx.rotation_keys))),
        ("rotate_level1", timed(lambda: ckks.rotate(prod, 1, ctx.rotation_keys))),
    ]
    span = min(64, params.slots)
    rows.append((f"slot_sum_{span}", timed(lambda: ckks.slot_sum(ct, span, ctx.rotation_keys))))
    print(f"HE set {args.he_set}: N={params.ring_degree}, "
          f"chain bits {[q.bit_length() for q in params.prime_chain]}, "
          f"scale 2^{int(np.log2(params.scale))}")
    for name, ms in rows:
        print(f"  {name:<18} {ms:10.3f} ms")
    for level in (0, 1):
        print(f"  ciphertext bytes (level {level}): {ckks.ct_byte_size(params, level)}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    """End-to-end oracle equivalence over loopback child processes."""
    import subprocess

    checks: list[tuple[str, bool, str]] = []

    def check(name, ok, detail=""):
        checks.append((name, ok, detail))
        print(f"  {'PASS' if ok else 'FAIL'}  {name}" + (f" ({detail})" if detail else ""))

    profile = data.Profile("selftest", 1, 32, 5, ("a", "b", "c", "d", "e"))
    ds = data.synth_ecg(args.samples, profile, seed=11)
    tr, te = data.split_train_test(ds, 0.5, seed=11)
    spec = nn.default_model_spec(1, 32, num_classes=5, channels=2)
    cfg = nn.TrainConfig(epochs=2, lr=0.01, batch_size=4,
                         batch_count=max(1, len(tr) // 4), seed=33)

    # 1) split-plain over loopback equals local training bitwise
    ctr, str_ = [], []
    runtime.run_split_session(
        dict(spec=spec, cfg=cfg, train_set=tr, test_set=te, mode="plain", trace_sink=ctr),
        dict(trace_sink=str_),
    )
    ltr = []
    runtime.local_train(spec, cfg, tr, te, trace_sink=ltr)
    bitwise = all(
        np.array_equal(lt["w"], st["w"]) and lt["loss"] == ct_["loss"]
        for lt, ct_, st in zip(ltr, ctr, str_)
    )
    check("split-plain == local (bitwise)", bitwise)

    # 2) encrypted run tracks the plaintext run
    che, she = [], []
    crep_he, srep_he = runtime.run_split_session(
        dict(spec=spec, cfg=cfg, train_set=tr, test_set=te, mode="he",
             he_set=args.he_set, trace_sink=che),
        dict(trace_sink=she),
    )
    tol = 5e-2 if args.he_set == "toy" else 1e-2
    worst = max(
        max(abs(h["loss"] - p["loss"]) for h, p in zip(che, ctr)),
        max(np.abs(hs["w"] - ps["w"]).max() for hs, ps in zip(she, str_)),
    )
    check(f"split-he tracks split-plain (<= {tol})", worst <= tol, f"worst {worst:.2e}")
    check("he audit leakage-free", srep_he.audit["leakage_free"])
    check("depth budget (level <= 1)", srep_he.totals["max_ct_level"] <= 1)

    # 3) both roles as real processes over loopback TCP
    import socket as socket_mod

    probe = socket_mod.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    server = subprocess.Popen(
        [sys.executable, "-m", "splitlab.cli", "split-server",
         "--host", "127.0.0.1", "--port", str(port), "--accept-timeout", "30"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True,
    )
    try:
        time.sleep(1.0)
        client = subprocess.run(
            [sys.executable, "-m", "splitlab.cli", "split-client",
             "--host", "127.0.0.1", "--port", str(port), "--mode", "he",
             "--he-set", args.he_set, "--synthetic", str(args.samples),
             "--profile", "mitbih", "--epochs", "1", "--batch", "4",
             "--seed", "33", "--channels", "2"],
            capture_output=True, text=True, timeout=120,
        )
        server_out, _ = server.communicate(timeout=60)
    finally:
        if server.poll() is None:
            server.kill()
    check("loopback processes (client exit 0)", client.returncode == 0,
          client.stderr.strip().splitlines()[-1] if client.returncode else "")
    check("loopback processes (server exit 0)", server.returncode == 0)

    # 4) attack oracle and its negative control
    rngl = derive_rng(7, "selftest-attack")
    aspec = nn.default_model_spec(1, 64, num_classes=5, channels=4)
    aparams = nn.init_client_params(aspec, derive_rng(7, "client-model"))
    aw, ab = nn.init_linear_params(aspec, derive_rng(7, "server-model"))
    x = rngl.normal(size=(5, 1, 64))
    leak = attack.oracle_leak(aspec, aparams, aw, ab, x, rngl)
    rec = attack.reconstruct_activation(leak)
    truth, _ = nn.forward_client(x, aspec, aparams)
    r_min = min(r for r, _ in attack.similarity_metrics(rec, truth))
    check("attack oracle reconstruction r > 0.999", r_min > 0.999, f"r_min {r_min:.6f}")
    fixed = attack.capture_gradients(aspec, aparams, aw, ab, x,
                                     rngl.integers(0, 5, 5), protocol="fixed")
    check("fixed protocol reports NOT-APPLICABLE", not fixed.applicable)

    failed = [name for name, ok, _ in checks if not ok]
    print(f"selftest: {len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_PROTOCOL


_DISPATCH = {
    "train-local": cmd_train_local,
    "split-server": cmd_split_server,
    "split-client": cmd_split_client,
    "attack-demo": cmd_attack_demo,
    "bench-he": cmd_bench_he,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return _DISPATCH[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _HE_ERRORS as exc:
        print(f"HE error: {exc}", file=sys.stderr)
        return EXIT_HE
    except (ConnectionError, TimeoutError, OSError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except SplitLabError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
