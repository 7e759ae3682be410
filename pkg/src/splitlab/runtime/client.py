"""Client protocol loop: convolutional front end plus the softmax head.

Per HE iteration: forward the local layers, encrypt the activation map
feature-wise, send it, decrypt the server's output, finish with softmax and
the loss, send only dJ/da_out back (the whole point of the revised
protocol), receive dJ/da_split, update the local layers with Adam, then
decrypt the server's masked weight refresh and return it.
"""

from __future__ import annotations

import struct
import time

import numpy as np

from .. import ckks, data, nn, telemetry, wire
from ..errors import PrecisionError, ProtocolError, SplitLabError
from ..util import derive_rng
from .audit import leakage_surface
from .packing import (
    check_capacity,
    extract_weight_column,
    pack_activation,
    pack_ct_list,
    unpack_ct_list,
)


def _derived_int(seed: int, tag: str) -> int:
    return int(derive_rng(seed, tag).integers(0, 2**63))


class ClientSession:
    """Everything the client keeps across iterations."""

    def __init__(self, spec: nn.ModelSpec, sync: wire.SyncConfig, he_set: str):
        self.spec = spec
        self.sync = sync
        self.params = nn.init_client_params(spec, derive_rng(sync.seed, "client-model"))
        self.opt = nn.Adam(lr=sync.lr)
        self.ctx = None
        self.block = 0
        if sync.mode == wire.MODE_HE:
            he_params = ckks.make_params(he_set)
            self.ctx = ckks.CkksContext.generate(he_params, _derived_int(sync.seed, "he-keys"))
            self.ctx.seed_encryption(derive_rng(sync.seed, "client-enc"))
            self.block = check_capacity(he_params, sync.batch_size, sync.classes)


def _decrypt_logits(session: ClientSession, payload: bytes) -> np.ndarray:
    phase, count = struct.unpack_from("<BI", payload)
    sync = session.sync
    if count != sync.classes:
        raise ProtocolError(f"ENC_OUT carried {count} ciphertexts, expected {sync.classes}")
    outs = unpack_ct_list(payload, struct.calcsize("<BI"), count, session.ctx)
    logits = np.empty((sync.batch_size, sync.classes))
    for k, ct in enumerate(outs):
        if ct.level > 1:
            raise ProtocolError(f"server returned a level-{ct.level} ciphertext")
        logits[:, k] = session.ctx.decrypt(ct, sync.batch_size)
    if not np.isfinite(logits).all():
        raise PrecisionError("decrypted server output contains non-finite values")
    return logits


def _forward_over_wire(conn, session, x, phase, timers):
    """Send the activation map (mode-appropriate) and return server logits."""
    sync = session.sync
    with timers.span("client_forward"):
        a_l, cache = nn.forward_client(x, session.spec, session.params)
    if sync.mode == wire.MODE_HE:
        with timers.span("encrypt"):
            packed = pack_activation(session.ctx, a_l, sync.classes)
        head = struct.pack("<BIII", phase, packed.feature_count, packed.batch_size, packed.block)
        conn.send(wire.MsgType.ENC_ACT, pack_ct_list(head, packed.ciphertexts))
        _, payload = conn.recv_expect(wire.MsgType.ENC_OUT)
        with timers.span("decrypt"):
            logits = _decrypt_logits(session, payload)
    else:
        conn.send(wire.MsgType.PLAIN_ACT, bytes([phase]) + wire.encode_tensor(a_l))
        _, payload = conn.recv_expect(wire.MsgType.PLAIN_OUT)
        logits = wire.decode_tensor(payload[1:])
    return a_l, cache, logits


def client_run(
    conn: wire.Connection,
    spec: nn.ModelSpec,
    cfg: nn.TrainConfig,
    train_set: data.Dataset,
    test_set: data.Dataset | None,
    mode: str,
    he_set: str = "none",
    eval_every: int | None = None,
    eval_limit: int | None = None,
    refresh_every: int = 1,
    trace_sink: list | None = None,
    per_iteration: bool = False,
    debug_send_grad_w: bool = False,
) -> telemetry.RunReport:
    """Drive a full training session against a listening server.

    eval_every: evaluate on the held-out set every k epochs (None follows
    the mode default: every epoch in plain mode, final epoch only in HE
    mode, where each evaluation pass runs encrypted too).
    """
    wire_mode = wire.MODE_HE if mode == "he" else wire.MODE_PLAIN
    if eval_every is None:
        eval_every = 1 if mode == "plain" else cfg.epochs
    batches = data.batches(train_set, cfg.batch_size, cfg.seed)
    eval_count = 0
    if test_set is not None:
        limit = len(test_set) if eval_limit is None else min(eval_limit, len(test_set))
        eval_count = limit // cfg.batch_size

    sync = wire.SyncConfig(
        epochs=cfg.epochs,
        lr=cfg.lr,
        batch_size=cfg.batch_size,
        batch_count=min(cfg.batch_count, batches.num_batches),
        seed=cfg.seed,
        mode=wire_mode,
        he_set=he_set if mode == "he" else "none",
        classes=spec.num_classes,
        features=spec.feature_count,
        eval_batches=eval_count,
        refresh_every=refresh_every,
    )

    timers = telemetry.Timers()
    session = None
    with timers.span("handshake"):
        sync = wire.handshake_and_sync(conn, "client", sync)
        session = ClientSession(spec, sync, he_set)
        if wire_mode == wire.MODE_HE:
            blob = ckks.serialize_public_context(session.ctx)
            conn.send(wire.MsgType.CTX_PUB, blob)

    epochs_rows: list[telemetry.EpochRow] = []
    all_traces: list[dict] = []
    max_level_seen = 0
    train_iter_count = 0
    start = time.monotonic()

    def train_iteration(epoch, it, x, y):
        nonlocal max_level_seen, train_iter_count
        a_l, cache, logits = _forward_over_wire(conn, session, x, 0, timers)
        with timers.span("loss_backward"):
            probs = nn.softmax(logits)
            loss = nn.cross_entropy(probs, y)
            grad_out = nn.ce_softmax_grad(probs, y)
        payload = wire.encode_tensor(grad_out)
        if debug_send_grad_w:
            # the prior protocol's mistake, kept behind a flag so the audit
            # has a positive detection case
            grad_w = grad_out.T @ a_l
            payload += wire.encode_tensor(grad_w)
        conn.send(wire.MsgType.GRAD_AL, payload)
        _, alow = conn.recv_expect(wire.MsgType.GRAD_ALOW)
        grad_al = wire.decode_tensor(alow)
        if grad_al.shape != a_l.shape:
            raise ProtocolError(f"GRAD_ALOW shape {grad_al.shape} != {a_l.shape}")
        with timers.span("optimizer"):
            grads = nn.backward_client(grad_al, spec, cache)
            session.opt.step(session.params, grads)
        refreshed = None
        train_iter_count += 1
        if sync.mode == wire.MODE_HE and train_iter_count % sync.refresh_every == 0:
            _, payload = conn.recv_expect(wire.MsgType.ENC_W)
            (count,) = struct.unpack_from("<I", payload)
            if count != sync.features:
                raise ProtocolError(f"ENC_W carried {count} ciphertexts")
            with timers.span("weight_refresh"):
                enc_ws = unpack_ct_list(payload, 4, count, session.ctx)
                max_level_seen = max(max_level_seen, *(c.level for c in enc_ws))
                refreshed = np.empty((sync.classes, sync.features))
                for f, ct in enumerate(enc_ws):
                    vals = session.ctx.decrypt(ct, session.block * sync.classes)
                    refreshed[:, f] = extract_weight_column(vals, sync.classes, session.block)
                conn.send(wire.MsgType.DEC_W, wire.encode_tensor(refreshed))
        return loss, probs, grad_out, refreshed

    def evaluate() -> float | None:
        if sync.eval_batches == 0:
            return None
        correct = total = 0
        limit = sync.eval_batches * sync.batch_size
        with timers.span("evaluate"):
            for start_idx in range(0, limit, sync.batch_size):
                x = test_set.samples[start_idx : start_idx + sync.batch_size]
                y = test_set.labels[start_idx : start_idx + sync.batch_size]
                _, _, logits = _forward_over_wire(conn, session, x, 1, timers)
                correct += int((logits.argmax(axis=1) == y).sum())
                total += len(y)
        return correct / total if total else None

    try:
        for epoch in range(sync.epochs):
            epoch_start = time.monotonic()
            sent_before = dict(conn.stats.bytes_sent)
            recv_before = dict(conn.stats.bytes_received)
            traces: list[telemetry.IterationTrace] = []
            seen = correct_running = 0
            for it, (x, y) in enumerate(batches.epoch(epoch)):
                if it >= sync.batch_count:
                    break
                t0 = time.monotonic()
                try:
                    loss, probs, grad_out, refreshed = train_iteration(epoch, it, x, y)
                except SplitLabError as exc:
                    raise type(exc)(f"epoch {epoch} iteration {it}: {exc}") from exc
                correct_running += int((probs.argmax(axis=1) == y).sum())
                seen += len(y)
                traces.append(
                    telemetry.IterationTrace(
                        epoch=epoch,
                        iteration=it,
                        loss=loss,
                        accuracy_so_far=correct_running / seen,
                        max_ct_level=max_level_seen,
                        seconds=time.monotonic() - t0,
                    )
                )
                if trace_sink is not None:
                    trace_sink.append(
                        {
                            "epoch": epoch,
                            "iteration": it,
                            "loss": loss,
                            "grad_out": grad_out.copy(),
                            "client_params": {k: v.copy() for k, v in session.params.items()},
                            "refreshed_w": None if refreshed is None else refreshed.copy(),
                        }
                    )
            eval_on = sync.eval_batches and (epoch + 1) % eval_every == 0
            test_acc = evaluate() if eval_on else None
            conn.send(wire.MsgType.EPOCH_END, struct.pack("<I", epoch))
            conn.recv_expect(wire.MsgType.EPOCH_END)
            # per-type traffic for this epoch, both directions
            delta: dict[str, int] = {}
            for snap, now in ((sent_before, conn.stats.bytes_sent),
                              (recv_before, conn.stats.bytes_received)):
                for k, v in now.items():
                    delta[k] = delta.get(k, 0) + v - snap.get(k, 0)
            epochs_rows.append(
                telemetry.epoch_summary(
                    epoch, traces, test_acc, time.monotonic() - epoch_start,
                    timers.as_dict(), delta, dict(conn.stats.msgs_sent),
                )
            )
            if per_iteration:
                all_traces.extend(vars(t) for t in traces)
        conn.send(wire.MsgType.BYE)
        conn.recv_expect(wire.MsgType.BYE)
    finally:
        pass

    sent_types = dict(conn.stats.msgs_sent)
    audit = leakage_surface(
        "he" if sync.mode == wire.MODE_HE else "plain",
        sent_types,
        {"plain_grad_w"} if debug_send_grad_w else set(),
        ctx_contains_sk=False,
    )
    return telemetry.RunReport(
        mode="split-he" if sync.mode == wire.MODE_HE else "split-plain",
        role="client",
        he_set=sync.he_set,
        config=vars(sync).copy(),
        model={
            "layers": [nn.model._layer_to_str(l) for l in spec.layers],
            "split_index": spec.split_index,
            "features": spec.feature_count,
            "classes": spec.num_classes,
        },
        epochs=epochs_rows,
        totals={
            "seconds": time.monotonic() - start,
            "bytes": conn.stats.total_bytes,
            "bytes_sent": conn.stats.total_bytes_sent,
            "bytes_received": conn.stats.total_bytes_received,
            "max_ct_level": max_level_seen,
        },
        audit=audit.as_dict(),
        per_iteration=all_traces if per_iteration else None,
    )
