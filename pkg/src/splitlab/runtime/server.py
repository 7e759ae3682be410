"""Server protocol loop: one linear layer, plaintext or encrypted.

HE iteration, depth 1 throughout:
  forward   ct_out[k] = rescale(sum_f ct_a[f] * W[k,f]) + bias
  backward  dJ/db and dJ/da_split from the plaintext dJ/da_out (pre-update
            weights); packed encrypted weight gradient per feature via one
            block-local slot sum, learning rate folded into the plaintext
  update    Enc(W + mask) mod-switched to the gradient's level minus the
            gradient; the client decrypts and returns W_new + mask, the
            server subtracts the mask; bias updates by plaintext SGD

The mask is fresh uniform in [-10*std(W), 10*std(W)] per refresh and never
leaves the server.
"""

from __future__ import annotations

import struct
import time

import numpy as np

from .. import ckks, nn, telemetry, wire
from ..errors import PrecisionError, ProtocolError
from ..util import derive_rng
from .audit import leakage_surface
from .packing import check_capacity, grad_plaintext, pack_ct_list, unpack_ct_list, weight_column_slots


class _ServerState:
    def __init__(self, sync: wire.SyncConfig):
        init_rng = derive_rng(sync.seed, "server-model")
        self.w = nn.model._init_uniform(
            init_rng, (sync.classes, sync.features), sync.features
        )
        self.b = nn.model._init_uniform(init_rng, (sync.classes,), sync.features)
        self.mask_rng = derive_rng(sync.seed, "mask")
        self.mask: np.ndarray | None = None
        # refresh_every > 1: encrypted gradients accumulate here and the
        # forward pass runs on stale plaintext weights between refreshes
        self.pending_grads: list | None = None
        self.pending_bias: np.ndarray | None = None
        self.train_iter = 0


def _he_forward(ctx, cts, state, sync):
    outs = []
    for k in range(sync.classes):
        acc = ckks.mul_const(cts[0], state.w[k, 0], ctx.params.scale)
        for f in range(1, sync.features):
            acc = ckks.add(acc, ckks.mul_const(cts[f], state.w[k, f], ctx.params.scale))
        out = ckks.rescale(acc)
        bias = ckks.encode_constant(ctx.ring, state.b[k], out.level, out.scale)
        outs.append(ckks.add_plain(out, bias))
    return outs


def _he_weight_gradient(ctx, cts, grad_out, sync, lr, block):
    # one class-interleaved plaintext (learning rate folded in) serves every
    # feature; the block-local slot sum drops each (class, feature) batch
    # total onto slot block*k
    pt = grad_plaintext(ctx, grad_out, lr, block)
    grads = []
    for f in range(sync.features):
        prod = ckks.rescale(ckks.mul_plain(cts[f], pt))
        grads.append(ckks.slot_sum(prod, block, ctx.rotation_keys))
    return grads


def server_run(
    conn: wire.Connection,
    trace_sink: list | None = None,
    per_iteration: bool = False,
) -> telemetry.RunReport:
    """Serve one full training session; everything comes from the handshake."""
    sync = wire.handshake_and_sync(conn, "server")
    state = _ServerState(sync)
    he_mode = sync.mode == wire.MODE_HE
    ctx = None
    ctx_has_sk = False
    events: set[str] = set()
    timers = telemetry.Timers()
    epochs: list[telemetry.EpochRow] = []
    traces_all: list[dict] = []
    max_level_seen = 0
    block = 0

    if he_mode:
        _, blob = conn.recv_expect(wire.MsgType.CTX_PUB)
        ctx_has_sk = ckks.serialize.SK_MAGIC in blob
        with timers.span("context_load"):
            ctx = ckks.deserialize_public_context(blob)
        ctx.seed_encryption(derive_rng(sync.seed, "server-enc"))
        block = check_capacity(ctx.params, sync.batch_size, sync.classes)

    def parse_enc_act(payload):
        phase, feats, n, blk = struct.unpack_from("<BIII", payload)
        if feats != sync.features or n != sync.batch_size or blk != block:
            raise ProtocolError(
                f"ENC_ACT geometry ({feats},{n},{blk}) != synced "
                f"({sync.features},{sync.batch_size},{block})"
            )
        cts = unpack_ct_list(payload, struct.calcsize("<BIII"), feats, ctx)
        return phase, cts

    def parse_plain_act(payload):
        phase = payload[0]
        act = wire.decode_tensor(payload[1:])
        if act.shape != (sync.batch_size, sync.features):
            raise ProtocolError(f"PLAIN_ACT shape {act.shape} unexpected")
        return phase, act

    def recv_grad_out():
        _, payload = conn.recv_expect(wire.MsgType.GRAD_AL)
        grad, rest = wire.decode_tensor_prefix(payload)
        if rest:
            # the debug leak path of the old protocol: a plaintext dJ/dw
            # rides behind the legitimate gradient; record and discard
            wire.decode_tensor(rest)
            events.add("plain_grad_w")
        if grad.shape != (sync.batch_size, sync.classes):
            raise ProtocolError(f"GRAD_AL shape {grad.shape} != "
                                f"({sync.batch_size},{sync.classes})")
        return grad

    def he_train_iteration(cts):
        nonlocal max_level_seen
        with timers.span("he_forward"):
            outs = _he_forward(ctx, cts, state, sync)
        max_level_seen = max(max_level_seen, *(c.level for c in outs))
        conn.send(wire.MsgType.ENC_OUT, pack_ct_list(struct.pack("<BI", 0, sync.classes), outs))
        grad_out = recv_grad_out()
        grad_b = grad_out.sum(axis=0)
        grad_alow = grad_out @ state.w  # pre-update weights
        conn.send(wire.MsgType.GRAD_ALOW, wire.encode_tensor(grad_alow))
        with timers.span("he_weight_gradient"):
            grads = _he_weight_gradient(ctx, cts, grad_out, sync, sync.lr, block)
        max_level_seen = max(max_level_seen, *(g.level for g in grads))
        if state.pending_grads is None:
            state.pending_grads = grads
            state.pending_bias = sync.lr * grad_b
        else:
            state.pending_grads = [
                ckks.add(acc, g) for acc, g in zip(state.pending_grads, grads)
            ]
            state.pending_bias = state.pending_bias + sync.lr * grad_b
        state.train_iter += 1
        if state.train_iter % sync.refresh_every != 0:
            return
        with timers.span("he_weight_refresh"):
            pend = state.pending_grads
            state.mask = state.mask_rng.uniform(
                -10.0 * state.w.std(), 10.0 * state.w.std(), state.w.shape
            )
            masked = state.w + state.mask
            target_scale = pend[0].scale
            target_level = pend[0].level
            enc_ws = []
            for f in range(sync.features):
                pt = ckks.encode(
                    ctx.ring, ctx.encoder,
                    weight_column_slots(masked[:, f], block),
                    level=0, scale=target_scale,
                )
                fresh = ckks.encrypt(ctx.pk, pt)
                aligned = ckks.mod_switch(fresh, target_level)
                enc_ws.append(ckks.sub(aligned, pend[f]))
        max_level_seen = max(max_level_seen, *(c.level for c in enc_ws))
        conn.send(wire.MsgType.ENC_W, pack_ct_list(struct.pack("<I", sync.features), enc_ws))
        _, payload = conn.recv_expect(wire.MsgType.DEC_W)
        refreshed = wire.decode_tensor(payload)
        if refreshed.shape != state.w.shape:
            raise ProtocolError(f"DEC_W shape {refreshed.shape} != {state.w.shape}")
        if not np.isfinite(refreshed).all():
            raise PrecisionError("refreshed weights contain non-finite values")
        state.w = refreshed - state.mask
        state.b = state.b - state.pending_bias
        state.pending_grads = None
        state.pending_bias = None

    def plain_train_iteration(act):
        logits, cache = nn.linear_forward(act, state.w, state.b)
        conn.send(wire.MsgType.PLAIN_OUT, bytes([0]) + wire.encode_tensor(logits))
        grad_out = recv_grad_out()
        grad_alow, grad_w, grad_b = nn.linear_backward(grad_out, cache)
        conn.send(wire.MsgType.GRAD_ALOW, wire.encode_tensor(grad_alow))
        nn.sgd_step(state.w, grad_w, sync.lr)
        nn.sgd_step(state.b, grad_b, sync.lr)

    start = time.monotonic()
    act_type = wire.MsgType.ENC_ACT if he_mode else wire.MsgType.PLAIN_ACT
    for epoch in range(sync.epochs):
        epoch_start = time.monotonic()
        stats_before = dict(conn.stats.bytes_received)
        it = 0
        while True:
            msg_type, payload = conn.recv_expect(act_type, wire.MsgType.EPOCH_END)
            if msg_type == wire.MsgType.EPOCH_END:
                conn.send(wire.MsgType.EPOCH_END, payload)
                break
            if he_mode:
                phase, parsed = parse_enc_act(payload)
            else:
                phase, parsed = parse_plain_act(payload)
            if phase == 1:  # evaluation: forward only
                if he_mode:
                    outs = _he_forward(ctx, parsed, state, sync)
                    conn.send(wire.MsgType.ENC_OUT,
                              pack_ct_list(struct.pack("<BI", 1, sync.classes), outs))
                else:
                    logits, _ = nn.linear_forward(parsed, state.w, state.b)
                    conn.send(wire.MsgType.PLAIN_OUT, bytes([1]) + wire.encode_tensor(logits))
                continue
            if he_mode:
                he_train_iteration(parsed)
            else:
                plain_train_iteration(parsed)
            if trace_sink is not None:
                trace_sink.append(
                    {"epoch": epoch, "iteration": it, "w": state.w.copy(), "b": state.b.copy()}
                )
            it += 1
        delta = {
            k: v - stats_before.get(k, 0) for k, v in conn.stats.bytes_received.items()
        }
        epochs.append(
            telemetry.epoch_summary(
                epoch, [], None, time.monotonic() - epoch_start,
                timers.as_dict(), delta, dict(conn.stats.msgs_received),
            )
        )
    conn.recv_expect(wire.MsgType.BYE)
    conn.send(wire.MsgType.BYE)

    audit = leakage_surface(
        "he" if he_mode else "plain",
        dict(conn.stats.msgs_received),
        events,
        ctx_contains_sk=ctx_has_sk,
    )
    report = telemetry.RunReport(
        mode="split-he" if he_mode else "split-plain",
        role="server",
        he_set=sync.he_set,
        config=vars(sync).copy(),
        model={"classes": sync.classes, "features": sync.features},
        epochs=epochs,
        totals={
            "seconds": time.monotonic() - start,
            "bytes": conn.stats.total_bytes,
            "bytes_sent": conn.stats.total_bytes_sent,
            "bytes_received": conn.stats.total_bytes_received,
            "max_ct_level": max_level_seen,
        },
        audit=audit.as_dict(),
        per_iteration=traces_all if per_iteration else None,
    )
    return report
