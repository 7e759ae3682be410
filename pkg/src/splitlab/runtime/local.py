"""Non-split baseline, numerically identical to the split-plain run.

Consumes the same derived RNG streams and calls the same layer functions in
the same order as the client/server pair (Adam on the convolutional stack,
plain SGD on the final linear layer), so split-plain and local runs with a
shared seed produce bitwise-equal weights.
"""

from __future__ import annotations

import time

import numpy as np

from .. import data, nn, telemetry
from ..util import derive_rng


def local_train(
    spec: nn.ModelSpec,
    cfg: nn.TrainConfig,
    train_set: data.Dataset,
    test_set: data.Dataset | None = None,
    eval_every: int = 1,
    trace_sink: list | None = None,
    per_iteration: bool = False,
) -> telemetry.RunReport:
    params = nn.init_client_params(spec, derive_rng(cfg.seed, "client-model"))
    init_rng = derive_rng(cfg.seed, "server-model")
    w = nn.model._init_uniform(init_rng, (spec.num_classes, spec.feature_count), spec.feature_count)
    b = nn.model._init_uniform(init_rng, (spec.num_classes,), spec.feature_count)
    opt = nn.Adam(lr=cfg.lr)
    batches = data.batches(train_set, cfg.batch_size, cfg.seed)
    timers = telemetry.Timers()

    epochs_rows: list[telemetry.EpochRow] = []
    all_traces: list[dict] = []
    start = time.monotonic()
    for epoch in range(cfg.epochs):
        epoch_start = time.monotonic()
        traces: list[telemetry.IterationTrace] = []
        seen = correct = 0
        for it, (x, y) in enumerate(batches.epoch(epoch)):
            if it >= cfg.batch_count:
                break
            t0 = time.monotonic()
            with timers.span("forward"):
                probs, cache = nn.forward_local(x, spec, params, w, b)
            loss = nn.cross_entropy(probs, y)
            grad_logits = nn.ce_softmax_grad(probs, y)
            with timers.span("backward"):
                client_grads, grad_w, grad_b = nn.backward_local(grad_logits, spec, cache)
            with timers.span("optimizer"):
                opt.step(params, client_grads)
                nn.sgd_step(w, grad_w, cfg.lr)
                nn.sgd_step(b, grad_b, cfg.lr)
            correct += int((probs.argmax(axis=1) == y).sum())
            seen += len(y)
            traces.append(
                telemetry.IterationTrace(
                    epoch=epoch,
                    iteration=it,
                    loss=loss,
                    accuracy_so_far=correct / seen,
                    seconds=time.monotonic() - t0,
                )
            )
            if trace_sink is not None:
                trace_sink.append(
                    {
                        "epoch": epoch,
                        "iteration": it,
                        "loss": loss,
                        "client_params": {k: v.copy() for k, v in params.items()},
                        "w": w.copy(),
                        "b": b.copy(),
                    }
                )
        test_acc = None
        if test_set is not None and (epoch + 1) % eval_every == 0:
            probs, _ = nn.forward_local(test_set.samples, spec, params, w, b)
            test_acc = float((probs.argmax(axis=1) == test_set.labels).mean())
        epochs_rows.append(
            telemetry.epoch_summary(
                epoch, traces, test_acc, time.monotonic() - epoch_start,
                timers.as_dict(), {}, {},
            )
        )
        if per_iteration:
            all_traces.extend(vars(t) for t in traces)

    return telemetry.RunReport(
        mode="local",
        role="local",
        he_set="none",
        config={
            "epochs": cfg.epochs,
            "lr": cfg.lr,
            "batch_size": cfg.batch_size,
            "batch_count": cfg.batch_count,
            "seed": cfg.seed,
        },
        model={
            "layers": [nn.model._layer_to_str(l) for l in spec.layers],
            "split_index": spec.split_index,
            "features": spec.feature_count,
            "classes": spec.num_classes,
        },
        epochs=epochs_rows,
        totals={
            "seconds": time.monotonic() - start,
            "bytes": 0,
            "bytes_sent": 0,
            "bytes_received": 0,
            "max_ct_level": 0,
        },
        audit=None,
        per_iteration=all_traces if per_iteration else None,
    )
