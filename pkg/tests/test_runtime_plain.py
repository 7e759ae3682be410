import numpy as np
import pytest

from splitlab import data, nn, runtime
from splitlab.util import derive_rng

MITBIH = data.get_profile("mitbih")


def _setup(count=48, channels=4, seed=21, epochs=2, batch_count=6):
    ds = data.synth_ecg(count, MITBIH, seed=seed)
    tr, te = data.split_train_test(ds, 0.5, seed=seed)
    spec = nn.default_model_spec(1, 128, channels=channels)
    cfg = nn.TrainConfig(epochs=epochs, lr=0.001, batch_size=4, batch_count=batch_count, seed=77)
    return spec, cfg, tr, te


def test_split_plain_is_bitwise_identical_to_local():
    spec, cfg, tr, te = _setup()
    ctr, str_ = [], []
    crep, srep = runtime.run_split_session(
        dict(spec=spec, cfg=cfg, train_set=tr, test_set=te, mode="plain", trace_sink=ctr),
        dict(trace_sink=str_),
    )
    ltr = []
    lrep = runtime.local_train(spec, cfg, tr, te, trace_sink=ltr)
    assert len(ltr) == len(ctr) == cfg.epochs * cfg.batch_count
    for lt, ct_, st in zip(ltr, ctr, str_):
        assert lt["loss"] == ct_["loss"]
        for name in lt["client_params"]:
            assert np.array_equal(lt["client_params"][name], ct_["client_params"][name])
        assert np.array_equal(lt["w"], st["w"])
        assert np.array_equal(lt["b"], st["b"])
    assert crep.epochs[-1].test_accuracy == lrep.epochs[-1].test_accuracy


def test_plain_mode_audit_records_activation_exposure():
    spec, cfg, tr, te = _setup(epochs=1, batch_count=2)
    _, srep = runtime.run_split_session(
        dict(spec=spec, cfg=cfg, train_set=tr, test_set=None, mode="plain"),
    )
    audit = srep.audit
    assert not audit["leakage_free"]
    by_name = {a["name"]: a for a in audit["assertions"]}
    assert not by_name["no_plain_activation"]["passed"]
    assert by_name["no_plain_weight_gradient"]["passed"]
    assert by_name["no_secret_key"]["passed"]


def test_zero_epoch_run_leaves_initial_weights():
    spec, cfg, tr, _ = _setup()
    cfg = nn.TrainConfig(epochs=0, lr=0.001, batch_size=4, batch_count=6, seed=77)
    traces = []
    report = runtime.local_train(spec, cfg, tr, trace_sink=traces)
    assert traces == [] and report.epochs == []
    # a fresh init with the same seed is what an untouched model looks like
    params = nn.init_client_params(spec, derive_rng(77, "client-model"))
    again = nn.init_client_params(spec, derive_rng(77, "client-model"))
    for name in params:
        assert np.array_equal(params[name], again[name])


def test_local_reaches_90_percent_on_synthetic_within_five_epochs():
    # calibrated contract of the synthetic generator
    ds = data.synth_ecg(400, MITBIH, seed=13)
    tr, te = data.split_train_test(ds, 0.5, seed=13)
    spec = nn.default_model_spec(1, 128, channels=16)
    cfg = nn.TrainConfig(epochs=5, lr=0.001, batch_size=4, batch_count=10_000, seed=5)
    report = runtime.local_train(spec, cfg, tr, te, eval_every=1)
    accs = [row.test_accuracy for row in report.epochs]
    assert max(accs) >= 0.90
    assert report.epochs[-1].test_accuracy >= 0.90


def test_session_stats_symmetry_and_totals():
    spec, cfg, tr, te = _setup(epochs=1, batch_count=3)
    crep, srep = runtime.run_split_session(
        dict(spec=spec, cfg=cfg, train_set=tr, test_set=te, mode="plain"),
    )
    assert crep.totals["bytes_sent"] == srep.totals["bytes_received"]
    assert crep.totals["bytes_received"] == srep.totals["bytes_sent"]
    assert crep.totals["bytes"] == crep.totals["bytes_sent"] + crep.totals["bytes_received"]
