import numpy as np
import pytest
import torch

from geoemu.models import CNNConfig, UNetConfig, build_cnn, build_unet
from geoemu.preprocess import WindowSpec
from geoemu.training import (NoSamplesError, TrainConfig, _Tensors, masked_loss, rollout_batch_loss,
                             rollout, rollout_sequences, train_autoregressive, train_static)
from toys import scale_model, toy_data


def test_masked_loss_examples():
    pred = torch.tensor([1.0, 2.0, 3.0])
    tgt = torch.tensor([1.0, 2.0, 5.0])
    loss, n = masked_loss(pred, tgt, torch.tensor([True, True, True]))
    assert abs(float(loss) - 4 / 3) < 1e-7 and n == 3
    loss, n = masked_loss(pred, tgt, torch.tensor([True, True, False]))
    assert float(loss) == 0.0 and n == 2
    with pytest.raises(NoSamplesError):
        masked_loss(pred, tgt, torch.zeros(3, dtype=torch.bool))


def test_masked_loss_ignores_nan_targets():
    pred = torch.tensor([1.0, 2.0], requires_grad=True)
    loss, _ = masked_loss(pred, torch.tensor([0.0, float("nan")]), torch.tensor([True, False]))
    loss.backward()
    assert float(loss.detach()) == 1.0 and torch.isfinite(pred.grad).all() and pred.grad[1] == 0


def _linear_data():
    data = toy_data(T=30, L=8, W=8, C=2, seed=1)
    data.y = 0.8 * data.z[:, 0] - 0.3 * data.z[:, 1] + 0.1
    return data


def test_linear_target_fitted():
    data = _linear_data()
    m = build_cnn(2, CNNConfig(depth=1), seed=0).double()
    cfg = TrainConfig(learning_rate=0.02, max_epochs=400, early_stop_patience=400,
                      dtype="float64", batch_size=8)
    m, hist = train_static(m, data, (np.arange(24), np.arange(24, 30)), cfg)
    assert hist.train_loss[hist.best_epoch] < 1e-4
    assert hist.val_loss[hist.best_epoch] == min(hist.val_loss)


def _fit_static(seed=0, **kw):
    data = kw.pop("data", None) or toy_data(T=20, L=8, W=8, C=2, seed=2)
    m = build_unet(2, UNetConfig(width=4), seed=seed)
    cfg = TrainConfig(max_epochs=kw.pop("epochs", 3), seed=seed, **kw)
    return train_static(m, data, (np.arange(14), np.arange(14, 20)), cfg)


def test_training_deterministic():
    (a, ha), (b, hb) = _fit_static(), _fit_static()
    assert ha.train_loss == hb.train_loss and ha.val_loss == hb.val_loss
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_zero_learning_rate_freezes_parameters():
    init = build_unet(2, UNetConfig(width=4), seed=0)
    m, _ = _fit_static(learning_rate=0.0)
    for pa, pb in zip(init.parameters(), m.parameters()):
        assert torch.equal(pa, pb)


def test_small_step_descends():
    data = toy_data(T=20, L=8, W=8, C=2, seed=3)
    m = build_unet(2, UNetConfig(width=4), seed=1)
    tens = _Tensors(data, torch.float32)
    t = torch.arange(14)
    with torch.no_grad():
        before = float(((m(tens.windows(t, m))[:, 0] - tens.y[t]) ** 2).mean())
    cfg = TrainConfig(optimizer="sgd", momentum=0.0, learning_rate=1e-3, batch_size=14,
                      max_epochs=1, clip_norm=None)
    m, _ = train_static(m, data, (np.arange(14), np.array([], int)), cfg)
    with torch.no_grad():
        after = float(((m(tens.windows(t, m))[:, 0] - tens.y[t]) ** 2).mean())
    assert after < before


def test_unobserved_targets_do_not_influence_training():
    data = toy_data(T=20, L=8, W=8, C=2, seed=4)
    rng = np.random.default_rng(0)
    data.obs = data.obs & (rng.random(data.obs.shape) > 0.3)
    other = toy_data(T=20, L=8, W=8, C=2, seed=4)
    other.obs = data.obs
    other.y = np.where(data.obs, data.y, 1e3)
    (a, _), (b, _) = _fit_static(data=data), _fit_static(data=other)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_no_samples_error():
    data = toy_data(T=6, C=2)
    m = build_cnn(6, CNNConfig(hidden=4, depth=2), window=WindowSpec(2, 0))
    with pytest.raises(NoSamplesError):
        train_static(m, data, (np.array([0, 1]), np.array([], int)), TrainConfig(max_epochs=1))


def test_rollout_K1_equals_one_step_loss():
    data = toy_data(T=16, L=8, W=8, C=2, seed=5)
    m = build_unet(3, UNetConfig(width=4), autoregressive=True, seed=0).double()
    tens = _Tensors(data, torch.float64)
    t0, counted = rollout_sequences(data, m, 1, np.arange(12), np.arange(12))
    assert t0.tolist() == list(range(11))
    with torch.no_grad():
        loss = float(rollout_batch_loss(m, tens, torch.as_tensor(t0), torch.as_tensor(counted), 1))
        x = torch.cat([tens.z[t0 + 1], tens.y[t0][:, None]], 1)
        ref = float(((m(x)[:, 0] - tens.y[t0 + 1]) ** 2).mean())
    assert abs(loss - ref) < 1e-12


def test_rollout_gradient_flows_through_fed_back_state():
    data = toy_data(T=12, L=3, W=3, C=1, seed=6)
    m = scale_model(1, a=0.7, b=0.2)
    tens = _Tensors(data, torch.float64)
    t0 = torch.tensor([0, 3, 5])
    counted = torch.ones(3, 2, dtype=torch.bool)

    def loss_at(a, b):
        with torch.no_grad():
            m.net.a.fill_(a)
            m.net.b.fill_(b)
            return float(rollout_batch_loss(m, tens, t0, counted, 2))

    m.net.a.data.fill_(0.7)
    m.net.b.data.fill_(0.2)
    loss = rollout_batch_loss(m, tens, t0, counted, 2)
    ga, gb = torch.autograd.grad(loss, [m.net.a, m.net.b])
    h = 1e-6
    fa = (loss_at(0.7 + h, 0.2) - loss_at(0.7 - h, 0.2)) / (2 * h)
    fb = (loss_at(0.7, 0.2 + h) - loss_at(0.7, 0.2 - h)) / (2 * h)
    assert abs(float(ga) - fa) < 1e-7 * max(1, abs(fa))
    assert abs(float(gb) - fb) < 1e-7 * max(1, abs(fb))

    # closed form for the two-step chain, pooled over sequences
    y, z = data.y, data.z[:, 0]
    ga_ref = 0.0
    for s in (0, 3, 5):
        p1 = 0.7 * y[s] + 0.2 * z[s + 1]
        p2 = 0.7 * p1 + 0.2 * z[s + 2]
        d1 = y[s]
        d2 = p1 + 0.7 * d1
        ga_ref += (np.mean(2 * (p1 - y[s + 1]) * d1) + np.mean(2 * (p2 - y[s + 2]) * d2)) / 2
    assert abs(float(ga) - ga_ref / 3) < 1e-10


def test_rollout_land_reset():
    valid = np.ones((3, 3), bool)
    valid[1, 1] = False
    data = toy_data(T=8, L=3, W=3, C=1, valid=valid)
    data.z[:] = 1.0
    m = scale_model(1, a=1.0, b=1.0)
    tens = _Tensors(data, torch.float64)

    with torch.no_grad():
        p = rollout(m, tens, torch.tensor([0]), 3)[0]
    # land starts at 0 and is reset each step, so it only ever sees b * z
    assert torch.all(p[:, 1, 1] == 1.0)
    assert torch.allclose(p[2, 0, 0], tens.y[0, 0, 0] + 3.0)


def test_autoregressive_training_runs_and_restores_best():
    data = toy_data(T=24, L=8, W=8, C=2, seed=7)
    m = build_unet(5, UNetConfig(width=4), window=WindowSpec(1, 0), autoregressive=True, seed=0)
    m, hist = train_autoregressive(m, data, (np.arange(16), np.arange(16, 20)),
                                   TrainConfig(rollout_K=3, max_epochs=4))
    assert len(hist.train_loss) == 4 and 0 <= hist.best_epoch < 4
    assert np.isfinite(hist.val_loss).all()


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(rollout_K=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    assert TrainConfig(learning_rate=0).learning_rate == 0
