import numpy as np
import pytest
import torch

from geoemu.diagnostics import compute_metrics
from geoemu.evaluation import lead_table
from geoemu.forecast import forecast_run, persistence_forecast, rollout_forecast, static_reconstruct
from geoemu.models import CNNConfig, build_cnn
from geoemu.preprocess import WindowSpec
from toys import scale_model, toy_data


def test_single_step_matches_model_call():
    data = toy_data(T=12, C=2, seed=1)
    m = scale_model(2, a=0.4, b=0.3)
    out = rollout_forecast(m, data, 5, 1)
    with torch.no_grad():
        x = torch.cat([torch.as_tensor(data.z[6]), torch.as_tensor(data.y[5])[None]])[None]
        ref = m(x)[0, 0].numpy()
    assert out.shape == (1, 4, 4) and np.allclose(out[0], ref, atol=1e-15)


def test_identity_model_repeats_initial_state():
    data = toy_data(T=12, C=2, seed=2)
    out = rollout_forecast(scale_model(2, a=1.0, b=0.0), data, 3, 5)
    assert np.array_equal(out, np.repeat(data.y[3][None], 5, 0))


def test_halving_model():
    data = toy_data(T=12, C=1, seed=3)
    out = rollout_forecast(scale_model(1, a=0.5, b=0.0), data, 0, 3, y0=np.full((4, 4), 8.0))
    assert [float(out[k, 0, 0]) for k in range(3)] == [4.0, 2.0, 1.0]


def test_rollout_truncates_at_window_end(caplog):
    data = toy_data(T=10, C=1)
    out = rollout_forecast(scale_model(1, window=WindowSpec(0, 1)), data, 6, 5)
    assert out.shape[0] == 2  # steps 7, 8; step 9 would need z[10]
    assert "truncated" in caplog.text


def test_persistence_forecast():
    y = np.arange(24.0).reshape(6, 2, 2)
    assert np.array_equal(persistence_forecast(y, 2, 3), np.stack([y[2]] * 3))


def test_forecast_run_pools_sliding_starts():
    data = toy_data(T=24, C=1, seed=4)
    run = forecast_run(scale_model(1, a=0.9, b=0.1), data, np.arange(12, 24), 4)
    for k in (1, 4):
        for j, t in enumerate(range(12, 24)):
            ref = rollout_forecast(scale_model(1, a=0.9, b=0.1), data, t - k, k)[k - 1]
            assert np.allclose(run.at_lead(k)[j], ref, atol=1e-12)
    assert np.array_equal(run.start_indices(3), np.arange(9, 21))


def test_persistence_run_and_lead_metrics():
    data = toy_data(T=24, C=1, seed=5)
    run = forecast_run(None, data, np.arange(12, 24), 3, mode="persistence")
    yl = data.y_log()
    for k in (1, 2, 3):
        assert np.array_equal(run.at_lead(k), yl[12 - k: 24 - k])
    rows = lead_table(run, data, model_name="persistence")
    ref = compute_metrics(yl[11:23], yl[12:24], data.obs[12:24])
    assert rows[0]["lead"] == 1 and abs(rows[0]["rmse"] - ref.rmse) < 1e-12
    assert abs(rows[0]["r2"] - ref.r2) < 1e-12


def test_persistence_exact_at_annual_lead():
    data = toy_data(T=36, C=1, seed=6)
    data.y = np.tile(data.y[:12], (3, 1, 1))
    run = forecast_run(None, data, np.arange(24, 36), 12, mode="persistence")
    rows = lead_table(run, data)
    assert rows[11]["rmse"] == 0.0 and rows[0]["rmse"] > 0


def test_gap_filled_from_climatology():
    data = toy_data(T=24, C=1, seed=7)
    data.climatology[:] = 5.0
    data.obs = data.obs.copy()
    data.obs[11, 0, 0] = False
    run = forecast_run(None, data, np.arange(12, 24), 1, mode="persistence")
    assert run.at_lead(1)[0, 0, 0] == 5.0 and run.filled[0, 0] and not run.filled[0, 1:].any()


def test_static_run_identical_across_leads_and_calls():
    data = toy_data(T=16, C=2, L=8, W=8, seed=8)
    m = build_cnn(2, CNNConfig(hidden=4, depth=2), seed=0)
    a = forecast_run(m, data, np.arange(8, 16), 3, mode="static")
    b = forecast_run(m, data, np.arange(8, 16), 3, mode="static")
    assert np.array_equal(a.predictions, b.predictions)
    assert np.array_equal(a.at_lead(1), a.at_lead(3))
    assert np.array_equal(a.at_lead(1), static_reconstruct(m, data, np.arange(8, 16)))


def test_static_reconstruct_marks_incomplete_windows():
    data = toy_data(T=10, C=1, L=8, W=8)
    m = build_cnn(3, CNNConfig(hidden=4, depth=2), window=WindowSpec(1, 1))
    rec = static_reconstruct(m, data, np.array([0, 5, 9]))
    assert np.isnan(rec[0]).all() and np.isnan(rec[2]).all() and np.isfinite(rec[1]).all()


def test_empty_target_window():
    data = toy_data(T=12, C=1)
    run = forecast_run(None, data, np.array([], int), 3, mode="persistence")
    assert run.predictions.shape == (3, 0, 4, 4)


def test_mode_errors():
    data = toy_data(T=12, C=1)
    with pytest.raises(ValueError):
        forecast_run(None, data, np.arange(6, 12), 2, mode="autoregressive")
    with pytest.raises(ValueError):
        forecast_run(None, data, np.arange(6, 12), 0, mode="persistence")
    with pytest.raises(ValueError):
        rollout_forecast(build_cnn(1, CNNConfig(hidden=4, depth=2)), data, 0, 2)
