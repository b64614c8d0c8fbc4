import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from densereg.data import Dataset
from densereg.errors import ConfigError, DomainError, ShapeError, StateError, UndefinedMetricError
from densereg.model import ModelSpec, build
from densereg.nn import Dense
from densereg.tensor import Rng
from densereg.train import (Adam, EarlyStopping, MinMaxScaler, TrainConfig, adam_step, early_stop_update,
                            evaluate_loss, fit, metrics, mse, mse_grad, scaler_fit, scaler_inverse,
                            scaler_transform)

# -- scaler ---------------------------------------------------------------------


def test_scaler_reversed_map():
    p = scaler_fit(np.array([0.0, 2.0, 4.0]))
    assert np.array_equal(scaler_transform(p, np.array([0.0, 2.0, 4.0])), [1.0, 0.5, 0.0])


def test_scaler_constant_column():
    p = scaler_fit(np.array([5.0, 5.0]))
    assert p.degenerate.all()
    t = scaler_transform(p, np.array([5.0, 5.0]))
    assert np.array_equal(t, [0.5, 0.5])
    assert np.array_equal(scaler_inverse(p, t), [5.0, 5.0])


def test_scaler_mixed_columns():
    x = np.array([[1.0, 7.0], [3.0, 7.0]])
    s = MinMaxScaler().fit(x)
    t = s.transform(x)
    assert np.array_equal(t, [[1.0, 0.5], [0.0, 0.5]])
    assert np.array_equal(s.inverse(t), x)


def test_scaler_before_fit():
    with pytest.raises(StateError):
        MinMaxScaler().transform(np.zeros(3))


def test_scaler_extremes_and_out_of_range():
    x = Rng(0).uniform((100, 3), -5, 5)
    s = MinMaxScaler().fit(x)
    t = s.transform(x)
    assert np.array_equal(t.min(axis=0), [0, 0, 0]) and np.array_equal(t.max(axis=0), [1, 1, 1])
    outside = s.transform(np.array([[100.0, -100.0, 0.0]]))
    assert outside[0, 0] < 0 and outside[0, 1] > 1


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_scaler_round_trip(x):
    s = MinMaxScaler().fit(x)
    back = s.inverse(s.transform(x))
    scale = np.maximum(np.abs(x).max(axis=0), 1.0)
    assert np.all(np.abs(back - x) <= 1e-12 * scale)


# -- loss and metrics -------------------------------------------------------------


def test_mse_examples():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([0.0, 0.0], [1.0, 1.0]) == 1.0
    assert mse([0.0, 2.0], [1.0, 1.0]) == 1.0


def test_mse_errors():
    with pytest.raises(DomainError):
        mse([], [])
    with pytest.raises(ShapeError):
        mse([1.0], [1.0, 2.0])


def test_mse_grad_matches_difference_quotient():
    y = np.array([0.3, -1.0, 2.0])
    yh = np.array([0.1, 0.5, 1.0])
    h = 1e-6
    num = [(mse(y, yh + h * e) - mse(y, yh - h * e)) / (2 * h) for e in np.eye(3)]
    np.testing.assert_allclose(mse_grad(y, yh)[:, 0], num, rtol=1e-7)


def test_metrics_perfect_fit():
    y = np.array([1.0, 2.0, 4.0])
    m = metrics(y, y)
    assert m.pearson == pytest.approx(1.0, abs=1e-15) and m.r2 == 1.0 and m.mean_relative_error == 0.0


def test_metrics_mean_predictor_has_zero_r2():
    from densereg.train import r_squared
    y = np.array([1.0, 2.0, 6.0])
    assert r_squared(y, np.full(3, y.mean())) == 0.0


def test_relative_error_example():
    from densereg.train import mean_relative_error
    assert mean_relative_error([100.0], [94.0]) == (pytest.approx(0.06), 0)


def test_relative_error_skips_zero_targets():
    m = metrics(np.array([0.0, 10.0, 20.0]), np.array([1.0, 11.0, 18.0]))
    assert m.n_skipped_relative == 1
    assert m.mean_relative_error == pytest.approx((0.1 + 0.1) / 2)


def test_pearson_zero_variance():
    with pytest.raises(UndefinedMetricError):
        metrics(np.array([1.0, 2.0]), np.array([3.0, 3.0]))


# -- adam -------------------------------------------------------------------------


def test_adam_zero_gradient_keeps_params():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(1e-3)
    for _ in range(5):
        adam_step(opt, p, {"w": np.zeros(2)})
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step():
    # m_hat = g = 1 and v_hat = g^2 = 1 after bias correction
    p = {"w": np.array([0.0])}
    adam_step(Adam(1e-4), p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-1e-4 / (1 + 1e-8), rel=1e-12)


def test_adam_minimizes_quadratic():
    p = {"w": np.array([1.0])}
    opt = Adam(1e-2)
    for _ in range(10_000):
        adam_step(opt, p, {"w": 2 * p["w"]})
    assert abs(p["w"][0]) < 1e-3
    assert opt.states["w"].t == 10_000 and np.all(opt.states["w"].v >= 0)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step(Adam(), {"w": np.zeros(2)}, {"w": np.zeros(3)})


# -- early stopping ----------------------------------------------------------------


def run_stopper(losses, patience):
    es = EarlyStopping(patience)
    for epoch, vl in enumerate(losses, start=1):
        if early_stop_update(es, epoch, vl, {"epoch": epoch}) == "stop":
            return epoch, es
    return None, es


def test_early_stop_example():
    stop, es = run_stopper([5, 4, 3, 3.1, 3.2], 2)
    assert stop == 5 and es.best_epoch == 3 and es.best_state == {"epoch": 3}


def test_early_stop_never_fires_on_decreasing_losses():
    stop, es = run_stopper(list(range(100, 0, -1)), 2)
    assert stop is None and es.best_epoch == 100


def test_equal_loss_does_not_reset():
    stop, es = run_stopper([3.0, 3.0, 3.0], 2)
    assert stop == 3 and es.best_epoch == 1


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=40), st.integers(1, 6))
def test_early_stop_gap_equals_patience(losses, patience):
    stop, es = run_stopper(losses, patience)
    if stop is not None:
        assert stop - es.best_epoch == patience
    assert es.best_val_loss == min(losses[: stop or len(losses)])


# -- config ----------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [{"learning_rate": 0}, {"batch_size": 1}, {"max_epochs": 5, "patience": 6},
                                {"patience": 0}])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


# -- fit ------------------------------------------------------------------------------


class LinearNet:
    """One dense layer, no batchnorm; duck-types the Model interface used by fit."""

    def __init__(self):
        self.dense = Dense(1, 1)

    def forward(self, x, training=False):
        return self.dense.forward(x)

    def backward(self, dy):
        self.dense.backward(dy)

    def trainable(self):
        for k in self.dense.params:
            yield k, self.dense, k

    def state(self):
        return {k: v.copy() for k, v in self.dense.params.items()}

    def load_state(self, s):
        self.dense.params = {k: v.copy() for k, v in s.items()}

    def predict(self, x):
        return self.forward(x)[:, 0]


def line_data(n, seed):
    x = Rng(seed).uniform((n, 1), 0, 1)
    return Dataset(x, 2.0 * x[:, 0])


def test_fit_recovers_slope():
    net = LinearNet()
    cfg = TrainConfig(learning_rate=1e-2, batch_size=32, max_epochs=300, patience=None, seed=1)
    fit(net, line_data(256, 0), line_data(64, 1), cfg)
    assert net.dense.W[0, 0] == pytest.approx(2.0, abs=1e-2)


def test_tiny_lr_full_batch_loss_non_increasing():
    net = LinearNet()
    net.dense.params["W"][:] = 0.5
    ds = line_data(64, 3)
    cfg = TrainConfig(learning_rate=1e-6, batch_size=64, max_epochs=50, patience=None, shuffle=False)
    rep = fit(net, ds, None, cfg)
    assert all(b <= a for a, b in zip(rep.train_loss, rep.train_loss[1:]))


def toy_problem(n=300, seed=0):
    r = Rng(seed)
    x = r.uniform((n, 3), 0, 1)
    y = np.sin(3 * x[:, 0]) + x[:, 1] * x[:, 2]
    ds = Dataset(x, y)
    return ds.subset(np.arange(0, 200)), ds.subset(np.arange(200, 300))


def test_zero_epochs_keeps_initial_weights():
    tr, va = toy_problem()
    m = build(ModelSpec("densenet", 3, 4), Rng(0))
    before = m.state()
    rep = fit(m, tr, va, TrainConfig(max_epochs=0, patience=None))
    assert rep.train_loss == [] and rep.val_loss == [] and rep.stopping_epoch == 0
    assert all(np.array_equal(before[k], v) for k, v in m.state().items())


def test_fit_is_deterministic():
    tr, va = toy_problem()
    cfg = TrainConfig(learning_rate=1e-3, batch_size=50, max_epochs=8, patience=5, seed=9)
    reports, states = [], []
    for _ in range(2):
        m = build(ModelSpec("densenet", 3, 7), Rng(4))
        reports.append(fit(m, tr, va, cfg))
        states.append(m.state())
    assert reports[0].train_loss == reports[1].train_loss
    assert reports[0].val_loss == reports[1].val_loss
    assert reports[0].stopping_epoch == reports[1].stopping_epoch
    assert all(np.array_equal(states[0][k], states[1][k]) for k in states[0])


def test_early_stop_restores_best_weights():
    tr, va = toy_problem()
    # large learning rate and tiny batches make validation loss bounce
    cfg = TrainConfig(learning_rate=0.05, batch_size=8, max_epochs=60, patience=3, seed=2)
    m = build(ModelSpec("densenet", 3, 7), Rng(1))
    rep = fit(m, tr, va, cfg)
    assert rep.stopped_early
    assert rep.stopping_epoch - rep.best_epoch == cfg.patience
    assert rep.stopping_epoch <= cfg.max_epochs
    assert abs(evaluate_loss(m, va) - min(rep.val_loss)) <= 1e-12


def test_fit_drops_single_row_tail_batch():
    tr, va = toy_problem()
    tr = tr.subset(np.arange(21))
    rep = fit(build(ModelSpec("densenet", 3, 4), Rng(0)), tr, va,
              TrainConfig(batch_size=10, max_epochs=2, patience=None))
    assert len(rep.train_loss) == 2 and all(math.isfinite(v) for v in rep.train_loss)


def test_fit_reports_nonfinite_loss():
    from densereg.errors import NumericalError
    tr, va = toy_problem()
    m = build(ModelSpec("densenet", 3, 4), Rng(0))
    m.output_layer.dense.params["W"][:] = 1e300
    with pytest.raises(NumericalError, match="epoch 1"):
        fit(m, tr, va, TrainConfig(max_epochs=2, patience=None))


def test_report_files(tmp_path):
    tr, va = toy_problem()
    rep = fit(build(ModelSpec("densenet", 3, 4), Rng(0)), tr, va, TrainConfig(max_epochs=3, patience=2))
    rep.write_curve_csv(tmp_path / "c.csv")
    rep.write_summary_json(tmp_path / "s.json", {"seed": 0})
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 4
    import json
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["stopping_epoch"] == 3 and doc["seed"] == 0 and "wall_time_seconds" in doc
