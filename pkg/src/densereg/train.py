"""Scaling, loss, Adam, early stopping, metrics and the training loop."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DomainError, NumericalError, ShapeError, StateError, UndefinedMetricError
from .model import Model
from .tensor import Rng, as_matrix, as_vector

# ---------------------------------------------------------------------------
# min-max scaling


@dataclass
class ScalerParams:
    mins: np.ndarray
    maxs: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return self.maxs == self.mins

    def to_dict(self) -> dict:
        return {"mins": [float(v) for v in self.mins], "maxs": [float(v) for v in self.maxs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(np.array(d["mins"], dtype=np.float64), np.array(d["maxs"], dtype=np.float64))


class MinMaxScaler:
    """Reversed min-max map ``(max - u) / (max - min)``: the column max goes to 0, the min to 1.

    Constant columns map to 0.5 and invert back to their constant.  Values
    outside the fitted range land outside [0, 1]; that is allowed.
    """

    def __init__(self, params: ScalerParams | None = None):
        self.params = params

    def fit(self, data) -> "MinMaxScaler":
        a = np.asarray(data, dtype=np.float64)
        a2 = a.reshape(-1, 1) if a.ndim == 1 else a
        if a2.shape[0] == 0:
            raise DomainError("cannot fit a scaler on zero rows")
        self.params = ScalerParams(a2.min(axis=0), a2.max(axis=0))
        return self

    def _check(self, a):
        if self.params is None:
            raise StateError("scaler used before fit")
        ncol = a.shape[1] if a.ndim == 2 else 1
        if ncol != self.params.mins.shape[0]:
            raise ShapeError(f"scaler fitted on {self.params.mins.shape[0]} columns, got {ncol}")

    def transform(self, data) -> np.ndarray:
        a = np.asarray(data, dtype=np.float64)
        self._check(a)
        lo, hi = self.params.mins, self.params.maxs
        span = hi - lo
        deg = span == 0
        if a.ndim == 1:
            lo, hi, span, deg = lo[0], hi[0], span[0], deg[0]
            return np.full_like(a, 0.5) if deg else (hi - a) / span
        out = (hi - a) / np.where(deg, 1.0, span)
        out[:, deg] = 0.5
        return out

    def inverse(self, data) -> np.ndarray:
        a = np.asarray(data, dtype=np.float64)
        self._check(a)
        lo, hi = self.params.mins, self.params.maxs
        if a.ndim == 1:
            return hi[0] - a * (hi[0] - lo[0])
        return hi - a * (hi - lo)


def scaler_fit(data) -> ScalerParams:
    return MinMaxScaler().fit(data).params


def scaler_transform(params: ScalerParams, data) -> np.ndarray:
    return MinMaxScaler(params).transform(data)


def scaler_inverse(params: ScalerParams, data) -> np.ndarray:
    return MinMaxScaler(params).inverse(data)


@dataclass
class DataScaler:
    """Feature and target scalers fitted together on the training partition."""

    features: MinMaxScaler
    target: MinMaxScaler | None

    @classmethod
    def fit(cls, ds: Dataset, scale_target: bool = True) -> "DataScaler":
        return cls(MinMaxScaler().fit(ds.features),
                   MinMaxScaler().fit(ds.targets) if scale_target else None)

    def transform(self, ds: Dataset) -> Dataset:
        y = self.target.transform(ds.targets) if self.target is not None else ds.targets
        return Dataset(self.features.transform(ds.features), y, ds.provenance,
                       list(ds.feature_names), ds.target_name)

    def inverse_target(self, y: np.ndarray) -> np.ndarray:
        return self.target.inverse(y) if self.target is not None else np.asarray(y, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"features": self.features.params.to_dict(),
                "target": None if self.target is None else self.target.params.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DataScaler":
        t = d.get("target")
        return cls(MinMaxScaler(ScalerParams.from_dict(d["features"])),
                   None if t is None else MinMaxScaler(ScalerParams.from_dict(t)))


# ---------------------------------------------------------------------------
# loss and metrics


def mse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.size == 0:
        raise DomainError("mse of an empty vector")
    r = y - y_hat
    return float(np.dot(r, r) / r.size)


def mse_grad(y, y_hat) -> np.ndarray:
    """d mse / d y_hat as an (N, 1) matrix."""
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    return (2.0 / y.size * (y_hat - y)).reshape(-1, 1)


@dataclass
class Metrics:
    mse: float
    pearson: float
    r2: float
    mean_relative_error: float
    n: int
    n_skipped_relative: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def pearson(y, y_hat) -> float:
    y = as_vector(y)
    y_hat = as_vector(y_hat)
    yc, pc = y - y.mean(), y_hat - y_hat.mean()
    sy, sp = np.dot(yc, yc), np.dot(pc, pc)
    if sy == 0 or sp == 0:
        raise UndefinedMetricError("pearson correlation undefined for zero-variance input")
    return float(np.dot(yc, pc) / math.sqrt(sy * sp))


def r_squared(y, y_hat) -> float:
    y = as_vector(y)
    y_hat = as_vector(y_hat)
    yc = y - y.mean()
    ss_tot = float(np.dot(yc, yc))
    if ss_tot == 0:
        raise UndefinedMetricError("R^2 undefined for constant targets")
    r = y - y_hat
    return 1.0 - float(np.dot(r, r)) / ss_tot


def mean_relative_error(y, y_hat, floor: float = 1e-12) -> tuple[float, int]:
    """Mean of |y_hat - y| / |y| over entries with |y| > floor, and the number skipped."""
    y = as_vector(y)
    y_hat = as_vector(y_hat)
    keep = np.abs(y) > floor
    skipped = int(y.size - keep.sum())
    if not keep.any():
        raise UndefinedMetricError("relative error undefined: every target is ~0")
    return float(np.mean(np.abs(y_hat[keep] - y[keep]) / np.abs(y[keep]))), skipped


def metrics(y, y_hat) -> Metrics:
    y = as_vector(y, "y")
    y_hat = as_vector(y_hat, "y_hat")
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    mre, skipped = mean_relative_error(y, y_hat)
    return Metrics(mse(y, y_hat), pearson(y, y_hat), r_squared(y, y_hat), mre, int(y.size), skipped)


# ---------------------------------------------------------------------------
# optimizer and early stopping


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 1000
    max_epochs: int = 200
    patience: int | None = 100
    seed: int = 0
    scale_target: bool = True
    shuffle: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 (batchnorm), got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience is not None and not 1 <= self.patience <= max(self.max_epochs, 1):
            raise ConfigError(
                f"patience must lie in [1, max_epochs={self.max_epochs}], got {self.patience}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


class Adam:
    """Adam with bias-corrected moments."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.states: dict[str, AdamState] = {}

    def update(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        if param.shape != grad.shape:
            raise ShapeError(f"{name}: parameter {param.shape} vs gradient {grad.shape}")
        st = self.states.get(name)
        if st is None:
            st = self.states[name] = AdamState(np.zeros_like(param), np.zeros_like(param))
        st.t += 1
        st.m = self.beta1 * st.m + (1.0 - self.beta1) * grad
        st.v = self.beta2 * st.v + (1.0 - self.beta2) * grad * grad
        m_hat = st.m / (1.0 - self.beta1 ** st.t)
        v_hat = st.v / (1.0 - self.beta2 ** st.t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def step(self, model: Model) -> None:
        for name, mod, key in model.trainable():
            self.update(name, mod.params[key], mod.grads[key])


def adam_step(opt: Adam, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for name in params:
        opt.update(name, params[name], grads[name])


class EarlyStopping:
    """Strict-improvement early stopping that snapshots the best weights.

    ``update`` returns True when training should stop, i.e. when ``patience``
    consecutive epochs passed without beating the best validation loss.
    """

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best_val_loss = math.inf
        self.best_epoch = 0
        self.epochs_since_best = 0
        self.best_state = None

    def update(self, epoch: int, val_loss: float, state=None) -> bool:
        if val_loss < self.best_val_loss:
            self.best_val_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
            self.best_state = state() if callable(state) else state
            return False
        self.epochs_since_best += 1
        return self.patience is not None and self.epochs_since_best >= self.patience


def early_stop_update(state: EarlyStopping, epoch: int, val_loss: float, weights=None) -> str:
    return "stop" if state.update(epoch, val_loss, weights) else "continue"


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopping_epoch: int = 0
    best_epoch: int = 0
    stopped_early: bool = False
    wall_time_seconds: float = 0.0
    test_metrics: dict | None = None

    @property
    def best_val_loss(self) -> float:
        return min(self.val_loss) if self.val_loss else math.nan

    def to_summary(self) -> dict:
        return {
            "stopping_epoch": self.stopping_epoch,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "final_train_loss": self.train_loss[-1] if self.train_loss else None,
            "best_val_loss": self.best_val_loss if self.val_loss else None,
            "wall_time_seconds": self.wall_time_seconds,
            "test_metrics": self.test_metrics,
        }

    def write_curve_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for i, (tl, vl) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([i, repr(tl), repr(vl)])

    def write_summary_json(self, path, extra: dict | None = None) -> None:
        doc = self.to_summary()
        if extra:
            doc.update(extra)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")


def evaluate_loss(model: Model, ds: Dataset, batch_size: int = 65536) -> float:
    """Inference-mode MSE over a whole dataset."""
    preds = predict(model, ds.features, batch_size)
    return mse(ds.targets, preds)


def predict(model: Model, x: np.ndarray, batch_size: int = 65536) -> np.ndarray:
    x = as_matrix(x, "features")
    out = [model.predict(x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


def fit(model: Model, train: Dataset, val: Dataset | None, cfg: TrainConfig,
        log=None) -> TrainReport:
    """Train ``model`` in place on already-scaled data; weights end at the best epoch.

    Each epoch shuffles the training rows with a seeded stream, runs Adam over
    minibatches (a trailing batch smaller than 2 rows is dropped), then scores
    the full validation set in inference mode.
    """
    if cfg.patience is not None and (val is None or len(val) == 0):
        raise ConfigError("early stopping needs a non-empty validation set")
    if len(train) < 2:
        raise ConfigError("need at least 2 training rows")
    report = TrainReport()
    t0 = time.perf_counter()
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    stopper = EarlyStopping(cfg.patience)
    shuffle_rng = Rng(cfg.seed).spawn("shuffle")
    x, y = train.features, train.targets
    n = len(train)
    bs = min(cfg.batch_size, n)

    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total, seen = 0.0, 0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            if idx.size < 2:
                continue
            xb, yb = x[idx], y[idx]
            out = model.forward(xb, training=True)
            loss = mse(yb, out)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            model.backward(mse_grad(yb, out))
            opt.step(model)
            total += loss * idx.size
            seen += idx.size
        report.train_loss.append(total / seen)
        if val is not None and len(val):
            vl = evaluate_loss(model, val)
            if not math.isfinite(vl):
                raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        else:
            vl = report.train_loss[-1]
        report.val_loss.append(vl)
        report.stopping_epoch = epoch
        if log is not None:
            log(epoch, report.train_loss[-1], vl)
        if stopper.update(epoch, vl, model.state):
            report.stopped_early = True
            break

    if stopper.best_state is not None:
        model.load_state(stopper.best_state)
    report.best_epoch = stopper.best_epoch
    report.wall_time_seconds = time.perf_counter() - t0
    return report
