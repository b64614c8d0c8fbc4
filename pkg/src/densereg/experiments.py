"""Shared experiment pipeline behind the CLI: split, scale, train, score."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from . import baselines as bl
from .data import Dataset, SplitSpec, split
from .errors import ConfigError
from .model import Model, ModelSpec, build, count_params
from .tensor import Rng, derive_seed
from .train import DataScaler, TrainConfig, TrainReport, fit, mse, predict

log = logging.getLogger(__name__)


@dataclass
class Prepared:
    raw_train: Dataset
    raw_val: Dataset
    raw_test: Dataset
    scaler: DataScaler
    train: Dataset
    val: Dataset
    test: Dataset


def prepare(ds: Dataset, split_spec: SplitSpec, scale_target: bool = True) -> Prepared:
    """Split, then fit the min-max scaler on the training partition only."""
    tr, va, te = split(ds, split_spec)
    scaler = DataScaler.fit(tr, scale_target)
    return Prepared(tr, va, te, scaler, scaler.transform(tr), scaler.transform(va), scaler.transform(te))


@dataclass
class NetworkRun:
    model: Model
    report: TrainReport
    train_loss: float
    val_loss: float
    test_loss: float


def _epoch_logger(tag):
    def _log(epoch, tl, vl):
        log.info("%s epoch %d train %.6e val %.6e", tag, epoch, tl, vl)
    return _log


def train_network(spec: ModelSpec, prep: Prepared, cfg: TrainConfig) -> NetworkRun:
    model = build(spec, Rng(derive_seed(cfg.seed, f"init/{spec.kind}/{spec.depth}")))
    val = prep.val if len(prep.val) else None
    report = fit(model, prep.train, val, cfg, log=_epoch_logger(f"{spec.kind}-{spec.depth}"))
    tl = mse(prep.train.targets, predict(model, prep.train.features))
    vl = mse(prep.val.targets, predict(model, prep.val.features)) if len(prep.val) else float("nan")
    te = mse(prep.test.targets, predict(model, prep.test.features)) if len(prep.test) else float("nan")
    return NetworkRun(model, report, tl, vl, te)


SWEEP_COLUMNS = ["depth", "params", "trainable_params", "stopping_epoch", "best_epoch",
                 "train_loss", "val_loss", "test_loss", "wall_time_seconds"]


def run_sweep(depths, prep: Prepared, cfg: TrainConfig, kind: str = "densenet",
              width: int | None = None) -> list[dict]:
    """One row per depth (sorted), with scaled-space losses of the best-epoch weights."""
    rows = []
    d = prep.train.dim
    for depth in sorted(set(depths)):
        spec = ModelSpec(kind, d, depth, width)
        total, trainable = count_params(spec)
        t0 = time.perf_counter()
        run = train_network(spec, prep, cfg)
        rows.append({
            "depth": depth, "params": total, "trainable_params": trainable,
            "stopping_epoch": run.report.stopping_epoch, "best_epoch": run.report.best_epoch,
            "train_loss": run.train_loss, "val_loss": run.val_loss, "test_loss": run.test_loss,
            "wall_time_seconds": time.perf_counter() - t0,
        })
    return rows


BENCH_COLUMNS = ["technique", "hyperparameters", "stopping_epoch", "train_time_seconds",
                 "train_loss", "val_loss", "test_loss"]
NOT_REPRODUCED = {"support_vector_regression": "not implemented; out of scope"}


def _score(model, prep: Prepared) -> tuple[float, float, float]:
    def s(ds):
        return mse(ds.targets, model.predict(ds.features)) if len(ds) else float("nan")
    return s(prep.train), s(prep.val), s(prep.test)


def _fmt_params(p: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in p.items())


def fit_linear_family(prep: Prepared, which=("linear", "ridge", "lasso", "elastic"),
                      alphas=None, ratios=None) -> list[dict]:
    alphas = bl.RIDGE_ALPHAS if alphas is None else alphas
    ratios = bl.ELASTIC_RATIOS if ratios is None else ratios
    rows = []
    for name in which:
        t0 = time.perf_counter()
        if name == "linear":
            model, params = bl.ols_fit(prep.train), {}
        elif name == "ridge":
            g = bl.grid_search(lambda ds, alpha: bl.ridge_fit(ds, alpha),
                               bl.param_grid(alpha=alphas), prep.train, prep.val)
            model, params = g.best_model, g.best_params
        elif name == "lasso":
            g = bl.grid_search(lambda ds, alpha: bl.lasso_elastic_fit(ds, alpha, 1.0),
                               bl.param_grid(alpha=alphas), prep.train, prep.val)
            model, params = g.best_model, g.best_params
        elif name == "elastic":
            g = bl.grid_search(lambda ds, alpha, l1_ratio: bl.lasso_elastic_fit(ds, alpha, l1_ratio),
                               bl.param_grid(alpha=alphas, l1_ratio=ratios), prep.train, prep.val)
            model, params = g.best_model, g.best_params
        else:
            raise ValueError(f"unknown linear technique {name!r}")
        elapsed = time.perf_counter() - t0
        tl, vl, te = _score(model, prep)
        rows.append({"technique": name, "hyperparameters": _fmt_params(params), "stopping_epoch": "NA",
                     "train_time_seconds": elapsed, "train_loss": tl, "val_loss": vl, "test_loss": te,
                     "model": model})
    return rows


def fit_tree(prep: Prepared, depths=None) -> dict:
    """Grid over max_depth by truncating one fully grown greedy tree."""
    depths = bl.TREE_DEPTHS if depths is None else depths
    t0 = time.perf_counter()
    full = bl.RegressionTree(bl.cart_fit(prep.train, max(depths)))
    g = bl.grid_search(lambda ds, max_depth: full.truncate(max_depth),
                       bl.param_grid(max_depth=depths), prep.train, prep.val)
    elapsed = time.perf_counter() - t0
    tl, vl, te = _score(g.best_model, prep)
    return {"technique": "decision_tree", "hyperparameters": _fmt_params(g.best_params),
            "stopping_epoch": "NA", "train_time_seconds": elapsed,
            "train_loss": tl, "val_loss": vl, "test_loss": te, "model": g.best_model}


def network_row(name: str, spec: ModelSpec, prep: Prepared, cfg: TrainConfig) -> dict:
    run = train_network(spec, prep, cfg)
    hp = {"depth": spec.depth} if spec.width is None else {"width": spec.width, "depth": spec.depth}
    return {"technique": name, "hyperparameters": _fmt_params(hp),
            "stopping_epoch": run.report.stopping_epoch,
            "train_time_seconds": run.report.wall_time_seconds,
            "train_loss": run.train_loss, "val_loss": run.val_loss, "test_loss": run.test_loss,
            "model": run.model}


def run_bench(prep: Prepared, cfg: TrainConfig, densenet_depth: int = 13, ann_depth: int = 13,
              residual_depth: int = 28, residual_width: int = 16,
              techniques=None) -> list[dict]:
    all_names = ["linear", "ridge", "lasso", "elastic", "decision_tree",
                 "plain_ann", "residual", "densenet"]
    if techniques is not None:
        asked = {"decision_tree" if t == "cart" else t for t in techniques}
        unknown = sorted(asked - set(all_names))
        if unknown or not asked:
            raise ConfigError(f"unknown techniques {unknown}; choose from {all_names} (or cart)")
        techniques = asked
    names = all_names if techniques is None else [t for t in all_names if t in techniques]
    d = prep.train.dim
    rows = []
    linear = [n for n in names if n in ("linear", "ridge", "lasso", "elastic")]
    if linear:
        rows.extend(fit_linear_family(prep, linear))
    if "decision_tree" in names:
        rows.append(fit_tree(prep))
    if "plain_ann" in names:
        rows.append(network_row("plain_ann", ModelSpec("plain_ann", d, ann_depth), prep, cfg))
    if "residual" in names:
        rows.append(network_row("residual", ModelSpec("residual", d, residual_depth, residual_width),
                                prep, cfg))
    if "densenet" in names:
        rows.append(network_row("densenet", ModelSpec("densenet", d, densenet_depth), prep, cfg))
    return rows
