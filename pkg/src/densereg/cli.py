"""Command line entry point: generate / train / sweep / bench / eval / predict.

Settings resolve as built-in defaults, then ``--paper-scale`` defaults, then
the ``--config`` JSON file, then explicit flags (flags win).  The resolved
settings are echoed into every artifact: JSON outputs carry a ``run_config``
key and each CSV gets a ``<name>.run.json`` sidecar.

Exit codes: 0 ok, 2 usage, 3 invalid configuration, 4 data error,
5 numerical failure, 6 checkpoint error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from . import checkpoint as ckpt
from .baselines import RegressionTree, cart_fit, lasso_elastic_fit, ols_fit, ridge_fit
from .data import Dataset, SplitSpec, generate, humidity_like, load_csv, read_table, write_csv
from .errors import (CheckpointError, ConfigError, DataError, DomainError, NumericalError, RankError,
                     UndefinedMetricError)
from .experiments import (BENCH_COLUMNS, NOT_REPRODUCED, SWEEP_COLUMNS, prepare, run_bench, run_sweep,
                          train_network)
from .model import KINDS, ModelSpec
from .tensor import Rng, derive_seed
from .train import TrainConfig, metrics, mse

log = logging.getLogger("densereg")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_CHECKPOINT = 0, 2, 3, 4, 5, 6
SEED_ENV = "DENSEREG_SEED"

DESK_DEFAULTS = {
    "n": 100_000, "epochs": 200, "batch_size": 1000, "patience": 100,
    "learning_rate": 1e-4, "split": [0.675, 0.075, 0.25],
    "kind": "densenet", "depth": 13, "width": 16, "max_depth": 14,
    "alpha": 0.0, "l1_ratio": 1.0, "scale_target": True, "shuffle": True,
    "densenet_depth": 13, "ann_depth": 13, "residual_depth": 28, "residual_width": 16,
}
FULL_SCALE_DEFAULTS = {"n": 10_000_000, "epochs": 800, "batch_size": 5000, "patience": 100,
                  "densenet_depth": 19, "ann_depth": 19, "depth": 19}
BASELINE_KINDS = ("cart", "linear", "ridge", "lasso", "elastic")


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DESK_DEFAULTS)
    if getattr(args, "paper_scale", False):
        cfg.update(FULL_SCALE_DEFAULTS)
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    cfg.setdefault("seed", default_seed())
    for k, v in vars(args).items():
        if k in ("func", "config") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = args.command
    cfg["version"] = __version__
    # patience cannot exceed the epoch budget
    if cfg.get("patience") is not None and cfg.get("epochs") is not None:
        explicit = getattr(args, "patience", None) is not None
        if not explicit:
            cfg["patience"] = max(1, min(cfg["patience"], cfg["epochs"]))
    return {k: cfg[k] for k in sorted(cfg)}


def parse_split(text: str) -> list[float]:
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad split {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("split needs three comma-separated fractions")
    return parts


def parse_int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def write_sidecar(csv_path, run_config: dict) -> None:
    write_json(str(csv_path) + ".run.json", {"artifact": Path(csv_path).name, "run_config": run_config})


def write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
                       max_epochs=cfg["epochs"], patience=cfg["patience"], seed=cfg["seed"],
                       scale_target=cfg["scale_target"], shuffle=cfg["shuffle"])


def load_dataset(cfg: dict) -> Dataset:
    if cfg.get("data"):
        cols = cfg.get("features")
        return load_csv(cfg["data"], cols.split(",") if isinstance(cols, str) else cols, cfg.get("target"))
    return generate(cfg["n"], Rng(derive_seed(cfg["seed"], "data")))


def split_spec_from(cfg: dict) -> SplitSpec:
    tr, va, te = cfg["split"]
    return SplitSpec(tr, va, te, derive_seed(cfg["seed"], "split"))


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(cfg: dict) -> int:
    rng = Rng(cfg["seed"])
    if cfg.get("dataset", "eq2") == "humidity":
        ds = humidity_like(cfg["n"], rng)
    else:
        ds = generate(cfg["n"], rng)
    try:
        write_csv(ds, cfg["out"])
    except OSError as e:
        raise DataError(f"cannot write {cfg['out']}: {e}") from e
    write_sidecar(cfg["out"], cfg)
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    tcfg = train_config_from(cfg)
    ds = load_dataset(cfg)
    prep = prepare(ds, split_spec_from(cfg), tcfg.scale_target)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    summary = {"run_config": cfg, "kind": kind, "n_train": len(prep.train),
               "n_val": len(prep.val), "n_test": len(prep.test)}
    if kind in KINDS:
        spec = ModelSpec(kind, ds.dim, cfg["depth"], cfg["width"] if kind == "residual" else None)
        run = train_network(spec, prep, tcfg)
        model = run.model
        run.report.write_curve_csv(out / "loss_curve.csv")
        write_sidecar(out / "loss_curve.csv", cfg)
        summary.update(run.report.to_summary())
        summary.update(train_loss=run.train_loss, val_loss=run.val_loss, test_loss=run.test_loss)
    else:
        model = fit_baseline(kind, cfg, prep.train)
        summary.update(stopping_epoch=None,
                       train_loss=mse(prep.train.targets, model.predict(prep.train.features)),
                       val_loss=mse(prep.val.targets, model.predict(prep.val.features)) if len(prep.val) else None,
                       test_loss=mse(prep.test.targets, model.predict(prep.test.features)) if len(prep.test) else None)
    ckpt.save(out / "model.ckpt.json", model, prep.scaler, tcfg, ds.feature_names, ds.target_name,
              extra={"run_config": cfg})
    if len(prep.raw_test) >= 2:
        pred = ckpt.load(out / "model.ckpt.json").predict(prep.raw_test.features)
        try:
            summary["test_metrics"] = metrics(prep.raw_test.targets, pred).to_dict()
        except UndefinedMetricError as e:
            summary["test_metrics"] = {"error": str(e)}
    write_json(out / "summary.json", summary)
    return EXIT_OK


def fit_baseline(kind: str, cfg: dict, train: Dataset):
    if kind == "cart":
        depth = cfg["max_depth"]
        return RegressionTree(cart_fit(train, None if depth in (None, 0) else depth))
    if kind == "linear":
        return ols_fit(train)
    if kind == "ridge":
        return ridge_fit(train, cfg["alpha"])
    if kind in ("lasso", "elastic"):
        ratio = 1.0 if kind == "lasso" else cfg["l1_ratio"]
        return lasso_elastic_fit(train, cfg["alpha"], ratio)
    raise ConfigError(f"unknown kind {kind!r}")


def cmd_sweep(cfg: dict) -> int:
    depths = cfg.get("depths") or []
    if not depths:
        raise UsageError("sweep needs at least one depth (--depths 4,7,13)")
    tcfg = train_config_from(cfg)
    kind = cfg["kind"]
    width = cfg["width"] if kind == "residual" else None
    for dpt in depths:
        ModelSpec(kind, 1, dpt, width)
    prep = prepare(load_dataset(cfg), split_spec_from(cfg), tcfg.scale_target)
    rows = run_sweep(depths, prep, tcfg, kind, width)
    write_rows(cfg["out"], SWEEP_COLUMNS, rows)
    write_sidecar(cfg["out"], cfg)
    return EXIT_OK


def cmd_bench(cfg: dict) -> int:
    tcfg = train_config_from(cfg)
    prep = prepare(load_dataset(cfg), split_spec_from(cfg), tcfg.scale_target)
    techniques = cfg.get("techniques")
    if isinstance(techniques, str):
        techniques = [t.strip() for t in techniques.split(",") if t.strip()]
    rows = run_bench(prep, tcfg, cfg["densenet_depth"], cfg["ann_depth"], cfg["residual_depth"],
                     cfg["residual_width"], techniques)
    write_rows(cfg["out"], BENCH_COLUMNS, rows)
    write_json(str(cfg["out"]) + ".run.json", {"artifact": Path(cfg["out"]).name, "run_config": cfg,
                                               "not_reproduced": NOT_REPRODUCED})
    return EXIT_OK


def _load_eval_data(cfg: dict, ck: ckpt.Checkpoint) -> Dataset:
    feats = ck.feature_names or None
    return load_csv(cfg["data"], feats, ck.target_name if feats else None)


def cmd_eval(cfg: dict) -> int:
    ck = ckpt.load(cfg["checkpoint"])
    ds = _load_eval_data(cfg, ck)
    m = metrics(ds.targets, ck.predict(ds.features))
    doc = {"metrics": m.to_dict(), "run_config": cfg}
    if cfg.get("out"):
        write_json(cfg["out"], doc)
    json.dump(doc["metrics"], sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_predict(cfg: dict) -> int:
    ck = ckpt.load(cfg["checkpoint"])
    header, body = read_table(cfg["data"])
    names = ck.feature_names or header[:-1]
    missing = [c for c in names if c not in header]
    if missing:
        raise DataError(f"{cfg['data']}: missing column(s) {missing}")
    x = body[:, [header.index(c) for c in names]]
    pred = ck.predict(x)
    with open(cfg["out"], "w", newline="", encoding="utf-8") as f:
        f.write(",".join(names + ["prediction"]) + "\n")
        for row, p in zip(x, pred):
            f.write(",".join(repr(float(v)) for v in row) + "," + repr(float(p)) + "\n")
    write_sidecar(cfg["out"], cfg)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, data: bool = True, training: bool = True) -> None:
    p.add_argument("--config", help="JSON file of settings; explicit flags override it")
    p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("-v", "--verbose", action="store_true", default=None)
    if data:
        p.add_argument("--data", help="CSV dataset; omit to generate the simulated dataset")
        p.add_argument("--features", help="comma-separated feature columns (default: all but target)")
        p.add_argument("--target", help="target column (default: last column)")
        p.add_argument("--n", type=int, help="samples to generate when --data is absent")
        p.add_argument("--split", type=parse_split, help="train,val,test fractions")
    if training:
        p.add_argument("--paper-scale", action="store_true", default=None,
                       help="n=1e7, 800 epochs, batch 5000, patience 100")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--learning-rate", "--lr", type=float, dest="learning_rate")
        p.add_argument("--no-scale-target", action="store_false", dest="scale_target", default=None)
        p.add_argument("--no-shuffle", action="store_false", dest="shuffle", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="densereg", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a simulated dataset CSV")
    _common(p, data=False, training=False)
    p.add_argument("--n", type=int)
    p.add_argument("--dataset", choices=["eq2", "humidity"], default=None,
                   help="eq2: piecewise polynomial target (default); humidity: humidity-like fixture")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model and write checkpoint + reports")
    _common(p)
    p.add_argument("--kind", choices=list(KINDS) + list(BASELINE_KINDS))
    p.add_argument("--depth", type=int)
    p.add_argument("--width", type=int, help="residual width")
    p.add_argument("--max-depth", type=int, help="CART depth limit (0 = unlimited)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--l1-ratio", type=float)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="depth sweep, one CSV row per depth")
    _common(p)
    p.add_argument("--depths", type=parse_int_list, required=True)
    p.add_argument("--kind", choices=list(KINDS))
    p.add_argument("--width", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="baseline comparison table")
    _common(p)
    p.add_argument("--techniques", help="comma-separated subset (default: all)")
    p.add_argument("--densenet-depth", type=int)
    p.add_argument("--ann-depth", type=int)
    p.add_argument("--residual-depth", type=int)
    p.add_argument("--residual-width", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="metrics of a checkpoint on a CSV (original units)")
    _common(p, data=False, training=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="append a prediction column to a CSV")
    _common(p, data=False, training=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = resolve(args)
        return args.func(cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DomainError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, RankError, UndefinedMetricError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
