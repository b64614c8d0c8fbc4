"""Acceptance checks, one per top-level criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible with ``pytest -s`` or
``-v``; also written straight to the terminal) and then asserts.  Run the file
directly (``python tests/test_acceptance.py``) for just the summary lines.
The ordering check trains two depth-13 networks for 200 epochs on 100k rows
and takes roughly 10-15 minutes on one CPU core; deselect it with
``-m "not slow"``.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from test_baselines import greedy_oracle_sse, random_small_dataset  # noqa: E402
from test_model import TABLE1_D7, TABLE4_DEPTH19, model_gradient_errors  # noqa: E402

from densereg.baselines import cart_fit, cart_predict, ols_fit  # noqa: E402
from densereg.checkpoint import load, save  # noqa: E402
from densereg.cli import main as cli_main  # noqa: E402
from densereg.data import SplitSpec, generate, humidity_fixture_path  # noqa: E402
from densereg.experiments import prepare, train_network  # noqa: E402
from densereg.model import ModelSpec, build, count_params  # noqa: E402
from densereg.tensor import Rng  # noqa: E402
from densereg.train import MinMaxScaler, TrainConfig, evaluate_loss, fit, mse  # noqa: E402

OLS_ANCHOR = 371.52e-4


def report(name, ok, detail, capsys=None):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


# -- checks, each returns (ok, detail) ----------------------------------------------


def check_param_counts():
    bad = [(7, k, v) for k, v in TABLE1_D7.items() if count_params(ModelSpec("densenet", 7, k))[0] != v]
    bad += [(d, 19, v) for d, v in TABLE4_DEPTH19.items()
            if count_params(ModelSpec("densenet", d, 19))[0] != v]
    n = len(TABLE1_D7) + len(TABLE4_DEPTH19)
    return not bad, f"{n - len(bad)}/{n} totals exact" + (f", mismatches {bad}" if bad else "")


def check_gradients():
    specs = [ModelSpec("densenet", 3, 4), ModelSpec("plain_ann", 3, 4), ModelSpec("residual", 3, 4, 4)]
    worst = {s.kind: max(model_gradient_errors(s, batch=5).values()) for s in specs}
    ok = all(v < 1e-4 for v in worst.values())
    return ok, "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (limit 1e-4)"


def check_ols_anchor():
    prep = prepare(generate(100_000, Rng(1)), SplitSpec(seed=2))
    loss = mse(prep.test.targets, ols_fit(prep.train).predict(prep.test.features))
    rel = loss / OLS_ANCHOR - 1
    return abs(rel) <= 0.15, f"test MSE {loss:.6f} vs {OLS_ANCHOR:.6f} ({rel:+.2%}, limit +/-15%)"


def check_ordering():
    prep = prepare(generate(100_000, Rng(1)), SplitSpec(seed=2))
    cfg = TrainConfig(max_epochs=200, batch_size=1000, patience=100, seed=3)
    dn = train_network(ModelSpec("densenet", 7, 13), prep, cfg).test_loss
    ann = train_network(ModelSpec("plain_ann", 7, 13), prep, cfg).test_loss
    lin = mse(prep.test.targets, ols_fit(prep.train).predict(prep.test.features))
    ok = dn < ann < lin and dn < 5e-3
    return ok, f"densenet {dn:.3e} < plain_ann {ann:.3e} < linear {lin:.3e}; densenet < 5e-3"


def check_cart_oracle(n_datasets=300):
    worst = 0.0
    for seed in range(n_datasets):
        ds, depth = random_small_dataset(seed)
        got = mse(ds.targets, cart_predict(cart_fit(ds, depth), ds.features))
        worst = max(worst, abs(got - greedy_oracle_sse(ds.features, ds.targets, depth) / len(ds)))
    return worst <= 1e-12, f"{n_datasets} datasets, max |MSE - brute force| = {worst:.1e} (limit 1e-12)"


def check_property_suites(tmpdir):
    # scaler round trip on awkward ranges
    r = Rng(17)
    worst = 0.0
    for _ in range(50):
        lo = r.uniform(3, -1e3, 1e3)
        x = lo + r.uniform((200, 3), 0, 1) * r.uniform(3, 1e-3, 1e3)
        back = MinMaxScaler().fit(x).inverse(MinMaxScaler().fit(x).transform(x))
        worst = max(worst, float(np.max(np.abs(back - x) / np.maximum(np.abs(x), 1.0))))
    scaler_ok = worst < 1e-12

    # checkpoint round trip
    prep = prepare(generate(3000, Rng(4)), SplitSpec(seed=5))
    model = build(ModelSpec("densenet", 7, 7), Rng(6))
    fit(model, prep.train, prep.val, TrainConfig(learning_rate=1e-3, batch_size=100, max_epochs=3,
                                                 patience=3, seed=7))
    path = Path(tmpdir) / "ck.json"
    save(path, model, prep.scaler)
    x = Rng(8).uniform((100, 7), 0, 4)
    direct = prep.scaler.inverse_target(model.predict(prep.scaler.features.transform(x)))
    ckpt_ok = bool(np.array_equal(load(path).predict(x), direct))

    # early stopping: an oversized learning rate on a tiny set makes validation loss wander
    small = prepare(generate(400, Rng(9)), SplitSpec(0.5, 0.25, 0.25, seed=10))
    net = build(ModelSpec("densenet", 7, 7), Rng(11))
    patience = 5
    rep = fit(net, small.train, small.val, TrainConfig(learning_rate=5e-2, batch_size=20,
                                                       max_epochs=200, patience=patience, seed=12))
    gap = abs(evaluate_loss(net, small.val) - min(rep.val_loss))
    es_ok = rep.stopped_early and rep.stopping_epoch == rep.best_epoch + patience and gap <= 1e-12
    ok = scaler_ok and ckpt_ok and es_ok
    return ok, (f"scaler max rel err {worst:.1e}; checkpoint bit-identical={ckpt_ok}; "
                f"early stop at {rep.stopping_epoch} = best {rep.best_epoch} + {patience}, "
                f"restored val gap {gap:.1e}")


def check_humidity_pipeline(tmpdir):
    fx = str(humidity_fixture_path())
    out = Path(tmpdir) / "hum"
    cols = ["--features", "temperature,specific_humidity", "--target", "relative_humidity"]
    rc = cli_main(["train", "--data", fx, "--depth", "7", "--epochs", "300", "--batch-size", "100",
                   "--learning-rate", "3e-3", "--seed", "1", "--out-dir", str(out)] + cols)
    rc2 = cli_main(["eval", "--checkpoint", str(out / "model.ckpt.json"), "--data", fx,
                    "--out", str(out / "eval.json")])
    if rc or rc2:
        return False, f"exit codes train={rc} eval={rc2}"
    m = json.loads((out / "eval.json").read_text())["metrics"]
    ok = all(math.isfinite(m[k]) for k in ("pearson", "r2", "mean_relative_error"))
    return ok, (f"pearson {m['pearson']:.4f}, R2 {m['r2']:.4f}, "
                f"mean relative error {m['mean_relative_error']:.2%}")


# -- pytest entry points ---------------------------------------------------------------


def test_criterion_1_parameter_counts(capsys):
    assert report("1 parameter counts", *check_param_counts(), capsys)


def test_criterion_2_gradients(capsys):
    assert report("2 gradient check", *check_gradients(), capsys)


def test_criterion_3_ols_anchor(capsys):
    assert report("3 OLS loss anchor", *check_ols_anchor(), capsys)


@pytest.mark.slow
def test_criterion_4_ordering(capsys):
    assert report("4 desk-scale ordering", *check_ordering(), capsys)


def test_criterion_5_cart_oracle(capsys):
    assert report("5 CART oracle", *check_cart_oracle(), capsys)


def test_criterion_6_property_suites(capsys, tmp_path):
    assert report("6 scaler/checkpoint/early-stop", *check_property_suites(tmp_path), capsys)


def test_criterion_7_humidity_pipeline(capsys, tmp_path):
    assert report("7 humidity pipeline", *check_humidity_pipeline(tmp_path), capsys)


if __name__ == "__main__":
    import tempfile

    skip_slow = "--fast" in sys.argv
    with tempfile.TemporaryDirectory() as tmp:
        results = [
            report("1 parameter counts", *check_param_counts()),
            report("2 gradient check", *check_gradients()),
            report("3 OLS loss anchor", *check_ols_anchor()),
            report("4 desk-scale ordering", *check_ordering()) if not skip_slow else True,
            report("5 CART oracle", *check_cart_oracle()),
            report("6 scaler/checkpoint/early-stop", *check_property_suites(tmp)),
            report("7 humidity pipeline", *check_humidity_pipeline(tmp)),
        ]
    sys.exit(0 if all(results) else 1)
