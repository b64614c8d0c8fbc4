"""Versioned JSON checkpoints.

Layout (all floats are decimal strings with 17 significant digits, keys are
sorted, one-space indent, trailing newline)::

    {
      "checksum": "sha256:<hex of the canonical document without this key>",
      "columns": {"features": [...], "target": "..."},
      "extra": {...},                      # free-form run metadata
      "format": "densereg-checkpoint",
      "format_version": 1,
      "model": <network | tree | linear>,
      "scaler": {"features": {"mins": [...], "maxs": [...]}, "target": {...} | null} | null,
      "train_config": {...} | null
    }

    network: {"family": "network", "spec": {kind, input_dim, depth, width},
              "tensors": [{"name": ..., "shape": [...], "values": [...]}, ...]}
    tree:    {"family": "tree", "max_depth": int | null, "root": nested node}
    linear:  {"family": "linear", "coef": [...], "intercept": ..., "penalty": ...,
              "alpha": ..., "l1_ratio": ...}

Tensor order and names are those of ``Model.tensors()``; moving statistics are
stored alongside trainable tensors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import LinearModel, RegressionTree, TreeNode
from .errors import ChecksumError, CheckpointError, CheckpointShapeError, FormatVersionError
from .model import Model, ModelSpec, build
from .train import DataScaler, ScalerParams, TrainConfig

FORMAT = "densereg-checkpoint"
FORMAT_VERSION = 1


def _f(v: float) -> str:
    return format(float(v), ".17g")


def _fs(a) -> list[str]:
    return [_f(v) for v in np.asarray(a, dtype=np.float64).ravel()]


def _parse(vals) -> np.ndarray:
    return np.array([float(v) for v in vals], dtype=np.float64)


def canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=True) + "\n"


def checksum(doc: dict) -> str:
    body = {k: v for k, v in doc.items() if k != "checksum"}
    return "sha256:" + hashlib.sha256(canonical(body).encode("ascii")).hexdigest()


@dataclass
class Checkpoint:
    model: object
    scaler: DataScaler | None = None
    train_config: TrainConfig | None = None
    feature_names: list[str] = field(default_factory=list)
    target_name: str = "y"
    extra: dict = field(default_factory=dict)

    def predict(self, features) -> np.ndarray:
        """Raw features in, predictions in original target units out."""
        from .train import predict as net_predict

        x = np.asarray(features, dtype=np.float64)
        if self.scaler is not None:
            x = self.scaler.features.transform(x)
        if isinstance(self.model, Model):
            y = net_predict(self.model, x)
        else:
            y = self.model.predict(x)
        return self.scaler.inverse_target(y) if self.scaler is not None else y


def _scaler_doc(s: ScalerParams) -> dict:
    return {"mins": _fs(s.mins), "maxs": _fs(s.maxs)}


def _model_doc(model) -> dict:
    if isinstance(model, Model):
        return {"family": "network", "spec": model.spec.to_dict(),
                "tensors": [{"name": n, "shape": list(a.shape), "values": _fs(a)}
                            for n, a in model.tensors()]}
    if isinstance(model, RegressionTree):
        def node(t: TreeNode, depth: int):
            d = {"value": _f(t.value), "n": t.n}
            if not t.is_leaf and (model.max_depth is None or depth < model.max_depth):
                d.update(feature=t.feature, threshold=_f(t.threshold),
                         left=node(t.left, depth + 1), right=node(t.right, depth + 1))
            return d
        return {"family": "tree", "max_depth": model.max_depth, "root": node(model.root, 0)}
    if isinstance(model, LinearModel):
        return {"family": "linear", "coef": _fs(model.coef), "intercept": _f(model.intercept),
                "penalty": model.penalty, "alpha": _f(model.alpha), "l1_ratio": _f(model.l1_ratio)}
    raise CheckpointError(f"cannot serialize model of type {type(model).__name__}")


def to_document(ckpt: Checkpoint) -> dict:
    scaler = None
    if ckpt.scaler is not None:
        t = ckpt.scaler.target
        scaler = {"features": _scaler_doc(ckpt.scaler.features.params),
                  "target": None if t is None else _scaler_doc(t.params)}
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "model": _model_doc(ckpt.model),
        "scaler": scaler,
        "train_config": None if ckpt.train_config is None else ckpt.train_config.to_dict(),
        "columns": {"features": list(ckpt.feature_names), "target": ckpt.target_name},
        "extra": ckpt.extra,
    }
    doc["checksum"] = checksum(doc)
    return doc


def save(path, model, scaler: DataScaler | None = None, cfg: TrainConfig | None = None,
         feature_names=None, target_name: str = "y", extra: dict | None = None) -> None:
    ckpt = model if isinstance(model, Checkpoint) else Checkpoint(
        model, scaler, cfg, list(feature_names or []), target_name, dict(extra or {}))
    Path(path).write_text(canonical(to_document(ckpt)), encoding="ascii")


def _tree_from_doc(d: dict) -> TreeNode:
    if "feature" not in d:
        return TreeNode(float(d["value"]), int(d["n"]))
    return TreeNode(float(d["value"]), int(d["n"]), int(d["feature"]), float(d["threshold"]),
                    _tree_from_doc(d["left"]), _tree_from_doc(d["right"]))


def _network_from_doc(m: dict) -> Model:
    spec = ModelSpec.from_dict(m["spec"])
    model = build(spec, None)
    expected = [(n, a.shape) for n, a in model.tensors()]
    records = m["tensors"]
    if len(records) != len(expected):
        raise CheckpointShapeError(
            f"spec {spec} needs {len(expected)} tensors, checkpoint has {len(records)}")
    state = {}
    for rec, (name, shape) in zip(records, expected):
        got = tuple(rec["shape"])
        if rec["name"] != name or got != shape:
            raise CheckpointShapeError(
                f"tensor mismatch: expected {name}{shape}, found {rec['name']}{got}")
        vals = _parse(rec["values"])
        if vals.size != int(np.prod(shape)):
            raise CheckpointShapeError(f"{name}: shape {shape} but {vals.size} values")
        state[name] = vals.reshape(shape)
    model.load_state(state)
    return model


def from_document(doc: dict) -> Checkpoint:
    # checksum first, so that a flipped byte anywhere (version digits included) reads as corruption
    version = doc.get("format_version")
    if doc.get("checksum") != checksum(doc):
        hint = "" if version == FORMAT_VERSION else f" (declared format_version {version!r})"
        raise ChecksumError(f"checkpoint checksum mismatch: file is corrupted or was edited{hint}")
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"not a {FORMAT} file")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"checkpoint format_version {version!r} is not supported (this build reads {FORMAT_VERSION})")
    m = doc["model"]
    family = m.get("family")
    if family == "network":
        model = _network_from_doc(m)
    elif family == "tree":
        model = RegressionTree(_tree_from_doc(m["root"]), m.get("max_depth"))
    elif family == "linear":
        model = LinearModel(_parse(m["coef"]), float(m["intercept"]), m["penalty"],
                            float(m["alpha"]), float(m["l1_ratio"]))
    else:
        raise CheckpointError(f"unknown model family {family!r}")
    scaler = None
    if doc.get("scaler") is not None:
        s = doc["scaler"]
        scaler = DataScaler.from_dict({
            "features": {"mins": _parse(s["features"]["mins"]), "maxs": _parse(s["features"]["maxs"])},
            "target": None if s["target"] is None else
            {"mins": _parse(s["target"]["mins"]), "maxs": _parse(s["target"]["maxs"])},
        })
    cfg = None if doc.get("train_config") is None else TrainConfig.from_dict(doc["train_config"])
    cols = doc.get("columns") or {}
    return Checkpoint(model, scaler, cfg, list(cols.get("features", [])),
                      cols.get("target", "y"), dict(doc.get("extra") or {}))


def load(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChecksumError(f"checkpoint is not readable JSON (corrupted?): {e}") from e
    if not isinstance(doc, dict):
        raise ChecksumError("checkpoint root is not an object")
    if canonical(doc).encode("ascii") != raw:
        # whitespace or escaping edits survive json parsing but not this
        raise ChecksumError("checkpoint bytes are not in canonical form: file is corrupted or was edited")
    return from_document(doc)
