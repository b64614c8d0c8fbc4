"""Network variants assembled from building blocks, and their parameter counts.

Every network is ``input layer -> B building blocks -> linear output layer``,
where a building block is three (batchnorm, dense, ReLU) layers and
``depth = 3 * B + 1`` (the input layer is not counted).  The variants differ
only in how a block's output is joined to its input:

``densenet``
    block k runs at width ``d * 2**(k-1)``; its output is concatenated with its
    input, doubling the width fed to the next block.  The output layer sees
    ``d * 2**B`` features: the raw inputs plus every block's output.
``plain_ann``
    same per-layer output widths, no shortcut; each block consumes the
    previous block's output directly.
``residual``
    fixed width ``w``; the input layer adapts ``d -> w`` and each block adds
    its input back onto its output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ShapeError, StateError
from .nn import Layer, concat_backward, concat_forward
from .tensor import Rng

KINDS = ("densenet", "plain_ann", "residual")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    depth: int
    width: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.depth < 4 or self.depth % 3 != 1:
            raise ConfigError(
                f"depth must be 3*B + 1 with B >= 1 (4, 7, 10, ...), got {self.depth}")
        if self.kind == "residual":
            if self.width is None or self.width < 1:
                raise ConfigError("residual models need width >= 1")
        elif self.width is not None:
            raise ConfigError(f"width only applies to residual models, not {self.kind}")

    @property
    def num_blocks(self) -> int:
        return (self.depth - 1) // 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(kind=d["kind"], input_dim=int(d["input_dim"]), depth=int(d["depth"]),
                   width=None if d.get("width") is None else int(d["width"]))


def block_widths(spec: ModelSpec) -> list[int]:
    d, B = spec.input_dim, spec.num_blocks
    if spec.kind == "residual":
        return [spec.width] * B
    return [d * 2 ** k for k in range(B)]


def layer_plan(spec: ModelSpec) -> list[tuple[str, int, int, bool]]:
    """(name, fan_in, fan_out, relu) for every layer, in execution order."""
    d = spec.input_dim
    widths = block_widths(spec)
    if spec.kind == "residual":
        plan = [("input", d, spec.width, True)]
    else:
        plan = [("input", d, d, True)]
    prev = plan[0][2]
    for k, w in enumerate(widths, start=1):
        first_in = w if spec.kind != "plain_ann" else prev
        plan.append((f"block{k}.layer1", first_in, w, True))
        plan.append((f"block{k}.layer2", w, w, True))
        plan.append((f"block{k}.layer3", w, w, True))
        prev = 2 * w if spec.kind == "densenet" else w
    plan.append(("output", prev, 1, False))
    return plan


def densenet_param_total(input_dim: int, num_blocks: int) -> int:
    """Closed form 4**B d**2 + 10 (2**(B+1) - 1) d + 1, batchnorm counted as 4 per feature."""
    d, B = input_dim, num_blocks
    return 4 ** B * d * d + 10 * (2 ** (B + 1) - 1) * d + 1


def count_params(spec: ModelSpec) -> tuple[int, int]:
    """(total, trainable).  Trainable excludes the batchnorm moving statistics."""
    if spec.kind == "densenet":
        d, B = spec.input_dim, spec.num_blocks
        total = densenet_param_total(d, B)
        # batchnorm widths: d (input) + 3 d (2**B - 1) (blocks) + d 2**B (output)
        bn_width = d * (4 * 2 ** B - 2)
        return total, total - 2 * bn_width
    total = trainable = 0
    for _, fan_in, fan_out, _ in layer_plan(spec):
        trainable += fan_in * fan_out + fan_out + 2 * fan_in
        total += fan_in * fan_out + fan_out + 4 * fan_in
    return total, trainable


class Model:
    def __init__(self, spec: ModelSpec, layers: dict[str, Layer]):
        self.spec = spec
        self.layers = layers
        B = spec.num_blocks
        self.input_layer = layers["input"]
        self.blocks = [[layers[f"block{k}.layer{j}"] for j in (1, 2, 3)] for k in range(1, B + 1)]
        self.output_layer = layers["output"]
        self._cached = False
        self._block_widths: list[tuple[int, int]] = []

    # -- parameter access ---------------------------------------------------

    def modules(self):
        for lname, layer in self.layers.items():
            for sname, mod in layer.sublayers():
                yield f"{lname}.{sname}", mod

    def tensors(self):
        """Every stored array (trainable and moving statistics), in a fixed order."""
        for prefix, mod in self.modules():
            for key, arr in mod.params.items():
                yield f"{prefix}.{key}", arr
            for key, arr in mod.buffers.items():
                yield f"{prefix}.{key}", arr

    def trainable(self):
        """(name, module, key) for every trainable tensor."""
        for prefix, mod in self.modules():
            for key in mod.params:
                yield f"{prefix}.{key}", mod, key

    def state(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.tensors()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for prefix, mod in self.modules():
            for store in (mod.params, mod.buffers):
                for key in store:
                    name = f"{prefix}.{key}"
                    if state[name].shape != store[key].shape:
                        raise ShapeError(f"{name}: expected {store[key].shape}, got {state[name].shape}")
                    store[key] = np.array(state[name], dtype=np.float64)

    def num_params(self) -> tuple[int, int]:
        total = sum(a.size for _, a in self.tensors())
        trainable = sum(mod.params[k].size for _, mod, k in self.trainable())
        return total, trainable

    # -- passes ---------------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"model expects (*, {self.spec.input_dim}) input, got {x.shape}")
        kind = self.spec.kind
        h = self.input_layer.forward(x, training)
        widths = []
        for block in self.blocks:
            z = h
            for layer in block:
                z = layer.forward(z, training)
            widths.append((z.shape[1], h.shape[1]))
            if kind == "densenet":
                h = concat_forward([z, h])
            elif kind == "residual":
                h = z + h
            else:
                h = z
        self._block_widths = widths
        self._cached = training
        return self.output_layer.forward(h, training)

    def backward(self, dy: np.ndarray) -> None:
        if not self._cached:
            raise StateError("model backward needs a prior training-mode forward")
        kind = self.spec.kind
        g = self.output_layer.backward(dy)
        for block, (wz, wh) in zip(reversed(self.blocks), reversed(self._block_widths)):
            if kind == "densenet":
                gz, gh = concat_backward(g, [wz, wh])
            elif kind == "residual":
                gz, gh = g, g
            else:
                gz, gh = g, None
            for layer in reversed(block):
                gz = layer.backward(gz)
            g = gz if gh is None else gz + gh
        self.input_layer.backward(g)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x, training=False)[:, 0]


def build(spec: ModelSpec, rng: Rng | None) -> Model:
    """Instantiate ``spec``.  ``rng=None`` leaves every dense weight at zero."""
    layers = {name: Layer(fan_in, fan_out, rng, activation=act)
              for name, fan_in, fan_out, act in layer_plan(spec)}
    return Model(spec, layers)
