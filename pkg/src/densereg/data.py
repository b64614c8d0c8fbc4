"""Simulated piecewise-polynomial data, train/val/test splits and CSV I/O.

CSV format: UTF-8, comma separated, one header row of column names, then one
row per sample of decimal floats.  No quoting.  Blank, NaN and Inf cells are
rejected.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError
from .tensor import Rng, as_matrix, as_vector

SIM_DIM = 7
SIM_LO, SIM_HI = 0.0, 4.0
PLATEAUS = (400.0, 800.0, 1200.0)
DEFAULT_FRACTIONS = (0.675, 0.075, 0.25)

HUMIDITY_FEATURES = ("temperature", "specific_humidity")
HUMIDITY_TARGET = "relative_humidity"


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    provenance: str = "synthetic"
    feature_names: list[str] = field(default_factory=list)
    target_name: str = "y"

    def __post_init__(self):
        self.features = as_matrix(self.features, "features")
        self.targets = as_vector(self.targets, "targets")
        if self.features.shape[0] != self.targets.shape[0]:
            raise DataError(f"{self.features.shape[0]} feature rows but {self.targets.shape[0]} targets")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length does not match feature columns")

    def __len__(self):
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.targets[idx], self.provenance,
                       list(self.feature_names), self.target_name)


def poly_sum(x: np.ndarray) -> np.ndarray:
    """sum_i x_i**i over the last axis; the i = 0 term is always 1 (0**0 := 1)."""
    x = np.asarray(x, dtype=np.float64)
    return (x ** np.arange(x.shape[-1])).sum(axis=-1)


def plateau(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    a, b, c = PLATEAUS
    return np.where(s < a, s, np.where(s < b, a, np.where(s < c, b, c)))


def target_eq2(x, strict: bool = True):
    """Piecewise target: the polynomial sum below 400, then 400 / 800 / 1200 plateaus.

    Accepts one 7-vector or an (n, 7) matrix.  Inputs outside [0, 4] raise
    :class:`DomainError` unless ``strict=False``, in which case they are clamped.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != SIM_DIM:
        raise DomainError(f"expected {SIM_DIM} inputs, got shape {x.shape}")
    if np.any(x < SIM_LO) or np.any(x > SIM_HI) or not np.all(np.isfinite(x)):
        if strict:
            raise DomainError(f"inputs must lie in [{SIM_LO}, {SIM_HI}]")
        x = np.clip(np.nan_to_num(x, nan=SIM_LO), SIM_LO, SIM_HI)
    y = plateau(poly_sum(x))
    return float(y) if y.ndim == 0 else y


def generate(n: int, rng: Rng) -> Dataset:
    if n < 1:
        raise DomainError(f"need at least one sample, got n={n}")
    x = rng.uniform((n, SIM_DIM), SIM_LO, SIM_HI)
    return Dataset(x, target_eq2(x), "synthetic", [f"x{i}" for i in range(SIM_DIM)], "y")


@dataclass(frozen=True)
class SplitSpec:
    train: float = DEFAULT_FRACTIONS[0]
    val: float = DEFAULT_FRACTIONS[1]
    test: float = DEFAULT_FRACTIONS[2]
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise DomainError(f"split fractions must lie in [0, 1], got {fr}")
        if abs(sum(fr) - 1.0) > 1e-12:
            raise DomainError(f"split fractions must sum to 1, got {sum(fr)!r}")


def split_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    n_val = math.floor(n * spec.val + 1e-9)
    n_test = math.floor(n * spec.test + 1e-9)
    return n - n_val - n_test, n_val, n_test


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded permutation, then contiguous train / val / test cuts.

    Val and test get floor(n * fraction) rows; train takes the remainder.
    """
    n = len(ds)
    n_train, n_val, _ = split_sizes(n, spec)
    perm = Rng(spec.seed).permutation(n)
    return (ds.subset(perm[:n_train]),
            ds.subset(perm[n_train:n_train + n_val]),
            ds.subset(perm[n_train + n_val:]))


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(",".join(list(ds.feature_names) + [ds.target_name]) + "\n")
        for row, y in zip(ds.features, ds.targets):
            f.write(",".join(repr(float(v)) for v in row) + "," + repr(float(y)) + "\n")


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of a CSV file.  Errors carry 1-based line numbers."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {name!r}: cannot parse {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    return header, np.array(rows, dtype=np.float64)


def load_csv(path, feature_cols: list[str] | None = None, target_col: str | None = None) -> Dataset:
    """Load a dataset.  Defaults: last column is the target, the rest are features."""
    header, body = read_table(path)
    if target_col is None:
        target_col = header[-1]
    if feature_cols is None:
        feature_cols = [h for h in header if h != target_col]
    for name in list(feature_cols) + [target_col]:
        if name not in header:
            raise DataError(f"{path}: missing column {name!r} (have {header})")
    cols = [header.index(c) for c in feature_cols]
    return Dataset(body[:, cols], body[:, header.index(target_col)], "csv",
                   list(feature_cols), target_col)


def saturation_vapour_pressure(t_kelvin: np.ndarray) -> np.ndarray:
    """Magnus approximation over water, in hPa."""
    tc = t_kelvin - 273.15
    return 6.112 * np.exp(17.67 * tc / (tc + 243.5))


def humidity_like(n: int, rng: Rng, pressure_hpa: float = 1000.0, noise: float = 2.0) -> Dataset:
    """Synthetic stand-in for reanalysis humidity data.

    Features are temperature (K) and specific humidity (kg/kg) on a fixed
    pressure level; the target is relative humidity (%) with Gaussian-ish
    noise of standard deviation ``noise``.
    """
    t = rng.uniform(n, 260.0, 305.0)
    rh_true = rng.uniform(n, 15.0, 98.0)
    e = rh_true / 100.0 * saturation_vapour_pressure(t)
    q = 0.622 * e / (pressure_hpa - 0.378 * e)
    # sum of 12 uniforms minus 6 is a standard-normal approximation
    eps = rng.uniform((n, 12), 0.0, 1.0).sum(axis=1) - 6.0
    rh = np.clip(rh_true + noise * eps, 1.0, 100.0)
    return Dataset(np.column_stack([t, q]), rh, "synthetic", list(HUMIDITY_FEATURES), HUMIDITY_TARGET)


def humidity_fixture_path() -> Path:
    return Path(str(resources.files("densereg").joinpath("fixtures/humidity_like.csv")))
