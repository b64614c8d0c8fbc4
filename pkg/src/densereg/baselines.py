"""Classical regression baselines: least squares, ridge, lasso / elastic net, CART.

Elastic-net objective (features standardized to zero mean and unit
population variance inside the fit, intercept unpenalized)::

    1/(2n) ||y - b - Z beta||^2 + alpha * (rho ||beta||_1 + (1 - rho)/2 ||beta||^2)

so ``rho = 1`` is the lasso and ``alpha`` grids are comparable across sample
sizes.  Ridge uses the unnormalized ``||y - b - X beta||^2 + alpha ||beta||^2``
on the raw features.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DomainError, RankError
from .train import mse


class ConvergenceWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# linear family


@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float
    penalty: str = "none"
    alpha: float = 0.0
    l1_ratio: float = 0.0
    n_iter: int = 0
    converged: bool = True
    last_change: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise DomainError(f"l1_ratio must lie in [0, 1], got {self.l1_ratio}")

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.coef + self.intercept


def _centered(ds: Dataset):
    x, y = ds.features, ds.targets
    xm, ym = x.mean(axis=0), y.mean()
    return x - xm, y - ym, xm, ym


def ols_fit(ds: Dataset) -> LinearModel:
    """Least squares via the normal equations and a Cholesky solve."""
    n, d = ds.features.shape
    if n <= d:
        raise RankError(f"need more rows than features (n={n}, d={d})")
    xc, yc, xm, ym = _centered(ds)
    if np.linalg.matrix_rank(xc) < d:
        raise RankError("design matrix is rank deficient")
    coef = _spd_solve(xc.T @ xc, xc.T @ yc)
    return LinearModel(coef, float(ym - xm @ coef))


def ridge_fit(ds: Dataset, alpha: float) -> LinearModel:
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0:
        m = ols_fit(ds)
        m.penalty = "ridge"
        return m
    xc, yc, xm, ym = _centered(ds)
    d = xc.shape[1]
    coef = _spd_solve(xc.T @ xc + alpha * np.eye(d), xc.T @ yc)
    return LinearModel(coef, float(ym - xm @ coef), "ridge", float(alpha))


def _spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise RankError(f"system is not positive definite: {e}") from e
    z = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, z)


def soft_threshold(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def elastic_objective(beta, gram, corr, yy, alpha, l1_ratio) -> float:
    """Objective value from the standardized Gram form (see module docstring)."""
    fit_term = 0.5 * (yy - 2.0 * corr @ beta + beta @ gram @ beta)
    pen = alpha * (l1_ratio * np.abs(beta).sum() + 0.5 * (1.0 - l1_ratio) * beta @ beta)
    return float(fit_term + pen)


def lasso_elastic_fit(ds: Dataset, alpha: float, l1_ratio: float = 1.0,
                      max_iter: int = 10000, tol: float = 1e-10,
                      trace: list | None = None) -> LinearModel:
    """Cyclic coordinate descent with soft-thresholding on the covariance form.

    Stops once the largest coefficient change in a full sweep drops below
    ``tol`` (standardized scale).  Hitting ``max_iter`` first emits a
    :class:`ConvergenceWarning` and marks the model as not converged.  If
    ``trace`` is a list, the objective after every sweep is appended to it.
    """
    if alpha < 0:
        raise DomainError(f"alpha must be >= 0, got {alpha}")
    if not 0.0 <= l1_ratio <= 1.0:
        raise DomainError(f"l1_ratio must lie in [0, 1], got {l1_ratio}")
    xc, yc, xm, ym = _centered(ds)
    n, d = xc.shape
    sd = np.sqrt((xc * xc).mean(axis=0))
    live = sd > 0
    z = xc / np.where(live, sd, 1.0)
    gram = z.T @ z / n
    corr = z.T @ yc / n
    yy = float(yc @ yc / n)
    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    beta = np.zeros(d)
    change = math.inf
    it = 0
    while it < max_iter:
        it += 1
        change = 0.0
        for j in range(d):
            if not live[j]:
                continue
            rj = corr[j] - gram[j] @ beta + gram[j, j] * beta[j]
            new = soft_threshold(rj, l1) / (gram[j, j] + l2)
            change = max(change, abs(new - beta[j]))
            beta[j] = new
        if trace is not None:
            trace.append(elastic_objective(beta, gram, corr, yy, alpha, l1_ratio))
        if change < tol:
            break
    converged = change < tol
    if not converged:
        warnings.warn(f"coordinate descent did not converge in {max_iter} sweeps "
                      f"(last max change {change:.3e})", ConvergenceWarning, stacklevel=2)
    coef = np.where(live, beta / np.where(live, sd, 1.0), 0.0)
    kind = "lasso" if l1_ratio == 1.0 else "elastic"
    return LinearModel(coef, float(ym - xm @ coef), kind, float(alpha), float(l1_ratio),
                       it, converged, float(change))


# ---------------------------------------------------------------------------
# CART


@dataclass
class TreeNode:
    """Leaf when ``feature`` is None.  Internal nodes keep their mean for truncation."""

    value: float
    n: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": self.value, "n": self.n}
        return {"value": self.value, "n": self.n, "feature": self.feature,
                "threshold": self.threshold, "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(float(d["value"]), int(d["n"]))
        return cls(float(d["value"]), int(d["n"]), int(d["feature"]), float(d["threshold"]),
                   cls.from_dict(d["left"]), cls.from_dict(d["right"]))


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (gain, feature, threshold) by SSE reduction, or None.

    Scores ``S_L**2/n_L + S_R**2/n_R`` for every midpoint between consecutive
    distinct sorted values.  Near-equal scores (relative 1e-12) count as
    ties and keep the lowest feature index, then the lowest threshold.
    """
    n, d = x.shape
    total = y.sum()
    base = total * total / n
    tie_tol = 1e-12 * max(float(y @ y), 1e-300)
    best = None
    counts = np.arange(1, n)
    for f in range(d):
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        csum = np.cumsum(ys)[:-1]
        ok = xs[1:] > xs[:-1]
        ok &= (counts >= min_leaf) & (n - counts >= min_leaf)
        if not ok.any():
            continue
        score = csum ** 2 / counts + (total - csum) ** 2 / (n - counts)
        score = np.where(ok, score, -np.inf)
        top = score.max()
        i = int(np.flatnonzero(score >= top - tie_tol)[0])
        gain = float(score[i] - base)
        if best is None or gain > best[0] + tie_tol:
            lo, hi = xs[i], xs[i + 1]
            thr = 0.5 * (lo + hi)
            if thr >= hi:
                thr = lo
            best = (gain, f, float(thr))
    if best is None or best[0] <= tie_tol:
        return None
    return best


def cart_fit(ds: Dataset, max_depth: int | None = None, min_samples_leaf: int = 1) -> TreeNode:
    """Greedy variance-reduction regression tree (``x <= threshold`` goes left)."""
    x, y = ds.features, ds.targets
    if len(y) == 0:
        raise DomainError("cannot fit a tree on an empty dataset")
    if min_samples_leaf < 1:
        raise DomainError("min_samples_leaf must be >= 1")
    limit = math.inf if max_depth is None else max_depth
    root = TreeNode(float(y.mean()), len(y))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yi = y[idx]
        if depth >= limit or len(idx) < 2 * min_samples_leaf or np.all(yi == yi[0]):
            continue
        found = _best_split(x[idx], yi, min_samples_leaf)
        if found is None:
            continue
        _, f, thr = found
        go_left = x[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        node.feature, node.threshold = f, thr
        node.left = TreeNode(float(y[li].mean()), len(li))
        node.right = TreeNode(float(y[ri].mean()), len(ri))
        stack.append((node.right, ri, depth + 1))
        stack.append((node.left, li, depth + 1))
    return root


class RegressionTree:
    """Array form of a :class:`TreeNode` for vectorized prediction."""

    def __init__(self, root: TreeNode, max_depth: int | None = None):
        self.root = root
        self.max_depth = max_depth
        feats, thrs, lefts, rights, vals = [], [], [], [], []

        def visit(node, depth):
            k = len(vals)
            leaf = node.is_leaf or (max_depth is not None and depth >= max_depth)
            feats.append(-1 if leaf else node.feature)
            thrs.append(0.0 if leaf else node.threshold)
            vals.append(node.value)
            lefts.append(-1)
            rights.append(-1)
            if not leaf:
                lefts[k] = visit(node.left, depth + 1)
                rights[k] = visit(node.right, depth + 1)
            return k

        visit(root, 0)
        self.feature = np.array(feats)
        self.threshold = np.array(thrs)
        self.left = np.array(lefts)
        self.right = np.array(rights)
        self.value = np.array(vals)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = x[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def truncate(self, max_depth: int) -> "RegressionTree":
        """Same greedy tree cut at ``max_depth``; equals refitting with that limit."""
        return RegressionTree(self.root, max_depth)


def cart_predict(root: TreeNode, x) -> np.ndarray:
    return RegressionTree(root).predict(x)


# ---------------------------------------------------------------------------
# grid search

RIDGE_ALPHAS = [10.0 ** k for k in range(-10, 11)]
LASSO_ALPHAS = RIDGE_ALPHAS
ELASTIC_RATIOS = [round(0.1 * k, 1) for k in range(11)]
TREE_DEPTHS = list(range(1, 15))


def param_grid(**axes) -> list[dict]:
    """Cartesian product in the given axis order; the last axis varies fastest."""
    names = list(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*axes.values())]


@dataclass
class GridResult:
    best_params: dict
    best_loss: float
    cells: list[dict] = field(default_factory=list)
    tie: bool = False
    best_model: object = None

    def write_csv(self, path) -> None:
        keys = list(self.cells[0]["params"]) if self.cells else []
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(keys + ["val_loss", "error"])
            for c in self.cells:
                vl = "" if c["val_loss"] is None else repr(c["val_loss"])
                w.writerow([c["params"][k] for k in keys] + [vl, c["error"] or ""])


def grid_search(fit_fn, grid: list[dict], train: Dataset, val: Dataset) -> GridResult:
    """Fit every cell, score validation MSE, keep the first minimum in grid order.

    A cell whose fit raises is recorded with its error; only an all-failed
    grid raises.
    """
    if not grid:
        raise DomainError("empty hyperparameter grid")
    cells = []
    best_i, best_loss, best_model = None, math.inf, None
    tie = False
    for i, params in enumerate(grid):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                model = fit_fn(train, **params)
            loss = mse(val.targets, model.predict(val.features))
            if not math.isfinite(loss):
                raise ArithmeticError("non-finite validation loss")
            cells.append({"params": dict(params), "val_loss": loss, "error": None})
        except Exception as e:  # noqa: BLE001 - any failing cell is recorded, not fatal
            cells.append({"params": dict(params), "val_loss": None, "error": f"{type(e).__name__}: {e}"})
            continue
        if loss < best_loss:
            best_i, best_loss, best_model = i, loss, model
            tie = False
        elif loss == best_loss:
            tie = True
    if best_i is None:
        raise RuntimeError(f"every grid cell failed; first error: {cells[0]['error']}")
    return GridResult(dict(grid[best_i]), best_loss, cells, tie, best_model)
