"""The three regressors behind one contract: OLS, SGD linear, boosted trees.

All learners are deterministic given (data, config, seed): the tree search
breaks ties by lowest feature index then lowest threshold, and the SGD
shuffle comes from a seeded generator. Fitted models are immutable and
carry their feature order plus the scaler used at training time, so a
prediction vector can never be silently permuted or fed unscaled.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import PollutantKind
from .errors import (
    ConfigError,
    CorruptModel,
    DimensionMismatch,
    DivergenceError,
    VersionError,
)
from .features import Normalizer

__all__ = [
    "ModelKind",
    "SgdConfig",
    "GbtConfig",
    "TreeNode",
    "LinearParams",
    "GbtParams",
    "ForecastModel",
    "fit_ols",
    "fit_sgd",
    "fit_gbt",
    "train_model",
    "predict",
    "save_model",
    "load_model",
    "sgd_loss",
    "sgd_gradient",
    "tree_predict",
]

MODEL_FORMAT_VERSION = 1


class ModelKind:
    OLS = "ols"
    SGD = "sgd"
    GBT = "gbt"

    ALL = (OLS, SGD, GBT)


@dataclass(frozen=True)
class SgdConfig:
    """Per-sample squared-loss gradient descent with a decaying step.

    Step k uses eta0 / (1 + k * decay), counting k across all epochs.
    """

    eta0: float = 0.01
    decay: float = 1e-4
    epochs: int = 200
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.eta0 <= 0:
            raise ConfigError(f"eta0 must be > 0, got {self.eta0}")
        if self.decay < 0:
            raise ConfigError(f"decay must be >= 0, got {self.decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 200
    learning_rate: float = 0.05
    max_depth: int = 3
    min_samples_leaf: int = 5

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ConfigError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")


@dataclass(frozen=True)
class TreeNode:
    """Binary regression tree node: either a leaf value or an axis split."""

    value: float | None = None
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class LinearParams:
    weights: np.ndarray
    intercept: float


@dataclass(frozen=True)
class GbtParams:
    base: float
    learning_rate: float
    trees: tuple[TreeNode, ...]


@dataclass(frozen=True)
class ForecastModel:
    """A fitted per-pollutant regressor plus everything predict() needs."""

    kind: str
    params: LinearParams | GbtParams
    w: int = 0
    pollutant: PollutantKind | None = None
    feature_names: tuple[str, ...] = ()
    normalizer: Normalizer | None = None

    def predict(self, X: np.ndarray) -> np.ndarray | float:
        """Predictions for a matrix (n, d) -> (n,), or a single vector -> float."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise DimensionMismatch(
                f"input has {X.shape[1]} features, model expects {len(self.feature_names)}")
        if self.normalizer is not None:
            X = self.normalizer.apply(X)
        if isinstance(self.params, LinearParams):
            out = X @ self.params.weights + self.params.intercept
        else:
            out = np.full(X.shape[0], self.params.base, dtype=float)
            acc = np.zeros(X.shape[0], dtype=float)
            for tree in self.params.trees:
                acc += tree_predict(tree, X)
            out += self.params.learning_rate * acc
        return float(out[0]) if single else out


def predict(model: ForecastModel, X: np.ndarray) -> np.ndarray | float:
    return model.predict(X)


def _as_matrix(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"y shape {y.shape} does not match X shape {X.shape}")
    if X.shape[0] < 1:
        raise DimensionMismatch("need at least one sample")
    return X, y


def _default_names(d: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(d))


def fit_ols(X: np.ndarray, y: np.ndarray) -> ForecastModel:
    """Least squares with intercept; minimum-norm solution when rank-deficient."""
    X, y = _as_matrix(X, y)
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    solution, *_ = np.linalg.lstsq(A, y, rcond=None)
    params = LinearParams(weights=solution[:-1], intercept=float(solution[-1]))
    return ForecastModel(kind=ModelKind.OLS, params=params,
                         feature_names=_default_names(X.shape[1]))


def sgd_loss(weights: np.ndarray, intercept: float, x: np.ndarray, y: float,
             l2: float = 0.0) -> float:
    """Per-sample objective: squared error plus l2 penalty on the weights."""
    err = float(x @ weights) + intercept - y
    return err * err + l2 * float(weights @ weights)


def sgd_gradient(weights: np.ndarray, intercept: float, x: np.ndarray, y: float,
                 l2: float = 0.0) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`sgd_loss` w.r.t. (weights, intercept)."""
    err = float(x @ weights) + intercept - y
    return 2.0 * err * x + 2.0 * l2 * weights, 2.0 * err


def fit_sgd(X: np.ndarray, y: np.ndarray, cfg: SgdConfig | None = None) -> ForecastModel:
    """Per-sample gradient descent from zero weights; expects scaled features."""
    cfg = cfg or SgdConfig()
    X, y = _as_matrix(X, y)
    n, d = X.shape
    weights = np.zeros(d, dtype=float)
    intercept = 0.0
    rng = np.random.default_rng(cfg.seed)
    step = 0
    for _epoch in range(cfg.epochs):
        for i in rng.permutation(n):
            grad_w, grad_b = sgd_gradient(weights, intercept, X[i], y[i], cfg.l2)
            eta = cfg.eta0 / (1.0 + step * cfg.decay)
            weights -= eta * grad_w
            intercept -= eta * grad_b
            step += 1
        if not (np.all(np.isfinite(weights)) and np.isfinite(intercept)):
            raise DivergenceError(
                f"non-finite weights after epoch {_epoch + 1}; lower eta0 or scale features")
    params = LinearParams(weights=weights, intercept=intercept)
    return ForecastModel(kind=ModelKind.SGD, params=params,
                         feature_names=_default_names(d))


class _TreeGrower:
    """Grows one tree over residuals, reusing per-feature presort across trees.

    Candidate thresholds are the midpoints between consecutive distinct
    sorted values of each feature; every (feature, threshold) pair is scored
    by the summed child SSE in one vectorized batch per node. The batch is
    laid out feature-major with thresholds ascending, so the first argmin
    implements the tie-break: lowest feature index, then lowest threshold.
    """

    def __init__(self, X: np.ndarray, cfg: GbtConfig):
        self.X = X
        self.cfg = cfg
        # (d, n) presorted sample indices; stable so duplicate feature values
        # keep row order and summation stays deterministic.
        self.order = np.argsort(X, axis=0, kind="stable").T.copy()
        self._rows = np.arange(X.shape[1])[:, None]

    def grow(self, resid: np.ndarray) -> TreeNode:
        return self._grow(resid, np.ones(self.X.shape[0], dtype=bool), 0)

    def _grow(self, resid: np.ndarray, mask: np.ndarray, depth: int) -> TreeNode:
        values = resid[mask]
        if (depth >= self.cfg.max_depth or values.size < 2 * self.cfg.min_samples_leaf
                or np.all(values == values[0])):
            return TreeNode(value=float(np.mean(values)))
        split = self._best_split(resid, mask, values.size)
        if split is None:
            return TreeNode(value=float(np.mean(values)))
        feature, threshold = split
        below = self.X[:, feature] <= threshold
        return TreeNode(
            feature=feature, threshold=threshold,
            left=self._grow(resid, mask & below, depth + 1),
            right=self._grow(resid, mask & ~below, depth + 1),
        )

    def _best_split(self, resid: np.ndarray, mask: np.ndarray,
                    n: int) -> tuple[int, float] | None:
        min_leaf = self.cfg.min_samples_leaf
        # Restrict each feature's presorted order to the node; boolean
        # gathering keeps the sort, and every row keeps exactly n entries.
        idx_sorted = self.order[mask[self.order]].reshape(self.order.shape[0], n)
        xs = self.X[idx_sorted, self._rows]
        rs = resid[idx_sorted]
        c1 = np.cumsum(rs, axis=1)
        c2 = np.cumsum(rs * rs, axis=1)
        cuts = np.arange(1, n)
        valid = (xs[:, 1:] > xs[:, :-1]) & (cuts >= min_leaf) & (n - cuts >= min_leaf)
        s1_left, s2_left = c1[:, :-1], c2[:, :-1]
        sse_left = s2_left - s1_left * s1_left / cuts
        s1_right = c1[:, -1:] - s1_left
        s2_right = c2[:, -1:] - s2_left
        sse_right = s2_right - s1_right * s1_right / (n - cuts)
        total = np.where(valid, sse_left + sse_right, np.inf)
        flat = int(np.argmin(total))
        if not np.isfinite(total.flat[flat]):
            return None
        feature, cut = divmod(flat, n - 1)
        cut += 1
        threshold = float((xs[feature, cut - 1] + xs[feature, cut]) / 2.0)
        return feature, threshold


def tree_predict(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Evaluate one tree over a matrix."""
    out = np.empty(X.shape[0], dtype=float)

    def fill(nd: TreeNode, rows: np.ndarray) -> None:
        if nd.is_leaf:
            out[rows] = nd.value
            return
        mask = X[rows, nd.feature] <= nd.threshold
        fill(nd.left, rows[mask])
        fill(nd.right, rows[~mask])

    fill(node, np.arange(X.shape[0]))
    return out


def fit_gbt(X: np.ndarray, y: np.ndarray, cfg: GbtConfig | None = None) -> ForecastModel:
    """Stage-wise boosting: each tree fits the residuals of the model so far."""
    cfg = cfg or GbtConfig()
    X, y = _as_matrix(X, y)
    if X.shape[0] < 2 * cfg.min_samples_leaf:
        raise ConfigError(
            f"boosting needs >= {2 * cfg.min_samples_leaf} samples "
            f"(2 * min_samples_leaf), got {X.shape[0]}")
    base = float(np.mean(y))
    resid = y - base
    trees: list[TreeNode] = []
    grower = _TreeGrower(X, cfg)
    for _stage in range(cfg.n_trees):
        tree = grower.grow(resid)
        resid = resid - cfg.learning_rate * tree_predict(tree, X)
        trees.append(tree)
    params = GbtParams(base=base, learning_rate=cfg.learning_rate, trees=tuple(trees))
    return ForecastModel(kind=ModelKind.GBT, params=params,
                         feature_names=_default_names(X.shape[1]))


def train_model(
    kind: str,
    X: np.ndarray,
    y: np.ndarray,
    *,
    pollutant: PollutantKind | None = None,
    w: int = 0,
    feature_names: Sequence[str] | None = None,
    normalize: bool = True,
    sgd: SgdConfig | None = None,
    gbt: GbtConfig | None = None,
) -> ForecastModel:
    """Fit one model kind on raw features, scaling them first by default.

    The fitted scaler travels with the model, so predict() takes raw
    vectors in the same feature order.
    """
    if kind not in ModelKind.ALL:
        raise ConfigError(f"unknown model kind {kind!r} (valid: {', '.join(ModelKind.ALL)})")
    X, y = _as_matrix(X, y)
    names = tuple(feature_names) if feature_names is not None else _default_names(X.shape[1])
    if len(names) != X.shape[1]:
        raise DimensionMismatch(f"{X.shape[1]} columns but {len(names)} feature names")
    normalizer = Normalizer.fit(X, names) if normalize else None
    Xn = normalizer.apply(X) if normalizer is not None else X
    if kind == ModelKind.OLS:
        model = fit_ols(Xn, y)
    elif kind == ModelKind.SGD:
        model = fit_sgd(Xn, y, sgd)
    else:
        model = fit_gbt(Xn, y, gbt)
    return replace(model, pollutant=pollutant, w=w, feature_names=names,
                   normalizer=normalizer)


# --- serialization ---------------------------------------------------------


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _tree_to_dict(node.left), "right": _tree_to_dict(node.right)}


def _tree_from_dict(payload: Mapping) -> TreeNode:
    if "value" in payload:
        return TreeNode(value=float(payload["value"]))
    return TreeNode(feature=int(payload["feature"]), threshold=float(payload["threshold"]),
                    left=_tree_from_dict(payload["left"]),
                    right=_tree_from_dict(payload["right"]))


def _model_payload(model: ForecastModel) -> dict:
    if isinstance(model.params, LinearParams):
        params = {"weights": [float(v) for v in model.params.weights],
                  "intercept": float(model.params.intercept)}
    else:
        params = {"base": model.params.base,
                  "learning_rate": model.params.learning_rate,
                  "trees": [_tree_to_dict(t) for t in model.params.trees]}
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "pollutant": model.pollutant.value if model.pollutant is not None else None,
        "w": model.w,
        "feature_names": list(model.feature_names),
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "params": params,
    }


def _canonical(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save_model(model: ForecastModel, path: str | Path) -> None:
    """Write a checksummed JSON container; floats keep full repr precision."""
    payload = _model_payload(model)
    checksum = hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"payload": payload, "checksum": checksum}, fh)
        fh.write("\n")


def load_model(path: str | Path) -> ForecastModel:
    """Read a model file; refuses corrupt containers and foreign versions."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            container = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"{path}: truncated or not valid JSON ({exc})") from None
    if not isinstance(container, dict) or "payload" not in container or "checksum" not in container:
        raise CorruptModel(f"{path}: missing payload or checksum")
    payload = container["payload"]
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CorruptModel(f"{path}: payload carries no format version")
    version = payload["format_version"]
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version} not supported (this build reads "
            f"{MODEL_FORMAT_VERSION})")
    digest = hashlib.sha256(_canonical(payload).encode("utf-8")).hexdigest()
    if digest != container["checksum"]:
        raise CorruptModel(f"{path}: checksum mismatch")
    try:
        kind = payload["kind"]
        if kind not in ModelKind.ALL:
            raise CorruptModel(f"{path}: unknown model kind {kind!r}")
        if kind == ModelKind.GBT:
            raw = payload["params"]
            params: LinearParams | GbtParams = GbtParams(
                base=float(raw["base"]), learning_rate=float(raw["learning_rate"]),
                trees=tuple(_tree_from_dict(t) for t in raw["trees"]))
        else:
            raw = payload["params"]
            params = LinearParams(weights=np.array(raw["weights"], dtype=float),
                                  intercept=float(raw["intercept"]))
        pollutant = (PollutantKind(payload["pollutant"])
                     if payload["pollutant"] is not None else None)
        normalizer = (Normalizer.from_dict(payload["normalizer"])
                      if payload["normalizer"] is not None else None)
        return ForecastModel(
            kind=kind, params=params, w=int(payload["w"]), pollutant=pollutant,
            feature_names=tuple(payload["feature_names"]), normalizer=normalizer)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModel(f"{path}: malformed payload ({exc})") from None
