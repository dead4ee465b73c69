"""Gradient-boosted decision trees for binary classification, from scratch.

Second-order (Newton) boosting on the logistic objective with exact greedy
splits, L1 soft-thresholded leaf weights, L2 shrinkage, a hessian-sum minimum
per child, and per-tree row subsampling without replacement. Training is
deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    CatalogMismatch,
    CorruptFile,
    EmptyMatrix,
    SchemaVersionMismatch,
    SingleClass,
)
from .features import FeatureSpec

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GbdtParams:
    learning_rate: float = 0.1
    n_estimators: int = 100
    max_depth: int = 3
    min_child_weight: float = 3.0
    reg_alpha: float = 0.3
    reg_lambda: float = 1.0
    subsample: float = 0.9
    objective: str = "logistic_binary"
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")
        if self.min_child_weight < 0 or self.reg_alpha < 0 or self.reg_lambda < 0:
            raise ValueError("regularization terms must be nonnegative")
        if self.objective != "logistic_binary":
            raise ValueError(f"unsupported objective {self.objective!r}")


@dataclass
class TreeNode:
    """Either a split (feature/threshold with children) or a leaf (weight)."""

    feature_id: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    default_direction: str = "left"
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def logistic_grad_hess(logit: float, label: int):
    """Gradient and hessian of the log-loss at one logit: g = p - y, h = p(1-p)."""
    p = 1.0 / (1.0 + math.exp(-logit))
    return p - label, p * (1.0 - p)


def _soft_threshold(g: float, alpha: float) -> float:
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


def leaf_weight(G: float, H: float, params: GbdtParams) -> float:
    """Optimal leaf weight of the penalized second-order objective:
    minimizes G*w + (H + lambda)*w^2/2 + alpha*|w|."""
    return -_soft_threshold(G, params.reg_alpha) / (H + params.reg_lambda)


def _score(G, H, params):
    t = np.where(G > params.reg_alpha, G - params.reg_alpha,
                 np.where(G < -params.reg_alpha, G + params.reg_alpha, 0.0))
    return t * t / (H + params.reg_lambda)


def best_split(X, g, h, params: GbdtParams, row_idx=None):
    """Exact greedy search for the best split over all features.

    Gain is half the score improvement of the penalized objective. Candidate
    thresholds are midpoints between consecutive distinct sorted values. Both
    children must satisfy the hessian-sum minimum. Ties in gain resolve to the
    lower feature id, then the lower threshold. Returns
    ``(feature_id, threshold, gain)`` or None.
    """
    if row_idx is None:
        row_idx = np.arange(len(g))
    if len(row_idx) == 0:
        raise EmptyMatrix("no rows to split")
    gs = g[row_idx]
    hs = h[row_idx]
    G, H = gs.sum(), hs.sum()
    parent = float(_score(G, H, params))

    best = None  # (gain, feature_id, threshold)
    for f in range(X.shape[1]):
        vals = X[row_idx, f]
        order = np.argsort(vals, kind="mergesort")
        v = vals[order]
        GL = np.cumsum(gs[order])[:-1]
        HL = np.cumsum(hs[order])[:-1]
        boundary = v[:-1] < v[1:]
        valid = boundary & (HL >= params.min_child_weight) & (H - HL >= params.min_child_weight)
        if not valid.any():
            continue
        gain = 0.5 * (_score(GL, HL, params) + _score(G - GL, H - HL, params) - parent)
        gain[~valid] = -np.inf
        k = int(np.argmax(gain))  # first max: lowest threshold wins ties
        if gain[k] > 0 and (best is None or gain[k] > best[0]):
            best = (float(gain[k]), f, float((v[k] + v[k + 1]) / 2.0))
    if best is None:
        return None
    return best[1], best[2], best[0]


def _build_tree(X, g, h, row_idx, depth, params: GbdtParams) -> TreeNode:
    gs = float(g[row_idx].sum())
    hs = float(h[row_idx].sum())
    if depth >= params.max_depth:
        return TreeNode(weight=params.learning_rate * leaf_weight(gs, hs, params))
    split = best_split(X, g, h, params, row_idx)
    if split is None:
        return TreeNode(weight=params.learning_rate * leaf_weight(gs, hs, params))
    f, thr, _ = split
    go_left = X[row_idx, f] < thr
    return TreeNode(
        feature_id=f,
        threshold=thr,
        left=_build_tree(X, g, h, row_idx[go_left], depth + 1, params),
        right=_build_tree(X, g, h, row_idx[~go_left], depth + 1, params),
    )


def _predict_tree_batch(root: TreeNode, X) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if len(idx) == 0:
            continue
        if node.is_leaf:
            out[idx] = node.weight
            continue
        go_left = X[idx, node.feature_id] < node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


@dataclass
class GbdtModel:
    trees: list
    base_logit: float
    params: GbdtParams
    feature_catalog: list                     # ordered FeatureSpec list
    training_meta: dict = field(default_factory=dict)

    def predict_logit_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or (self.feature_catalog and X.shape[1] != len(self.feature_catalog)):
            raise CatalogMismatch(
                f"expected {len(self.feature_catalog)} features, got {X.shape}"
            )
        z = np.full(len(X), self.base_logit)
        for t in self.trees:
            z += _predict_tree_batch(t, X)
        return z

    def predict_proba_batch(self, X) -> np.ndarray:
        return sigmoid(self.predict_logit_batch(X))

    def predict_proba(self, x) -> float:
        return float(self.predict_proba_batch(np.asarray(x, dtype=float)[None, :])[0])


def train(
    X, y, params: GbdtParams, feature_catalog=None, training_meta=None, record_loss=False
) -> GbdtModel:
    """Fit the boosted ensemble.

    The base score is the log-odds of the training prior. Each round draws a
    seeded subsample of ceil(subsample*n) rows without replacement, computes
    gradients at the current logits, and fits one tree greedily; leaf weights
    are scaled by the learning rate at build time.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyMatrix("X must be a nonempty 2-D matrix")
    if len(X) < 2 or len(np.unique(y)) < 2:
        raise SingleClass("training requires >= 2 rows with both classes present")
    if feature_catalog is None:
        feature_catalog = []
    if feature_catalog and len(feature_catalog) != X.shape[1]:
        raise CatalogMismatch("catalog length must match feature count")

    n = len(X)
    p_bar = float(y.mean())
    base_logit = math.log(p_bar / (1.0 - p_bar))
    logits = np.full(n, base_logit)
    rng = np.random.default_rng(params.seed)
    m = int(math.ceil(params.subsample * n))

    trees = []
    loss_history = [log_loss(logits, y)] if record_loss else None
    for _ in range(params.n_estimators):
        rows = np.sort(rng.permutation(n)[:m])
        p = sigmoid(logits[rows])
        g = np.zeros(n)
        h = np.zeros(n)
        g[rows] = p - y[rows]
        h[rows] = p * (1.0 - p)
        tree = _build_tree(X, g, h, rows, 0, params)
        trees.append(tree)
        logits += _predict_tree_batch(tree, X)
        if record_loss:
            loss_history.append(log_loss(logits, y))

    meta = dict(training_meta or {})
    meta.setdefault("n_rows", n)
    if record_loss:
        meta["loss_history"] = loss_history
    return GbdtModel(trees, base_logit, params, list(feature_catalog), meta)


def log_loss(model_logits, y) -> float:
    p = sigmoid(model_logits)
    eps = 1e-15
    p = np.clip(p, eps, 1 - eps)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# --- serialization ------------------------------------------------------------


def _node_to_list(root: TreeNode) -> list:
    nodes = []

    def rec(node):
        i = len(nodes)
        nodes.append(None)
        if node.is_leaf:
            nodes[i] = {"leaf": node.weight}
        else:
            d = {
                "feature": node.feature_id,
                "threshold": node.threshold,
                "default": node.default_direction,
            }
            nodes[i] = d
            d["left"] = rec(node.left)
            d["right"] = rec(node.right)
        return i

    rec(root)
    return nodes


def _node_from_list(nodes: list, i: int = 0) -> TreeNode:
    d = nodes[i]
    if "leaf" in d:
        return TreeNode(weight=float(d["leaf"]))
    return TreeNode(
        feature_id=int(d["feature"]),
        threshold=float(d["threshold"]),
        default_direction=d.get("default", "left"),
        left=_node_from_list(nodes, d["left"]),
        right=_node_from_list(nodes, d["right"]),
    )


def save(model: GbdtModel, path):
    doc = {
        "version": MODEL_SCHEMA_VERSION,
        "params": asdict(model.params),
        "base_logit": model.base_logit,
        "catalog": [s.spec_id for s in model.feature_catalog],
        "training_meta": model.training_meta,
        "trees": [{"nodes": _node_to_list(t)} for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load(path) -> GbdtModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc["version"]
    except (json.JSONDecodeError, KeyError, UnicodeDecodeError) as e:
        raise CorruptFile(f"{path}: {e}")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: schema version {version}")
    try:
        params = GbdtParams(**doc["params"])
        trees = [_node_from_list(t["nodes"]) for t in doc["trees"]]
        catalog = [FeatureSpec.from_id(s) for s in doc["catalog"]]
        return GbdtModel(
            trees=trees,
            base_logit=float(doc["base_logit"]),
            params=params,
            feature_catalog=catalog,
            training_meta=doc.get("training_meta", {}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}")
