"""Random-forest regression, written from scratch, for per-beat lag prediction.

B trees are grown on bootstrap samples; each node tries m randomly chosen
features and takes the axis-aligned split with the largest variance
(sum-of-squared-error) reduction, with ties resolved toward the lowest
feature index and lowest threshold.  All randomness (bootstrap rows and
per-node feature subsets) is drawn up front from seeded per-tree
substreams, so training is bit-reproducible regardless of execution order;
the tree growth itself is a compiled kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import InsufficientData, IoFailure
from .features import FEATURE_NAMES, BeatFeatures, TrainingSet

MODEL_FORMAT = "leadsynth-lagmodel"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    m_features: int | None = None    # None -> floor(sqrt(P))
    min_leaf: int = 5
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def resolved_m(self, p: int) -> int:
        m = self.m_features if self.m_features is not None else int(np.sqrt(p))
        if not (1 <= m <= p):
            raise ValueError(f"features per split must be in [1, {p}], got {m}")
        return m


@dataclass
class Tree:
    """Flat node arrays in depth-first preorder; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> float:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return float(self.value[node])

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return _predict_kernel(self.feature, self.threshold, self.left, self.right,
                               self.value, X)


@njit(cache=True)
def _predict_kernel(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


@njit(cache=True)
def _forest_predict_kernel(feature, threshold, left, right, value, offsets, X):
    """Tree-ensemble mean over concatenated node arrays per row of X."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = base
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[i] += value[node]
    return out / n_trees


@njit(cache=True)
def _grow_kernel(X, y, rows, feat_pool, min_leaf, max_depth):
    """Grow one tree on the bootstrap rows.

    feat_pool[node] lists the candidate features for that node id; node ids
    are assigned in depth-first preorder.  Returns the flat node arrays,
    the node count, and per-feature SSE-reduction totals.
    """
    n = rows.shape[0]
    p = X.shape[1]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes)
    importance = np.zeros(p)

    idx = rows.copy()
    buf = np.empty(n, dtype=idx.dtype)

    # explicit DFS stack of (lo, hi, depth); node ids assigned at pop
    stack_lo = np.empty(max_nodes, dtype=np.int64)
    stack_hi = np.empty(max_nodes, dtype=np.int64)
    stack_depth = np.empty(max_nodes, dtype=np.int64)
    # child slot to patch: parent node id (+1 shifted), sign marks left/right
    stack_parent = np.empty(max_nodes, dtype=np.int64)
    top = 0
    stack_lo[top], stack_hi[top], stack_depth[top], stack_parent[top] = 0, n, 0, 0
    top += 1
    n_nodes = 0

    while top > 0:
        top -= 1
        lo, hi = stack_lo[top], stack_hi[top]
        depth = stack_depth[top]
        parent = stack_parent[top]

        node = n_nodes
        n_nodes += 1
        if parent > 0:
            left[parent - 1] = node
        elif parent < 0:
            right[-parent - 1] = node

        size = hi - lo
        mean = 0.0
        for k in range(lo, hi):
            mean += y[idx[k]]
        mean /= size
        value[node] = mean

        if size < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        sse_total = 0.0
        for k in range(lo, hi):
            d = y[idx[k]] - mean
            sse_total += d * d
        if sse_total <= 0.0:
            continue

        best_red = 1e-12
        best_feat = -1
        best_thr = 0.0
        m = feat_pool.shape[1]
        xs = np.empty(size)
        ys = np.empty(size)
        for fi in range(m):
            f = feat_pool[node, fi]
            for k in range(size):
                xs[k] = X[idx[lo + k], f]
            order = np.argsort(xs, kind="mergesort")
            s1 = 0.0
            s2 = 0.0
            for k in range(size):
                ys[k] = y[idx[lo + order[k]]]
                s1 += ys[k]
                s2 += ys[k] * ys[k]
            l1 = 0.0
            l2 = 0.0
            prev = xs[order[0]]
            for t in range(size - 1):
                v = ys[t]
                l1 += v
                l2 += v * v
                cur = xs[order[t + 1]]
                if cur <= prev:
                    prev = cur
                    continue
                nl = t + 1
                nr = size - nl
                if nl >= min_leaf and nr >= min_leaf:
                    sse_l = l2 - l1 * l1 / nl
                    r1 = s1 - l1
                    r2 = s2 - l2
                    sse_r = r2 - r1 * r1 / nr
                    red = sse_total - sse_l - sse_r
                    if red > best_red:
                        best_red = red
                        best_feat = f
                        best_thr = 0.5 * (prev + cur)
                prev = cur

        if best_feat < 0:
            continue
        feature[node] = best_feat
        threshold[node] = best_thr
        importance[best_feat] += best_red

        # stable partition of idx[lo:hi] by the split
        nl = 0
        for k in range(lo, hi):
            if X[idx[k], best_feat] <= best_thr:
                buf[nl] = idx[k]
                nl += 1
        nr = nl
        for k in range(lo, hi):
            if X[idx[k], best_feat] > best_thr:
                buf[nr] = idx[k]
                nr += 1
        for k in range(size):
            idx[lo + k] = buf[k]

        # push right first so the left child pops (and numbers) first
        stack_lo[top], stack_hi[top] = lo + nl, hi
        stack_depth[top] = depth + 1
        stack_parent[top] = -(node + 1)
        top += 1
        stack_lo[top], stack_hi[top] = lo, lo + nl
        stack_depth[top] = depth + 1
        stack_parent[top] = node + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value[:n_nodes], importance)


@dataclass
class LagModel:
    trees: list
    config: ForestConfig
    feature_names: tuple
    lead_pair: tuple
    n_samples: int
    oob_rmse_ms: float | None
    response_range: tuple
    importances: np.ndarray
    _packed: tuple | None = None     # concatenated node arrays, built lazily

    def _pack(self) -> tuple:
        if self._packed is None:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            for k, t in enumerate(self.trees):
                offsets[k + 1] = offsets[k] + t.feature.size
            self._packed = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([t.left for t in self.trees]),
                np.concatenate([t.right for t in self.trees]),
                np.concatenate([t.value for t in self.trees]),
                offsets,
            )
        return self._packed

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        feature, threshold, left, right, value, offsets = self._pack()
        return _forest_predict_kernel(feature, threshold, left, right, value, offsets, X)

    def predict_array(self, x: np.ndarray) -> float:
        return float(self.predict_batch(np.asarray(x, dtype=np.float64))[0])


def train_forest(data: TrainingSet, config: ForestConfig = ForestConfig()) -> LagModel:
    """Grow the ensemble on a training set; deterministic given the seed."""
    if data.n < 10:
        raise InsufficientData(f"{data.n} samples; need at least 10")
    X, y = data.as_arrays()
    return _fit(X, y, config, lead_pair=data.lead_pair)


def _fit(X, y, config: ForestConfig, lead_pair=(None, None)) -> LagModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 10:
        raise InsufficientData(f"{n} samples; need at least 10")
    m = config.resolved_m(p)
    max_depth = -1 if config.max_depth is None else config.max_depth
    max_nodes = 2 * n + 1

    trees = []
    importance = np.zeros(p)
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n, dtype=int)

    for t in range(config.n_trees):
        rng = np.random.default_rng([config.seed, t])  # fixed per-tree substream
        rows = rng.integers(0, n, size=n).astype(np.int64)
        # per-node candidate features, drawn up front in node-id order
        keys = rng.random((max_nodes, p))
        pool = np.sort(np.argsort(keys, axis=1)[:, :m], axis=1).astype(np.int64)

        feat, thr, left, right, val, imp = _grow_kernel(
            X, y, rows, pool, config.min_leaf, max_depth)
        tree = Tree(feature=feat, threshold=thr, left=left, right=right, value=val)
        trees.append(tree)
        importance += imp

        mask = np.ones(n, dtype=bool)
        mask[rows] = False
        if np.any(mask):
            oob_sum[mask] += tree.predict_many(X[mask])
            oob_cnt[mask] += 1

    seen = oob_cnt > 0
    if np.any(seen):
        resid = oob_sum[seen] / oob_cnt[seen] - y[seen]
        oob_rmse = float(np.sqrt(np.mean(resid ** 2)))
    else:
        oob_rmse = None

    total = importance.sum()
    importances = importance / total if total > 0 else importance

    return LagModel(
        trees=trees, config=config, feature_names=FEATURE_NAMES,
        lead_pair=lead_pair, n_samples=n, oob_rmse_ms=oob_rmse,
        response_range=(float(y.min()), float(y.max())), importances=importances,
    )


def predict(model: LagModel, x) -> float:
    """Predicted lag in ms for one beat's features."""
    if isinstance(x, BeatFeatures):
        x = x.as_array()
    return model.predict_array(x)


def feature_importance(model: LagModel) -> dict:
    """Mean-decrease-in-variance share per feature (sums to 1, or all zero
    for a forest that never split)."""
    return dict(zip(model.feature_names, model.importances.tolist()))


# ---------------------------------------------------------------------------
# serialization: versioned JSON, bit-exact float round trip

def model_to_json(model: LagModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": {
            "n_trees": model.config.n_trees,
            "m_features": model.config.m_features,
            "min_leaf": model.config.min_leaf,
            "max_depth": model.config.max_depth,
            "seed": model.config.seed,
        },
        "feature_names": list(model.feature_names),
        "lead_pair": [str(l) if l is not None else None for l in model.lead_pair],
        "n_samples": model.n_samples,
        "oob_rmse_ms": model.oob_rmse_ms,
        "response_range": list(model.response_range),
        "importances": model.importances.tolist(),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> LagModel:
    from .leads import parse_lead

    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise IoFailure(f"not a lag-model file (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise IoFailure(f"unsupported model version {doc.get('version')!r}")
    cfg = ForestConfig(**doc["config"])
    trees = [
        Tree(
            feature=np.array(t["feature"], dtype=np.int32),
            threshold=np.array(t["threshold"], dtype=np.float64),
            left=np.array(t["left"], dtype=np.int32),
            right=np.array(t["right"], dtype=np.int32),
            value=np.array(t["value"], dtype=np.float64),
        )
        for t in doc["trees"]
    ]
    pair = tuple(parse_lead(l) if l else None for l in doc["lead_pair"])
    return LagModel(
        trees=trees, config=cfg, feature_names=tuple(doc["feature_names"]),
        lead_pair=pair, n_samples=doc["n_samples"], oob_rmse_ms=doc["oob_rmse_ms"],
        response_range=tuple(doc["response_range"]),
        importances=np.array(doc["importances"]),
    )


def save_model(model: LagModel, path) -> None:
    try:
        Path(path).write_text(model_to_json(model))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path) -> LagModel:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return model_from_json(text)
