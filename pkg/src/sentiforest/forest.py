"""From-scratch CART trees and a bagged random forest classifier.

Split criterion is Gini impurity decrease over candidate thresholds at the
midpoints of consecutive distinct sorted feature values; ties prefer the
lower feature index, then the lower threshold. Tree i of a forest reads a
SplitMix64 stream seeded with derive(seed, i) and consumes, in order: n
bootstrap draws (row = draw % n), then one draw per feature sampled at each
node, nodes visited depth-first with the left (<= threshold) child first.
That makes training bit-identical for a given seed regardless of worker
count.

Probabilities are the mean over trees of the leaf positive-class
proportion; a hard prediction is 1 iff probability > 0.5, with an exact 0.5
going to the class with the larger training prior (prior ties pick 0).
Feature importance is mean decrease in impurity: per tree the sum over its
internal nodes of (node_size / n) * gain attributed to the split feature,
averaged over trees and normalized to sum 1.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from numba import njit

from .errors import ValidationError
from .features import FeatureFrame
from .rng import GAMMA, M64, derive

_U_GAMMA = np.uint64(GAMMA)
_U_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_U_MUL2 = np.uint64(0x94D049BB133111EB)
_UNLIMITED_DEPTH = 2**31


@dataclass(frozen=True)
class HyperParams:
    """Forest hyperparameters; max_features is 'sqrt', 'log2' or a fraction."""

    n_trees: int = 300
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: Union[str, float] = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1 or None, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ValidationError(
                f"min_samples_split must be >= 2, got {self.min_samples_split}"
            )
        if self.min_samples_leaf < 1:
            raise ValidationError(
                f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}"
            )
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "log2"):
                raise ValidationError(f"unknown max_features rule {self.max_features!r}")
        elif not 0.0 < float(self.max_features) <= 1.0:
            raise ValidationError(
                f"max_features fraction must be in (0, 1], got {self.max_features}"
            )

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            m = int(math.sqrt(n_features))
        elif self.max_features == "log2":
            m = int(math.log2(n_features))
        else:
            m = int(float(self.max_features) * n_features)
        return max(1, min(m, n_features))


@dataclass
class Tree:
    """Array-encoded binary tree: feature[i] < 0 marks a leaf."""

    feature: np.ndarray  # int64, -1 at leaves
    threshold: np.ndarray  # float64, route value <= threshold to the left
    left: np.ndarray  # int64 child ids
    right: np.ndarray
    count0: np.ndarray  # int64 leaf/internal class counts
    count1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max()) if self.n_nodes else 0


@dataclass
class ForestModel:
    trees: list[Tree]
    feature_names: list[str]
    params: HyperParams
    importances: np.ndarray  # sums to 1 when any split exists, else all zero
    train_priors: tuple[float, float]  # class frequencies (p0, p1)


@njit(nogil=True, cache=True)
def _grow_tree(X, y, seed, max_depth, min_split, min_leaf, m_features, use_bootstrap):
    n, p = X.shape
    state = np.uint64(seed)

    rows = np.empty(n, np.int64)
    if use_bootstrap:
        for i in range(n):
            state = state + _U_GAMMA
            z = (state ^ (state >> np.uint64(30))) * _U_MUL1
            z = (z ^ (z >> np.uint64(27))) * _U_MUL2
            u = z ^ (z >> np.uint64(31))
            rows[i] = np.int64(u % np.uint64(n))
    else:
        for i in range(n):
            rows[i] = i

    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    c0 = np.zeros(cap, np.int64)
    c1 = np.zeros(cap, np.int64)
    imp_gain = np.zeros(p, np.float64)

    stack_node = np.empty(cap, np.int64)
    stack_start = np.empty(cap, np.int64)
    stack_end = np.empty(cap, np.int64)
    stack_depth = np.empty(cap, np.int64)
    top = 0
    stack_node[0], stack_start[0], stack_end[0], stack_depth[0] = 0, 0, n, 0
    top = 1
    n_nodes = 1

    perm = np.empty(p, np.int64)
    tmp = np.empty(n, np.int64)

    while top > 0:
        top -= 1
        node = stack_node[top]
        s = stack_start[top]
        e = stack_end[top]
        depth = stack_depth[top]
        n_node = e - s
        n1 = 0
        for k in range(s, e):
            n1 += y[rows[k]]
        n0 = n_node - n1
        c0[node] = n0
        c1[node] = n1

        if n0 == 0 or n1 == 0 or depth >= max_depth or n_node < min_split:
            continue

        # sample m distinct feature indices (partial Fisher-Yates, then sort
        # ascending so tie-breaks favor the lower feature index)
        for i in range(p):
            perm[i] = i
        for i in range(m_features):
            state = state + _U_GAMMA
            z = (state ^ (state >> np.uint64(30))) * _U_MUL1
            z = (z ^ (z >> np.uint64(27))) * _U_MUL2
            u = z ^ (z >> np.uint64(31))
            j = i + np.int64(u % np.uint64(p - i))
            perm[i], perm[j] = perm[j], perm[i]
        for i in range(1, m_features):
            key = perm[i]
            k = i - 1
            while k >= 0 and perm[k] > key:
                perm[k + 1] = perm[k]
                k -= 1
            perm[k + 1] = key

        nf = float(n_node)
        parent_gini = 1.0 - (n0 / nf) ** 2 - (n1 / nf) ** 2
        best_gain = 0.0
        best_f = -1
        best_t = 0.0

        vals = np.empty(n_node, np.float64)
        ys = np.empty(n_node, np.int64)
        for fi in range(m_features):
            f = perm[fi]
            for k in range(n_node):
                r = rows[s + k]
                vals[k] = X[r, f]
                ys[k] = y[r]
            order = np.argsort(vals)
            left1 = 0
            for i in range(n_node - 1):
                left1 += ys[order[i]]
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b:
                    continue
                nl = i + 1
                nr = n_node - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                l1 = left1
                l0 = nl - l1
                r1 = n1 - l1
                r0 = nr - r1
                gl = 1.0 - (l0 / float(nl)) ** 2 - (l1 / float(nl)) ** 2
                gr = 1.0 - (r0 / float(nr)) ** 2 - (r1 / float(nr)) ** 2
                gain = parent_gini - (nl * gl + nr * gr) / nf
                if gain > best_gain:
                    mid = 0.5 * (a + b)
                    if mid >= b:  # midpoint rounded onto b: fall back to a
                        mid = a
                    best_gain = gain
                    best_f = f
                    best_t = mid

        if best_f < 0:
            continue

        # stable partition of rows[s:e] around the chosen threshold
        a_count = 0
        b_count = 0
        for k in range(n_node):
            r = rows[s + k]
            if X[r, best_f] <= best_t:
                rows[s + a_count] = r
                a_count += 1
            else:
                tmp[b_count] = r
                b_count += 1
        for k in range(b_count):
            rows[s + a_count + k] = tmp[k]
        mid_idx = s + a_count

        feat[node] = best_f
        thr[node] = best_t
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id
        imp_gain[best_f] += (n_node / float(n)) * best_gain

        # push right first so the left child is processed first
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = (
            right_id,
            mid_idx,
            e,
            depth + 1,
        )
        top += 1
        stack_node[top], stack_start[top], stack_end[top], stack_depth[top] = (
            left_id,
            s,
            mid_idx,
            depth + 1,
        )
        top += 1

    return (
        feat[:n_nodes],
        thr[:n_nodes],
        left[:n_nodes],
        right[:n_nodes],
        c0[:n_nodes],
        c1[:n_nodes],
        imp_gain,
    )


@njit(nogil=True, cache=True)
def _tree_proba(feature, threshold, left, right, c0, c1, X):
    out = np.empty(X.shape[0], np.float64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = c1[node] / float(c0[node] + c1[node])
    return out


def train_tree(
    rows: np.ndarray,
    labels: np.ndarray,
    params: HyperParams,
    stream_seed: int,
) -> Tree:
    """Grow one CART tree on the given rows (no bootstrap) from a stream seed."""
    X = np.ascontiguousarray(rows, dtype=np.float64)
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValidationError("training rows must be a non-empty 2-D array")
    if y.shape != (X.shape[0],) or not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0/1 and align with rows")
    return _run_grow(X, y, params, stream_seed, use_bootstrap=False)[0]


def _run_grow(X, y, params: HyperParams, stream_seed: int, use_bootstrap: bool):
    depth_cap = params.max_depth if params.max_depth is not None else _UNLIMITED_DEPTH
    out = _grow_tree(
        X,
        y,
        np.uint64(stream_seed & M64),
        depth_cap,
        params.min_samples_split,
        params.min_samples_leaf,
        params.features_per_split(X.shape[1]),
        use_bootstrap,
    )
    feat, thr, left, right, c0, c1, imp = out
    tree = Tree(
        feature=feat.copy(),
        threshold=thr.copy(),
        left=left.copy(),
        right=right.copy(),
        count0=c0.copy(),
        count1=c1.copy(),
    )
    return tree, imp


def train_forest(
    frame: FeatureFrame,
    params: HyperParams,
    workers: int = 1,
    bootstrap: bool = True,
) -> ForestModel:
    """Train n_trees bagged trees; bit-identical for a given seed at any
    worker count. `bootstrap=False` is a test hook replacing each bootstrap
    sample with the identity."""
    if frame.labels is None or frame.n_rows == 0:
        raise ValidationError("training needs a non-empty labeled frame")
    X = np.ascontiguousarray(frame.matrix, dtype=np.float64)
    y = np.ascontiguousarray(frame.labels, dtype=np.int64)

    def build(i: int):
        return _run_grow(X, y, params, derive(params.seed, i), use_bootstrap=bootstrap)

    if workers <= 1:
        results = [build(i) for i in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build, range(params.n_trees)))

    trees = [tree for tree, _ in results]
    gain_sum = np.zeros(X.shape[1])
    for _, imp in results:
        gain_sum += imp
    mean_gain = gain_sum / params.n_trees
    total = mean_gain.sum()
    importances = mean_gain / total if total > 0 else np.zeros_like(mean_gain)

    n = y.size
    priors = (float((y == 0).sum()) / n, float((y == 1).sum()) / n)
    return ForestModel(
        trees=trees,
        feature_names=list(frame.names),
        params=params,
        importances=importances,
        train_priors=priors,
    )


def _check_width(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ValidationError(
            f"rows have width {X.shape[1] if X.ndim == 2 else '?'} but the model "
            f"expects {len(model.feature_names)} features"
        )
    return X


def predict_proba(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    """Mean over trees of the reached leaf's positive-class proportion."""
    X = _check_width(model, rows)
    acc = np.zeros(X.shape[0])
    for tree in model.trees:
        acc += _tree_proba(
            tree.feature, tree.threshold, tree.left, tree.right, tree.count0, tree.count1, X
        )
    return acc / len(model.trees)


def predict(model: ForestModel, rows: np.ndarray) -> np.ndarray:
    proba = predict_proba(model, rows)
    p0, p1 = model.train_priors
    at_half = 1 if p1 > p0 else 0
    return np.where(proba > 0.5, 1, np.where(proba == 0.5, at_half, 0)).astype(np.int64)


# ---------------------------------------------------------------------------
# JSON persistence


@contextmanager
def _deep_recursion(limit: int):
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def _tree_to_obj(tree: Tree) -> dict:
    # children always have larger ids than their parent, so a reverse pass
    # builds the nested form without recursion
    objs: list[Optional[dict]] = [None] * tree.n_nodes
    for i in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[i] < 0:
            objs[i] = {"c": [int(tree.count0[i]), int(tree.count1[i])]}
        else:
            objs[i] = {
                "f": int(tree.feature[i]),
                "t": float(tree.threshold[i]),
                "l": objs[tree.left[i]],
                "r": objs[tree.right[i]],
            }
    return objs[0]


def _tree_from_obj(obj: dict) -> Tree:
    feature, threshold, left, right, c0, c1 = [], [], [], [], [], []
    stack = [(obj, -1, "")]  # (node object, parent id, side)
    while stack:
        node, parent, side = stack.pop()
        idx = len(feature)
        if parent >= 0:
            (left if side == "l" else right)[parent] = idx
        if "c" in node:
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            c0.append(int(node["c"][0]))
            c1.append(int(node["c"][1]))
        else:
            feature.append(int(node["f"]))
            threshold.append(float(node["t"]))
            left.append(-1)
            right.append(-1)
            c0.append(0)
            c1.append(0)
            stack.append((node["r"], idx, "r"))
            stack.append((node["l"], idx, "l"))
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        count0=np.array(c0, dtype=np.int64),
        count1=np.array(c1, dtype=np.int64),
    )


def model_to_json(model: ForestModel, extra: Optional[dict] = None) -> str:
    """Serialize to a deterministic JSON document (sorted keys, repr floats)."""
    p = model.params
    doc = {
        "hyperparams": {
            "n_trees": p.n_trees,
            "max_depth": p.max_depth,
            "min_samples_split": p.min_samples_split,
            "min_samples_leaf": p.min_samples_leaf,
            "max_features": p.max_features,
        },
        "seed": p.seed,
        "feature_names": model.feature_names,
        "train_priors": list(model.train_priors),
        "importances": [float(x) for x in model.importances],
        "trees": [_tree_to_obj(t) for t in model.trees],
    }
    if extra:
        doc.update(extra)
    depth = max(t.max_depth() for t in model.trees)
    with _deep_recursion(10 * depth + 1000):
        return json.dumps(doc, sort_keys=True, indent=1)


def model_from_json(text: str) -> ForestModel:
    with _deep_recursion(100000):
        doc = json.loads(text)
    try:
        hp = doc["hyperparams"]
        mf = hp["max_features"]
        params = HyperParams(
            n_trees=int(hp["n_trees"]),
            max_depth=None if hp["max_depth"] is None else int(hp["max_depth"]),
            min_samples_split=int(hp["min_samples_split"]),
            min_samples_leaf=int(hp["min_samples_leaf"]),
            max_features=mf if isinstance(mf, str) else float(mf),
            seed=int(doc["seed"]),
        )
        trees = [_tree_from_obj(obj) for obj in doc["trees"]]
        model = ForestModel(
            trees=trees,
            feature_names=list(doc["feature_names"]),
            params=params,
            importances=np.array(doc["importances"], dtype=np.float64),
            train_priors=(float(doc["train_priors"][0]), float(doc["train_priors"][1])),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from None
    if len(model.trees) != params.n_trees:
        raise ValidationError(
            f"model declares {params.n_trees} trees but contains {len(model.trees)}"
        )
    return model
