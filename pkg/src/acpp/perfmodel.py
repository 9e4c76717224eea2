"""Random-forest model of penalized runtime over (configuration, instance)
pairs.

Rows are ``encode_config`` vectors (normalized parameters, categorical
choice codes, sentinel for inactive, instance features appended); targets
are log10 of the penalty-capped score, since runtime distributions are
heavy-tailed. Categorical columns split on value subsets when few distinct
values are present and on a by-target-mean ordering otherwise.

Training rows are put into a canonical order and per-tree seeds are derived
from the master seed, so fitting is invariant to record order and to any
training-thread schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import penalized_score
from .rundata import RunDataStore
from .space import Configuration, ParameterSpace, encode_config, encoding_kinds, parse_space, serialize_space

LOG_FLOOR = 1e-3  # scores are clamped here before the log transform

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 40
    min_leaf: int = 3
    bootstrap: bool = True
    max_exhaustive_categories: int = 8

    def __post_init__(self) -> None:
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be >= 1")

    def n_split_features(self, n_columns: int) -> int:
        return max(1, math.ceil(n_columns / 3))


@dataclass
class _Tree:
    # column index per node, -1 for leaves
    feature: np.ndarray
    threshold: np.ndarray          # numeric split threshold (unused for cat nodes)
    left_values: list[frozenset | None]
    children: np.ndarray           # (n_nodes, 2) indices
    value: np.ndarray              # leaf means (training-target means)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if rows.size == 0:
                continue
            col = self.feature[node]
            if col < 0:
                out[rows] = self.value[node]
                continue
            values = X[rows, col]
            if self.left_values[node] is not None:
                mask = np.isin(values, list(self.left_values[node]))
            else:
                mask = values <= self.threshold[node]
            left, right = self.children[node]
            stack.append((left, rows[mask]))
            stack.append((right, rows[~mask]))
        return out


@dataclass
class PerformanceModel:
    """An ensemble of regression trees over configuration/instance encodings."""

    trees: list[_Tree]
    column_kinds: tuple[str, ...]
    feature_dim: int
    y_min: float
    y_max: float
    params: ForestParams
    space: ParameterSpace = field(repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_transformed(self, X: np.ndarray) -> np.ndarray:
        """Mean over trees in log10 space; always within [y_min, y_max]."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.column_kinds):
            raise ValueError(
                f"expected {len(self.column_kinds)} columns, got {X.shape[1]}"
            )
        acc = np.zeros(len(X))
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def predict_cost(self, config: Configuration, features: Sequence[float]) -> float:
        """Predicted penalized seconds for one (configuration, instance) pair."""
        row = encode_config(self.space, config, features, feature_dim=self.feature_dim)
        return float(10.0 ** self.predict_transformed(row[None, :])[0])

    def predict_cost_rows(self, X: np.ndarray) -> np.ndarray:
        return 10.0 ** self.predict_transformed(X)

    def save(self, path: str | Path) -> None:
        """One structured-text file holding the whole ensemble."""
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "column_kinds": list(self.column_kinds),
            "feature_dim": self.feature_dim,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "params": {
                "n_trees": self.params.n_trees,
                "min_leaf": self.params.min_leaf,
                "bootstrap": self.params.bootstrap,
                "max_exhaustive_categories": self.params.max_exhaustive_categories,
            },
            "space": serialize_space(self.space),
            "trees": [
                {
                    "feature": tree.feature.tolist(),
                    "threshold": tree.threshold.tolist(),
                    "left_values": [
                        sorted(vals) if vals is not None else None
                        for vals in tree.left_values
                    ],
                    "children": tree.children.tolist(),
                    "value": tree.value.tolist(),
                }
                for tree in self.trees
            ],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> PerformanceModel:
        doc = json.loads(Path(path).read_text())
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version!r}")
        trees = [
            _Tree(
                feature=np.array(entry["feature"]),
                threshold=np.array(entry["threshold"]),
                left_values=[
                    frozenset(vals) if vals is not None else None
                    for vals in entry["left_values"]
                ],
                children=np.array(entry["children"]),
                value=np.array(entry["value"]),
            )
            for entry in doc["trees"]
        ]
        return cls(
            trees=trees,
            column_kinds=tuple(doc["column_kinds"]),
            feature_dim=doc["feature_dim"],
            y_min=doc["y_min"],
            y_max=doc["y_max"],
            params=ForestParams(**doc["params"]),
            space=parse_space(doc["space"]),
        )


def fit_model(
    store: RunDataStore,
    space: ParameterSpace,
    features: Mapping[str, Sequence[float]],
    cutoff: float,
    penalty: int,
    params: ForestParams | None = None,
    seed: int = 0,
) -> PerformanceModel:
    """Fit a forest on every stored run whose instance has features."""
    params = params or ForestParams()
    records = [r for r in store.records() if r.instance_id in features]
    if not records:
        raise ValueError("no training data")
    # canonical row order: make the fit independent of append order
    records.sort(
        key=lambda r: (r.config_id, r.instance_id, r.seed, r.status.value, r.runtime)
    )
    feature_dim = len(next(iter(features.values())))
    configs = store.known_configs()
    enc_cache: dict[str, np.ndarray] = {}
    rows = np.empty((len(records), len(space.parameters) + feature_dim))
    y = np.empty(len(records))
    for i, rec in enumerate(records):
        enc = enc_cache.get(rec.config_id)
        if enc is None:
            enc = encode_config(space, configs[rec.config_id], features=())
            enc_cache[rec.config_id] = enc
        rows[i, : len(enc)] = enc
        rows[i, len(enc) :] = np.asarray(features[rec.instance_id], dtype=float)
        # penalize against the run's own cutoff so a timeout under a racing
        # cap is imputed near the cap instead of at the full-scale penalty
        score = penalized_score(rec.status, rec.runtime, rec.cutoff, penalty)
        y[i] = math.log10(max(min(score, penalty * cutoff), LOG_FLOOR))
    column_kinds = encoding_kinds(space) + ("num",) * feature_dim
    return fit_forest(rows, y, column_kinds, params, seed, feature_dim, space)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    column_kinds: tuple[str, ...],
    params: ForestParams,
    seed: int,
    feature_dim: int,
    space: ParameterSpace,
) -> PerformanceModel:
    if params.n_trees < 1:
        raise ValueError("need at least one tree")
    seed_seq = np.random.SeedSequence(seed)
    tree_seeds = seed_seq.spawn(params.n_trees)
    cat_cols = np.array([kind == "cat" for kind in column_kinds])
    trees = []
    for tree_seed in tree_seeds:
        rng = np.random.default_rng(tree_seed)
        if params.bootstrap:
            idx = rng.integers(0, len(y), size=len(y))
        else:
            idx = np.arange(len(y))
        trees.append(_grow_tree(X, y, idx, cat_cols, params, rng))
    return PerformanceModel(
        trees=trees,
        column_kinds=tuple(column_kinds),
        feature_dim=feature_dim,
        y_min=float(y.min()),
        y_max=float(y.max()),
        params=params,
        space=space,
    )


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    cat_cols: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
) -> _Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left_values: list[frozenset | None] = []
    children: list[list[int]] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left_values.append(None)
        children.append([-1, -1])
        value.append(0.0)
        return len(feature) - 1

    def build(rows: np.ndarray) -> int:
        node = new_node()
        targets = y[rows]
        value[node] = float(targets.mean())
        if len(rows) < 2 * params.min_leaf or np.all(targets == targets[0]):
            return node
        split = _best_split(X, y, rows, cat_cols, params, rng)
        if split is None:
            return node
        col, thr, cats, mask = split
        feature[node] = col
        threshold[node] = thr
        left_values[node] = cats
        left = build(rows[mask])
        right = build(rows[~mask])
        children[node] = [left, right]
        return node

    build(idx)
    return _Tree(
        feature=np.array(feature),
        threshold=np.array(threshold),
        left_values=left_values,
        children=np.array(children),
        value=np.array(value),
    )


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    cat_cols: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
):
    n_cols = X.shape[1]
    n_try = min(n_cols, params.n_split_features(n_cols))
    candidates = rng.choice(n_cols, size=n_try, replace=False)
    best = None
    best_sse = math.inf
    for col in candidates:
        values = X[rows, col]
        targets = y[rows]
        if cat_cols[col]:
            result = _best_categorical_split(values, targets, params)
            if result is not None and result[0] < best_sse:
                best_sse = result[0]
                best = (int(col), 0.0, result[1], np.isin(values, list(result[1])))
        else:
            result = _best_numeric_split(values, targets, params.min_leaf)
            if result is not None and result[0] < best_sse:
                best_sse = result[0]
                best = (int(col), result[1], None, values <= result[1])
    return best


def _split_sse(counts_l, sums_l, sq_l, total_n, total_sum, total_sq):
    counts_r = total_n - counts_l
    sums_r = total_sum - sums_l
    sq_r = total_sq - sq_l
    sse_l = sq_l - sums_l**2 / counts_l
    sse_r = sq_r - sums_r**2 / counts_r
    return sse_l + sse_r


def _best_numeric_split(values: np.ndarray, targets: np.ndarray, min_leaf: int):
    order = np.argsort(values, kind="mergesort")
    xs = values[order]
    ys = targets[order]
    n = len(xs)
    csum = np.cumsum(ys)
    csq = np.cumsum(ys * ys)
    pos = np.arange(min_leaf, n - min_leaf + 1)  # split before index pos
    if pos.size == 0:
        return None
    valid = xs[pos - 1] < xs[pos]
    pos = pos[valid]
    if pos.size == 0:
        return None
    sse = _split_sse(pos, csum[pos - 1], csq[pos - 1], n, csum[-1], csq[-1])
    best = int(np.argmin(sse))
    p = pos[best]
    return float(sse[best]), float((xs[p - 1] + xs[p]) / 2.0)


def _best_categorical_split(values: np.ndarray, targets: np.ndarray, params: ForestParams):
    cats, inverse = np.unique(values, return_inverse=True)
    m = len(cats)
    if m < 2:
        return None
    counts = np.bincount(inverse).astype(float)
    sums = np.bincount(inverse, weights=targets)
    sqs = np.bincount(inverse, weights=targets * targets)
    total_n, total_sum, total_sq = float(len(values)), float(targets.sum()), float((targets * targets).sum())
    min_leaf = params.min_leaf
    best_sse = math.inf
    best_left: frozenset | None = None
    if m <= params.max_exhaustive_categories:
        # canonical proper subsets: category 0 always on the left
        for mask in range(1, 1 << m, 2):
            if mask == (1 << m) - 1:
                continue
            members = [j for j in range(m) if mask >> j & 1]
            n_l = counts[members].sum()
            if n_l < min_leaf or total_n - n_l < min_leaf:
                continue
            sse = _split_sse(
                n_l, sums[members].sum(), sqs[members].sum(), total_n, total_sum, total_sq
            )
            if sse < best_sse:
                best_sse = sse
                best_left = frozenset(float(cats[j]) for j in members)
    else:
        # order categories by target mean and split along that ordering
        order = np.argsort(sums / counts, kind="mergesort")
        c_counts = np.cumsum(counts[order])[:-1]
        c_sums = np.cumsum(sums[order])[:-1]
        c_sqs = np.cumsum(sqs[order])[:-1]
        ok = (c_counts >= min_leaf) & (total_n - c_counts >= min_leaf)
        if not ok.any():
            return None
        sse = np.where(
            ok,
            _split_sse(c_counts, c_sums, c_sqs, total_n, total_sum, total_sq),
            math.inf,
        )
        cut = int(np.argmin(sse))
        best_sse = float(sse[cut])
        best_left = frozenset(float(cats[j]) for j in order[: cut + 1])
    if best_left is None:
        return None
    return best_sse, best_left
