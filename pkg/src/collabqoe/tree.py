"""Binary CART classifier with the Gini criterion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroupDataset
from .errors import ConfigurationError, DataError, ShapeError

# Gini differences below this count as ties
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 2

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigurationError(f"max_depth must be >= 1, got {self.max_depth}")

    @property
    def label(self) -> str:
        return f"DT ({self.max_depth})"


@dataclass(frozen=True)
class Node:
    feature_index: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    distribution: tuple[float, float] = (0.5, 0.5)
    depth: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass(frozen=True)
class DecisionTreeModel:
    nodes: tuple[Node, ...]
    max_depth: int

    @property
    def depth(self) -> int:
        return max(n.depth for n in self.nodes)

    @property
    def n_features_required(self) -> int:
        used = [n.feature_index for n in self.nodes if not n.is_leaf]
        return max(used) + 1 if used else 0


def gini(labels) -> float:
    y = np.asarray(labels)
    if y.size == 0:
        raise DataError("gini of an empty label set")
    p1 = float(np.mean(y == 1))
    return 1.0 - (1.0 - p1) ** 2 - p1**2


def best_split(x: np.ndarray, y: np.ndarray) -> tuple[int, float, float] | None:
    """Lowest weighted-Gini split as ``(feature, threshold, weighted_gini)``.

    Candidates are midpoints of consecutive distinct sorted values; rows with
    ``x <= threshold`` go left.  Ties go to the lower feature index, then the
    lower threshold.  Returns None when every feature is constant.
    """
    n = y.size
    best = None
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        ys = y[order]
        # split after position i (left = first i+1 rows) wherever the value changes
        cut = np.nonzero(xs[1:] > xs[:-1])[0]
        if cut.size == 0:
            continue
        n_left = cut + 1.0
        n_right = n - n_left
        pos_left = np.cumsum(ys)[cut].astype(np.float64)
        pos_right = ys.sum() - pos_left
        p_l = pos_left / n_left
        p_r = pos_right / n_right
        g_l = 1.0 - p_l**2 - (1.0 - p_l) ** 2
        g_r = 1.0 - p_r**2 - (1.0 - p_r) ** 2
        weighted = (n_left * g_l + n_right * g_r) / n
        k = int(np.argmin(weighted))
        # argmin returns the first minimum; re-check within tolerance for the lowest threshold
        k = int(np.nonzero(weighted <= weighted[k] + _TIE_TOL)[0][0])
        thr = 0.5 * (xs[cut[k]] + xs[cut[k] + 1])
        if best is None or weighted[k] < best[2] - _TIE_TOL:
            best = (j, float(thr), float(weighted[k]))
    return best


def _distribution(y: np.ndarray) -> tuple[float, float]:
    p1 = float(np.mean(y == 1))
    return (1.0 - p1, p1)


def build_tree(x: np.ndarray, y: np.ndarray, max_depth: int) -> DecisionTreeModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise DataError("cannot fit a tree on zero rows")
    if max_depth < 1:
        raise ConfigurationError(f"max_depth must be >= 1, got {max_depth}")
    nodes: list[Node] = []

    def grow(idx: np.ndarray, depth: int) -> int:
        slot = len(nodes)
        nodes.append(Node(distribution=_distribution(y[idx]), depth=depth))
        ys = y[idx]
        if depth >= max_depth or ys.min() == ys.max():
            return slot
        split = best_split(x[idx], ys)
        if split is None:
            return slot
        j, thr, _ = split
        go_left = x[idx, j] <= thr
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        nodes[slot] = Node(j, thr, left, right, nodes[slot].distribution, depth)
        return slot

    grow(np.arange(y.size), 0)
    return DecisionTreeModel(tuple(nodes), max_depth)


def dt_fit(data: GroupDataset, max_depth: int) -> DecisionTreeModel:
    if data.train_indices.size == 0:
        raise DataError(f"group {data.group_id} has no training rows")
    return build_tree(data.x_train, data.y_train, max_depth)


def dt_predict(tree: DecisionTreeModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < tree.n_features_required:
        raise ShapeError(f"tree needs {tree.n_features_required} feature columns, got shape {x.shape}")
    out = np.empty((x.shape[0], 2))
    for i, row in enumerate(x):
        node = tree.nodes[0]
        while not node.is_leaf:
            node = tree.nodes[node.left if row[node.feature_index] <= node.threshold else node.right]
        out[i] = node.distribution
    return out
