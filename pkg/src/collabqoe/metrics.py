"""ROC AUC, confidence intervals and saturation detection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigurationError, DataError, UndefinedMetricError

Z_95 = 1.96
DEFAULT_GRID_STEP = 0.01
DEFAULT_WINDOW = 5
DEFAULT_EPSILON = 0.005


@dataclass(frozen=True)
class ScoredPredictions:
    """``scores`` are probabilities of the "good" class (label 1)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if s.shape != y.shape or s.ndim != 1:
            raise DataError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise DataError("scores must lie in [0, 1]")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)

    def _require_both_classes(self):
        n_pos = int(self.labels.sum())
        if n_pos == 0 or n_pos == self.labels.size:
            raise UndefinedMetricError("AUC needs both classes in the labels")


def _as_preds(preds, labels=None) -> ScoredPredictions:
    if isinstance(preds, ScoredPredictions):
        return preds
    return ScoredPredictions(preds, labels)


def roc_auc_scan(preds, labels=None, grid_step: float = DEFAULT_GRID_STEP) -> float:
    """AUC from a sweep of cutoffs 0, step, 2*step, ..., 1.

    At cutoff c a sample is called "good" when its score exceeds c and
    "poor" otherwise.  The curve plots poor-class recall (TPR) against the
    share of actual-good samples called poor (FPR); the area is the
    trapezoidal sum over the cutoff points plus (0, 0) and (1, 1).
    """
    p = _as_preds(preds, labels)
    if not 0.0 < grid_step <= 0.1:
        raise ConfigurationError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    p._require_both_classes()
    n_cut = int(round(1.0 / grid_step))
    # rounding makes k * 0.01 the same double as the decimal literal
    cutoffs = np.minimum(np.round(np.arange(n_cut + 1) * grid_step, 10), 1.0)
    cutoffs[-1] = 1.0
    poor = p.labels == 0
    called_poor = p.scores[None, :] <= cutoffs[:, None]
    tpr = called_poor[:, poor].mean(axis=1)
    fpr = called_poor[:, ~poor].mean(axis=1)
    fpr = np.concatenate([[0.0], fpr, [1.0]])
    tpr = np.concatenate([[0.0], tpr, [1.0]])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_auc_exact(preds, labels=None) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    p = _as_preds(preds, labels)
    p._require_both_classes()
    ranks = rankdata(p.scores)
    pos = p.labels == 1
    n_pos = int(pos.sum())
    n_neg = p.labels.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    ci_halfwidth: float
    n_runs: int

    def format(self, decimals: int = 2) -> str:
        return f"{self.mean:.{decimals}f}({format_halfwidth(self.ci_halfwidth)})"


def format_halfwidth(h: float) -> str:
    # halfwidths that would print as 0.00 get a third decimal
    return f"{h:.2f}" if round(h, 2) >= 0.01 else f"{h:.3f}"


def mean_ci(values: Sequence[float]) -> MetricSummary:
    """Mean with a normal-approximation 95% halfwidth, 1.96 * s / sqrt(n)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise DataError(f"a confidence interval needs at least 2 values, got {v.size}")
    return MetricSummary(float(v.mean()), Z_95 * float(v.std(ddof=1)) / math.sqrt(v.size), int(v.size))


class Saturation(NamedTuple):
    round: int
    saturated: bool


def detect_saturation(
    series: Sequence[float],
    window: int = DEFAULT_WINDOW,
    epsilon: float = DEFAULT_EPSILON,
) -> Saturation:
    """First round r (1-based) whose values over rounds r..r+window span
    less than ``epsilon``.  Falls back to the last round, unsaturated."""
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be > 0, got {epsilon}")
    s = np.asarray(series, dtype=np.float64)
    if s.size < window + 1:
        raise DataError(f"series of {s.size} rounds is shorter than window + 1 = {window + 1}")
    for start in range(s.size - window):
        seg = s[start : start + window + 1]
        if seg.max() - seg.min() < epsilon:
            return Saturation(start + 1, True)
    return Saturation(int(s.size), False)
