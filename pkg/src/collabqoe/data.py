"""Web-QoE records: CSV ingest, user-group partitioning, MOS binarization,
train/test splitting, min-max scaling and a synthetic generator matched to
reference per-group descriptive statistics.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, special, stats

from .errors import ConfigurationError, DataError, PartitionError, SchemaError

FEATURES = ("dl_bw", "dur_surfing", "dur_prompt")
REQUIRED_FIELDS = ("user_id",) + FEATURES + ("mos",)
DEFAULT_SCHEMA = {name: name for name in REQUIRED_FIELDS}

GROUP_BOUNDS = (22, 37)
MOS_THRESHOLD = 3.5
TRAIN_RATIO = 0.6
N_GROUPS = 3


@dataclass(frozen=True)
class SampleRecord:
    user_id: int
    dl_bw: float
    dur_surfing: float
    dur_prompt: float
    mos: float

    def features(self) -> tuple[float, float, float]:
        return (self.dl_bw, self.dur_surfing, self.dur_prompt)


@dataclass(frozen=True, eq=False)
class GroupDataset:
    """One worker's partition.

    ``train_indices``/``test_indices`` are empty until the group is split.
    """

    group_id: int
    features: np.ndarray
    labels: np.ndarray
    train_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    test_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise DataError(f"features {x.shape} and labels {y.shape} do not line up")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "train_indices", np.asarray(self.train_indices, dtype=np.int64))
        object.__setattr__(self, "test_indices", np.asarray(self.test_indices, dtype=np.int64))

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_split(self) -> bool:
        return self.train_indices.size + self.test_indices.size == len(self)

    @property
    def x_train(self) -> np.ndarray:
        return self.features[self.train_indices]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[self.train_indices]

    @property
    def x_test(self) -> np.ndarray:
        return self.features[self.test_indices]

    @property
    def y_test(self) -> np.ndarray:
        return self.labels[self.test_indices]


@dataclass(frozen=True)
class FeatureStats:
    mean: float
    std: float
    max: float
    min: float


@dataclass(frozen=True)
class GroupStats:
    features: Mapping[str, FeatureStats]
    label_mean: float
    size: int


# Per-group descriptive statistics of the public web-QoE dataset.
REFERENCE_GROUP_STATS = {
    0: GroupStats(
        features={
            "dl_bw": FeatureStats(376.0, 347.9, 1024, 32),
            "dur_surfing": FeatureStats(161.2, 19.4, 247, 3),
            "dur_prompt": FeatureStats(15.8, 7.2, 49, 6),
        },
        label_mean=0.5,
        size=160,
    ),
    1: GroupStats(
        features={
            "dl_bw": FeatureStats(361.4, 351.7, 1024, 32),
            "dur_surfing": FeatureStats(165.0, 12.9, 214, 138),
            "dur_prompt": FeatureStats(15.8, 9.9, 77, 6),
        },
        label_mean=0.6,
        size=136,
    ),
    2: GroupStats(
        features={
            "dl_bw": FeatureStats(365.1, 353.7, 1024, 32),
            "dur_surfing": FeatureStats(158.0, 11.5, 214, 126),
            "dur_prompt": FeatureStats(16.4, 9.5, 73, 5),
        },
        label_mean=0.7,
        size=122,
    ),
}


def assign_group(user_id: int) -> int:
    if user_id < GROUP_BOUNDS[0]:
        return 0
    if user_id < GROUP_BOUNDS[1]:
        return 1
    return 2


def binarize_mos(score: float) -> int:
    if not 1.0 <= score <= 5.0:
        raise DataError(f"MOS {score} outside [1, 5]")
    return 1 if score >= MOS_THRESHOLD else 0


def load_csv(path, schema: Mapping[str, str] | None = None) -> list[SampleRecord]:
    """Read web-QoE records from a header-first, comma-separated UTF-8 file.

    ``schema`` maps each required field (``user_id``, ``dl_bw``,
    ``dur_surfing``, ``dur_prompt``, ``mos``) to a column name in the file.
    Extra columns (RTT, uplink bandwidth, ...) are ignored.  Row numbers in
    errors are 1-based file line numbers, the header being line 1.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    missing_keys = [k for k in REQUIRED_FIELDS if k not in schema]
    if missing_keys:
        raise SchemaError(f"schema mapping lacks {missing_keys}")

    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        absent = [schema[k] for k in REQUIRED_FIELDS if schema[k] not in reader.fieldnames]
        if absent:
            raise SchemaError(f"{path}: missing column(s) {absent}")

        records = []
        bad_rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rec = SampleRecord(
                    user_id=int(row[schema["user_id"]]),
                    dl_bw=float(row[schema["dl_bw"]]),
                    dur_surfing=float(row[schema["dur_surfing"]]),
                    dur_prompt=float(row[schema["dur_prompt"]]),
                    mos=float(row[schema["mos"]]),
                )
            except (TypeError, ValueError):
                bad_rows.append(lineno)
                continue
            if not _record_ok(rec):
                bad_rows.append(lineno)
                continue
            records.append(rec)

    if bad_rows:
        raise DataError(f"{path}: unparseable or invalid rows {bad_rows}")
    if not records:
        raise DataError(f"{path}: no data rows")
    return records


def _record_ok(rec: SampleRecord) -> bool:
    values = rec.features() + (rec.mos,)
    if not all(math.isfinite(v) for v in values):
        return False
    if rec.user_id < 0 or rec.dl_bw <= 0 or rec.dur_surfing < 0 or rec.dur_prompt < 0:
        return False
    return 1.0 <= rec.mos <= 5.0 and (rec.mos * 2).is_integer()


def partition(records: Sequence[SampleRecord]) -> list[GroupDataset]:
    if not records:
        raise DataError("no records to partition")
    buckets: dict[int, list[SampleRecord]] = {g: [] for g in range(N_GROUPS)}
    for rec in records:
        buckets[assign_group(rec.user_id)].append(rec)
    empty = [g for g, recs in buckets.items() if not recs]
    if empty:
        raise PartitionError(f"empty group(s) {empty}")
    return [
        GroupDataset(
            group_id=g,
            features=np.array([r.features() for r in recs], dtype=np.float64),
            labels=np.array([binarize_mos(r.mos) for r in recs], dtype=np.int64),
        )
        for g, recs in buckets.items()
    ]


def split_train_test(group: GroupDataset, ratio: float = TRAIN_RATIO, seed: int = 0) -> GroupDataset:
    """Uniform random split; the first ``floor(ratio * n)`` permuted rows train."""
    n = len(group)
    if n < 5:
        raise DataError(f"group {group.group_id} has {n} rows; a split needs at least 5")
    if not 0.0 < ratio < 1.0:
        raise ConfigurationError(f"train ratio {ratio} outside (0, 1)")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(ratio * n)
    return replace(group, train_indices=np.sort(perm[:n_train]), test_indices=np.sort(perm[n_train:]))


def concat_train(groups: Sequence[GroupDataset], group_id: int = -1) -> GroupDataset:
    """Pool the training rows of several groups into one all-train dataset."""
    x = np.concatenate([g.x_train for g in groups])
    y = np.concatenate([g.y_train for g in groups])
    return GroupDataset(group_id, x, y, train_indices=np.arange(len(y)))


@dataclass(frozen=True)
class MinMaxScaler:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "MinMaxScaler":
        if x.shape[0] == 0:
            raise DataError("cannot fit a scaler on zero rows")
        return cls(x.min(axis=0), x.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        span = self.hi - self.lo
        # constant columns map to 0
        safe = np.where(span > 0, span, 1.0)
        return (x - self.lo) / safe


def scale_group(group: GroupDataset) -> GroupDataset:
    """Min-max scale all rows with the extrema of the group's training rows."""
    if not group.is_split or group.train_indices.size == 0:
        raise DataError(f"group {group.group_id} must be split before scaling")
    scaler = MinMaxScaler.fit(group.x_train)
    return replace(group, features=scaler.transform(group.features))


def group_stats(group: GroupDataset, names: Sequence[str] = FEATURES) -> GroupStats:
    x = group.features
    if x.shape[0] == 0:
        raise DataError("statistics of an empty group")
    feats = {
        name: FeatureStats(
            mean=float(x[:, j].mean()),
            std=float(x[:, j].std(ddof=1)) if x.shape[0] > 1 else 0.0,
            max=float(x[:, j].max()),
            min=float(x[:, j].min()),
        )
        for j, name in enumerate(names)
    }
    return GroupStats(features=feats, label_mean=float(group.labels.mean()), size=len(group))


def _truncnorm_moments(loc: float, scale: float, lo: float, hi: float) -> tuple[float, float]:
    a, b = (lo - loc) / scale, (hi - loc) / scale
    mean, var = stats.truncnorm.stats(a, b, loc=loc, scale=scale, moments="mv")
    return float(mean), float(np.sqrt(max(var, 0.0)))


@functools.lru_cache(maxsize=64)
def fit_truncnorm(target: FeatureStats) -> tuple[float, float]:
    """Parent-normal (loc, scale) whose truncation to [min, max] has the target
    mean, and a standard deviation as close to the target as a truncated normal
    allows.  The mean is weighted 10x over the spread."""
    lo, hi = float(target.min), float(target.max)
    span = hi - lo

    def residuals(p):
        loc, log_scale = p
        m, s = _truncnorm_moments(loc, math.exp(log_scale), lo, hi)
        return [10.0 * (m - target.mean) / span, (s - target.std) / span]

    start = [target.mean, math.log(target.std)]
    sol = optimize.least_squares(residuals, start, method="lm", xtol=1e-12, ftol=1e-12)
    return float(sol.x[0]), float(math.exp(sol.x[1]))


def _check_stats(stats_: GroupStats) -> None:
    for name in FEATURES:
        fs = stats_.features[name]
        if fs.min > fs.max:
            raise ConfigurationError(f"{name}: min {fs.min} > max {fs.max}")
        if fs.std < 0:
            raise ConfigurationError(f"{name}: negative std {fs.std}")
        if not fs.min <= fs.mean <= fs.max:
            raise ConfigurationError(f"{name}: mean {fs.mean} outside [{fs.min}, {fs.max}]")
    if not 0.0 < stats_.label_mean < 1.0:
        raise ConfigurationError(f"label mean {stats_.label_mean} must lie strictly in (0, 1)")


def synthesize_group(
    stats_: GroupStats,
    n: int,
    seed: int,
    group_id: int = 0,
    slope: float = 6.0,
) -> GroupDataset:
    """Draw ``n`` rows whose features follow truncated normals matched to
    ``stats_`` and whose labels follow a logistic model in min-max scaled
    downlink bandwidth with the given ``slope``.

    The intercept is chosen by bisection against the drawn uniforms, so the
    realised label mean lands within 1/n of ``stats_.label_mean``.
    """
    if n < 30:
        raise ConfigurationError(f"need n >= 30 synthetic rows, got {n}")
    _check_stats(stats_)
    rng = np.random.default_rng(seed)

    cols = []
    for name in FEATURES:
        fs = stats_.features[name]
        if fs.std == 0 or fs.min == fs.max:
            cols.append(np.full(n, float(fs.mean)))
            continue
        loc, scale = fit_truncnorm(fs)
        a, b = (fs.min - loc) / scale, (fs.max - loc) / scale
        draw = stats.truncnorm.rvs(a, b, loc=loc, scale=scale, size=n, random_state=rng)
        cols.append(np.clip(draw, fs.min, fs.max))
    x = np.column_stack(cols)

    bw = stats_.features["dl_bw"]
    span = bw.max - bw.min
    z = (x[:, 0] - bw.min) / span if span > 0 else np.zeros(n)
    u = rng.uniform(size=n)

    def label_mean(intercept: float) -> float:
        return float(np.mean(u < special.expit(intercept + slope * z)))

    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if label_mean(mid) < stats_.label_mean:
            lo = mid
        else:
            hi = mid
    intercept = lo if abs(label_mean(lo) - stats_.label_mean) <= abs(label_mean(hi) - stats_.label_mean) else hi
    y = (u < special.expit(intercept + slope * z)).astype(np.int64)
    return GroupDataset(group_id, x, y)


def synthesize_reference_groups(seed: int, slope: float = 6.0, sizes: Sequence[int] | None = None) -> list[GroupDataset]:
    """Three synthetic groups sized and shaped like the reference partitions."""
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(N_GROUPS)
    out = []
    for g in range(N_GROUPS):
        st = REFERENCE_GROUP_STATS[g]
        n = st.size if sizes is None else sizes[g]
        child_seed = int(children[g].generate_state(1)[0])
        out.append(synthesize_group(st, n, child_seed, group_id=g, slope=slope))
    return out
