"""The four training regimes: isolated (IL), centralized (CL), round-robin
(RRL) and federated (FL), plus training-time accounting.

Every ``run_*`` function repeats a single-seed ``*_trial`` for seeds
``base_seed .. base_seed + repeats - 1`` and summarises AUC with
:func:`collabqoe.metrics.mean_ci`.  Collaborative regimes exchange nothing
but :class:`~collabqoe.transport.WeightSnapshot` messages over a bus.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

import numpy as np

from . import data as qdata
from .data import GroupDataset
from .errors import ConfigurationError, DataError, ShapeError, UnsupportedModelError, WorkerLostError
from .metrics import (
    DEFAULT_EPSILON,
    DEFAULT_WINDOW,
    MetricSummary,
    detect_saturation,
    mean_ci,
    roc_auc_scan,
)
from .network import ModelConfig, NetworkState, TrainReport, init_network, predict_proba, sgd_fit
from .transport import Message, MessageKind, WeightSnapshot, make_bus
from .tree import DecisionTreeModel, TreeConfig, dt_fit, dt_predict

log = logging.getLogger(__name__)

SCENARIOS = ("IL", "CL", "RRL", "FL")
CLOCKS = ("cpu", "wall", "steps")
# seconds charged per optimizer step (or tree node) under the "steps" clock
STEP_COST = 1e-4
MASTER = 0

_SPLIT, _INIT, _FIT = 1, 2, 3

Model = Union[NetworkState, DecisionTreeModel]
ModelSpec = Union[ModelConfig, TreeConfig]


@dataclass(frozen=True)
class ExperimentConfig:
    """One scenario x model configuration.

    ``rounds`` defaults to 1 for RRL (one ring cycle) and 30 for FL (an upper
    bound; FL stops at saturation).  ``k`` is the number of worker snapshots
    the master waits for before averaging; None means all workers.
    ``round_epochs`` caps local epochs per FL round.  ``saturation`` is
    ``"trial"`` (each run stops when its own curve saturates) or ``"pooled"``
    (every run trains all rounds; the saturation round is read off the curve
    averaged over all repeats and each run is reported at it).  ``clock`` picks how
    training time is measured: per-thread CPU seconds, wall seconds, or a
    deterministic optimizer-step count times ``STEP_COST``.
    """

    scenario: str
    model: ModelSpec = field(default_factory=ModelConfig)
    rounds: int | None = None
    k: int | None = None
    repeats: int = 1
    base_seed: int = 0
    round_epochs: int = 50
    window: int = DEFAULT_WINDOW
    epsilon: float = DEFAULT_EPSILON
    weighted_average: bool = False
    transport: str = "inproc"
    host: str = "127.0.0.1"
    port: int = 0
    resplit: bool = True
    train_ratio: float = qdata.TRAIN_RATIO
    saturation: str = "trial"
    clock: str = "cpu"
    timeout: float = 600.0

    def __post_init__(self):
        scenario = self.scenario.upper()
        object.__setattr__(self, "scenario", scenario)
        if scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if not isinstance(self.model, (ModelConfig, TreeConfig)):
            raise ConfigurationError(f"model must be ModelConfig or TreeConfig, got {type(self.model).__name__}")
        if self.rounds is not None and self.rounds < 1:
            raise ConfigurationError(f"rounds must be >= 1, got {self.rounds}")
        if self.k is not None and self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.repeats < 1:
            raise ConfigurationError(f"repeats must be >= 1, got {self.repeats}")
        if self.round_epochs < 1:
            raise ConfigurationError("round_epochs must be >= 1")
        if self.clock not in CLOCKS:
            raise ConfigurationError(f"clock must be one of {CLOCKS}, got {self.clock!r}")
        if self.saturation not in ("trial", "pooled"):
            raise ConfigurationError(f"saturation must be 'trial' or 'pooled', got {self.saturation!r}")
        if self.transport not in ("inproc", "tcp"):
            raise ConfigurationError(f"transport must be 'inproc' or 'tcp', got {self.transport!r}")

    @property
    def n_rounds(self) -> int:
        if self.rounds is not None:
            return self.rounds
        return 30 if self.scenario == "FL" else 1

    def threshold(self, n_workers: int) -> int:
        k = n_workers if self.k is None else self.k
        if not 1 <= k <= n_workers:
            raise ConfigurationError(f"aggregation threshold k={k} outside [1, {n_workers}]")
        return k

    @property
    def seeds(self) -> range:
        return range(self.base_seed, self.base_seed + self.repeats)


@dataclass(frozen=True)
class RoundMetrics:
    round_id: int
    workers: tuple[int, ...]
    aucs: tuple[float, ...]
    times: tuple[float, ...]

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def max_time(self) -> float:
        return max(self.times)


@dataclass(frozen=True)
class Evaluation:
    train_group: str
    test_group: int
    auc: float
    train_time: float


@dataclass(frozen=True)
class WorkerTime:
    worker: int
    round_id: int
    seconds: float


@dataclass
class Trial:
    """Everything one seed of one scenario produced."""

    scenario: str
    seed: int
    evaluations: list[Evaluation]
    total_time: float
    worker_times: list[WorkerTime] = field(default_factory=list)
    round_metrics: list[RoundMetrics] = field(default_factory=list)
    final_round: int | None = None
    saturated: bool | None = None
    models: dict[str, Model] = field(default_factory=dict)
    # FL only: broadcast model per round and its AUC on each group's test set
    broadcasts: list[WeightSnapshot] = field(default_factory=list)
    round_evaluations: list[tuple[float, ...]] = field(default_factory=list)


@dataclass
class ScenarioResult:
    scenario: str
    model_label: str
    auc: dict[tuple[str, int], MetricSummary]
    trials: list[Trial]
    timing: dict[str, MetricSummary]
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total_training_time(self) -> MetricSummary | None:
        return self.timing.get("total")

    @property
    def saturation_round(self) -> MetricSummary | None:
        return self.timing.get("saturation_round")


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def summarize(values: Sequence[float]) -> MetricSummary:
    """:func:`mean_ci`, except a single run gets a zero halfwidth."""
    if len(values) == 1:
        return MetricSummary(float(values[0]), 0.0, 1)
    return mean_ci(values)


def _seconds(item) -> float:
    if isinstance(item, TrainReport):
        return item.wall_time
    return float(item)


def rrl_total_time(reports: Iterable) -> float:
    """Sequential ring: the sum of every worker's training time."""
    secs = [_seconds(r) for r in reports]
    if not secs:
        raise DataError("no worker times")
    if any(s < 0 for s in secs):
        raise DataError("negative training time")
    return math.fsum(secs)


def fl_total_time(rounds: Sequence[RoundMetrics], saturation_round: int) -> float:
    """Parallel rounds: each round costs its slowest worker, summed up to
    and including ``saturation_round``."""
    if not rounds:
        raise DataError("no rounds")
    if not 1 <= saturation_round <= len(rounds):
        raise DataError(f"saturation round {saturation_round} outside 1..{len(rounds)}")
    by_id = sorted(rounds, key=lambda m: m.round_id)
    if any(t < 0 for m in by_id for t in m.times):
        raise DataError("negative training time")
    return math.fsum(m.max_time for m in by_id[:saturation_round])


def federated_average(snapshots: Sequence[WeightSnapshot], weights: Sequence[float] | None = None) -> WeightSnapshot:
    """Element-wise mean of weights, biases and batchnorm parameters."""
    if not snapshots:
        raise DataError("nothing to average")
    ref = snapshots[0]
    for s in snapshots[1:]:
        if not s.same_layout(ref):
            raise ShapeError(f"snapshot from worker {s.worker_id} has layout {s.layer_shapes}, expected {ref.layer_shapes}")
    if weights is None:
        w = np.full(len(snapshots), 1.0 / len(snapshots))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(snapshots),) or (w < 0).any() or w.sum() <= 0:
            raise ConfigurationError("averaging weights must be nonnegative, one per snapshot, not all zero")
        w = w / w.sum()

    def mean(name: str) -> np.ndarray:
        base = getattr(ref, name)
        # offsets from the first snapshot keep identical inputs bit-identical
        acc = np.zeros_like(base)
        for wi, s in zip(w, snapshots):
            acc += wi * (getattr(s, name) - base)
        return base + acc

    return WeightSnapshot(
        worker_id=MASTER,
        round_id=max(s.round_id for s in snapshots),
        layer_shapes=ref.layer_shapes,
        weights=mean("weights"),
        biases=mean("biases"),
        batchnorm_params=mean("batchnorm_params"),
    )


def prepare_groups(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> list[GroupDataset]:
    """Split (when ``config.resplit``) and min-max scale each worker's data
    with its own training extrema."""
    out = []
    for pos, g in enumerate(groups):
        if config.resplit:
            g = qdata.split_train_test(g, config.train_ratio, derive_seed(seed, _SPLIT, pos))
        elif not g.is_split:
            raise DataError(f"group {g.group_id} is not split and resplit is off")
        out.append(qdata.scale_group(g))
    return out


def _elapsed(clock: str, wall: float, cpu: float, units: int) -> float:
    if clock == "wall":
        return wall
    if clock == "cpu":
        return cpu
    return units * STEP_COST


def _train(spec: ModelSpec, start: NetworkState | None, data: GroupDataset, seed: int, clock: str):
    """Fit one model; returns (model, seconds)."""
    t0, c0 = time.perf_counter(), time.thread_time()
    if isinstance(spec, TreeConfig):
        model: Model = dt_fit(data, spec.max_depth)
        units = len(model.nodes)
    else:
        model, report = sgd_fit(start, data, spec, seed)
        units = report.steps
    wall, cpu = time.perf_counter() - t0, time.thread_time() - c0
    return model, _elapsed(clock, wall, cpu, units)


def score(model: Model, x: np.ndarray) -> np.ndarray:
    """Probability of the "good" class per row."""
    if isinstance(model, DecisionTreeModel):
        return dt_predict(model, x)[:, 1]
    return predict_proba(model, x)[:, 1]


def auc_on(model: Model, group: GroupDataset) -> float:
    return roc_auc_scan(score(model, group.x_test), group.y_test)


def _require_groups(groups: Sequence[GroupDataset], minimum: int, scenario: str) -> None:
    if len(groups) < minimum:
        raise DataError(f"{scenario} needs at least {minimum} group(s), got {len(groups)}")


def _require_nn(config: ExperimentConfig) -> ModelConfig:
    if not isinstance(config.model, ModelConfig):
        raise UnsupportedModelError(
            f"{config.scenario} continues training across nodes; {config.model.label} cannot be resumed"
        )
    return config.model


def _fresh(spec: ModelSpec, input_dim: int, seed: int, pos: int) -> NetworkState | None:
    if isinstance(spec, TreeConfig):
        return None
    return init_network(spec, input_dim, derive_seed(seed, _INIT, pos))


def isolated_trial(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> Trial:
    _require_groups(groups, 1, "IL")
    groups = prepare_groups(groups, config, seed)
    evaluations, times, models = [], [], {}
    for pos, g in enumerate(groups):
        start = _fresh(config.model, g.n_features, seed, pos)
        model, secs = _train(config.model, start, g, derive_seed(seed, _FIT, pos, 1), config.clock)
        models[str(g.group_id)] = model
        times.append(WorkerTime(g.group_id, 1, secs))
        for h in groups:
            evaluations.append(Evaluation(str(g.group_id), h.group_id, auc_on(model, h), secs))
    return Trial("IL", seed, evaluations, math.fsum(t.seconds for t in times), times, models=models)


def centralized_trial(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> Trial:
    _require_groups(groups, 1, "CL")
    groups = prepare_groups(groups, config, seed)
    pooled = qdata.concat_train(groups)
    start = _fresh(config.model, pooled.n_features, seed, 0)
    model, secs = _train(config.model, start, pooled, derive_seed(seed, _FIT, 0, 1), config.clock)
    evaluations = [Evaluation("CL", g.group_id, auc_on(model, g), secs) for g in groups]
    return Trial("CL", seed, evaluations, secs, [WorkerTime(-1, 1, secs)], models={"CL": model})


def _open_bus(config: ExperimentConfig):
    return make_bus(config.transport, config.host, config.port)


def round_robin_trial(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> Trial:
    """Ascending ring: worker 0 trains from the initial weights, hands the
    model to worker 1, and so on; after the last worker the next round (if
    any) starts again at worker 0.  The model leaving the last worker of the
    last round is evaluated on every group's test set."""
    spec = _require_nn(config)
    _require_groups(groups, 1, "RRL")
    groups = prepare_groups(groups, config, seed)
    n = len(groups)
    rounds = config.n_rounds
    start = _fresh(spec, groups[0].n_features, seed, 0)

    times: list[WorkerTime] = []
    metrics: list[RoundMetrics] = []
    with _open_bus(config) as bus:
        master = bus.endpoint(MASTER)
        eps = [bus.endpoint(pos + 1) for pos in range(n)]
        master.publish(1, Message(MessageKind.PASS_MODEL, WeightSnapshot.from_network(start, MASTER, 0)))
        for r in range(1, rounds + 1):
            aucs, secs_r = [], []
            for pos, g in enumerate(groups):
                msg = eps[pos].consume(config.timeout)
                if msg is None:
                    raise WorkerLostError(g.group_id, "ring hand-off timed out")
                net, secs = _train(spec, msg.payload.to_network(), g, derive_seed(seed, _FIT, pos, r), config.clock)
                times.append(WorkerTime(g.group_id, r, secs))
                aucs.append(auc_on(net, g))
                secs_r.append(secs)
                last = pos == n - 1
                to = MASTER if (last and r == rounds) else (1 if last else pos + 2)
                eps[pos].publish(
                    to,
                    Message(MessageKind.PASS_MODEL, WeightSnapshot.from_network(net, pos + 1, r), info={"time": secs}),
                )
            metrics.append(RoundMetrics(r, tuple(g.group_id for g in groups), tuple(aucs), tuple(secs_r)))
        final = master.consume(config.timeout)
        if final is None:
            raise WorkerLostError(groups[-1].group_id, "final model never arrived")
    model = final.payload.to_network()
    total = rrl_total_time(t.seconds for t in times)
    evaluations = [Evaluation("RRL", g.group_id, auc_on(model, g), total) for g in groups]
    return Trial("RRL", seed, evaluations, total, times, metrics, final_round=rounds, models={"RRL": model})


def _fl_worker(ep, pos: int, group: GroupDataset, spec: ModelConfig, config: ExperimentConfig, seed: int) -> None:
    spec = replace(spec, max_epochs=config.round_epochs)
    while True:
        try:
            msg = ep.consume(config.timeout)
        except Exception:
            return
        if msg is None:
            ep.publish(MASTER, Message(MessageKind.STOP, info={"error": "timed out waiting for master"}))
            return
        if msg.kind is MessageKind.STOP:
            return
        r = msg.payload.round_id + 1
        try:
            net, secs = _train(spec, msg.payload.to_network(), group, derive_seed(seed, _FIT, pos, r), config.clock)
            auc = auc_on(net, group)
        except Exception as exc:  # reported to the master, which aborts the round
            ep.publish(MASTER, Message(MessageKind.STOP, info={"error": f"{type(exc).__name__}: {exc}"}))
            return
        ep.publish(
            MASTER,
            Message(
                MessageKind.WEIGHTS_UPDATE,
                WeightSnapshot.from_network(net, pos + 1, r),
                info={"time": secs, "auc": auc, "n_train": float(group.train_indices.size)},
            ),
        )


def federated_trial(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> Trial:
    """Synchronous federated averaging.

    Workers run on their own threads and talk to the master only through the
    bus.  Each round the master waits for ``k`` snapshots of that round,
    averages them, and broadcasts the result.  It stops once
    :func:`detect_saturation` fires on the per-round mean local AUC, or after
    ``rounds`` rounds; the broadcast model of the saturation round is the
    one evaluated.
    """
    spec = _require_nn(config)
    _require_groups(groups, 1, "FL")
    groups = prepare_groups(groups, config, seed)
    n = len(groups)
    k = config.threshold(n)
    start = _fresh(spec, groups[0].n_features, seed, 0)

    history: list[WeightSnapshot] = []
    metrics: list[RoundMetrics] = []
    round_aucs: list[tuple[float, ...]] = []
    sat = None
    with _open_bus(config) as bus:
        master = bus.endpoint(MASTER)
        eps = [bus.endpoint(pos + 1) for pos in range(n)]
        threads = [
            threading.Thread(
                target=_fl_worker,
                args=(eps[pos], pos, groups[pos], spec, config, seed),
                name=f"fl-worker-{pos}",
                daemon=True,
            )
            for pos in range(n)
        ]
        for t in threads:
            t.start()
        try:
            current = WeightSnapshot.from_network(start, MASTER, 0)
            for pos in range(n):
                master.publish(pos + 1, Message(MessageKind.AVERAGED_WEIGHTS, current))
            for r in range(1, config.n_rounds + 1):
                updates: dict[int, Message] = {}
                while len(updates) < k:
                    msg = master.consume(config.timeout)
                    if msg is None:
                        missing = sorted(set(range(1, n + 1)) - set(updates))
                        raise WorkerLostError(groups[missing[0] - 1].group_id, f"no update for round {r}")
                    if msg.kind is MessageKind.STOP:
                        raise WorkerLostError(groups[msg.sender - 1].group_id, str(msg.info.get("error", "")))
                    if msg.payload.round_id != r:
                        continue
                    updates[msg.sender] = msg
                senders = sorted(updates)
                weights = [updates[s].info["n_train"] for s in senders] if config.weighted_average else None
                current = federated_average([updates[s].payload for s in senders], weights)
                current = replace(current, round_id=r)
                history.append(current)
                broadcast_model = current.to_network()
                round_aucs.append(tuple(auc_on(broadcast_model, g) for g in groups))
                metrics.append(
                    RoundMetrics(
                        r,
                        tuple(groups[s - 1].group_id for s in senders),
                        tuple(float(updates[s].info["auc"]) for s in senders),
                        tuple(float(updates[s].info["time"]) for s in senders),
                    )
                )
                if config.saturation == "trial" and len(metrics) > config.window:
                    found = detect_saturation([m.mean_auc for m in metrics], config.window, config.epsilon)
                    if found.saturated:
                        sat = found
                        break
                if r < config.n_rounds:
                    for pos in range(n):
                        master.publish(pos + 1, Message(MessageKind.AVERAGED_WEIGHTS, current))
        finally:
            for pos in range(n):
                try:
                    master.publish(pos + 1, Message(MessageKind.STOP))
                except Exception:
                    pass
            for t in threads:
                t.join(timeout=5.0)

    if sat is None:
        final_round, saturated = len(history), False
    else:
        final_round, saturated = sat.round, True
    times = [WorkerTime(w, m.round_id, t) for m in metrics for w, t in zip(m.workers, m.times)]
    trial = Trial(
        "FL",
        seed,
        [],
        0.0,
        times,
        metrics,
        broadcasts=history,
        round_evaluations=round_aucs,
    )
    return restate_at_round(trial, final_round, saturated, [g.group_id for g in groups])


def restate_at_round(trial: Trial, round_id: int, saturated: bool, group_ids: Sequence[int] | None = None) -> Trial:
    """Report an FL trial as if it had stopped at ``round_id``: evaluate the
    broadcast model of that round and charge time up to it."""
    if group_ids is None:
        group_ids = [e.test_group for e in trial.evaluations]
    total = fl_total_time(trial.round_metrics, round_id)
    aucs = trial.round_evaluations[round_id - 1]
    return replace(
        trial,
        evaluations=[Evaluation("FL", gid, auc, total) for gid, auc in zip(group_ids, aucs)],
        total_time=total,
        final_round=round_id,
        saturated=saturated,
        models={"FL": trial.broadcasts[round_id - 1].to_network()},
    )


def pooled_curve(trials: Sequence[Trial]) -> np.ndarray:
    """Per-round mean local AUC averaged over trials (rounds all trials share)."""
    n = min(len(t.round_metrics) for t in trials)
    return np.array([np.mean([t.round_metrics[r].mean_auc for t in trials]) for r in range(n)])


TRIALS = {
    "IL": isolated_trial,
    "CL": centralized_trial,
    "RRL": round_robin_trial,
    "FL": federated_trial,
}


def run_trial(groups: Sequence[GroupDataset], config: ExperimentConfig, seed: int) -> Trial:
    return TRIALS[config.scenario](groups, config, seed)


def summarize_trials(config: ExperimentConfig, trials: list[Trial], failures=()) -> ScenarioResult:
    auc: dict[tuple[str, int], list[float]] = {}
    for t in trials:
        for e in t.evaluations:
            auc.setdefault((e.train_group, e.test_group), []).append(e.auc)
    timing: dict[str, list[float]] = {}
    for t in trials:
        timing.setdefault("total", []).append(t.total_time)
        if config.scenario == "IL":
            for wt in t.worker_times:
                timing.setdefault(f"IL {wt.worker}", []).append(wt.seconds)
        elif config.scenario == "RRL":
            timing.setdefault("cycle", []).append(t.total_time / config.n_rounds)
        elif config.scenario == "FL":
            timing.setdefault("per_round", []).append(t.total_time / t.final_round)
            timing.setdefault("saturation_round", []).append(float(t.final_round))
    return ScenarioResult(
        scenario=config.scenario,
        model_label=config.model.label,
        auc={key: summarize(v) for key, v in auc.items()},
        trials=trials,
        timing={key: summarize(v) for key, v in timing.items()},
        failures=list(failures),
    )


def _guarded_trial(groups, config, seed):
    try:
        return run_trial(groups, config, seed), None
    except Exception as exc:
        return None, exc


def run_scenario(
    groups: Sequence[GroupDataset],
    config: ExperimentConfig,
    keep_going: bool = False,
    jobs: int = 1,
) -> ScenarioResult:
    """Run ``config.repeats`` seeds, ``jobs`` at a time in worker processes.

    With ``keep_going`` a failing seed is logged and recorded in
    ``failures`` instead of raising.  Results are ordered by seed whatever
    the completion order.
    """
    groups = list(groups)
    seeds = list(config.seeds)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_guarded_trial, [groups] * len(seeds), [config] * len(seeds), seeds))
    else:
        outcomes = [_guarded_trial(groups, config, s) for s in seeds]
    trials, failures = [], []
    for seed, (trial, exc) in zip(seeds, outcomes):
        if exc is None:
            trials.append(trial)
            continue
        if not keep_going:
            raise exc
        log.warning("%s seed %d failed: %s", config.scenario, seed, exc)
        failures.append((seed, f"{type(exc).__name__}: {exc}"))
    if not trials:
        raise RuntimeError(f"every seed of {config.scenario} failed: {failures}")
    if config.scenario == "FL" and config.saturation == "pooled":
        curve = pooled_curve(trials)
        if curve.size > config.window:
            sat = detect_saturation(curve, config.window, config.epsilon)
        else:
            sat = (int(curve.size), False)
        trials = [restate_at_round(t, sat[0], sat[1]) for t in trials]
    return summarize_trials(config, trials, failures)


def _with_scenario(config: ExperimentConfig, scenario: str) -> ExperimentConfig:
    return config if config.scenario == scenario else replace(config, scenario=scenario)


def run_isolated(groups, config: ExperimentConfig, keep_going: bool = False) -> ScenarioResult:
    return run_scenario(groups, _with_scenario(config, "IL"), keep_going)


def run_centralized(groups, config: ExperimentConfig, keep_going: bool = False) -> ScenarioResult:
    _require_groups(groups, 2, "CL")
    return run_scenario(groups, _with_scenario(config, "CL"), keep_going)


def run_round_robin(groups, config: ExperimentConfig, keep_going: bool = False) -> ScenarioResult:
    _require_nn(config)
    return run_scenario(groups, _with_scenario(config, "RRL"), keep_going)


def run_federated(groups, config: ExperimentConfig, keep_going: bool = False) -> ScenarioResult:
    _require_nn(config)
    return run_scenario(groups, _with_scenario(config, "FL"), keep_going)
