"""Config-driven experiment runner and report writer.

A run is described by an INI file (see ``configs/full.ini``)::

    [experiment]
    scenarios = IL, CL, RRL, FL
    repeats = 100
    seed = 0
    output = results
    transport = inproc          ; or tcp
    clock = cpu                 ; cpu | wall | steps

    [data]
    source = synthetic          ; or a CSV path
    synthetic_seed = 0
    slope = 6.0
    ; column_<field> = <csv column> remaps user_id, dl_bw, dur_surfing, dur_prompt, mos

    [models]
    isolated = dt:2, dt:3, dt:5, nn:16:400
    collaborative = nn:16:400

    [nn]        ; learning_rate, dropout, l2, patience, batch_size, validation_fraction
    [federated] ; rounds, k, round_epochs, window, epsilon, weighted, saturation
    [round_robin]
    rounds = 1

Outputs in the output directory, per scenario ``S``: ``table_S.md`` and
``raw_S.csv``; plus ``timing.md``, ``fl_rounds.csv`` (when FL ran),
``failures.csv`` (when any seed failed) and ``group_data.csv``.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data as qdata
from .errors import ConfigurationError
from .metrics import MetricSummary, format_halfwidth
from .network import ModelConfig
from .protocols import SCENARIOS, ExperimentConfig, ScenarioResult, run_scenario
from .tree import TreeConfig

log = logging.getLogger(__name__)

RAW_HEADER = ["scenario", "seed", "model", "train_group", "test_group", "auc", "train_time_s", "round_id"]
ROUNDS_HEADER = ["round_id", "worker", "auc", "time_s"]


@dataclass(frozen=True)
class DataSource:
    csv_path: Path | None = None
    schema: dict = field(default_factory=dict)
    synthetic_seed: int = 0
    slope: float = 6.0

    @property
    def label(self) -> str:
        return str(self.csv_path) if self.csv_path else f"synthetic(seed={self.synthetic_seed}, slope={self.slope})"

    def load(self) -> list[qdata.GroupDataset]:
        if self.csv_path is not None:
            return qdata.partition(qdata.load_csv(self.csv_path, self.schema))
        return qdata.synthesize_reference_groups(self.synthetic_seed, slope=self.slope)


@dataclass(frozen=True)
class RunManifest:
    configs: tuple[ExperimentConfig, ...]
    source: DataSource
    output: Path
    base_seed: int = 0
    config_path: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.configs:
            raise ConfigurationError("manifest requests no scenario")


@dataclass
class RunOutcome:
    results: list[ScenarioResult]
    tables: dict[str, "ReportTable"]
    files: list[Path]


@dataclass
class ReportTable:
    caption: str
    columns: list[str]
    rows: list[tuple[str, list[str]]]

    def to_markdown(self) -> str:
        head = "| " + " | ".join([""] + self.columns) + " |"
        sep = "|" + "---|" * (len(self.columns) + 1)
        lines = [f"**{self.caption}**", "", head, sep]
        for label, cells in self.rows:
            if len(cells) != len(self.columns):
                raise ValueError(f"row {label!r} has {len(cells)} cells for {len(self.columns)} columns")
            lines.append("| " + " | ".join([label] + cells) + " |")
        return "\n".join(lines) + "\n"


def parse_model(text: str) -> ModelConfig | TreeConfig:
    """``dt:<depth>`` or ``nn:<hidden>:<epochs>``."""
    parts = [p.strip() for p in text.strip().lower().split(":")]
    try:
        if parts[0] == "dt" and len(parts) == 2:
            return TreeConfig(int(parts[1]))
        if parts[0] == "nn" and len(parts) == 3:
            return ModelConfig(hidden_neurons=int(parts[1]), max_epochs=int(parts[2]))
    except ValueError:
        pass
    raise ConfigurationError(f"bad model spec {text!r}; use dt:<depth> or nn:<hidden>:<epochs>")


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def load_manifest(path, overrides: dict | None = None) -> RunManifest:
    """Build a manifest from an INI file; ``overrides`` holds CLI flags
    (``data``, ``synthetic``, ``out``, ``seed``, ``repeats``, ``transport``,
    ``scenarios``, ``jobs``, ``clock``) that win over the file."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    path = Path(path)
    if not cp.read(path, encoding="utf-8"):
        raise ConfigurationError(f"cannot read config file {path}")
    try:
        return _manifest_from(cp, path, overrides)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{path}: {exc}") from exc


def _manifest_from(cp: configparser.ConfigParser, path: Path, overrides: dict) -> RunManifest:
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    scenarios = overrides.get("scenarios") or _split_list(exp.get("scenarios", "IL"))
    scenarios = [s.upper() for s in scenarios]
    for s in scenarios:
        if s not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {s!r}")
    repeats = int(overrides.get("repeats", exp.get("repeats", 1)))
    seed = int(overrides.get("seed", exp.get("seed", 0)))
    out = Path(overrides.get("out", exp.get("output", "results")))
    if not out.is_absolute() and "out" not in overrides:
        out = path.parent / out
    transport = overrides.get("transport", exp.get("transport", "inproc"))
    clock = overrides.get("clock", exp.get("clock", "cpu"))
    jobs = int(overrides.get("jobs", exp.get("jobs", 1)))

    dsec = cp["data"] if cp.has_section("data") else {}
    schema = {key[len("column_"):]: val for key, val in dsec.items() if key.startswith("column_")}
    csv_path = overrides.get("data")
    if csv_path is None and not overrides.get("synthetic"):
        src = dsec.get("source", "synthetic").strip()
        if src != "synthetic":
            csv_path = src if Path(src).is_absolute() else str(path.parent / src)
    source = DataSource(
        csv_path=Path(csv_path) if csv_path else None,
        schema=schema,
        synthetic_seed=int(dsec.get("synthetic_seed", 0)),
        slope=float(dsec.get("slope", 6.0)),
    )

    nn = cp["nn"] if cp.has_section("nn") else {}
    nn_kwargs = {
        "learning_rate": float(nn.get("learning_rate", 0.001)),
        "dropout_rate": float(nn.get("dropout", 0.30)),
        "l2_factor": float(nn.get("l2", 0.02)),
        "early_stop_patience": int(nn.get("patience", 10)),
        "batch_size": int(nn.get("batch_size", 32)),
        "validation_fraction": float(nn.get("validation_fraction", 0.2)),
    }

    def model_list(key: str, default: str):
        models = cp["models"].get(key, default) if cp.has_section("models") else default
        specs = [parse_model(m) for m in _split_list(models)]
        return [replace(m, **nn_kwargs) if isinstance(m, ModelConfig) else m for m in specs]

    isolated = model_list("isolated", "nn:16:400")
    collaborative = model_list("collaborative", "nn:16:400")

    fed = cp["federated"] if cp.has_section("federated") else {}
    rr = cp["round_robin"] if cp.has_section("round_robin") else {}
    k = fed.get("k", "")
    common = dict(
        repeats=repeats,
        base_seed=seed,
        transport=transport,
        clock=clock,
        host=exp.get("host", "127.0.0.1"),
        port=int(exp.get("port", 0)),
    )
    configs = []
    for scenario in scenarios:
        models = isolated if scenario == "IL" else collaborative
        for model in models:
            if scenario in ("RRL", "FL") and not isinstance(model, ModelConfig):
                raise ConfigurationError(f"{scenario} needs a neural-network model, got {model.label}")
            extra = {}
            if scenario == "FL":
                extra = dict(
                    rounds=int(fed.get("rounds", 30)),
                    k=int(k) if k.strip() else None,
                    round_epochs=int(fed.get("round_epochs", 50)),
                    window=int(fed.get("window", 5)),
                    epsilon=float(fed.get("epsilon", 0.005)),
                    weighted_average=_bool(fed.get("weighted", "false")),
                    saturation=fed.get("saturation", "trial").strip(),
                )
            elif scenario == "RRL":
                extra = dict(rounds=int(rr.get("rounds", 1)))
            configs.append(ExperimentConfig(scenario, model, **common, **extra))
    return RunManifest(tuple(configs), source, out, seed, path, jobs)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


def _num(x: float) -> str:
    return repr(float(x))


def raw_rows(result: ScenarioResult) -> list[list[str]]:
    """Evaluation rows (one per seed x train x test group), then for RRL/FL
    one row per worker per round with empty ``test_group``: the worker's
    local AUC on its own test set and its training time in that round."""
    rows = []
    for t in result.trials:
        round_id = "" if t.final_round is None else str(t.final_round)
        for e in t.evaluations:
            rows.append([result.scenario, str(t.seed), result.model_label, e.train_group, str(e.test_group),
                         _num(e.auc), _num(e.train_time), round_id])
        for m in t.round_metrics:
            for w, auc, secs in zip(m.workers, m.aucs, m.times):
                rows.append([result.scenario, str(t.seed), result.model_label, str(w), "", _num(auc), _num(secs),
                             str(m.round_id)])
    return rows


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _group_name(gid: int) -> str:
    return f"Grp. {gid}"


def result_table(scenario: str, results: Sequence[ScenarioResult], group_ids: Sequence[int]) -> ReportTable:
    cols = [f"Test on {_group_name(g)}" for g in group_ids] + ["failures"]
    rows = []
    for res in results:
        trains = sorted({key[0] for key in res.auc}, key=lambda s: (not s.isdigit(), s))
        for train in trains:
            label = f"{res.model_label} {_group_name(int(train))}" if train.isdigit() else f"{res.model_label} {train}"
            cells = [res.auc[(train, g)].format() if (train, g) in res.auc else "" for g in group_ids]
            rows.append((label, cells + [str(len(res.failures))]))
    caption = {
        "IL": "Mean AUC (95% CI) per train/test group, isolated training",
        "CL": "Mean AUC (95% CI) per test group, centralized training",
        "RRL": "Mean AUC (95% CI) per test group, round-robin training",
        "FL": "Mean AUC (95% CI) per test group, federated training",
    }[scenario]
    n = max(r.auc[next(iter(r.auc))].n_runs for r in results)
    if scenario == "FL":
        sats = sorted({t.final_round for r in results for t in r.trials})
        caption += f", evaluated at round(s) {', '.join(map(str, sats))}"
    return ReportTable(f"{caption}, over {n} runs.", cols, rows)


def timing_table(results: Sequence[ScenarioResult], group_ids: Sequence[int]) -> ReportTable:
    """Training-time row: IL per group, CL, FL per round, RRL per cycle.

    Uses the first collaborative neural model; IL times come from the
    isolated run of that same model when one exists.
    """
    nn_results = [r for r in results if r.model_label.startswith("NN")]
    by_scenario: dict[str, ScenarioResult] = {}
    for r in nn_results:
        if r.scenario != "IL":
            by_scenario.setdefault(r.scenario, r)
    label = next((r.model_label for r in by_scenario.values()), None)
    for r in nn_results:
        if r.scenario == "IL" and (label is None or r.model_label == label):
            by_scenario.setdefault("IL", r)
            break

    columns, cells = [], []

    def add(col: str, summary: MetricSummary | None):
        columns.append(col)
        if summary is None:
            log.warning("no timing for %s", col)
            cells.append("")
        else:
            cells.append(f"{summary.mean:.2f}({format_halfwidth(summary.ci_halfwidth)})")

    if "IL" in by_scenario:
        for g in group_ids:
            add(f"IL {_group_name(g)}", by_scenario["IL"].timing.get(f"IL {g}"))
    if "CL" in by_scenario:
        add("CL", by_scenario["CL"].timing.get("total"))
    if "FL" in by_scenario:
        add("FL per round", by_scenario["FL"].timing.get("per_round"))
    if "RRL" in by_scenario:
        add("RRL 1 cycle", by_scenario["RRL"].timing.get("cycle"))
    model = label or (by_scenario["IL"].model_label if "IL" in by_scenario else "NN")
    return ReportTable(f"Mean (95% CI) training time (s), {model}.", columns, [("time (s)", cells)])


def fl_round_rows(result: ScenarioResult) -> list[list[str]]:
    """Per round and worker: local AUC and training time averaged over seeds."""
    acc: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for t in result.trials:
        for m in t.round_metrics:
            for w, auc, secs in zip(m.workers, m.aucs, m.times):
                acc.setdefault((m.round_id, w), []).append((auc, secs))
    rows = []
    for (r, w), vals in sorted(acc.items()):
        arr = np.array(vals)
        rows.append([str(r), str(w), _num(arr[:, 0].mean()), _num(arr[:, 1].mean())])
    return rows


def _write(path: Path, text: str, files: list[Path]) -> None:
    path.write_text(text, encoding="utf-8")
    files.append(path)


def run_manifest(manifest: RunManifest) -> RunOutcome:
    out = manifest.output
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc

    groups = manifest.source.load()
    group_ids = [g.group_id for g in groups]
    log.info("data: %s, groups %s", manifest.source.label, [len(g) for g in groups])

    results: list[ScenarioResult] = []
    for cfg in manifest.configs:
        log.info("running %s %s x %d", cfg.scenario, cfg.model.label, cfg.repeats)
        results.append(run_scenario(groups, cfg, keep_going=True, jobs=manifest.jobs))

    files: list[Path] = []
    tables: dict[str, ReportTable] = {}
    scenarios = list(dict.fromkeys(r.scenario for r in results))
    for scenario in scenarios:
        chosen = [r for r in results if r.scenario == scenario]
        table = result_table(scenario, chosen, group_ids)
        tables[scenario] = table
        _write(out / f"table_{scenario}.md", table.to_markdown(), files)
        rows = [row for r in chosen for row in raw_rows(r)]
        _write(out / f"raw_{scenario}.csv", _csv_text(RAW_HEADER, rows), files)

    timing = timing_table(results, group_ids)
    tables["timing"] = timing
    _write(out / "timing.md", timing.to_markdown(), files)

    fl = [r for r in results if r.scenario == "FL"]
    if fl:
        _write(out / "fl_rounds.csv", _csv_text(ROUNDS_HEADER, [row for r in fl for row in fl_round_rows(r)]), files)

    failures = [[r.scenario, r.model_label, str(seed), msg] for r in results for seed, msg in r.failures]
    if failures:
        _write(out / "failures.csv", _csv_text(["scenario", "model", "seed", "error"], failures), files)

    group_rows = [
        [str(g.group_id)] + [_num(v) for v in row] + [str(label)]
        for g in groups
        for row, label in zip(g.features, g.labels)
    ]
    _write(out / "group_data.csv", _csv_text(["group", *qdata.FEATURES, "label"], group_rows), files)
    return RunOutcome(results, tables, files)

