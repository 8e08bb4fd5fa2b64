"""Closed-loop driver: evaluate the base point, then run fixed-budget
rounds of act, draw, evaluate, profile, archive.

Every round is written to its own directory before the round cursor
advances, so a killed process leaves completed rounds readable and a
rerun with the same output directory continues instead of starting
over.  All randomness flows from one master seed through named child
seeds, and no artifact except ``run_meta.json`` contains a timestamp,
so two runs with the same config and seed are byte-identical.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .backend import (
    Backend,
    BackendRequest,
    ReplayBackend,
    SurfaceParams,
    build_backend,
    replay_action,
)
from .corpus import Pool, PoolManifest, load_pool
from .errors import ConfigError, DataError
from .fixtures import ReplayFixture, default_fixture_path, load_replay_fixture
from .pareto import ParetoArchive
from .profiles import (
    DEFAULT_FAIL_THRESHOLD,
    FailureProfile,
    MetricVector,
    build_failure_profiles,
    metric_vector,
    rank_slices,
    weighted_means,
)
from .proposer import PolicyConfig, RoundHistory, RoundRecord, propose_explained
from .records import (
    DIMENSION_ORDER,
    Dimension,
    SampleRecord,
    child_seed,
    dump_jsonl,
    load_jsonl,
    read_records,
    write_records,
)
from .rubric import PromptAnnotation, SliceTaxonomy, annotate_prompt, load_eval_set
from .sampler import (
    DataAction,
    SampleManifest,
    draw_budgeted,
    effective_distribution,
    uniform_bucket_weights,
    write_manifest,
)

log = logging.getLogger(__name__)

DEFAULT_BUDGET_TOKENS = 1_000_000
DEFAULT_ROUNDS = 5
DEFAULT_INITIAL_MIXTURE = (0.50, 0.30, 0.20)

BASE_LABEL = "base"


def round_label(index: int) -> str:
    return f"round-{index}"


def round_dir_name(index: int) -> str:
    return f"round-{index:03d}"


@dataclass(frozen=True)
class LoopConfig:
    """Everything one run needs, resolvable from a single JSON file."""

    budget_tokens: int = DEFAULT_BUDGET_TOKENS
    rounds: int = DEFAULT_ROUNDS
    master_seed: int = 0
    backend_kind: str = "simulate"
    surface: SurfaceParams | None = None
    fixture_path: Path | None = None
    pool_manifest_path: Path | None = None
    eval_set_paths: tuple[Path, ...] = ()
    taxonomy_path: Path | None = None
    initial_mixture: tuple[float, float, float] = DEFAULT_INITIAL_MIXTURE
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    fail_threshold: float = DEFAULT_FAIL_THRESHOLD

    def __post_init__(self) -> None:
        if self.budget_tokens < 1:
            raise ConfigError(f"budget_tokens must be >= 1, got {self.budget_tokens}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.backend_kind == "simulate":
            if self.pool_manifest_path is None:
                raise ConfigError("simulate runs need a pool_manifest path")
            if not self.eval_set_paths:
                raise ConfigError("simulate runs need eval_sets paths")
        elif self.backend_kind == "replay":
            pass  # fixture_path defaults to the shipped fixture
        elif self.backend_kind != "external":
            raise ConfigError(f"unknown backend kind {self.backend_kind!r}")

    @staticmethod
    def from_file(path: Path | str) -> "LoopConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return LoopConfig.from_json(raw, base_dir=path.parent)

    @staticmethod
    def from_json(raw: dict, base_dir: Path | None = None) -> "LoopConfig":
        base_dir = base_dir or Path.cwd()

        def _resolve(value: str | None) -> Path | None:
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else (base_dir / p)

        backend = raw.get("backend", {})
        kind = backend.get("kind", "simulate")
        surface = (
            SurfaceParams.from_json(backend.get("surface", {})) if kind == "simulate" else None
        )
        try:
            policy = PolicyConfig.from_json(raw.get("policy", {}))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad policy section: {exc}") from exc
        eval_sets = raw.get("eval_sets", [])
        if isinstance(eval_sets, dict):
            paths = [eval_sets[key] for key in sorted(eval_sets)]
        else:
            paths = list(eval_sets)
        mixture = raw.get("initial_mixture", list(DEFAULT_INITIAL_MIXTURE))
        if len(mixture) != 3:
            raise ConfigError(f"initial_mixture needs 3 entries, got {mixture!r}")
        return LoopConfig(
            budget_tokens=int(raw.get("budget_tokens", DEFAULT_BUDGET_TOKENS)),
            rounds=int(raw.get("rounds", DEFAULT_ROUNDS)),
            master_seed=int(raw.get("master_seed", 0)),
            backend_kind=kind,
            surface=surface,
            fixture_path=_resolve(backend.get("fixture")),
            pool_manifest_path=_resolve(raw.get("pool_manifest")),
            eval_set_paths=tuple(p for p in (_resolve(v) for v in paths) if p is not None),
            taxonomy_path=_resolve(raw.get("taxonomy")),
            initial_mixture=tuple(float(v) for v in mixture),  # type: ignore[arg-type]
            policy=policy,
            fail_threshold=float(raw.get("fail_threshold", DEFAULT_FAIL_THRESHOLD)),
        )

    def normalized(self) -> dict:
        """Stable JSON form, written to the run directory and compared on resume."""
        return {
            "budget_tokens": self.budget_tokens,
            "rounds": self.rounds,
            "master_seed": self.master_seed,
            "backend": {
                "kind": self.backend_kind,
                "surface": self.surface.to_json() if self.surface else None,
                "fixture": str(self.fixture_path) if self.fixture_path else None,
            },
            "pool_manifest": str(self.pool_manifest_path) if self.pool_manifest_path else None,
            "eval_sets": [str(p) for p in self.eval_set_paths],
            "taxonomy": str(self.taxonomy_path) if self.taxonomy_path else None,
            "initial_mixture": list(self.initial_mixture),
            "policy": self.policy.to_json(),
            "fail_threshold": self.fail_threshold,
        }


class RunDirectory:
    """Read-side view of a run's artifacts."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)

    def _require(self, name: str) -> Path:
        target = self.path / name
        if not target.exists():
            raise DataError(f"run directory {self.path} lacks {name}")
        return target

    def round_indices(self) -> list[int]:
        indices = []
        for entry in sorted(self.path.iterdir()):
            if entry.is_dir() and entry.name.startswith("round-"):
                try:
                    indices.append(int(entry.name.split("-", 1)[1]))
                except ValueError:
                    continue
        return sorted(indices)

    def completed_rounds(self) -> int:
        cursor = json.loads(self._require("cursor.json").read_text("utf-8"))
        return int(cursor["next_round"])

    def round_dir(self, index: int) -> Path:
        return self.path / round_dir_name(index)

    def load_round_metric(self, index: int) -> MetricVector:
        return MetricVector.from_json(
            json.loads((self.round_dir(index) / "metric.json").read_text("utf-8"))
        )

    def load_round_action(self, index: int) -> tuple[DataAction, list[str], str]:
        obj = json.loads((self.round_dir(index) / "action.json").read_text("utf-8"))
        return DataAction.from_json(obj["action"]), list(obj["rationale"]), obj["source"]

    def load_round_profiles(self, index: int) -> list[FailureProfile]:
        return [
            FailureProfile.from_json(obj)
            for obj in load_jsonl(self.round_dir(index) / "profiles.jsonl")
        ]

    def load_round_records(self, index: int) -> list[SampleRecord]:
        return read_records(self.round_dir(index) / "records.jsonl")

    def load_base_metric(self) -> MetricVector:
        return MetricVector.from_json(
            json.loads((self._require(BASE_LABEL) / "metric.json").read_text("utf-8"))
        )

    def archive_rows(self) -> list[dict]:
        return load_jsonl(self._require("archive.jsonl"))

    def frontier(self) -> list[tuple[str, MetricVector]]:
        rows = self.archive_rows()
        frontier_row = next(row for row in reversed(rows) if row.get("kind") == "frontier")
        by_label = {
            row["label"]: MetricVector.from_json(row["metric"])
            for row in rows
            if row.get("kind") == "insert"
        }
        return [(label, by_label[label]) for label in frontier_row["labels"]]


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class _Runtime:
    """Loaded, validated inputs for one run."""

    config: LoopConfig
    backend: Backend
    pool: Pool | None
    fixture: ReplayFixture | None
    eval_sets: dict[Dimension, tuple[PromptAnnotation, ...]]
    bucket_slices: dict


def _load_runtime(config: LoopConfig) -> _Runtime:
    taxonomy = (
        SliceTaxonomy.from_file(config.taxonomy_path)
        if config.taxonomy_path
        else SliceTaxonomy.default()
    )
    pool = None
    fixture = None
    eval_sets: dict[Dimension, tuple[PromptAnnotation, ...]] = {}
    if config.backend_kind == "replay":
        fixture = load_replay_fixture(config.fixture_path or default_fixture_path())
        backend: Backend = ReplayBackend(fixture)
    else:
        backend = build_backend(config.backend_kind, params=config.surface)
    if config.pool_manifest_path is not None:
        pool = load_pool(PoolManifest.from_file(config.pool_manifest_path))
    if config.eval_set_paths:
        annotations: dict[Dimension, list[PromptAnnotation]] = {
            dim: [] for dim in DIMENSION_ORDER
        }
        for path in config.eval_set_paths:
            for sample in load_eval_set(path):
                annotation = annotate_prompt(sample, taxonomy)
                annotations[annotation.dimension].append(annotation)
        for dimension in DIMENSION_ORDER:
            if not any(a.valid for a in annotations[dimension]):
                raise DataError(
                    f"eval sets contain no valid samples for dimension {dimension.value}"
                )
        eval_sets = {dim: tuple(annotations[dim]) for dim in DIMENSION_ORDER}
    elif config.backend_kind == "simulate":
        raise ConfigError("simulate runs need eval sets")
    return _Runtime(
        config=config,
        backend=backend,
        pool=pool,
        fixture=fixture,
        eval_sets=eval_sets,
        bucket_slices=pool.bucket_slices() if pool else {},
    )


def _initial_action(config: LoopConfig, pool: Pool | None) -> DataAction:
    weights = uniform_bucket_weights(pool) if pool else {}
    return DataAction(dataset_mixture=config.initial_mixture, bucket_weights=weights)


def _round_action(
    runtime: _Runtime, history: RoundHistory, index: int
) -> tuple[DataAction, list[str], str]:
    if runtime.fixture is not None:
        action = replay_action(runtime.fixture.row_for(index))
        return action, [f"action replayed from fixture row {index}"], "fixture"
    if index == 0:
        action = _initial_action(runtime.config, runtime.pool)
        return action, ["initial action from config"], "initial"
    action, rationale = propose_explained(history, runtime.config.policy)
    return action, rationale, "policy"


def _write_round(
    directory: Path,
    *,
    action: DataAction,
    rationale: list[str],
    source: str,
    manifest: SampleManifest | None,
    records: list[SampleRecord],
    metric: MetricVector,
    weighted: dict,
    profiles: list[FailureProfile],
    verdict,
    archive: ParetoArchive,
    seeds: dict[str, int],
) -> str:
    directory.mkdir(parents=True, exist_ok=True)
    _write_json(
        directory / "action.json",
        {"action": action.to_json(), "rationale": rationale, "source": source},
    )
    manifest_digest = ""
    if manifest is not None:
        write_manifest(directory / "manifest.jsonl", manifest)
        manifest_digest = _digest_file(directory / "manifest.jsonl")
        summary = manifest.summary()
        summary["manifest_digest"] = manifest_digest
        _write_json(directory / "manifest_summary.json", summary)
    write_records(directory / "records.jsonl", records)
    _write_json(
        directory / "metric.json",
        dict(metric.to_json(), weighted=weighted, seeds=seeds, verdict=verdict.status,
             replaced=list(verdict.replaced)),
    )
    dump_jsonl(directory / "profiles.jsonl", (profile.to_json() for profile in profiles))
    dump_jsonl(directory / "archive.jsonl", archive.snapshot_rows())
    return manifest_digest


def run(config: LoopConfig, out_dir: Path | str) -> RunDirectory:
    """Execute (or resume) a full search run into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runtime = _load_runtime(config)
    rounds = config.rounds
    if runtime.fixture is not None:
        rounds = min(rounds, runtime.fixture.round_count)

    normalized = config.normalized()
    config_path = out / "config.json"
    cursor_path = out / "cursor.json"
    resuming = cursor_path.exists()
    if resuming:
        existing = json.loads(config_path.read_text("utf-8"))
        ours = dict(normalized)
        theirs = dict(existing)
        ours.pop("rounds"), theirs.pop("rounds")
        if ours != theirs:
            raise ConfigError(
                f"run directory {out} was produced by a different config; "
                "refusing to mix trajectories"
            )
        next_round = json.loads(cursor_path.read_text("utf-8"))["next_round"]
    else:
        _write_json(config_path, normalized)
        _write_json(
            out / "run_meta.json",
            {
                "created_at": datetime.now(timezone.utc).isoformat(),
                "tool": "mixsearch 0.1.0",
            },
        )
        next_round = None  # base evaluation still pending

    archive = ParetoArchive()
    history = RoundHistory(bucket_slices=runtime.bucket_slices)
    run_dir = RunDirectory(out)

    if resuming:
        base_metric = run_dir.load_base_metric()
        archive.insert(BASE_LABEL, base_metric)
        history.base_metric = base_metric
        for index in range(next_round):
            action, _, _ = run_dir.load_round_action(index)
            metric = run_dir.load_round_metric(index)
            profiles = run_dir.load_round_profiles(index)
            archive.insert(round_label(index), metric)
            summary_path = run_dir.round_dir(index) / "manifest_summary.json"
            digest = (
                json.loads(summary_path.read_text("utf-8"))["manifest_digest"]
                if summary_path.exists()
                else ""
            )
            history.append(
                RoundRecord(
                    round_index=index,
                    action=action,
                    metric=metric,
                    profiles=tuple(profiles),
                    manifest_digest=digest,
                    seed=child_seed(config.master_seed, "round", index),
                )
            )
        log.info("resuming run at round %d", next_round)
    else:
        base_seed = child_seed(config.master_seed, "base")
        base_records = runtime.backend.run_round(
            BackendRequest(
                round_index=-1,
                action=None,
                manifest=None,
                eval_sets=runtime.eval_sets,
                seed=base_seed,
            )
        )
        base_metric = metric_vector(base_records)
        verdict = archive.insert(BASE_LABEL, base_metric)
        history.base_metric = base_metric
        base_dir = out / BASE_LABEL
        base_dir.mkdir(parents=True, exist_ok=True)
        write_records(base_dir / "records.jsonl", base_records)
        _write_json(
            base_dir / "metric.json",
            dict(
                base_metric.to_json(),
                weighted=weighted_means(base_records),
                seeds={"backend": base_seed},
                verdict=verdict.status,
                replaced=[],
            ),
        )
        base_profiles = build_failure_profiles(base_records, config.fail_threshold)
        dump_jsonl(base_dir / "profiles.jsonl", (p.to_json() for p in base_profiles))
        dump_jsonl(base_dir / "archive.jsonl", archive.snapshot_rows())
        next_round = 0
        _write_json(cursor_path, {"next_round": 0, "completed": False})
        log.info("base point evaluated: %s", format(base_metric, ".4f"))

    for index in range(next_round, rounds):
        action, rationale, source = _round_action(runtime, history, index)
        draw_seed = child_seed(config.master_seed, "round", index, "draw")
        backend_seed = child_seed(config.master_seed, "round", index, "backend")
        manifest = None
        if runtime.pool is not None and runtime.fixture is None:
            distribution = effective_distribution(action, runtime.pool)
            manifest = draw_budgeted(
                distribution,
                runtime.pool,
                config.budget_tokens,
                draw_seed,
                focus=action.focus_criteria,
            )
        records = runtime.backend.run_round(
            BackendRequest(
                round_index=index,
                action=action,
                manifest=manifest,
                eval_sets=runtime.eval_sets,
                seed=backend_seed,
            )
        )
        metric = metric_vector(records)
        profiles = build_failure_profiles(records, config.fail_threshold)
        verdict = archive.insert(round_label(index), metric)
        manifest_digest = _write_round(
            out / round_dir_name(index),
            action=action,
            rationale=rationale,
            source=source,
            manifest=manifest,
            records=records,
            metric=metric,
            weighted=weighted_means(records),
            profiles=profiles,
            verdict=verdict,
            archive=archive,
            seeds={"draw": draw_seed, "backend": backend_seed},
        )
        history.append(
            RoundRecord(
                round_index=index,
                action=action,
                metric=metric,
                profiles=tuple(profiles),
                manifest_digest=manifest_digest,
                seed=child_seed(config.master_seed, "round", index),
            )
        )
        _write_json(cursor_path, {"next_round": index + 1, "completed": index + 1 >= rounds})
        log.info(
            "round %d (%s): metric %s, archive verdict %s",
            index,
            source,
            format(metric, ".4f"),
            verdict.status,
        )

    dump_jsonl(out / "archive.jsonl", archive.snapshot_rows())
    (out / "report.txt").write_text(report(run_dir, "text"), encoding="utf-8")
    return run_dir


# ---------------------------------------------------------------------------
# Reporting


def _mixture_text(action: DataAction) -> str:
    return " / ".join(f"{share:.2f}" for share in action.dataset_mixture)


def _mixture_signature(action: DataAction) -> tuple[int, ...]:
    return tuple(round(share * 10_000) for share in action.dataset_mixture)


def _micro_signature(action: DataAction) -> str:
    weights = {
        dataset.value: {b: round(w, 6) for b, w in sorted(weights.items())}
        for dataset, weights in sorted(
            action.bucket_weights.items(), key=lambda item: item[0].value
        )
    }
    focus = [criterion.to_json() for criterion in action.focus_criteria]
    return json.dumps({"weights": weights, "focus": focus}, sort_keys=True)


@dataclass(frozen=True)
class TrajectoryRow:
    label: str
    metric: MetricVector
    mixture: str
    note: str = ""


def _micro_flags(actions: list[tuple[int, DataAction]]) -> tuple[set[int], list[str]]:
    """Rounds whose mixture repeats the previous round's while bucket
    weights or focus criteria changed, grouped for the report."""
    flagged: set[int] = set()
    lines: list[str] = []
    position = 0
    while position < len(actions):
        group = [actions[position]]
        while (
            position + len(group) < len(actions)
            and _mixture_signature(actions[position + len(group)][1])
            == _mixture_signature(group[0][1])
        ):
            group.append(actions[position + len(group)])
        if len(group) > 1:
            signatures = {_micro_signature(action) for _, action in group}
            if len(signatures) > 1:
                indices = [index for index, _ in group]
                flagged.update(indices)
                lines.append(
                    f"rounds {indices[0]}-{indices[-1]} share mixture "
                    f"{_mixture_text(group[0][1])} but differ in bucket weights or focus "
                    "criteria (micro-only changes)"
                )
        position += len(group)
    return flagged, lines


def _trajectory(run_dir: RunDirectory) -> tuple[list[TrajectoryRow], list[str]]:
    rows = [
        TrajectoryRow(label=BASE_LABEL, metric=run_dir.load_base_metric(), mixture="-")
    ]
    actions = []
    for index in run_dir.round_indices():
        action, _, _ = run_dir.load_round_action(index)
        actions.append((index, action))
    flagged, flag_lines = _micro_flags(actions)
    for index, action in actions:
        rows.append(
            TrajectoryRow(
                label=str(index),
                metric=run_dir.load_round_metric(index),
                mixture=_mixture_text(action),
                note="micro-only change" if index in flagged else "",
            )
        )
    return rows, flag_lines


def _worst_slices(run_dir: RunDirectory, per_dimension: int = 3) -> list[FailureProfile]:
    indices = run_dir.round_indices()
    if not indices:
        return []
    profiles = run_dir.load_round_profiles(indices[-1])
    worst = []
    for dimension in DIMENSION_ORDER:
        candidates = [p for p in profiles if p.dimension is dimension and p.fail_mass > 0]
        worst.extend(rank_slices(candidates)[:per_dimension])
    return worst


def report(run_dir: RunDirectory | Path | str, fmt: str = "text") -> str:
    """Render the trajectory, archive, and worst slices; write the
    plot-ready CSV files next to the run artifacts."""
    if not isinstance(run_dir, RunDirectory):
        run_dir = RunDirectory(run_dir)
    if fmt not in ("text", "csv"):
        raise ConfigError(f"unknown report format {fmt!r}")
    rows, flag_lines = _trajectory(run_dir)
    frontier = run_dir.frontier()
    worst = _worst_slices(run_dir)

    trajectory_csv = io.StringIO()
    writer = csv.writer(trajectory_csv, lineterminator="\n")
    writer.writerow(["round", "safe", "benign", "if", "mixture", "note"])
    for row in rows:
        writer.writerow(
            [
                row.label,
                f"{row.metric.safe:.4f}",
                f"{row.metric.benign:.4f}",
                f"{row.metric.if_score:.4f}",
                row.mixture,
                row.note,
            ]
        )
    (run_dir.path / "trajectory.csv").write_text(trajectory_csv.getvalue(), encoding="utf-8")

    archive_csv = io.StringIO()
    writer = csv.writer(archive_csv, lineterminator="\n")
    writer.writerow(["label", "safe", "benign", "if"])
    for label, metric in frontier:
        writer.writerow(
            [label, f"{metric.safe:.4f}", f"{metric.benign:.4f}", f"{metric.if_score:.4f}"]
        )
    (run_dir.path / "archive.csv").write_text(archive_csv.getvalue(), encoding="utf-8")

    slices_csv = io.StringIO()
    writer = csv.writer(slices_csv, lineterminator="\n")
    writer.writerow(["dimension", "slice", "mean_score", "fail_rate", "fail_mass", "top_modes"])
    for profile in worst:
        writer.writerow(
            [
                profile.dimension.value,
                profile.slice_label,
                f"{profile.mean_score:.4f}",
                f"{profile.fail_rate:.4f}",
                f"{profile.fail_mass:.4f}",
                " ".join(profile.top_modes()),
            ]
        )
    (run_dir.path / "slices.csv").write_text(slices_csv.getvalue(), encoding="utf-8")

    if fmt == "csv":
        out = trajectory_csv.getvalue()
        (run_dir.path / "report.csv").write_text(out, encoding="utf-8")
        return out

    lines = ["mixture search report", "=" * 52, "", "trajectory:"]
    lines.append(f"{'round':<8}{'safe':>9}{'benign':>9}{'if':>9}  {'mixture':<22}note")
    for row in rows:
        lines.append(
            f"{row.label:<8}"
            f"{row.metric.safe:>9.4f}{row.metric.benign:>9.4f}{row.metric.if_score:>9.4f}  "
            f"{row.mixture:<22}{row.note}"
        )
    lines.extend(["", "non-dominated archive:"])
    for label, metric in frontier:
        lines.append(f"  {label:<10} {format(metric, '.4f')}")
    if worst:
        lines.extend(["", "worst slices (final round):"])
        for profile in worst:
            lines.append(
                f"  {profile.dimension.value:<7} {profile.slice_label:<34} "
                f"mean {profile.mean_score:.4f}  fail_rate {profile.fail_rate:.2f}  "
                f"modes: {', '.join(profile.top_modes())}"
            )
    if flag_lines:
        lines.extend(["", "flags:"])
        lines.extend(f"  {line}" for line in flag_lines)
    text = "\n".join(lines) + "\n"
    return text
