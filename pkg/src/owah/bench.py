"""Benchmark harness: datasets, evaluation runs, metrics, and reports.

A dataset split is a set of (apartment template, seed) episodes.  Seeds
fully determine the apartment furnishing, the goal, and the solo run of
the main agent, so episode files only persist what is expensive or
load-bearing: the goal, the solo action trace, and its length.  Episodes
are independent of each other; the runner works through them sequentially
so reports come out byte-identical for identical inputs.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import HelperSpec, NoopHelper, make_helper
from .episode import MAX_TICKS, EpisodeRecord, HpMainController, run_episode
from .errors import InvalidLengthError, UnsatisfiableConfigError
from .goals import (
    GoalSpec,
    PredicateVocabulary,
    enumerate_task_goals,
    sample_task,
)
from .gpn import (
    GoalPredictionNet,
    TrainReport,
    delta_buckets,
    goal_counts,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .worldsim import (
    Action,
    IDLE_ACTION,
    SceneGraph,
    TEST_TEMPLATE_IDS,
    TRAIN_TEMPLATE_IDS,
    class_of,
    furnish,
    generate_apartment,
    load_template,
    placements,
    state_hash,
    step,
)

log = logging.getLogger("owah.bench")

DATA_DIR_ENV = "OWAH_DATA_DIR"
SPLIT_SIZES = {"train_large": 600, "train_small": 30, "test": 20}
SPLIT_TEMPLATES = {
    "train_large": TRAIN_TEMPLATE_IDS,
    "train_small": TRAIN_TEMPLATE_IDS,
    "test": TEST_TEMPLATE_IDS,
}
SPLIT_SEED_BASE = {"train_large": 0, "train_small": 10_000, "test": 20_000}
F1_BUCKETS = 20
GPN_TAG_FOR_SPLIT = {"train_large": "large", "train_small": "small"}


def data_dir(override: str | os.PathLike | None = None) -> Path:
    return Path(override or os.environ.get(DATA_DIR_ENV, "owah_data"))


def build_episode(
    template_id: str, seed: int, task: str | None = None
) -> tuple:
    """Apartment state plus its sampled goal, deterministic per seed."""
    template = load_template(template_id)
    skeleton = furnish(template)
    rng = np.random.default_rng(seed)
    if task is None:
        goal = sample_task(rng, skeleton)
    else:
        goals = enumerate_task_goals(skeleton, task)
        goal = goals[int(rng.integers(len(goals)))]
    state = generate_apartment(template, seed, goal)
    return state, goal


# -- datasets -------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    """Which episodes make up a split: aligned apartment ids and seeds."""

    split: str
    apartments: tuple[str, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if self.split not in SPLIT_SIZES:
            raise ValueError(f"unknown split {self.split!r}")
        if len(self.apartments) != len(self.seeds):
            raise ValueError("apartments and seeds must align")
        allowed = set(SPLIT_TEMPLATES[self.split])
        stray = set(self.apartments) - allowed
        if stray:
            raise ValueError(
                f"split {self.split!r} may not use apartments {sorted(stray)}"
            )

    @property
    def count(self) -> int:
        return len(self.seeds)

    def to_json_obj(self) -> dict:
        return {
            "split": self.split,
            "apartments": list(self.apartments),
            "seeds": list(self.seeds),
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "DatasetManifest":
        return DatasetManifest(
            obj["split"], tuple(obj["apartments"]), tuple(obj["seeds"])
        )


def default_manifest(split: str, size: int | None = None) -> DatasetManifest:
    """Round-robin over the split's templates with consecutive seeds."""
    templates = SPLIT_TEMPLATES[split]
    n = SPLIT_SIZES[split] if size is None else size
    base = SPLIT_SEED_BASE[split]
    apartments = tuple(templates[i % len(templates)] for i in range(n))
    seeds = tuple(base + i for i in range(n))
    return DatasetManifest(split, apartments, seeds)


@dataclass(frozen=True)
class SoloEpisode:
    """One dataset entry: the main agent's solo run of its own task."""

    template: str
    seed: int
    goal: GoalSpec
    length: int
    actions: tuple[Action, ...]
    start_hash: str

    def to_json_obj(self) -> dict:
        return {
            "template": self.template,
            "seed": self.seed,
            "goal": self.goal.to_json_obj(),
            "length": self.length,
            "actions": [a.to_json() for a in self.actions],
            "start_hash": self.start_hash,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "SoloEpisode":
        return SoloEpisode(
            obj["template"],
            obj["seed"],
            GoalSpec.from_json_obj(obj["goal"]),
            obj["length"],
            tuple(Action.from_json(a) for a in obj["actions"]),
            obj["start_hash"],
        )


def episodes_path(root: Path, split: str) -> Path:
    return root / f"{split}.jsonl"


def manifest_path(root: Path, split: str) -> Path:
    return root / f"{split}.manifest.json"


def checkpoint_path(root: Path, tag: str) -> Path:
    return root / f"gpn_{tag}.npz"


def generate_dataset(manifest: DatasetManifest, root: Path) -> list[SoloEpisode]:
    """Run the main agent alone over every manifest entry and persist it.

    Episodes whose solo run does not finish inside the tick budget are
    skipped with a logged reason; they never enter the files silently.
    """
    out: list[SoloEpisode] = []
    for template, seed in zip(manifest.apartments, manifest.seeds):
        try:
            state, goal = build_episode(template, seed)
        except UnsatisfiableConfigError as exc:
            log.warning("skip %s/%s: generation failed: %s", template, seed, exc)
            continue
        rec = run_episode(state, goal, HpMainController(goal), NoopHelper())
        if not rec.header["completed"]:
            log.warning(
                "skip %s/%s: solo run incomplete at %d ticks",
                template, seed, rec.header["length"],
            )
            continue
        out.append(
            SoloEpisode(
                template,
                seed,
                goal,
                rec.header["length"],
                tuple(Action.from_json(r["a_M"]) for r in rec.rows),
                rec.header["start_hash"],
            )
        )
    root.mkdir(parents=True, exist_ok=True)
    with open(manifest_path(root, manifest.split), "w") as f:
        json.dump(manifest.to_json_obj(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(episodes_path(root, manifest.split), "w") as f:
        for ep in out:
            f.write(json.dumps(ep.to_json_obj(), sort_keys=True) + "\n")
    log.info("wrote %d/%d episodes for %s", len(out), manifest.count, manifest.split)
    return out


def load_episodes(root: Path, split: str) -> list[SoloEpisode]:
    path = episodes_path(root, split)
    if not path.exists():
        raise FileNotFoundError(
            f"no dataset for split {split!r} under {root} (run gen-data first)"
        )
    with open(path) as f:
        return [SoloEpisode.from_json_obj(json.loads(line)) for line in f if line.strip()]


# -- goal-prediction training -----------------------------------------------------


def training_arrays(episodes: list[SoloEpisode]) -> tuple[np.ndarray, np.ndarray]:
    """(s0, st, g) triples for every tick of every solo trajectory."""
    buckets, targets = [], []
    for ep in episodes:
        state, goal = build_episode(ep.template, ep.seed)
        vocab = PredicateVocabulary.from_state(state)
        target = goal_counts(vocab, state, goal)
        current = state
        buckets.append(delta_buckets(vocab, state, current))
        targets.append(target)
        for action in ep.actions:
            current, _ = step(current, action, IDLE_ACTION)
            buckets.append(delta_buckets(vocab, state, current))
            targets.append(target)
    return np.array(buckets), np.array(targets)


def train_gpn(
    root: Path,
    split: str,
    epochs: int = 20,
    seed: int = 0,
    val_fraction: float = 0.1,
) -> tuple[GoalPredictionNet, TrainReport, Path]:
    """Fit a proposal network on a training split and checkpoint it.

    The validation cut is by episode, not by tick, so the held-out loss
    measures generalization to unseen tasks rather than unseen frames.
    """
    if split not in GPN_TAG_FOR_SPLIT:
        raise ValueError(f"cannot train on split {split!r}")
    episodes = load_episodes(root, split)
    n_val = max(1, int(len(episodes) * val_fraction))
    train_eps, val_eps = episodes[:-n_val], episodes[-n_val:]
    tr_b, tr_t = training_arrays(train_eps)
    va_b, va_t = training_arrays(val_eps)

    state, _ = build_episode(episodes[0].template, episodes[0].seed)
    vocab = PredicateVocabulary.from_state(state)
    net = GoalPredictionNet(vocab.entries, seed=seed)
    report = train(net, tr_b, tr_t, va_b, va_t, epochs=epochs, seed=seed, log=log.info)
    path = checkpoint_path(root, GPN_TAG_FOR_SPLIT[split])
    save_checkpoint(net, path)
    log.info("checkpoint written to %s", path)
    return net, report, path


# -- metrics ---------------------------------------------------------------------


def compute_speedup(l_m: int, l_h: int) -> float:
    """How much faster the pair finished than the main agent alone."""
    if l_h < 1:
        raise InvalidLengthError(f"joint episode length must be >= 1, got {l_h}")
    return l_m / l_h - 1.0


def non_goal_displacement(initial: SceneGraph, final: SceneGraph, goal: GoalSpec) -> int:
    """Objects that ended away from their start without serving the goal.

    For each goal predicate, up to its count many objects now placed at
    the predicate's location are goal work; every other object whose
    placement differs from the initial state (including anything still in
    a hand) counts as leftover disturbance.
    """
    first = {o: (rel, tgt) for o, rel, tgt in placements(initial)}
    budget = {pred: c for pred, c in goal.items}
    moved = 0
    for obj, rel, tgt in sorted(placements(final)):
        if first.get(obj) == (rel, tgt):
            continue
        pred_key = None
        for pred, left in budget.items():
            if (
                left > 0
                and pred.relation == rel
                and pred.location == tgt
                and class_of(final, obj) == pred.object_class
            ):
                pred_key = pred
                break
        if pred_key is not None:
            budget[pred_key] -= 1
        else:
            moved += 1
    return moved


def f1_curve(rows: list[dict], l_m: int, buckets: int = F1_BUCKETS) -> tuple | None:
    """Per-episode F1 series on a time axis normalized by the solo length.

    Ticks map to ``buckets`` bins as t/L_M (clamped at the last bin for
    episodes that run longer than the solo baseline).  Bins the episode
    never reached carry the last observed value forward; leading bins
    before the first observation take the first observed value.
    """
    sums = [0.0] * buckets
    counts = [0] * buckets
    for row in rows:
        if row["f1"] is None:
            continue
        b = min(buckets * row["t"] // l_m, buckets - 1)
        sums[b] += row["f1"]
        counts[b] += 1
    if not any(counts):
        return None
    curve: list[float] = []
    last = None
    for b in range(buckets):
        if counts[b]:
            last = sums[b] / counts[b]
        curve.append(last)
    first = next(v for v in curve if v is not None)
    return tuple(first if v is None else v for v in curve)


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size <= 1:
        return float(arr.mean()) if arr.size else 0.0, 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


# -- evaluation ------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeResult:
    template: str
    seed: int
    run: int
    l_m: int
    l_h: int
    completed: bool
    speedup: float
    f1: tuple | None

    def to_json_obj(self) -> dict:
        return {
            "template": self.template,
            "seed": self.seed,
            "run": self.run,
            "L_M": self.l_m,
            "L_H": self.l_h,
            "completed": self.completed,
            "speedup": self.speedup,
            "f1": None if self.f1 is None else list(self.f1),
        }


@dataclass(frozen=True)
class EvalReport:
    helper: str
    split: str
    runs: int
    results: tuple[EpisodeResult, ...]
    mean_speedup: float
    se_speedup: float
    mean_f1: tuple | None
    se_f1: tuple | None

    def to_json_obj(self) -> dict:
        return {
            "helper": self.helper,
            "split": self.split,
            "runs": self.runs,
            "episodes": [r.to_json_obj() for r in self.results],
            "mean_speedup": self.mean_speedup,
            "se_speedup": self.se_speedup,
            "mean_f1": None if self.mean_f1 is None else list(self.mean_f1),
            "se_f1": None if self.se_f1 is None else list(self.se_f1),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n"


def _aggregate(helper: str, split: str, runs: int, results: list[EpisodeResult]) -> EvalReport:
    mean_s, se_s = _mean_se([r.speedup for r in results])
    curves = [r.f1 for r in results if r.f1 is not None]
    mean_f1 = se_f1 = None
    if curves:
        stack = np.asarray(curves, dtype=float)
        mean_f1 = tuple(float(x) for x in stack.mean(axis=0))
        if stack.shape[0] > 1:
            se = stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])
        else:
            se = np.zeros(stack.shape[1])
        se_f1 = tuple(float(x) for x in se)
    return EvalReport(
        helper, split, runs, tuple(results), mean_s, se_s, mean_f1, se_f1
    )


def run_eval(
    root: Path,
    split: str,
    helper: HelperSpec | str,
    runs: int = 3,
    cfg=None,
    keep_records: bool = False,
) -> EvalReport | tuple[EvalReport, list[EpisodeRecord]]:
    """Joint episodes for one helper over a split, aggregated.

    Each run of an episode reseeds only the helper; the apartment, goal,
    and solo length come from the dataset, so speedups pair each joint
    run against the same seed's solo baseline.
    """
    spec = HelperSpec.parse(helper) if isinstance(helper, str) else helper
    episodes = load_episodes(root, split)
    net = None
    if spec.needs_gpn:
        path = checkpoint_path(root, spec.gpn_tag)
        if not path.exists():
            raise FileNotFoundError(
                f"helper {spec.label!r} needs checkpoint {path} (run train-gpn first)"
            )
        net = load_checkpoint(path)
    results: list[EpisodeResult] = []
    records: list[EpisodeRecord] = []
    for ep in episodes:
        state, goal = build_episode(ep.template, ep.seed)
        if state_hash(state) != ep.start_hash:
            raise ValueError(
                f"dataset entry {ep.template}/{ep.seed} does not match its stored state"
            )
        vocab = PredicateVocabulary.from_state(state)
        for run in range(runs):
            controller = make_helper(
                spec, state=state, goal=goal, net=net, vocab=vocab, cfg=cfg,
                seed=ep.seed * runs + run,
            )
            rec = run_episode(
                state, goal, HpMainController(goal), controller,
                meta={
                    "template": ep.template, "seed": ep.seed,
                    "run": run, "helper": spec.label,
                },
            )
            l_h = rec.header["length"] if rec.header["completed"] else MAX_TICKS
            results.append(
                EpisodeResult(
                    ep.template, ep.seed, run, ep.length, l_h,
                    rec.header["completed"],
                    compute_speedup(ep.length, l_h),
                    f1_curve(rec.rows, ep.length),
                )
            )
            if keep_records:
                records.append(rec)
        log.info("%s %s/%s done", spec.label, ep.template, ep.seed)
    report = _aggregate(spec.label, split, runs, results)
    return (report, records) if keep_records else report


# -- report files ----------------------------------------------------------------


def write_report(report: EvalReport, out_dir: Path) -> list[Path]:
    """Persist a report as JSON + CSVs and render the matching figures."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / "report.json"]
    paths[0].write_text(report.to_json())

    episodes_csv = out_dir / "episodes.csv"
    with open(episodes_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["template", "seed", "run", "L_M", "L_H", "completed", "speedup"])
        for r in report.results:
            w.writerow(
                [r.template, r.seed, r.run, r.l_m, r.l_h, int(r.completed), r.speedup]
            )
    paths.append(episodes_csv)

    curve_csv = out_dir / "f1_curve.csv"
    with open(curve_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bucket", "t_normalized", "mean_f1", "se_f1"])
        if report.mean_f1 is not None:
            n = len(report.mean_f1)
            for b, (m, s) in enumerate(zip(report.mean_f1, report.se_f1)):
                w.writerow([b, (b + 0.5) / n, m, s])
    paths.append(curve_csv)
    paths.extend(_write_figures(report, out_dir))
    return paths


def _write_figures(report: EvalReport, out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(report.results))
    ax.bar(xs, [r.speedup for r in report.results], color="#4878cf")
    ax.axhline(report.mean_speedup, color="#d65f5f", linewidth=1.5,
               label=f"mean {report.mean_speedup:+.3f}")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("episode x run")
    ax.set_ylabel("speedup")
    ax.set_title(f"{report.helper} on {report.split}")
    ax.legend()
    fig.tight_layout()
    p = out_dir / "speedups.png"
    fig.savefig(p, dpi=120, metadata={"Software": None})
    plt.close(fig)
    paths.append(p)

    if report.mean_f1 is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        n = len(report.mean_f1)
        xs = (np.arange(n) + 0.5) / n
        mean = np.asarray(report.mean_f1)
        se = np.asarray(report.se_f1)
        ax.plot(xs, mean, color="#4878cf", label="mean F1")
        ax.fill_between(xs, mean - se, mean + se, color="#4878cf", alpha=0.25,
                        label="±1 SE")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("normalized time (t / L_M)")
        ax.set_ylabel("goal F1")
        ax.set_title(f"{report.helper} on {report.split}")
        ax.legend()
        fig.tight_layout()
        p = out_dir / "f1_curve.png"
        fig.savefig(p, dpi=120, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    return paths
