"""Evaluation harness: accuracy over judgment tasks, failure histograms,
per-chain-length accuracy, and the loss-mixing-weight sweep.

Logic evaluation is adversarially paired: every provable sample yields two
judgment tasks, its own goal (expected provable) and the most
embedding-similar other goal under the same theory (expected not
provable). The headline accuracy is the fraction of correct judgments;
pair-level accuracy (both judgments right) is reported alongside. Math
accuracy compares the extracted answer against gold at 1e-6 relative
tolerance.

Reports are plain JSON with deterministic bytes given seed, config and a
deterministic backend, plus flat CSV companions for external plotting.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .core import Label, Mode, Query
from .datasets import LogicSample, pair_adversarial_negatives
from .errors import BackendUnavailable, ConfigError
from .reflective import ScorerParams, score_state
from .search import (
    RolloutResult,
    SearchConfig,
    SearchDeps,
    TerminalReason,
    decide_provable,
    run_rollouts,
    try_solve_math,
)
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

#: relative tolerance for math answer comparison
ANSWER_RTOL = 1e-6


@dataclass
class FailureRecord:
    """One evaluated task's representative rollout, for histogramming."""

    rollout: RolloutResult
    succeeded: bool
    gold_steps: list[str] | None = None


def failure_histogram(records: list[FailureRecord]) -> dict[int, int]:
    """Count, per step index, where failed tasks went wrong.

    With a gold plan the index is the first committed step that diverged
    from it (or the step after the last match when the chain stopped
    short). Without one, failures attribute to the terminal step.
    """
    if not records:
        raise ValueError("no records to histogram")
    counts: dict[int, int] = {}
    for record in records:
        if record.succeeded:
            continue
        committed = [s.decomposition.raw_text for s in record.rollout.chain.steps[1:]]
        if record.gold_steps is not None:
            step = len(committed) + 1
            for i, (got, want) in enumerate(zip(committed, record.gold_steps), 1):
                if got != want:
                    step = i
                    break
            else:
                if len(committed) > len(record.gold_steps):
                    step = len(record.gold_steps) + 1
        else:
            step = max(1, len(committed))
        counts[step] = counts.get(step, 0) + 1
    return dict(sorted(counts.items()))


@dataclass
class EvalReport:
    dataset: str
    mode: str
    n: int
    accuracy: float
    per_step_failures: dict[int, int]
    per_chain_length_accuracy: dict[int, float]
    config_snapshot: dict
    seed: int
    paired_accuracy: float | None = None
    partial: bool = False
    records: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "mode": self.mode,
            "n": self.n,
            "accuracy": self.accuracy,
            "per_step_failures": {str(k): v for k, v in self.per_step_failures.items()},
            "per_chain_length_accuracy": {
                str(k): v for k, v in self.per_chain_length_accuracy.items()
            },
            "config_snapshot": self.config_snapshot,
            "seed": self.seed,
            "paired_accuracy": self.paired_accuracy,
            "partial": self.partial,
            "records": self.records,
        }

    @staticmethod
    def from_dict(obj: dict) -> "EvalReport":
        return EvalReport(
            dataset=obj["dataset"],
            mode=obj["mode"],
            n=obj["n"],
            accuracy=obj["accuracy"],
            per_step_failures={int(k): v for k, v in obj["per_step_failures"].items()},
            per_chain_length_accuracy={
                int(k): v for k, v in obj["per_chain_length_accuracy"].items()
            },
            config_snapshot=obj["config_snapshot"],
            seed=obj["seed"],
            paired_accuracy=obj.get("paired_accuracy"),
            partial=obj.get("partial", False),
            records=obj.get("records", []),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        """Write the JSON report plus flat CSV companions
        (<stem>.failures.csv and <stem>.lengths.csv)."""
        path = Path(path)
        path.write_text(self.dumps(), encoding="utf-8")
        stem = path.with_suffix("")
        with open(f"{stem}.failures.csv", "w", encoding="utf-8") as fh:
            fh.write("step,count\n")
            for step in sorted(self.per_step_failures):
                fh.write(f"{step},{self.per_step_failures[step]}\n")
        with open(f"{stem}.lengths.csv", "w", encoding="utf-8") as fh:
            fh.write("chain_length,accuracy\n")
            for length in sorted(self.per_chain_length_accuracy):
                fh.write(f"{length},{self.per_chain_length_accuracy[length]!r}\n")


def _chain_summary(result: RolloutResult, with_traces: bool) -> dict:
    out = {
        "terminal_reason": result.terminal_reason.value,
        "overall": None if result.overall is None else result.overall.label.name.lower(),
        "chain_length": len(result.chain.steps),
        "expansions": result.expansions,
        "answer": result.answer,
    }
    if with_traces:
        out["steps"] = [s.decomposition.raw_text for s in result.chain.steps[1:]]
        out["step_verdicts"] = [v.label.name.lower() for v in result.chain.step_verdicts[1:]]
    return out


def _representative(results: list[RolloutResult], judged: bool) -> RolloutResult:
    if judged:
        for r in results:
            if (
                r.terminal_reason is TerminalReason.END_MARKER
                and r.overall is not None
                and r.overall.label is Label.SURE
            ):
                return r
    return results[0]


def _run_task(task, deps: SearchDeps, cfg: SearchConfig):
    """One judgment task -> (sample_id, ok, representative, record fields)."""
    task_id, payload, expected = task
    if cfg.mode is Mode.LOGIC:
        sample_id, goal, theory = payload
        query = Query(id=task_id, text=goal, mode=Mode.LOGIC, theory=tuple(theory))
        results = run_rollouts(query, deps, cfg)
        judged = decide_provable(results)
        ok = judged == expected
        rep = _representative(results, judged)
        extra = {"expected_provable": expected, "judged_provable": judged}
    else:
        query = Query(
            id=task_id, text=payload.question, mode=Mode.MATH,
            gold_answer=payload.answer, theory=None,
        )
        answer, results = try_solve_math(query, deps, cfg)
        gold = payload.answer
        ok = answer is not None and abs(answer - gold) <= ANSWER_RTOL * max(1.0, abs(gold))
        rep = _representative(results, False)
        sample_id = payload.id
        extra = {"gold_answer": payload.answer, "answer": answer}
    return sample_id, ok, rep, results, extra


def evaluate(
    samples,
    deps: SearchDeps,
    cfg: SearchConfig,
    dataset_name: str,
    with_traces: bool = True,
    gold_plans: dict[str, list[str]] | None = None,
    pairs: list[tuple[str, str]] | None = None,
    workers: int = 1,
) -> EvalReport:
    """Run the full pipeline over a corpus and assemble a report.

    Tasks may run on `workers` threads (the shared deps are immutable and
    backends bound their own in-flight requests); assembly is always in
    task order, so the report is deterministic whenever the scorer is. On
    a backend outage the partial report is returned with partial=True
    rather than losing completed work.
    """
    if cfg.mode is Mode.LOGIC:
        tasks = _logic_tasks(samples, deps, pairs)
    else:
        tasks = [(s.id, s, None) for s in samples]
    records: list[dict] = []
    failure_records: list[FailureRecord] = []
    length_totals: dict[int, list[int]] = {}
    correct = 0
    paired_correct: dict[str, list[bool]] = {}
    partial = False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_task, task, deps, cfg) for task in tasks]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except BackendUnavailable as exc:
                    log.error("backend failed: %s; flushing partial report", exc)
                    outcomes.append(None)
    else:
        outcomes = []
        for task in tasks:
            try:
                outcomes.append(_run_task(task, deps, cfg))
            except BackendUnavailable as exc:
                log.error(
                    "backend failed at task %s: %s; flushing partial report", task[0], exc
                )
                outcomes.append(None)
                break

    for task, outcome in zip(tasks, outcomes):
        if outcome is None:
            partial = True
            break
        task_id, _payload, expected = task
        sample_id, ok, rep, results, extra = outcome
        correct += ok
        paired_correct.setdefault(sample_id, []).append(ok)
        gold_steps = None
        if gold_plans is not None and (cfg.mode is Mode.MATH or expected):
            # a gold plan only explains the positive judgment of its sample
            gold_steps = gold_plans.get(sample_id)
        failure_records.append(FailureRecord(rollout=rep, succeeded=ok, gold_steps=gold_steps))
        length_totals.setdefault(len(rep.chain.steps), []).append(int(ok))
        records.append(
            {
                "task_id": task_id,
                "correct": ok,
                "rollouts": [_chain_summary(r, with_traces) for r in results],
                **extra,
            }
        )

    n = len(records)
    histogram = failure_histogram(failure_records) if failure_records else {}
    paired = None
    if cfg.mode is Mode.LOGIC and paired_correct:
        both = [all(v) for v in paired_correct.values() if len(v) == 2]
        paired = (sum(both) / len(both)) if both else None
    return EvalReport(
        dataset=dataset_name,
        mode=cfg.mode.value,
        n=n,
        accuracy=(correct / n) if n else 0.0,
        per_step_failures=histogram,
        per_chain_length_accuracy={
            k: sum(v) / len(v) for k, v in sorted(length_totals.items())
        },
        config_snapshot=cfg.to_dict(),
        seed=cfg.seed,
        paired_accuracy=paired,
        partial=partial,
        records=records,
    )


def _logic_tasks(samples: list[LogicSample], deps: SearchDeps, pairs):
    by_id = {s.id: s for s in samples}
    if pairs is None:
        pairs = pair_adversarial_negatives(samples, deps.backend)
    tasks = []
    for provable_id, negative_id in pairs:
        sample = by_id[provable_id]
        negative_goal = by_id[negative_id].goal
        tasks.append((provable_id, (provable_id, sample.goal, sample.theory), True))
        tasks.append((f"{provable_id}::neg", (provable_id, negative_goal, sample.theory), False))
    return tasks


def lambda_sweep(
    values,
    init: ScorerParams,
    train_items,
    val_items,
    cfg: TrainConfig,
) -> list[tuple[float, float]]:
    """Train one scorer per mixing weight on identical data and seed and
    measure validation label accuracy. Returns (weight, accuracy) rows."""
    if not values:
        raise ConfigError("sweep needs at least one mixing-weight value")
    unique = []
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"mixing weight {v} outside [0, 1]")
        if v in unique:
            log.warning("duplicate sweep value %s dropped", v)
        else:
            unique.append(v)
    rows = []
    for lam in unique:
        run_cfg = TrainConfig(
            lam=lam,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            tau=cfg.tau,
            patience=cfg.patience,
        )
        trained, _ = train(init, train_items, run_cfg, val_items=val_items)
        rows.append((lam, label_accuracy(trained, val_items)))
    return rows


def label_accuracy(params: ScorerParams, items) -> float:
    """Fraction of items whose head verdict matches their label."""
    hits = 0
    for item in items:
        _, verdict = score_state(params, item.anchor)
        hits += int(verdict.label) == item.label
    return hits / len(items)


def sweep_to_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("lambda,val_accuracy\n")
        for lam, acc in rows:
            fh.write(f"{lam!r},{acc!r}\n")
