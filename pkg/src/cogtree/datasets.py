"""Corpus ingestion and validation for the two task families, plus the
adversarial pairing used by logic evaluation.

File formats (UTF-8 JSONL, one object per line):

* logic:  {"id", "goal", "theory": [str], "proof_steps":
  [{"premises": [int], "conclusion": str}], "provable": bool}
  Premise indices address the theory list first, then earlier step
  conclusions (theory-relative virtual indices).
* math:   {"id", "question", "answer": number, "solution_steps": [str]}

Serialization is canonical (fixed key order), so load -> save is a fixed
point and byte-identical round-trips are testable.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvariantViolation, NoNegativesAvailable, ParseError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProofStep:
    premises: tuple[int, ...]
    conclusion: str


@dataclass(frozen=True)
class LogicSample:
    id: str
    goal: str
    theory: tuple[str, ...]
    proof_steps: tuple[ProofStep, ...]
    provable: bool


@dataclass(frozen=True)
class MathSample:
    id: str
    question: str
    answer: float
    solution_steps: tuple[str, ...]


@dataclass(frozen=True)
class SplitStats:
    split: str
    count: int
    max_steps: int
    avg_steps: float


def _stats(split: str, step_counts) -> SplitStats:
    return SplitStats(
        split=split,
        count=len(step_counts),
        max_steps=max(step_counts),
        avg_steps=float(np.mean(step_counts)),
    )


def _split_of(path, split: str | None) -> str:
    if split is not None:
        return split
    # eb.test.jsonl -> "test"; anything else keeps its stem
    parts = Path(path).stem.split(".")
    return parts[-1] if len(parts) > 1 else parts[0]


def _iter_jsonl(path):
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), line=lineno) from exc


def load_logic(path, split: str | None = None, allow_empty: bool = False):
    """Load and validate a logic corpus. Returns (samples, stats)."""
    samples: list[LogicSample] = []
    seen_ids: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        try:
            sample = LogicSample(
                id=str(obj["id"]),
                goal=obj["goal"],
                theory=tuple(obj["theory"]),
                proof_steps=tuple(
                    ProofStep(premises=tuple(s["premises"]), conclusion=s["conclusion"])
                    for s in obj["proof_steps"]
                ),
                provable=bool(obj["provable"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad logic sample: {exc}", line=lineno) from exc
        _validate_logic(sample)
        if sample.id in seen_ids:
            raise InvariantViolation("duplicate id", sample_id=sample.id)
        seen_ids.add(sample.id)
        samples.append(sample)
    if not samples:
        if allow_empty:
            log.warning("empty logic corpus at %s", path)
            return [], SplitStats(_split_of(path, split), 0, 0, 0.0)
        raise ParseError(f"no samples in {path}")
    stats = _stats(_split_of(path, split), [len(s.proof_steps) for s in samples])
    return samples, stats


def _validate_logic(sample: LogicSample) -> None:
    if not sample.goal or not sample.theory:
        raise InvariantViolation("goal and theory must be non-empty", sample_id=sample.id)
    if sample.provable != bool(sample.proof_steps):
        raise InvariantViolation(
            "proof_steps must be non-empty exactly when provable", sample_id=sample.id
        )
    for step_idx, step in enumerate(sample.proof_steps):
        limit = len(sample.theory) + step_idx
        for p in step.premises:
            if not 0 <= p < limit:
                raise InvariantViolation(
                    f"premise index {p} out of range at step {step_idx}", sample_id=sample.id
                )


def load_math(path, split: str | None = None, allow_empty: bool = False):
    """Load and validate a math corpus. Returns (samples, stats)."""
    samples: list[MathSample] = []
    seen_ids: set[str] = set()
    split_name = _split_of(path, split)
    for lineno, obj in _iter_jsonl(path):
        try:
            answer = obj["answer"]
            if isinstance(answer, bool) or not isinstance(answer, (int, float)):
                raise TypeError(f"answer must be a number, got {answer!r}")
            sample = MathSample(
                id=str(obj["id"]),
                question=obj["question"],
                answer=float(answer),
                solution_steps=tuple(obj["solution_steps"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad math sample: {exc}", line=lineno) from exc
        if not sample.question:
            raise InvariantViolation("question must be non-empty", sample_id=sample.id)
        if not np.isfinite(sample.answer):
            raise InvariantViolation("answer must be finite", sample_id=sample.id)
        if split_name == "train" and not sample.solution_steps:
            raise InvariantViolation("train samples need solution steps", sample_id=sample.id)
        if sample.id in seen_ids:
            raise InvariantViolation("duplicate id", sample_id=sample.id)
        seen_ids.add(sample.id)
        samples.append(sample)
    if not samples:
        if allow_empty:
            log.warning("empty math corpus at %s", path)
            return [], SplitStats(split_name, 0, 0, 0.0)
        raise ParseError(f"no samples in {path}")
    stats = _stats(split_name, [len(s.solution_steps) for s in samples])
    return samples, stats


# -- canonical serialization ---------------------------------------------------

def _num(x: float):
    return int(x) if float(x).is_integer() else float(x)


def save_logic(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "id": s.id,
                        "goal": s.goal,
                        "theory": list(s.theory),
                        "proof_steps": [
                            {"premises": list(st.premises), "conclusion": st.conclusion}
                            for st in s.proof_steps
                        ],
                        "provable": s.provable,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def save_math(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "id": s.id,
                        "question": s.question,
                        "answer": _num(s.answer),
                        "solution_steps": list(s.solution_steps),
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


# -- adversarial pairing -------------------------------------------------------

def pair_adversarial_negatives(samples: list[LogicSample], backend):
    """For each provable sample, pick the other sample whose goal embeds
    closest to it; that goal acts as the non-provable counterpart under the
    sample's own theory.

    Returns [(provable_id, negative_goal_id), ...] in input order. Ties
    break by id order; a goal is never paired with itself.
    """
    if len(samples) < 2:
        raise NoNegativesAvailable("need at least two samples to pair")
    embeddings = [np.asarray(backend.embed(s.goal), dtype=np.float64) for s in samples]
    mat = np.stack(embeddings)
    norms = np.sqrt((mat * mat).sum(axis=1))
    pairs: list[tuple[str, str]] = []
    for i, sample in enumerate(samples):
        if not sample.provable:
            continue
        sims = (mat @ mat[i]) / (norms * norms[i])
        best_j = None
        for j in range(len(samples)):
            if j == i:
                continue
            if (
                best_j is None
                or sims[j] > sims[best_j]
                or (sims[j] == sims[best_j] and samples[j].id < samples[best_j].id)
            ):
                best_j = j
        assert samples[best_j].id != sample.id
        pairs.append((sample.id, samples[best_j].id))
    if not pairs:
        raise NoNegativesAvailable("no provable samples to pair")
    return pairs


def assign_negatives_one_to_one(samples: list[LogicSample], backend, seed: int = 0):
    """Adversarial pairing with each negative goal used at most once while
    the pool lasts (greedy by similarity, falling back to reuse with a log
    line once exhausted). Used when materializing evaluation splits."""
    if len(samples) < 2:
        raise NoNegativesAvailable("need at least two samples to pair")
    embeddings = np.stack([np.asarray(backend.embed(s.goal), dtype=np.float64) for s in samples])
    norms = np.sqrt((embeddings * embeddings).sum(axis=1))
    taken: set[int] = set()
    reused = 0
    pairs: list[tuple[str, str]] = []
    for i, sample in enumerate(samples):
        if not sample.provable:
            continue
        sims = (embeddings @ embeddings[i]) / (norms * norms[i])
        ranked = sorted(
            (j for j in range(len(samples)) if j != i),
            key=lambda j: (-sims[j], samples[j].id),
        )
        pick = next((j for j in ranked if j not in taken), None)
        if pick is None:
            pick = ranked[0]
            reused += 1
        taken.add(pick)
        pairs.append((sample.id, samples[pick].id))
    if reused:
        log.warning("negative pool exhausted; reused %d goals", reused)
    return pairs


def top_decomposition(sample: LogicSample) -> list[str]:
    """The goal's first split: the final proof step's premises rendered as
    text (theory sentences or intermediate conclusions)."""
    if not sample.proof_steps:
        raise InvariantViolation("sample has no proof", sample_id=sample.id)
    resolved: list[str] = list(sample.theory)
    for step in sample.proof_steps:
        resolved.append(step.conclusion)
    last = sample.proof_steps[-1]
    return [resolved[p] for p in last.premises]
