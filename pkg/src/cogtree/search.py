"""Tree-search driver: candidate generation, verdict-guided selection,
termination, multi-rollout execution, and task-level answers.

One step works on a target text (the root query at first, then whatever
the committed decomposition left unresolved): retrieve in-context
examples, sample `beam` candidate decompositions, parse and score each,
and commit the best non-impossible candidate. Every scored candidate is
kept in the tree, committed or not. A rollout ends when a committed
candidate carries the end marker, when the step budget runs out, or when
a whole beam is judged impossible.

Logic queries are judged provable when at least one of the independent
rollouts finishes on the end marker and the whole-chain verdict is sure;
math answers come from sequentially answering the planned sub-questions
and majority-voting across rollouts.
"""

from __future__ import annotations

import enum
import logging
import re
from collections import Counter
from dataclasses import dataclass, replace

from .backends import GenerationRequest
from .core import (
    CognitiveTree,
    Decomposition,
    Label,
    Mode,
    Query,
    ReasoningChain,
    State,
    Verdict,
    parse_decomposition,
)
from .errors import NoAnswerExtracted, ParseFailure
from .retrieval import ExampleIndex, assemble_prompt

log = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    beam: int = 3
    k_examples: int = 5
    rollouts: int = 5
    max_steps: int = 20
    mode: Mode = Mode.LOGIC
    seed: int = 0
    temperature: float = 0.7
    max_tokens: int = 128
    backtrack: bool = False
    examples_reversed: bool = False

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        for name in ("beam", "k_examples", "rollouts", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "beam": self.beam,
            "k_examples": self.k_examples,
            "rollouts": self.rollouts,
            "max_steps": self.max_steps,
            "mode": self.mode.value,
            "seed": self.seed,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "backtrack": self.backtrack,
            "examples_reversed": self.examples_reversed,
        }


@dataclass
class SearchDeps:
    """Shared, immutable-during-search collaborators of the driver."""

    index: ExampleIndex
    backend: object
    scorer: object  # anything with score_state(state, backend) / score_chain(chain, backend)


class TerminalReason(str, enum.Enum):
    END_MARKER = "end_marker"
    MAX_STEPS = "max_steps"
    ALL_IMPOSSIBLE = "all_impossible"


@dataclass
class RolloutResult:
    tree: CognitiveTree
    chain: ReasoningChain
    overall: Verdict | None
    terminal_reason: TerminalReason
    answer: float | None = None
    expansions: int = 0


def normalize_statement(text: str) -> str:
    """Case-fold, collapse whitespace and drop a trailing period, so that
    surface variants of the same statement compare equal."""
    folded = " ".join(text.casefold().split())
    return folded[:-1] if folded.endswith(".") else folded


def leaf_check_logic(state: State, theory) -> bool:
    """True when every decomposition part normalizes into the theory set,
    i.e. the node is directly answerable."""
    members = {normalize_statement(t) for t in theory}
    return all(normalize_statement(p) in members for p in state.decomposition.parts)


def _verdict_rank(verdict: Verdict, gen_idx: int):
    # sure beats likely beats impossible; then winning-class probability;
    # then generation order
    return (int(verdict.label), -verdict.confidence, gen_idx)


def expand_step(
    query_state: State,
    index: ExampleIndex,
    backend,
    scorer,
    cfg: SearchConfig,
    parent_id: int = 0,
    gen_seed: int | None = None,
) -> list[tuple[State, Verdict]]:
    """One expansion of `query_state.query`: retrieve, generate a beam of
    candidate decompositions, parse, score, and return them best first.

    Unparseable candidates are dropped with a warning; ParseFailure is
    raised only when nothing survives.
    """
    query_emb = backend.embed(query_state.query)
    examples = index.retrieve_top_k(query_emb, cfg.k_examples)
    if cfg.examples_reversed:
        examples = examples[::-1]
    prompt = assemble_prompt(examples, query_state.query)
    result = backend.generate(
        GenerationRequest(
            prompt=prompt,
            n=cfg.beam,
            max_tokens=cfg.max_tokens,
            temperature=cfg.temperature,
            seed=cfg.seed if gen_seed is None else gen_seed,
        )
    )
    scored: list[tuple[State, Verdict, int]] = []
    for gen_idx, text in enumerate(result.texts):
        try:
            decomposition = parse_decomposition(text)
        except ParseFailure:
            log.warning("dropping unparseable candidate %d: %r", gen_idx, text[:80])
            continue
        child = State(
            query=query_state.query,
            decomposition=decomposition,
            depth=query_state.depth + 1,
            parent=parent_id,
        )
        scored.append((child, scorer.score_state(child, backend), gen_idx))
    if not scored:
        raise ParseFailure(f"all {cfg.beam} candidates failed to parse")
    scored.sort(key=lambda item: _verdict_rank(item[1], item[2]))
    return [(state, verdict) for state, verdict, _ in scored]


def _math_target(question: str, parts_so_far: list[str]) -> str:
    if not parts_so_far:
        return question
    lines = [question, "Sub-questions so far:"]
    lines += [f"{i}. {p}" for i, p in enumerate(parts_so_far, 1)]
    return "\n".join(lines)


def logic_target(goal: str, theory) -> str:
    """The generation/embedding text for a logic step: provability is
    relative to the theory, so the backend sees both."""
    return f"{goal}\nTheory: {'; '.join(theory)}"


def initial_target(query: Query) -> str:
    if query.mode is Mode.LOGIC:
        return logic_target(query.text, query.theory)
    return query.text


def _next_target(query: Query, committed: State, target: str, parts_so_far: list[str]) -> str:
    if query.mode is Mode.MATH:
        return _math_target(query.text, parts_so_far)
    members = {normalize_statement(t) for t in query.theory}
    for part in committed.decomposition.parts:
        if normalize_statement(part) not in members:
            return logic_target(part, query.theory)
    return target  # fully grounded in the theory; terminal expected


def run_rollout(
    query: Query, deps: SearchDeps, cfg: SearchConfig, rollout_index: int = 0
) -> RolloutResult:
    """One complete tree-construction attempt.

    Greedy over each step's scored beam, skipping impossible candidates.
    With cfg.backtrack, a dead end falls back to the best unexplored
    sibling instead of terminating; the generation budget is unaffected
    since siblings were already scored. `rollout_index` varies the
    generation seed so seed-honoring backends still sample distinct
    rollouts.
    """
    target = initial_target(query)
    root = State(query=target, decomposition=Decomposition.trivial(query.text))
    tree = CognitiveTree(root)
    committed_id = tree.root
    parts_so_far: list[str] = []
    # per-level viable-but-not-chosen siblings, for optional backtracking:
    # (node id, state, verdict, target the level was expanded from, plan prefix)
    alternatives: list[list[tuple[int, State, Verdict, str, list[str]]]] = []
    reason = TerminalReason.MAX_STEPS
    overall: Verdict | None = None
    expansions = 0

    gen_seed = cfg.seed + rollout_index
    while expansions < cfg.max_steps:
        probe = tree.nodes[committed_id]
        if probe.query != target:
            probe = replace(probe, query=target)
        candidates = expand_step(
            probe, deps.index, deps.backend, deps.scorer, cfg, committed_id, gen_seed=gen_seed
        )
        expansions += 1
        node_ids = [tree.add_child(committed_id, state, verdict) for state, verdict in candidates]
        viable = [
            (nid, state, verdict)
            for nid, (state, verdict) in zip(node_ids, candidates)
            if verdict.label is not Label.IMPOSSIBLE
        ]
        if not viable:
            fallback = _pop_alternative(alternatives) if cfg.backtrack else None
            if fallback is None:
                reason = TerminalReason.ALL_IMPOSSIBLE
                break
            committed_id, target, parts_so_far = _take(fallback, query)
            if tree.nodes[committed_id].decomposition.terminal:
                reason = TerminalReason.END_MARKER
                break
            continue
        best_id, best_state, _ = viable[0]
        alternatives.append(
            [(nid, st, vd, target, list(parts_so_far)) for nid, st, vd in viable[1:]]
        )
        parts_so_far = parts_so_far + list(best_state.decomposition.parts)
        committed_id = best_id
        if best_state.decomposition.terminal:
            reason = TerminalReason.END_MARKER
            break
        target = _next_target(query, best_state, target, parts_so_far)

    chain = tree.extract_chain(committed_id)
    if reason is TerminalReason.END_MARKER:
        overall = deps.scorer.score_chain(chain, deps.backend)
        chain.overall = overall
    return RolloutResult(
        tree=tree,
        chain=chain,
        overall=overall,
        terminal_reason=reason,
        expansions=expansions,
    )


def _pop_alternative(alternatives):
    while alternatives:
        level = alternatives[-1]
        if level:
            return level.pop(0)
        alternatives.pop()
    return None


def _take(fallback, query: Query):
    nid, state, _verdict, level_target, level_parts = fallback
    parts = level_parts + list(state.decomposition.parts)
    target = _next_target(query, state, level_target, parts)
    return nid, target, parts


def run_rollouts(query: Query, deps: SearchDeps, cfg: SearchConfig) -> list[RolloutResult]:
    """cfg.rollouts independent rollouts, merged in rollout order."""
    return [run_rollout(query, deps, cfg, rollout_index=i) for i in range(cfg.rollouts)]


def decide_provable(results: list[RolloutResult]) -> bool:
    return any(
        r.terminal_reason is TerminalReason.END_MARKER
        and r.overall is not None
        and r.overall.label is Label.SURE
        for r in results
    )


def judge_logic(query: Query, deps: SearchDeps, cfg: SearchConfig) -> bool:
    """Provable iff any rollout finished on the end marker with a sure
    whole-chain verdict."""
    if query.mode is not Mode.LOGIC:
        raise ValueError("judge_logic requires a logic-mode query")
    return decide_provable(run_rollouts(query, deps, cfg))


_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


def parse_last_number(text: str) -> float | None:
    """The last numeric token in `text`, commas stripped; None if absent."""
    matches = _NUMBER.findall(text.replace(",", ""))
    return float(matches[-1]) if matches else None


def answer_subquestions(question: str, subquestions: list[str], backend) -> tuple[float | None, list[str]]:
    """Answer planned sub-questions in order, each answer appended to the
    context of the next. Returns (last answer's number, answer texts)."""
    context = [f"Question: {question}"]
    answers: list[str] = []
    for k, subq in enumerate(subquestions, 1):
        prompt = "\n".join(context) + f"\nSub-question {k}: {subq}\nAnswer {k}:"
        result = backend.generate(
            GenerationRequest(prompt=prompt, n=1, max_tokens=64, temperature=0.0, stop=("\n",))
        )
        answer_text = result.texts[0].strip()
        answers.append(answer_text)
        context.append(f"Sub-question {k}: {subq}")
        context.append(f"Answer {k}: {answer_text}")
    if not answers:
        return None, answers
    return parse_last_number(answers[-1]), answers


def majority_answer(results: list[RolloutResult]) -> float | None:
    """Majority vote over rollout answers: sure-chain rollouts first,
    falling back to all rollouts; ties break toward the smallest value."""
    sure_answers = [
        r.answer
        for r in results
        if r.answer is not None and r.overall is not None and r.overall.label is Label.SURE
    ]
    all_answers = [r.answer for r in results if r.answer is not None]
    pool = sure_answers or all_answers
    if not pool:
        return None
    counts = Counter(pool)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


def try_solve_math(query: Query, deps: SearchDeps, cfg: SearchConfig) -> tuple[float | None, list[RolloutResult]]:
    """solve_math without the failure exception: the answer slot is None
    when no rollout yields a parseable number."""
    if query.mode is not Mode.MATH:
        raise ValueError("solve_math requires a math-mode query")
    results = run_rollouts(query, deps, cfg)
    for result in results:
        if result.terminal_reason is not TerminalReason.END_MARKER:
            continue
        subquestions = [p for step in result.chain.steps[1:] for p in step.decomposition.parts]
        result.answer, _ = answer_subquestions(query.text, subquestions, deps.backend)
    return majority_answer(results), results


def solve_math(query: Query, deps: SearchDeps, cfg: SearchConfig) -> tuple[float, list[RolloutResult]]:
    """Plan sub-questions with rollouts, answer them sequentially, then
    majority-vote: first among sure-chain rollouts, falling back to all
    rollouts, ties broken by the smallest value."""
    answer, results = try_solve_math(query, deps, cfg)
    if answer is None:
        raise NoAnswerExtracted(f"query {query.id}: no rollout produced a numeric answer")
    return answer, results


def solve_math_direct(query: Query, deps: SearchDeps, cfg: SearchConfig) -> float | None:
    """Ablation path: answer the original question in a single generation,
    no decomposition, no verdicts."""
    result = deps.backend.generate(
        GenerationRequest(
            prompt=f"Question: {query.text}\nAnswer:",
            n=1,
            max_tokens=64,
            temperature=0.0,
            stop=("\n",),
        )
    )
    return parse_last_number(result.texts[0])
