"""Deterministic scripted worlds for exercising the whole pipeline without
a live model.

Each world plants gold decomposition paths inside a ScriptedBackend (keyed
by the exact prompts the driver will assemble), mixes distractor
candidates into every beam, and exposes which states and chains are gold so
scoring policies of known quality can be constructed:

* OracleScorer        - gold states sure, everything else impossible;
* DegradableOracle    - oracle whose sure chain verdicts flip to likely
                        with a configurable probability;
* RandomScorer        - uniform random verdicts, seeded.

Worlds also register class-structured embeddings (gold and distractor
renderings land in separate clusters), so the verdict head is genuinely
trainable on world-derived items. The run_* conventions here must track
search.py: prompts via retrieval + assemble_prompt, state renderings via
reflective.state_embedding_text.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backends import SCRIPTED_DIM, ScriptedBackend
from .core import (
    Decomposition,
    Label,
    ReasoningChain,
    State,
    Verdict,
    parse_decomposition,
    ROOT_VERDICT,
)
from .datasets import LogicSample, MathSample, ProofStep
from .reflective import chain_embedding_text, state_embedding_text
from .retrieval import ExampleIndex, Example, assemble_prompt
from .search import SearchConfig, leaf_check_logic, logic_target
from .trainer import TrainingItem

_SURE = (0.98, 0.01, 0.01)
_LIKELY = (0.01, 0.98, 0.01)
_IMPOSSIBLE = (0.01, 0.01, 0.98)


class OracleScorer:
    """Scoring policy with perfect knowledge of a world's gold paths."""

    def __init__(self, gold_state_texts: set[str], gold_chain_texts: set[str]):
        self.gold_state_texts = set(gold_state_texts)
        self.gold_chain_texts = set(gold_chain_texts)

    def score_state(self, state: State, backend) -> Verdict:
        if state_embedding_text(state) in self.gold_state_texts:
            return Verdict.from_probs(_SURE)
        return Verdict.from_probs(_IMPOSSIBLE)

    def score_chain(self, chain: ReasoningChain, backend) -> Verdict:
        if chain_embedding_text(chain) in self.gold_chain_texts:
            verdict = Verdict.from_probs(_SURE)
        else:
            verdict = Verdict.from_probs(_IMPOSSIBLE)
        chain.overall = verdict
        return verdict


class DegradableOracle:
    """Oracle whose sure chain verdicts degrade to likely with probability
    `flip_p`. Used to show accuracy falls as the judge weakens."""

    def __init__(self, oracle: OracleScorer, flip_p: float, seed: int = 0):
        self.oracle = oracle
        self.flip_p = flip_p
        self.rng = np.random.default_rng(seed)

    def score_state(self, state: State, backend) -> Verdict:
        return self.oracle.score_state(state, backend)

    def score_chain(self, chain: ReasoningChain, backend) -> Verdict:
        verdict = self.oracle.score_chain(chain, backend)
        if verdict.label is Label.SURE and self.rng.random() < self.flip_p:
            verdict = Verdict.from_probs(_LIKELY)
            chain.overall = verdict
        return verdict


class RandomScorer:
    """Uniform random verdicts; deterministic given seed and call order."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def _draw(self) -> Verdict:
        probs = [0.1, 0.1, 0.1]
        probs[int(self.rng.integers(3))] = 0.8
        return Verdict.from_probs(probs)

    def score_state(self, state: State, backend) -> Verdict:
        return self._draw()

    def score_chain(self, chain: ReasoningChain, backend) -> Verdict:
        verdict = self._draw()
        chain.overall = verdict
        return verdict


def _pattern_index(backend: ScriptedBackend, n: int = 8) -> ExampleIndex:
    index = ExampleIndex(dim=backend.dim)
    for k in range(n):
        text = f"pattern query {k}"
        index.add(Example(text, f"pattern decomposition {k}", backend.embed(text)))
    return index


def _script_prompt(backend: ScriptedBackend, index: ExampleIndex, cfg: SearchConfig,
                   target: str, candidates: list[str]) -> None:
    """Register candidates under the exact prompt the driver will build."""
    examples = index.retrieve_top_k(backend.embed(target), cfg.k_examples)
    if cfg.examples_reversed:
        examples = examples[::-1]
    backend.add_completion(assemble_prompt(examples, target), candidates)


def _cluster_vectors(rng: np.random.Generator, dim: int):
    """Two well-separated unit directions for gold and distractor classes."""
    a = rng.standard_normal(dim)
    a /= np.sqrt(a @ a)
    b = rng.standard_normal(dim)
    b -= (b @ a) * a
    b /= np.sqrt(b @ b)
    return a, b


def _noisy(rng: np.random.Generator, center: np.ndarray, scale: float = 0.08) -> np.ndarray:
    vec = center + scale * rng.standard_normal(center.shape[0])
    return vec / np.sqrt(vec @ vec)


@dataclass
class LogicWorld:
    samples: list[LogicSample]
    backend: ScriptedBackend
    index: ExampleIndex
    cfg: SearchConfig
    gold_plans: dict[str, list[str]]  # sample id -> gold raw candidate per step
    gold_state_texts: set[str] = field(default_factory=set)
    gold_chain_texts: set[str] = field(default_factory=set)
    distractor_state_texts: set[str] = field(default_factory=set)

    def oracle(self) -> OracleScorer:
        return OracleScorer(self.gold_state_texts, self.gold_chain_texts)

    def theory_of(self, sample_id: str) -> tuple[str, ...]:
        return next(s.theory for s in self.samples if s.id == sample_id)

    def training_items(self, seed: int = 0, extra_noise_items: int = 8) -> list[TrainingItem]:
        """Labeled embedding items straight from the world's clusters:
        gold renderings are sure anchors carrying distractor negatives,
        distractor renderings are impossible anchors, and a few random
        unit vectors (off-script states) are impossible too."""
        rng = np.random.default_rng(seed)
        distractors = [self.backend.embed(t) for t in sorted(self.distractor_state_texts)]
        items = []
        for text in sorted(self.gold_state_texts):
            picks = rng.choice(len(distractors), size=min(3, len(distractors)), replace=False)
            items.append(
                TrainingItem(
                    anchor=self.backend.embed(text),
                    label=0,
                    negatives=[distractors[i] for i in picks],
                )
            )
        for emb in distractors:
            items.append(TrainingItem(anchor=emb, label=2))
        for k in range(extra_noise_items):
            vec = rng.standard_normal(self.backend.dim)
            items.append(TrainingItem(anchor=vec / np.sqrt(vec @ vec), label=2))
        return items


def build_logic_world(
    n_samples: int = 40,
    seed: int = 0,
    max_gold_len: int = 6,
    cfg: SearchConfig | None = None,
    clustered_embeddings: bool = True,
) -> LogicWorld:
    """Plant one provable goal with a gold path (and one non-provable goal)
    per pair of sample slots.

    Provable sample i: targets goal -> stage 1 -> ... -> stage L-1, where
    each gold candidate names the next stage plus a theory member, and the
    final gold candidate lists the whole theory and ends the rollout.
    Non-provable samples only ever see distractor candidates.
    """
    cfg = cfg or SearchConfig(mode="logic", seed=seed)
    rng = np.random.default_rng(seed)
    backend = ScriptedBackend(fallback_seed=seed)
    index = _pattern_index(backend)
    gold_mu, distract_mu = _cluster_vectors(np.random.default_rng(seed + 1), backend.dim)

    world = LogicWorld(
        samples=[], backend=backend, index=index, cfg=cfg, gold_plans={}
    )

    def register_state(target: str, raw: str, gold: bool) -> State:
        state = State(
            query=target,
            decomposition=parse_decomposition(raw),
            depth=1,  # rendering ignores depth; placeholder parent
            parent=0,
        )
        text = state_embedding_text(state)
        if gold:
            world.gold_state_texts.add(text)
        else:
            world.distractor_state_texts.add(text)
        if clustered_embeddings:
            center = gold_mu if gold else distract_mu
            backend.add_embedding(text, _noisy(rng, center))
        return state

    for i in range(n_samples):
        sid = f"s{i:03d}"
        provable = i % 2 == 0
        theory = tuple(f"fact {i}.{j} holds" for j in range(3))
        goal = f"claim {i} follows"
        root_target = logic_target(goal, theory)
        if not provable:
            candidates = [f"detour {i}.1.{j} stalls\nloose end {i}.1.{j}" for j in range(cfg.beam)]
            for raw in candidates:
                register_state(root_target, raw, gold=False)
            _script_prompt(backend, index, cfg, root_target, candidates)
            world.samples.append(
                LogicSample(id=sid, goal=goal, theory=theory, proof_steps=(), provable=False)
            )
            continue

        length = int(rng.integers(1, max_gold_len + 1))
        stages = [goal] + [f"claim {i} stage {s}" for s in range(1, length)]
        targets = [logic_target(stage, theory) for stage in stages]
        gold_raws = []
        chain_states = [State(query=root_target, decomposition=Decomposition.trivial(goal))]
        for s in range(1, length + 1):
            target = targets[s - 1]
            if s < length:
                raw = f"{stages[s]}\n{theory[0]}"
            else:
                raw = "\n".join(theory) + "\n<END>"
            gold_raws.append(raw)
            chain_states.append(register_state(target, raw, gold=True))
            distractor_raws = [
                f"detour {i}.{s}.{j} stalls\nloose end {i}.{s}.{j}"
                for j in range(cfg.beam - 1)
            ]
            for draw in distractor_raws:
                register_state(target, draw, gold=False)
            candidates = distractor_raws[:]
            candidates.insert(int(rng.integers(len(candidates) + 1)), raw)
            _script_prompt(backend, index, cfg, target, candidates)
        assert leaf_check_logic(chain_states[-1], theory)

        chain = ReasoningChain(steps=chain_states, step_verdicts=[ROOT_VERDICT] * len(chain_states))
        chain_text = chain_embedding_text(chain)
        world.gold_chain_texts.add(chain_text)
        if clustered_embeddings:
            backend.add_embedding(chain_text, _noisy(rng, gold_mu))
        world.gold_plans[sid] = gold_raws

        proof_steps = tuple(
            ProofStep(premises=(0, 1, 2), conclusion=stage)
            for stage in reversed(stages)
        )
        world.samples.append(
            LogicSample(id=sid, goal=goal, theory=theory, proof_steps=proof_steps, provable=True)
        )

    return world


@dataclass
class MathWorld:
    samples: list[MathSample]
    backend: ScriptedBackend
    index: ExampleIndex
    cfg: SearchConfig
    gold_plans: dict[str, list[str]]
    gold_state_texts: set[str] = field(default_factory=set)
    gold_chain_texts: set[str] = field(default_factory=set)
    distractor_state_texts: set[str] = field(default_factory=set)

    def oracle(self) -> OracleScorer:
        return OracleScorer(self.gold_state_texts, self.gold_chain_texts)


#: the canonical word problem used in docs and tests: 48 sold, then half as
#: many, 72 altogether
NATALIA_QUESTION = (
    "Natalia sold clips to 48 of her friends in April, and then she sold half "
    "as many clips in May. How many clips did Natalia sell altogether in April and May?"
)
NATALIA_SUBQUESTIONS = [
    "How many clips did Natalia sell in May?",
    "How many clips did Natalia sell altogether in April and May?",
]
NATALIA_SUBANSWERS = ["24", "72"]
NATALIA_ANSWER = 72.0


def build_math_world(
    n_questions: int = 20,
    seed: int = 0,
    cfg: SearchConfig | None = None,
    direct_wrong_rate: float = 0.7,
) -> MathWorld:
    """Two-step word problems with planted plans and sub-answers.

    Question 0 is the canonical clip-sales problem; the rest are templated
    start/gain/double problems. The direct (no decomposition) completion is
    wrong for `direct_wrong_rate` of the questions, so decomposition
    measurably helps on this world by construction.
    """
    cfg = cfg or SearchConfig(mode="math", seed=seed)
    rng = np.random.default_rng(seed)
    backend = ScriptedBackend(fallback_seed=seed)
    index = _pattern_index(backend)
    gold_mu, distract_mu = _cluster_vectors(np.random.default_rng(seed + 1), backend.dim)
    world = MathWorld(samples=[], backend=backend, index=index, cfg=cfg, gold_plans={})
    n_wrong = int(round(direct_wrong_rate * n_questions))

    def register_state(target: str, raw: str, gold: bool) -> State:
        state = State(query=target, decomposition=parse_decomposition(raw), depth=1, parent=0)
        text = state_embedding_text(state)
        (world.gold_state_texts if gold else world.distractor_state_texts).add(text)
        backend.add_embedding(text, _noisy(rng, gold_mu if gold else distract_mu))
        return state

    for i in range(n_questions):
        qid = f"m{i:03d}"
        if i == 0:
            question = NATALIA_QUESTION
            subqs = list(NATALIA_SUBQUESTIONS)
            subanswers = list(NATALIA_SUBANSWERS)
            answer = NATALIA_ANSWER
            steps = subqs
        else:
            a = int(rng.integers(3, 60))
            b = int(rng.integers(2, 40))
            question = (
                f"A stall starts the day with {a} apples and buys {b} more, then "
                f"doubles its stock. How many apples does the stall end with?"
            )
            subqs = [
                f"How many apples after buying {b} more?",
                "How many apples after doubling the stock?",
            ]
            subanswers = [str(a + b), str(2 * (a + b))]
            answer = float(2 * (a + b))
            steps = subqs

        plan_raws = [subqs[0], subqs[1] + "\n<END>"]
        targets = [question, _math_plan_target(question, [subqs[0]])]
        chain_states = [State(query=question, decomposition=Decomposition.trivial(question))]
        for s, (target, raw) in enumerate(zip(targets, plan_raws), 1):
            chain_states.append(register_state(target, raw, gold=True))
            distractor_raws = [f"What color is distraction {i}.{s}.{j}?" for j in range(cfg.beam - 1)]
            for draw in distractor_raws:
                register_state(target, draw, gold=False)
            candidates = distractor_raws[:]
            candidates.insert(int(rng.integers(len(candidates) + 1)), raw)
            _script_prompt(backend, index, cfg, target, candidates)

        chain = ReasoningChain(steps=chain_states, step_verdicts=[ROOT_VERDICT] * len(chain_states))
        chain_text = chain_embedding_text(chain)
        world.gold_chain_texts.add(chain_text)
        backend.add_embedding(chain_text, _noisy(rng, gold_mu))

        # phase-2 answer script, chained exactly the way the driver prompts
        context = [f"Question: {question}"]
        for k, (sq, ans) in enumerate(zip(subqs, subanswers), 1):
            prompt = "\n".join(context) + f"\nSub-question {k}: {sq}\nAnswer {k}:"
            backend.add_completion(prompt, [f" {ans}"])
            context.append(f"Sub-question {k}: {sq}")
            context.append(f"Answer {k}: {ans}")

        direct_prompt = f"Question: {question}\nAnswer:"
        direct_wrong = i < n_wrong if i > 0 else True
        direct_value = answer + 13 if direct_wrong else answer
        backend.add_completion(direct_prompt, [f" {direct_value:g}"])

        world.gold_plans[qid] = plan_raws
        world.samples.append(
            MathSample(id=qid, question=question, answer=answer, solution_steps=tuple(steps))
        )

    return world


def _math_plan_target(question: str, parts_so_far: list[str]) -> str:
    lines = [question, "Sub-questions so far:"]
    lines += [f"{i}. {p}" for i, p in enumerate(parts_so_far, 1)]
    return "\n".join(lines)


def build_contrastive_data(
    seed: int = 0,
    dim: int = 16,
    n_gold_train: int = 12,
    n_hard_labeled: int = 2,
    n_easy_impossible: int = 6,
    n_val_per_class: int = 10,
    hard_offset: float = 0.35,
    noise: float = 0.1,
):
    """Training/validation items for the mixing-weight sweep world.

    Gold anchors cluster on one direction; hard corrupted anchors sit a
    small offset away (plentiful as unlabeled contrastive negatives, scarce
    as labeled examples); easy impossible anchors sit on the opposite
    direction. Validation is heavy on the hard region, so the judgment
    loss alone (which barely sees it labeled) underperforms the mix.
    """
    rng = np.random.default_rng(seed)
    gold_mu = np.zeros(dim)
    gold_mu[0] = 1.0
    delta = np.zeros(dim)
    delta[1] = 1.0
    hard_mu = gold_mu + hard_offset * delta
    easy_mu = -gold_mu

    def sample(center):
        return center + noise * rng.standard_normal(dim)

    train: list[TrainingItem] = []
    for _ in range(n_gold_train):
        negatives = [sample(hard_mu) for _ in range(3)]
        train.append(TrainingItem(anchor=sample(gold_mu), label=0, negatives=negatives))
    for _ in range(n_hard_labeled):
        train.append(TrainingItem(anchor=sample(hard_mu), label=2))
    for _ in range(n_easy_impossible):
        train.append(TrainingItem(anchor=sample(easy_mu), label=2))

    val: list[TrainingItem] = []
    for _ in range(n_val_per_class):
        val.append(TrainingItem(anchor=sample(gold_mu), label=0))
    for _ in range(n_val_per_class):
        val.append(TrainingItem(anchor=sample(hard_mu), label=2))
    for _ in range(n_val_per_class // 2):
        val.append(TrainingItem(anchor=sample(easy_mu), label=2))
    return train, val
