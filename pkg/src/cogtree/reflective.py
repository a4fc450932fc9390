"""The reflective side of the engine: a small trainable head that maps a
state's embedding to a sure/likely/impossible verdict.

The head is a 2-layer network, probs = softmax(W2 @ tanh(W1 @ e + b1) + b2),
applied both to intermediate states and (via a canonical chain rendering)
to complete reasoning chains. Keeping the judge this small makes its
training objective exactly computable and gradient-checkable while the
embeddings still come from whatever language-model backend generated the
candidates.

Scoring is pure: parameters are immutable during search and safe to share
across rollouts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import head_forward
from .core import ReasoningChain, State, Verdict
from .errors import DimensionMismatch, NonFiniteParams


@dataclass
class ScorerParams:
    """Weights of the verdict head. Shapes: W1 (h, d), b1 (h,), W2 (3, h),
    b2 (3,)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.ascontiguousarray(self.W1, dtype=np.float64)
        self.b1 = np.ascontiguousarray(self.b1, dtype=np.float64)
        self.W2 = np.ascontiguousarray(self.W2, dtype=np.float64)
        self.b2 = np.ascontiguousarray(self.b2, dtype=np.float64)
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.W2.shape != (3, h) or self.b2.shape != (3,):
            raise DimensionMismatch(
                f"inconsistent shapes: W1 {self.W1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}"
            )

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    def check_finite(self) -> None:
        for name, arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise NonFiniteParams(f"{name} contains non-finite entries")

    def arrays(self):
        return (("W1", self.W1), ("b1", self.b1), ("W2", self.W2), ("b2", self.b2))

    def copy(self) -> "ScorerParams":
        return ScorerParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    @staticmethod
    def zeros(d: int, h: int = 32) -> "ScorerParams":
        return ScorerParams(np.zeros((h, d)), np.zeros(h), np.zeros((3, h)), np.zeros(3))

    @staticmethod
    def random(d: int, h: int = 32, seed: int = 0, scale: float = 0.1) -> "ScorerParams":
        rng = np.random.default_rng(seed)
        return ScorerParams(
            rng.normal(0.0, scale, (h, d)),
            rng.normal(0.0, scale, h),
            rng.normal(0.0, scale, (3, h)),
            rng.normal(0.0, scale, 3),
        )

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        obj = {
            "d": self.d,
            "h": self.h,
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": self.b2.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)
            fh.write("\n")

    @staticmethod
    def load(path) -> "ScorerParams":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        params = ScorerParams(
            np.asarray(obj["W1"]), np.asarray(obj["b1"]),
            np.asarray(obj["W2"]), np.asarray(obj["b2"]),
        )
        if params.d != obj["d"] or params.h != obj["h"]:
            raise DimensionMismatch("stored d/h disagree with matrix shapes")
        return params


@dataclass
class ScoredState:
    """A state together with everything the head computed for it."""

    state: State
    embedding: np.ndarray
    hidden: np.ndarray
    verdict: Verdict


def score_state(params: ScorerParams, embedding) -> tuple[np.ndarray, Verdict]:
    """Run the head on one embedding. Returns (hidden, verdict)."""
    params.check_finite()
    embedding = np.ascontiguousarray(embedding, dtype=np.float64)
    if embedding.shape != (params.d,):
        raise DimensionMismatch(f"embedding dim {embedding.shape}, head expects {params.d}")
    hidden, probs = head_forward(params.W1, params.b1, params.W2, params.b2, embedding)
    return hidden, Verdict.from_probs(probs)


def score_state_detail(params: ScorerParams, state: State, backend) -> ScoredState:
    """Embed a state's canonical rendering and keep every intermediate the
    head computed, for inspection and error analysis."""
    embedding = backend.embed(state_embedding_text(state))
    hidden, verdict = score_state(params, embedding)
    return ScoredState(state=state, embedding=embedding, hidden=hidden, verdict=verdict)


def state_embedding_text(state: State) -> str:
    """Canonical rendering of a state fed to the embedding backend."""
    return f"Query: {state.query}\nDecomposition: {'; '.join(state.decomposition.parts)}"


def chain_embedding_text(chain: ReasoningChain) -> str:
    """Canonical rendering of a whole chain: step renderings joined by
    newlines under a chain prefix."""
    return "Chain:\n" + "\n".join(state_embedding_text(s) for s in chain.steps)


def score_chain(params: ScorerParams, chain: ReasoningChain, backend) -> Verdict:
    """Embed the chain rendering and judge it; the verdict is also stored
    in chain.overall."""
    if not chain.steps:
        raise ValueError("cannot score an empty chain")
    embedding = backend.embed(chain_embedding_text(chain))
    _, verdict = score_state(params, embedding)
    chain.overall = verdict
    return verdict


class HeadScorer:
    """Scoring policy backed by ScorerParams: embeds the canonical state or
    chain rendering and runs the head. The production policy for search."""

    def __init__(self, params: ScorerParams):
        self.params = params

    def score_state(self, state: State, backend) -> Verdict:
        embedding = backend.embed(state_embedding_text(state))
        _, verdict = score_state(self.params, embedding)
        return verdict

    def score_chain(self, chain: ReasoningChain, backend) -> Verdict:
        return score_chain(self.params, chain, backend)
