"""cogtree: iterative decomposition search with a trained three-way judge.

A fast generative backend proposes candidate decompositions of the current
query from retrieved in-context examples; a small trained head grades each
candidate (and each finished chain) as sure, likely or impossible; a
search driver expands the best-graded candidates into a reasoning tree
until a directly answerable leaf appears.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
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
from .reflective import HeadScorer, ScorerParams, score_chain, score_state
from .retrieval import Example, ExampleIndex, assemble_prompt, cosine, retrieve_top_k
from .search import (
    RolloutResult,
    SearchConfig,
    SearchDeps,
    TerminalReason,
    judge_logic,
    run_rollout,
    solve_math,
)
from .trainer import TrainConfig, TrainingItem, grad_check, train

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "CognitiveTree",
    "Decomposition",
    "Label",
    "Mode",
    "Query",
    "ReasoningChain",
    "State",
    "Verdict",
    "parse_decomposition",
    "HeadScorer",
    "ScorerParams",
    "score_chain",
    "score_state",
    "Example",
    "ExampleIndex",
    "assemble_prompt",
    "cosine",
    "retrieve_top_k",
    "RolloutResult",
    "SearchConfig",
    "SearchDeps",
    "TerminalReason",
    "judge_logic",
    "run_rollout",
    "solve_math",
    "TrainConfig",
    "TrainingItem",
    "grad_check",
    "train",
]
