"""Domain types for queries, decompositions, tree nodes, chains and verdicts,
plus the tree mutation primitives.

A node's state pairs the text that still needs to be resolved at that node
with the decomposition that produced the node. The root holds the original
query and a trivial self-decomposition. Trees are single-owner per rollout;
sibling candidates that were scored but not selected stay in the tree with
their verdict edges for later error analysis.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DepthMismatch, ParseFailure, UnknownNode, UnknownParent

END_MARKER = "<END>"

#: probability-vector tolerance for Verdict validation
_PROB_TOL = 1e-9


class Mode(str, enum.Enum):
    LOGIC = "logic"
    MATH = "math"


class Label(enum.IntEnum):
    """Verdict classes, in fixed tie-break order (optimistic first)."""

    SURE = 0
    LIKELY = 1
    IMPOSSIBLE = 2


@dataclass(frozen=True)
class Query:
    """A reasoning task: a goal to prove (logic) or a question to answer (math)."""

    id: str
    text: str
    mode: Mode = Mode.LOGIC
    theory: tuple[str, ...] | None = None
    gold_answer: float | str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("query text must be non-empty")
        if self.mode is Mode.LOGIC and not self.theory:
            raise ValueError(f"query {self.id}: logic mode requires a non-empty theory set")
        if self.theory is not None and not isinstance(self.theory, tuple):
            object.__setattr__(self, "theory", tuple(self.theory))


@dataclass(frozen=True)
class Decomposition:
    """An ordered breakdown of a query into sub-goals or sub-questions.

    `terminal` records whether the emitting backend marked the node as
    directly answerable with the end marker.
    """

    parts: tuple[str, ...]
    raw_text: str
    terminal: bool = False

    def __post_init__(self):
        if not isinstance(self.parts, tuple):
            object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts or any(not p.strip() for p in self.parts):
            raise ValueError("decomposition parts must be non-empty after trimming")

    @staticmethod
    def trivial(text: str) -> "Decomposition":
        """Self-decomposition used for tree roots."""
        return Decomposition(parts=(text,), raw_text=text)


def parse_decomposition(raw: str) -> Decomposition:
    """Parse a backend completion into a Decomposition.

    Parts are the non-empty lines; a literal end marker anywhere in the
    text flags the node as terminal and is stripped from the parts.

    Raises ParseFailure when no parts remain.
    """
    terminal = END_MARKER in raw
    text = raw.replace(END_MARKER, "") if terminal else raw
    parts = tuple(line.strip() for line in text.splitlines() if line.strip())
    if not parts:
        raise ParseFailure(f"no decomposition parts in candidate: {raw!r}")
    return Decomposition(parts=parts, raw_text=raw, terminal=terminal)


@dataclass(frozen=True)
class Verdict:
    """Three-class judgment with class probabilities.

    The label is always the argmax of `probs`; ties resolve in Label order
    (sure beats likely beats impossible).
    """

    label: Label
    probs: tuple[float, float, float]

    def __post_init__(self):
        if len(self.probs) != 3:
            raise ValueError("verdict needs exactly 3 class probabilities")
        if not isinstance(self.probs, tuple):
            object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if any(p < 0.0 or p > 1.0 for p in self.probs):
            raise ValueError(f"probabilities out of [0,1]: {self.probs}")
        if abs(sum(self.probs) - 1.0) > _PROB_TOL:
            raise ValueError(f"probabilities must sum to 1: {self.probs}")
        if self.label != _argmax_label(self.probs):
            raise ValueError(f"label {self.label!r} is not the argmax of {self.probs}")

    @staticmethod
    def from_probs(probs) -> "Verdict":
        probs = tuple(float(p) for p in probs)
        return Verdict(label=_argmax_label(probs), probs=probs)

    @staticmethod
    def certain(label: Label) -> "Verdict":
        probs = [0.0, 0.0, 0.0]
        probs[int(label)] = 1.0
        return Verdict(label=label, probs=tuple(probs))

    @property
    def confidence(self) -> float:
        """Probability mass on the winning class."""
        return self.probs[int(self.label)]


def _argmax_label(probs) -> Label:
    best = 0
    for i in (1, 2):
        if probs[i] > probs[best]:
            best = i
    return Label(best)


@dataclass(frozen=True)
class State:
    """One tree node: the text to resolve here plus the decomposition that
    produced the node."""

    query: str
    decomposition: Decomposition
    depth: int = 0
    parent: int | None = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if (self.depth == 0) != (self.parent is None):
            raise ValueError("exactly the root (depth 0) has no parent")


@dataclass
class ReasoningChain:
    """A root-to-leaf path through the tree, with per-step verdicts and
    an optional whole-chain verdict."""

    steps: list[State]
    step_verdicts: list[Verdict]
    overall: Verdict | None = None

    def __len__(self) -> int:
        return len(self.steps)


#: verdict attached to the root of every chain; the query itself is a given
ROOT_VERDICT = Verdict(label=Label.SURE, probs=(1.0, 0.0, 0.0))


class CognitiveTree:
    """Id-addressed reasoning tree. Node 0 is always the root."""

    def __init__(self, root: State):
        if root.depth != 0 or root.parent is not None:
            raise ValueError("root state must have depth 0 and no parent")
        self.nodes: dict[int, State] = {0: root}
        self.edges: list[tuple[int, int, Verdict]] = []
        self.root: int = 0
        self._verdicts: dict[int, Verdict] = {0: ROOT_VERDICT}
        self._children: dict[int, list[int]] = {0: []}

    def __len__(self) -> int:
        return len(self.nodes)

    def add_child(self, parent: int, state: State, verdict: Verdict) -> int:
        """Append a scored state under `parent` and return the new node id."""
        if parent not in self.nodes:
            raise UnknownParent(f"no node with id {parent}")
        want = self.nodes[parent].depth + 1
        if state.depth != want:
            raise DepthMismatch(f"child depth {state.depth}, expected {want}")
        node_id = len(self.nodes)
        if state.parent != parent:
            state = State(
                query=state.query,
                decomposition=state.decomposition,
                depth=state.depth,
                parent=parent,
            )
        self.nodes[node_id] = state
        self.edges.append((parent, node_id, verdict))
        self._verdicts[node_id] = verdict
        self._children[parent].append(node_id)
        self._children[node_id] = []
        return node_id

    def children(self, node_id: int) -> list[int]:
        if node_id not in self.nodes:
            raise UnknownNode(f"no node with id {node_id}")
        return list(self._children[node_id])

    def verdict(self, node_id: int) -> Verdict:
        if node_id not in self.nodes:
            raise UnknownNode(f"no node with id {node_id}")
        return self._verdicts[node_id]

    def extract_chain(self, leaf: int) -> ReasoningChain:
        """Walk parents from `leaf` to the root and return the path in
        root-to-leaf order. The root carries ROOT_VERDICT."""
        if leaf not in self.nodes:
            raise UnknownNode(f"no node with id {leaf}")
        path = []
        node: int | None = leaf
        while node is not None:
            path.append(node)
            node = self.nodes[node].parent if node != self.root else None
        path.reverse()
        return ReasoningChain(
            steps=[self.nodes[n] for n in path],
            step_verdicts=[self._verdicts[n] for n in path],
        )

    def check_consistency(self) -> None:
        """DFS sanity check: connected, acyclic, depths consistent.

        Raises ValueError on violation; used by tests after random builds.
        """
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node in seen:
                raise ValueError(f"cycle through node {node}")
            seen.add(node)
            for child in self._children[node]:
                if self.nodes[child].depth != self.nodes[node].depth + 1:
                    raise ValueError(f"depth mismatch at node {child}")
                if self.nodes[child].parent != node:
                    raise ValueError(f"parent pointer mismatch at node {child}")
                stack.append(child)
        if seen != set(self.nodes):
            raise ValueError("tree is not connected")


def add_child(tree: CognitiveTree, parent: int, state: State, verdict: Verdict) -> int:
    """Module-level alias of CognitiveTree.add_child."""
    return tree.add_child(parent, state, verdict)


def extract_chain(tree: CognitiveTree, leaf: int) -> ReasoningChain:
    """Module-level alias of CognitiveTree.extract_chain."""
    return tree.extract_chain(leaf)
