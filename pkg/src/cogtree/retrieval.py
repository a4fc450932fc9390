"""In-context example store: embedding index, cosine top-k retrieval and
prompt assembly.

The index is a brute-force linear scan. Stores stay small (thousands of
examples), so an exact scan beats any approximate structure and keeps
retrieval deterministic: ties break by insertion order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._kernels import cosine_scores
from .core import Query
from .errors import DimensionMismatch, EmptyExamples, NotEnoughExamples, ZeroVector


@dataclass
class Example:
    """A stored (query, decomposition) pair with the query's embedding."""

    query_text: str
    decomposition_text: str
    embedding: np.ndarray

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if self.embedding.ndim != 1:
            raise DimensionMismatch("example embedding must be a 1-d vector")
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError("example embedding must be finite")


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"shapes {a.shape} vs {b.shape}")
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine undefined for an all-zero vector")
    return float(min(1.0, max(-1.0, (a @ b) / (na * nb))))


class ExampleIndex:
    """Immutable-after-build collection of examples sharing one embedding
    dimension. Safe for concurrent reads."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError("index dimension must be positive")
        self.dim = int(dim)
        self.examples: list[Example] = []
        self._matrix: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.examples)

    def add(self, example: Example) -> None:
        if example.embedding.shape[0] != self.dim:
            raise DimensionMismatch(
                f"embedding dim {example.embedding.shape[0]}, index dim {self.dim}"
            )
        self.examples.append(example)
        self._matrix = None

    @staticmethod
    def build(pairs, backend) -> "ExampleIndex":
        """Embed each (query_text, decomposition_text) pair and index it."""
        index = None
        for query_text, decomposition_text in pairs:
            emb = backend.embed(query_text)
            if index is None:
                index = ExampleIndex(dim=len(emb))
            index.add(Example(query_text, decomposition_text, emb))
        if index is None:
            raise EmptyExamples("no pairs to index")
        return index

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.ascontiguousarray(
                np.stack([e.embedding for e in self.examples])
            )
        return self._matrix

    def retrieve_top_k(self, query_emb, k: int) -> list[Example]:
        """The k examples with highest cosine to `query_emb`, most similar
        first; ties break by insertion order."""
        if k <= 0:
            raise ValueError("k must be positive")
        if len(self.examples) < k:
            raise NotEnoughExamples(f"index has {len(self.examples)} examples, need {k}")
        query_emb = np.ascontiguousarray(query_emb, dtype=np.float64)
        if query_emb.shape != (self.dim,):
            raise DimensionMismatch(f"query dim {query_emb.shape}, index dim {self.dim}")
        if not query_emb.any():
            raise ZeroVector("cannot retrieve with an all-zero query embedding")
        scores = cosine_scores(self._stacked(), query_emb)
        order = np.argsort(-scores, kind="stable")
        return [self.examples[i] for i in order[:k]]

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        """One JSON object per line; floats round-trip exactly."""
        with open(path, "w", encoding="utf-8") as fh:
            for ex in self.examples:
                fh.write(
                    json.dumps(
                        {
                            "query": ex.query_text,
                            "decomposition": ex.decomposition_text,
                            "embedding": ex.embedding.tolist(),
                        }
                    )
                )
                fh.write("\n")

    @staticmethod
    def load(path) -> "ExampleIndex":
        index = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            emb = np.asarray(obj["embedding"], dtype=np.float64)
            if index is None:
                index = ExampleIndex(dim=emb.shape[0])
            index.add(Example(obj["query"], obj["decomposition"], emb))
        if index is None:
            raise EmptyExamples(f"no examples in {path}")
        return index


def retrieve_top_k(index: ExampleIndex, query_emb, k: int) -> list[Example]:
    """Module-level alias of ExampleIndex.retrieve_top_k."""
    return index.retrieve_top_k(query_emb, k)


def assemble_prompt(examples: list[Example], query: Query | str) -> str:
    """Render retrieved examples and the open query into the generation
    prompt. Deterministic; examples appear in the given order."""
    if not examples:
        raise EmptyExamples("prompt assembly needs at least one example")
    text = query.text if isinstance(query, Query) else query
    blocks = [
        f"Query: {ex.query_text}\nDecomposition: {ex.decomposition_text}\n\n"
        for ex in examples
    ]
    return "".join(blocks) + f"Query: {text}\nDecomposition:"
