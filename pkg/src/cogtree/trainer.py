"""Training for the verdict head.

Two objectives, mixed by a weight in [0, 1]:

* judgment loss: cross-entropy of the head's class probabilities at the
  item's label;
* contrastive loss: an InfoNCE term over hidden vectors that pushes the
  anchor's representation away from corrupted look-alikes. Scores are
  cosine similarities at temperature tau; the positive reference defaults
  to the anchor itself, so minimizing the term purely drives the negatives
  down. An item without negatives contributes exactly 0.

Hard negatives come from two places: theory swaps on logic decompositions
(replace one part with an unused theory member) and step-supervision files
where ambiguous or wrong steps shadow a correct one.

Training is plain Adam, deterministic given the seed, with early stopping
on a validation set. Gradients are analytic (fused kernel) and checked
against central finite differences of the public loss.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import head_forward, head_loss_grad
from .core import Decomposition, State
from .errors import (
    DimensionMismatch,
    DivergedLoss,
    EmptyDataset,
    NoReplacementAvailable,
    ParseError,
)
from .reflective import ScorerParams, state_embedding_text

log = logging.getLogger(__name__)


@dataclass
class TrainingItem:
    """One training example: an anchor embedding with its verdict class and
    zero or more corrupted-state embeddings.

    `positive` optionally holds a separate gold-reference embedding for the
    contrastive term; when None the anchor is its own reference.
    """

    anchor: np.ndarray
    label: int
    negatives: list[np.ndarray] = field(default_factory=list)
    positive: np.ndarray | None = None

    def __post_init__(self):
        self.anchor = np.ascontiguousarray(self.anchor, dtype=np.float64)
        self.negatives = [np.ascontiguousarray(n, dtype=np.float64) for n in self.negatives]
        if self.positive is not None:
            self.positive = np.ascontiguousarray(self.positive, dtype=np.float64)
        if self.label not in (0, 1, 2):
            raise ValueError(f"label must be 0, 1 or 2, got {self.label}")
        for n in self.negatives:
            if n.shape != self.anchor.shape:
                raise DimensionMismatch("negative dim differs from anchor dim")

    def negatives_matrix(self) -> np.ndarray:
        if not self.negatives:
            return np.zeros((0, self.anchor.shape[0]))
        return np.ascontiguousarray(np.stack(self.negatives))

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.tolist(),
            "label": int(self.label),
            "negatives": [n.tolist() for n in self.negatives],
            "positive": None if self.positive is None else self.positive.tolist(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "TrainingItem":
        return TrainingItem(
            anchor=np.asarray(obj["anchor"]),
            label=int(obj["label"]),
            negatives=[np.asarray(n) for n in obj.get("negatives", [])],
            positive=None if obj.get("positive") is None else np.asarray(obj["positive"]),
        )


@dataclass
class TrainConfig:
    lam: float = 0.5  # judgment-loss share; 1 - lam goes to the contrastive term
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 4
    seed: int = 0
    tau: float = 1.0
    patience: int = 5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def _check_item(params: ScorerParams, item: TrainingItem) -> None:
    if item.anchor.shape != (params.d,):
        raise DimensionMismatch(
            f"anchor dim {item.anchor.shape[0]}, head expects {params.d}"
        )


def judgment_loss(params: ScorerParams, item: TrainingItem) -> float:
    """Cross-entropy of the head's probabilities at the item's label."""
    _check_item(params, item)
    _, probs = head_forward(params.W1, params.b1, params.W2, params.b2, item.anchor)
    with np.errstate(divide="ignore"):  # prob 0 -> inf loss, caught by callers
        return -float(np.log(probs[item.label]))


def contrastive_loss(params: ScorerParams, item: TrainingItem, tau: float = 1.0) -> float:
    """InfoNCE over hidden-vector cosines: -log of the positive pair's
    softmax share against the negatives. Exactly 0 without negatives."""
    _check_item(params, item)
    if not item.negatives:
        return 0.0
    v, _ = head_forward(params.W1, params.b1, params.W2, params.b2, item.anchor)
    pos_emb = item.anchor if item.positive is None else item.positive
    y = np.tanh(params.W1 @ pos_emb + params.b1)
    s_pos = float(v @ y / (np.sqrt(v @ v) * np.sqrt(y @ y))) / tau
    scores = []
    for neg in item.negatives:
        u = np.tanh(params.W1 @ neg + params.b1)
        scores.append(float(v @ u / (np.sqrt(v @ v) * np.sqrt(u @ u))) / tau)
    scores = np.asarray(scores)
    top = max(s_pos, float(scores.max()))
    z = np.exp(s_pos - top) + np.exp(scores - top).sum()
    return float(np.log(z) + top - s_pos)


def combined_loss(params: ScorerParams, item: TrainingItem, cfg: TrainConfig) -> float:
    """Convex mix of the two objectives at the configured weight."""
    lam = cfg.lam
    rs = judgment_loss(params, item) if lam > 0.0 else 0.0
    cl = contrastive_loss(params, item, cfg.tau) if lam < 1.0 else 0.0
    return lam * rs + (1.0 - lam) * cl


def loss_and_grad(params: ScorerParams, item: TrainingItem, cfg: TrainConfig):
    """Fused loss and analytic gradients for one item (hot path)."""
    _check_item(params, item)
    total, rs, cl, gW1, gb1, gW2, gb2 = head_loss_grad(
        params.W1,
        params.b1,
        params.W2,
        params.b2,
        item.anchor,
        int(item.label),
        item.negatives_matrix(),
        item.positive,
        float(cfg.lam),
        float(cfg.tau),
    )
    return total, (gW1, gb1, gW2, gb2)


# -- hard negative construction ----------------------------------------------

def make_negatives_logic(state: State, theory, rng=None, max_negatives: int | None = None):
    """Corrupted copies of `state`: every single-position swap of a
    decomposition part for a theory member not already present.

    Enumeration order is deterministic (position, then theory order);
    `rng` only matters when `max_negatives` subsamples the enumeration.
    """
    theory = list(theory)
    if len(theory) < 2:
        raise ValueError("need at least two theory members to swap")
    present = set(state.decomposition.parts)
    unused = [t for t in theory if t not in present]
    if not unused:
        raise NoReplacementAvailable(
            "decomposition already uses every theory member; nothing to swap in"
        )
    negatives = []
    for pos in range(len(state.decomposition.parts)):
        for replacement in unused:
            parts = list(state.decomposition.parts)
            parts[pos] = replacement
            negatives.append(
                State(
                    query=state.query,
                    decomposition=Decomposition(
                        parts=tuple(parts), raw_text="\n".join(parts)
                    ),
                    depth=state.depth,
                    parent=state.parent,
                )
            )
    if max_negatives is not None and len(negatives) > max_negatives:
        rng = rng or np.random.default_rng(0)
        keep = sorted(rng.choice(len(negatives), size=max_negatives, replace=False))
        negatives = [negatives[i] for i in keep]
    return negatives


_STEP_LABELS = {"correct", "ambiguous", "wrong"}


def ingest_negatives_math(path, backend) -> list[TrainingItem]:
    """Read a step-supervision JSONL file and build training items.

    Each line: {"question": str, "steps": [{"text": str, "label":
    "correct"|"ambiguous"|"wrong"}]}. Every correct step becomes an anchor
    (class 0) whose negatives are the question's ambiguous and wrong steps,
    embedded through `backend`.
    """
    items: list[TrainingItem] = []
    n_questions = n_anchors = n_negatives = 0
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            question = obj["question"]
            steps = obj["steps"]
            if not isinstance(question, str) or not isinstance(steps, list):
                raise TypeError("question must be a string and steps a list")
            for step in steps:
                if step["label"] not in _STEP_LABELS:
                    raise ValueError(f"unknown step label {step['label']!r}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
        n_questions += 1
        corrupt = [
            _step_embedding(backend, question, s["text"])
            for s in steps
            if s["label"] in ("ambiguous", "wrong")
        ]
        for step in steps:
            if step["label"] != "correct":
                continue
            items.append(
                TrainingItem(
                    anchor=_step_embedding(backend, question, step["text"]),
                    label=0,
                    negatives=list(corrupt),
                )
            )
            n_anchors += 1
            n_negatives += len(corrupt)
    log.info(
        "ingested %d questions -> %d anchors, %d negatives", n_questions, n_anchors, n_negatives
    )
    return items


def _step_embedding(backend, question: str, step_text: str) -> np.ndarray:
    state = State(
        query=question,
        decomposition=Decomposition(parts=(step_text,), raw_text=step_text),
    )
    return backend.embed(state_embedding_text(state))


def save_items(items, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_dict()))
            fh.write("\n")


def load_items(path) -> list[TrainingItem]:
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            items.append(TrainingItem.from_dict(json.loads(line)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return items


# -- optimization --------------------------------------------------------------

class Adam:
    """Textbook Adam over the four parameter arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, arrays, grads) -> None:
        if self._m is None:
            self._m = [np.zeros_like(a) for a in arrays]
            self._v = [np.zeros_like(a) for a in arrays]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for a, g, m, v in zip(arrays, grads, self._m, self._v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            a -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None


def _mean_loss(params: ScorerParams, items, cfg: TrainConfig) -> float:
    return float(np.mean([combined_loss(params, it, cfg) for it in items]))


def train(
    params: ScorerParams,
    items: list[TrainingItem],
    cfg: TrainConfig,
    val_items: list[TrainingItem] | None = None,
) -> tuple[ScorerParams, list[EpochStats]]:
    """Adam-train a private copy of `params`; the input is not mutated.

    Deterministic given cfg.seed: the per-epoch shuffle and batch order are
    fixed. With a validation set, stops once the validation loss has not
    improved for cfg.patience epochs and returns the best-validation
    parameters; without one, runs all epochs and returns the final state.
    """
    if not items:
        raise EmptyDataset("no training items")
    for item in items:
        _check_item(params, item)
    work = params.copy()
    arrays = [work.W1, work.b1, work.W2, work.b2]
    opt = Adam(lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    trace: list[EpochStats] = []
    best_val = np.inf
    best = work.copy()
    stall = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(items))
        running = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            grads = [np.zeros_like(a) for a in arrays]
            for idx in batch:
                loss, item_grads = loss_and_grad(work, items[idx], cfg)
                running += loss
                for g, ig in zip(grads, item_grads):
                    g += ig
            for g in grads:
                g /= len(batch)
            opt.step(arrays, grads)
        train_loss = running / len(items)
        if not np.isfinite(train_loss):
            raise DivergedLoss(f"epoch {epoch}: train loss {train_loss}")
        val_loss = None
        if val_items:
            val_loss = _mean_loss(work, val_items, cfg)
            if not np.isfinite(val_loss):
                raise DivergedLoss(f"epoch {epoch}: validation loss {val_loss}")
        trace.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
        if val_items:
            if val_loss < best_val:
                best_val = val_loss
                best = work.copy()
                stall = 0
            else:
                stall += 1
                if stall >= cfg.patience:
                    log.info("early stop at epoch %d (best val %.6f)", epoch, best_val)
                    break
    return (best if val_items else work), trace


def trace_to_csv(trace, path) -> None:
    """Emit the per-epoch loss trace as epoch,train_loss,val_loss rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for row in trace:
            val = "" if row.val_loss is None else repr(row.val_loss)
            fh.write(f"{row.epoch},{row.train_loss!r},{val}\n")


# -- gradient verification -----------------------------------------------------

def grad_check(
    params: ScorerParams, item: TrainingItem, cfg: TrainConfig, eps: float = 1e-5
) -> float:
    """Max elementwise error between analytic gradients and central finite
    differences of the public combined loss.

    The error is |analytic - numeric| scaled by max(1, |analytic|,
    |numeric|): relative for large entries, absolute near zero.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must be in (0, 1e-2]")
    _, grads = loss_and_grad(params, item, cfg)
    worst = 0.0
    work = params.copy()
    arrays = [work.W1, work.b1, work.W2, work.b2]
    for arr, grad in zip(arrays, grads):
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = combined_loss(work, item, cfg)
            flat[i] = keep - eps
            down = combined_loss(work, item, cfg)
            flat[i] = keep
            numeric = (up - down) / (2.0 * eps)
            scale = max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, abs(gflat[i] - numeric) / scale)
    return worst
