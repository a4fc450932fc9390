"""Loss identities against hand computations and a direct-formula oracle,
negative construction, training determinism, and gradient fidelity."""

import math

import numpy as np
import pytest

from cogtree.backends import ScriptedBackend
from cogtree.core import Decomposition, State
from cogtree.errors import (
    DivergedLoss,
    EmptyDataset,
    NoReplacementAvailable,
    ParseError,
)
from cogtree.reflective import ScorerParams
from cogtree.trainer import (
    Adam,
    TrainConfig,
    TrainingItem,
    combined_loss,
    contrastive_loss,
    grad_check,
    ingest_negatives_math,
    judgment_loss,
    load_items,
    loss_and_grad,
    make_negatives_logic,
    save_items,
    trace_to_csv,
    train,
)

D, H = 12, 6


def _random_item(rng, n_negatives=2, with_positive=False):
    return TrainingItem(
        anchor=rng.normal(size=D),
        label=int(rng.integers(3)),
        negatives=[rng.normal(size=D) for _ in range(n_negatives)],
        positive=rng.normal(size=D) if with_positive else None,
    )


# -- judgment loss ---------------------------------------------------------------

def test_judgment_loss_uniform_is_ln3():
    params = ScorerParams.zeros(d=D, h=H)
    for label in (0, 1, 2):
        item = TrainingItem(anchor=np.ones(D), label=label)
        assert judgment_loss(params, item) == pytest.approx(math.log(3.0), abs=1e-12)


def test_judgment_loss_confident_head():
    params = ScorerParams.zeros(d=D, h=H)
    params.b2 = np.array([10.0, 0.0, 0.0])
    item = TrainingItem(anchor=np.ones(D), label=0)
    want = -math.log(math.exp(10.0) / (math.exp(10.0) + 2.0))
    assert judgment_loss(params, item) == pytest.approx(want, rel=1e-10)
    assert judgment_loss(params, item) == pytest.approx(9.08e-5, rel=1e-2)


def test_loss_decreases_after_one_gradient_step():
    rng = np.random.default_rng(0)
    params = ScorerParams.random(d=D, h=H, seed=1)
    item = _random_item(rng)
    cfg = TrainConfig(lam=0.5, learning_rate=0.05)
    before = combined_loss(params, item, cfg)
    loss, grads = loss_and_grad(params, item, cfg)
    assert loss == pytest.approx(before, rel=1e-9)
    opt = Adam(lr=cfg.learning_rate)
    opt.step([params.W1, params.b1, params.W2, params.b2], grads)
    assert combined_loss(params, item, cfg) < before


# -- contrastive loss --------------------------------------------------------------

def test_contrastive_equal_scores_single_negative_is_ln2():
    params = ScorerParams.random(d=D, h=H, seed=2)
    anchor = np.ones(D)
    item = TrainingItem(anchor=anchor, label=0, negatives=[anchor.copy()])
    assert contrastive_loss(params, item) == pytest.approx(math.log(2.0), abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_contrastive_equal_scores_generalizes(n):
    params = ScorerParams.random(d=D, h=H, seed=3)
    anchor = np.full(D, 0.7)
    item = TrainingItem(anchor=anchor, label=0, negatives=[anchor.copy()] * n)
    assert contrastive_loss(params, item) == pytest.approx(math.log(1.0 + n), abs=1e-9)


def test_contrastive_empty_negatives_is_exactly_zero():
    params = ScorerParams.random(d=D, h=H, seed=4)
    item = TrainingItem(anchor=np.ones(D), label=1)
    assert contrastive_loss(params, item) == 0.0


def _hidden(params, emb):
    return np.tanh(params.W1 @ np.asarray(emb, dtype=float) + params.b1)


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_contrastive_matches_direct_formula_oracle():
    # independent recomputation straight from the softmax expression
    rng = np.random.default_rng(5)
    for trial in range(20):
        params = ScorerParams.random(d=D, h=H, seed=50 + trial, scale=0.4)
        item = _random_item(rng, n_negatives=3, with_positive=True)
        tau = float(rng.uniform(0.3, 2.0))
        v = _hidden(params, item.anchor)
        y = _hidden(params, item.positive)
        s_pos = _cos(v, y) / tau
        s_negs = [_cos(v, _hidden(params, n)) / tau for n in item.negatives]
        want = -math.log(
            math.exp(s_pos) / (math.exp(s_pos) + sum(math.exp(s) for s in s_negs))
        )
        assert contrastive_loss(params, item, tau=tau) == pytest.approx(want, abs=1e-10)


def test_contrastive_monotone_in_positive_score():
    # raising cos(v, y) with negatives fixed strictly lowers the loss
    params = ScorerParams.zeros(d=4, h=4)
    params.W1 = np.eye(4) * 0.1  # near-linear regime, directions preserved
    anchor = np.array([1.0, 0.0, 0.0, 0.0])
    negatives = [np.array([0.0, 1.0, 0.0, 0.0])]
    losses = []
    for angle in (0.9, 0.6, 0.3, 0.0):
        positive = np.array([math.cos(angle), 0.0, math.sin(angle), 0.0])
        item = TrainingItem(anchor=anchor, label=0, negatives=negatives, positive=positive)
        losses.append(contrastive_loss(params, item))
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_contrastive_monotone_in_negative_scores():
    params = ScorerParams.zeros(d=4, h=4)
    params.W1 = np.eye(4) * 0.1
    anchor = np.array([1.0, 0.0, 0.0, 0.0])
    positive = np.array([0.8, 0.6, 0.0, 0.0])
    losses = []
    for angle in (1.2, 0.8, 0.4, 0.1):  # negative rotates toward the anchor
        negative = np.array([math.cos(angle), 0.0, 0.0, math.sin(angle)])
        item = TrainingItem(anchor=anchor, label=0, negatives=[negative], positive=positive)
        losses.append(contrastive_loss(params, item))
    assert all(a < b for a, b in zip(losses, losses[1:]))


# -- combined loss ------------------------------------------------------------------

def test_combined_loss_boundaries_are_exact():
    rng = np.random.default_rng(6)
    params = ScorerParams.random(d=D, h=H, seed=7)
    item = _random_item(rng, n_negatives=2)
    assert combined_loss(params, item, TrainConfig(lam=1.0)) == judgment_loss(params, item)
    assert combined_loss(params, item, TrainConfig(lam=0.0)) == contrastive_loss(params, item)


def test_combined_loss_midpoint_is_arithmetic_mean():
    rng = np.random.default_rng(7)
    params = ScorerParams.random(d=D, h=H, seed=8)
    item = _random_item(rng, n_negatives=2)
    mean = 0.5 * (judgment_loss(params, item) + contrastive_loss(params, item))
    assert combined_loss(params, item, TrainConfig(lam=0.5)) == pytest.approx(mean, rel=1e-12)


def test_combined_loss_is_convex_combination():
    rng = np.random.default_rng(8)
    params = ScorerParams.random(d=D, h=H, seed=9)
    item = _random_item(rng, n_negatives=3)
    rs, cl = judgment_loss(params, item), contrastive_loss(params, item)
    for lam in np.linspace(0.0, 1.0, 11):
        total = combined_loss(params, item, TrainConfig(lam=float(lam)))
        assert min(rs, cl) - 1e-12 <= total <= max(rs, cl) + 1e-12


# -- negative construction ------------------------------------------------------------

def _logic_state(parts):
    return State(query="goal", decomposition=Decomposition(parts=parts, raw_text="\n".join(parts)))


def test_make_negatives_enumerates_single_swaps():
    state = _logic_state(("t1", "t2"))
    negatives = make_negatives_logic(state, ["t1", "t2", "t3"])
    assert [n.decomposition.parts for n in negatives] == [("t3", "t2"), ("t1", "t3")]


def test_make_negatives_exhausted_theory():
    state = _logic_state(("t1", "t2"))
    with pytest.raises(NoReplacementAvailable):
        make_negatives_logic(state, ["t1", "t2"])


def test_make_negatives_differ_in_exactly_one_position_and_are_distinct():
    state = _logic_state(("t1", "t2", "t3"))
    theory = [f"t{i}" for i in range(1, 7)]
    negatives = make_negatives_logic(state, theory)
    seen = set()
    for neg in negatives:
        assert neg.decomposition.parts != state.decomposition.parts
        assert neg.decomposition.parts not in seen
        seen.add(neg.decomposition.parts)
        diffs = [
            i
            for i, (a, b) in enumerate(zip(neg.decomposition.parts, state.decomposition.parts))
            if a != b
        ]
        assert len(diffs) == 1


def test_make_negatives_subsampling_is_deterministic():
    state = _logic_state(("t1", "t2", "t3"))
    theory = [f"t{i}" for i in range(1, 9)]
    a = make_negatives_logic(state, theory, rng=np.random.default_rng(3), max_negatives=4)
    b = make_negatives_logic(state, theory, rng=np.random.default_rng(3), max_negatives=4)
    assert [x.decomposition.parts for x in a] == [x.decomposition.parts for x in b]
    assert len(a) == 4


# -- step-supervision ingestion ---------------------------------------------------------

def _write_prm(path, rows):
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def test_ingest_counts_anchors_and_negatives(tmp_path):
    path = tmp_path / "prm.jsonl"
    _write_prm(
        path,
        [
            {
                "question": "What is 2+2?",
                "steps": [
                    {"text": "2+2 = 4", "label": "correct"},
                    {"text": "2+2 = 5, carry the one", "label": "ambiguous"},
                    {"text": "2+2 = 22", "label": "wrong"},
                ],
            }
        ],
    )
    items = ingest_negatives_math(path, ScriptedBackend(fallback_seed=0))
    assert len(items) == 1
    assert items[0].label == 0
    assert len(items[0].negatives) == 2


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "prm.jsonl"
    path.write_text("", encoding="utf-8")
    assert ingest_negatives_math(path, ScriptedBackend()) == []


def test_ingest_reports_bad_line_number(tmp_path):
    path = tmp_path / "prm.jsonl"
    good = '{"question": "q", "steps": [{"text": "t", "label": "correct"}]}\n'
    path.write_text(good * 6 + "{not json}\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        ingest_negatives_math(path, ScriptedBackend())
    assert err.value.line == 7


def test_items_jsonl_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    items = [_random_item(rng, n_negatives=2, with_positive=True) for _ in range(4)]
    items.append(_random_item(rng, n_negatives=0))
    path = tmp_path / "items.jsonl"
    save_items(items, path)
    loaded = load_items(path)
    assert len(loaded) == len(items)
    for a, b in zip(items, loaded):
        assert np.array_equal(a.anchor, b.anchor)
        assert a.label == b.label
        assert len(a.negatives) == len(b.negatives)


# -- training ---------------------------------------------------------------------------

def test_train_single_separable_item_reaches_low_loss():
    # tau must be sharp enough that the contrastive term's floor
    # log(1 + exp(-2/tau)) sits below the target
    rng = np.random.default_rng(10)
    item = TrainingItem(anchor=rng.normal(size=D), label=0, negatives=[rng.normal(size=D)])
    cfg = TrainConfig(lam=0.5, learning_rate=0.05, epochs=200, batch_size=1, seed=0, tau=0.25)
    params, trace = train(ScorerParams.random(d=D, h=H, seed=0), [item], cfg)
    assert combined_loss(params, item, cfg) < 0.01
    assert [row.epoch for row in trace] == list(range(len(trace)))


def test_train_zero_learning_rate_keeps_params_bit_for_bit():
    rng = np.random.default_rng(11)
    init = ScorerParams.random(d=D, h=H, seed=1)
    items = [_random_item(rng) for _ in range(3)]
    cfg = TrainConfig(learning_rate=0.0, epochs=3, seed=0)
    trained, _ = train(init, items, cfg)
    for (_, a), (_, b) in zip(init.arrays(), trained.arrays()):
        assert np.array_equal(a, b)


def test_train_same_seed_is_bitwise_deterministic():
    rng = np.random.default_rng(12)
    items = [_random_item(rng) for _ in range(6)]
    init = ScorerParams.random(d=D, h=H, seed=2)
    cfg = TrainConfig(learning_rate=1e-3, epochs=10, batch_size=4, seed=5)
    a, _ = train(init, items, cfg)
    b, _ = train(init, items, cfg)
    for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)


def test_train_requires_items():
    with pytest.raises(EmptyDataset):
        train(ScorerParams.zeros(d=D, h=H), [], TrainConfig())


def test_train_raises_on_divergence():
    item = TrainingItem(anchor=np.full(D, 1e4), label=0)
    init = ScorerParams.random(d=D, h=H, seed=3)
    init.b2 = np.array([0.0, 0.0, 1e9])  # label-0 probability underflows to 0
    with pytest.raises(DivergedLoss):
        train(init, [item], TrainConfig(learning_rate=1e-6, epochs=1))


def test_train_early_stopping_on_validation(tmp_path):
    rng = np.random.default_rng(13)
    items = [_random_item(rng, n_negatives=0) for _ in range(4)]
    val = [_random_item(rng, n_negatives=0) for _ in range(4)]
    cfg = TrainConfig(learning_rate=0.2, epochs=100, batch_size=2, seed=0, patience=3)
    _, trace = train(ScorerParams.random(d=D, h=H, seed=4), items, cfg, val_items=val)
    assert len(trace) < 100  # high learning rate overshoots; patience kicks in
    assert all(row.val_loss is not None for row in trace)
    trace_to_csv(trace, tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert len(lines) == len(trace) + 1


# -- gradient checking --------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
def test_grad_check_small_random_instances(lam):
    rng = np.random.default_rng(14)
    for trial in range(5):
        params = ScorerParams.random(d=D, h=H, seed=200 + trial, scale=0.3)
        item = _random_item(rng, n_negatives=int(rng.integers(0, 4)), with_positive=bool(rng.integers(2)))
        err = grad_check(params, item, TrainConfig(lam=lam, tau=0.9), eps=1e-5)
        assert err < 1e-4


def test_grad_check_validates_eps():
    with pytest.raises(ValueError):
        grad_check(
            ScorerParams.zeros(d=D, h=H),
            TrainingItem(anchor=np.ones(D), label=0),
            TrainConfig(),
            eps=0.5,
        )
