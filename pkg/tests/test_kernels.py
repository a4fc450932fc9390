"""Compiled kernels and the numpy fallback must agree to floating-point
noise on every entry point, including edge shapes."""

import subprocess
import sys

import numpy as np
import pytest

from cogtree import _kernels
from cogtree._kernels import numpy_impl

cykern = pytest.importorskip(
    "cogtree._kernels._cykern", reason="compiled extension not built"
)


def _random_problem(rng, d, h, m, with_positive):
    return {
        "W1": np.ascontiguousarray(rng.normal(0, 0.4, (h, d))),
        "b1": np.ascontiguousarray(rng.normal(0, 0.4, h)),
        "W2": np.ascontiguousarray(rng.normal(0, 0.4, (3, h))),
        "b2": np.ascontiguousarray(rng.normal(0, 0.4, 3)),
        "anchor": np.ascontiguousarray(rng.normal(0, 1, d)),
        "label": int(rng.integers(3)),
        "negatives": np.ascontiguousarray(rng.normal(0, 1, (m, d))),
        "positive": np.ascontiguousarray(rng.normal(0, 1, d)) if with_positive else None,
    }


@pytest.mark.parametrize("d,h", [(8, 4), (64, 32), (17, 5)])
def test_forward_matches(d, h):
    rng = np.random.default_rng(d * 100 + h)
    p = _random_problem(rng, d, h, 0, False)
    h1, p1 = numpy_impl.head_forward(p["W1"], p["b1"], p["W2"], p["b2"], p["anchor"])
    h2, p2 = cykern.head_forward(p["W1"], p["b1"], p["W2"], p["b2"], p["anchor"])
    np.testing.assert_allclose(h1, h2, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(p1, p2, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("m", [0, 1, 5])
@pytest.mark.parametrize("lam", [0.0, 0.3, 1.0])
@pytest.mark.parametrize("with_positive", [False, True])
def test_loss_grad_matches(m, lam, with_positive):
    rng = np.random.default_rng(m * 31 + int(lam * 10) + with_positive)
    p = _random_problem(rng, 20, 9, m, with_positive)
    args = (
        p["W1"], p["b1"], p["W2"], p["b2"], p["anchor"], p["label"],
        p["negatives"], p["positive"], lam, 0.7,
    )
    got_np = numpy_impl.head_loss_grad(*args)
    got_cy = cykern.head_loss_grad(*args)
    for a, b in zip(got_np, got_cy):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


def test_cosine_scores_match():
    rng = np.random.default_rng(0)
    mat = np.ascontiguousarray(rng.normal(size=(200, 32)))
    q = np.ascontiguousarray(rng.normal(size=32))
    np.testing.assert_allclose(
        numpy_impl.cosine_scores(mat, q), cykern.cosine_scores(mat, q), rtol=1e-13
    )


@pytest.mark.skipif(
    bool(__import__("os").environ.get("COGTREE_PURE_PYTHON")),
    reason="fallback forced via environment",
)
def test_compiled_backend_selected_by_default():
    assert _kernels.BACKEND == "cython"
    assert _kernels.head_forward is cykern.head_forward


def test_env_var_forces_pure_python():
    code = (
        "import os; os.environ['COGTREE_PURE_PYTHON'] = '1'; "
        "from cogtree import _kernels; print(_kernels.BACKEND)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


def test_fused_loss_agrees_with_public_loss():
    from cogtree.reflective import ScorerParams
    from cogtree.trainer import TrainConfig, TrainingItem, combined_loss, loss_and_grad

    rng = np.random.default_rng(3)
    params = ScorerParams.random(d=16, h=8, seed=1)
    item = TrainingItem(
        anchor=rng.normal(size=16),
        label=1,
        negatives=[rng.normal(size=16) for _ in range(3)],
    )
    cfg = TrainConfig(lam=0.4, tau=0.9)
    fused, _ = loss_and_grad(params, item, cfg)
    assert fused == pytest.approx(combined_loss(params, item, cfg), rel=1e-12)
