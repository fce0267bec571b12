"""Forward/backward math of the code-producing models and the container."""

from __future__ import annotations

import numpy as np
import pytest

from bpv.corpus import Vocabulary
from bpv.errors import ConfigError, IncompatibleModel, NonFiniteLoss
from bpv.models import (
    BINARY_PVDBOW,
    BINARY_PVDM,
    PLAIN_PVDBOW,
    REAL_BINARY_PVDBOW,
    ModelParams,
    _restricted_softmax,
    binarize_backward,
    binarize_forward,
    doc_code,
    full_candidates,
    init_params,
    load_model,
    pvdbow_forward,
    pvdm_forward,
    real_binary_forward,
    save_model,
    sigmoid,
    softmax_input_dim,
)

SIGMOID_AT_MINUS_2 = 0.11920292202211755


def central_diff(f, x, h=1e-6):
    """Central finite differences of a scalar function over an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def _random_softmax(rng, v, k):
    weights = rng.standard_normal((v, k))
    bias = rng.standard_normal(v)
    target = int(rng.integers(v))
    ids, corrections = full_candidates(v, target)
    return weights, bias, target, ids, corrections


# ---------------------------------------------------------------------------
# sigmoid and the rounding layer
# ---------------------------------------------------------------------------


def test_sigmoid_matches_closed_form_and_stays_finite():
    x = np.linspace(-30, 30, 101)
    np.testing.assert_allclose(sigmoid(x), 1.0 / (1.0 + np.exp(-x)), atol=1e-15)
    extreme = sigmoid(np.array([-1000.0, 1000.0]))
    assert np.all(np.isfinite(extreme))
    np.testing.assert_allclose(extreme, [0.0, 1.0], atol=1e-15)


def test_binarize_forward_rounds_half_up():
    bits, s = binarize_forward(np.array([-2.0, 0.0, 3.0]))
    assert bits.tolist() == [0, 1, 1]  # exact 0 input rounds to 1
    np.testing.assert_allclose(s[1], 0.5)
    np.testing.assert_allclose(s[0], SIGMOID_AT_MINUS_2)


def test_binarize_backward_closed_form():
    s = sigmoid(np.array([-2.0]))
    got = binarize_backward(np.array([2.0]), s)
    np.testing.assert_allclose(got, [0.20998717080701323], atol=1e-15)


def test_binarize_backward_equals_sigmoid_jacobian_product():
    # straight-through backward must equal grad_out * sigma'(x) exactly
    rng = np.random.default_rng(0)
    x = rng.standard_normal(64) * 3
    grad_out = rng.standard_normal(64)
    _, s = binarize_forward(x)
    np.testing.assert_allclose(
        binarize_backward(grad_out, s), grad_out * s * (1 - s), atol=1e-12
    )


def test_sigmoid_derivative_matches_finite_differences():
    x = np.linspace(-6, 6, 41)
    s = sigmoid(x)
    numeric = central_diff(lambda z: float(sigmoid(z).sum()), x)
    np.testing.assert_allclose(s * (1 - s), numeric, rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------------------
# restricted softmax gradients against finite differences
# ---------------------------------------------------------------------------


def test_restricted_softmax_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    for trial in range(5):
        v, k = int(rng.integers(2, 9)), int(rng.integers(1, 9))
        weights, bias, target, ids, corr = _random_softmax(rng, v, k)
        code = rng.standard_normal(k)
        loss, g, grad_code = _restricted_softmax(code, ids, corr, weights, bias)

        num_code = central_diff(
            lambda c: _restricted_softmax(c, ids, corr, weights, bias)[0], code
        )
        np.testing.assert_allclose(grad_code, num_code, rtol=1e-4, atol=1e-8)

        # dL/dW[r] = sum of g over candidate entries naming r, times the code
        num_w = central_diff(
            lambda w: _restricted_softmax(code, ids, corr, w, bias)[0], weights
        )
        ana_w = np.zeros_like(weights)
        for j, r in enumerate(ids):
            ana_w[r] += g[j] * code
        np.testing.assert_allclose(ana_w, num_w, rtol=1e-4, atol=1e-8)

        num_b = central_diff(
            lambda b: _restricted_softmax(code, ids, corr, weights, b)[0], bias
        )
        ana_b = np.zeros_like(bias)
        for j, r in enumerate(ids):
            ana_b[r] += g[j]
        np.testing.assert_allclose(ana_b, num_b, rtol=1e-4, atol=1e-8)


def test_restricted_softmax_rejects_nonfinite():
    ids = np.array([0, 1])
    corr = np.zeros(2)
    weights = np.array([[np.inf], [0.0]])
    with pytest.raises(NonFiniteLoss):
        _restricted_softmax(np.array([1.0]), ids, corr, weights, np.zeros(2))


def test_zero_initialized_softmax_loss_is_log_vocab():
    v, k = 37, 8
    weights = np.zeros((v, k))
    bias = np.zeros(v)
    ids, corr = full_candidates(v, 5)
    loss, _, _ = _restricted_softmax(np.ones(k), ids, corr, weights, bias)
    np.testing.assert_allclose(loss, np.log(v), atol=1e-12)


def test_full_candidates_covers_vocab_target_first():
    ids, corr = full_candidates(6, 4)
    assert ids[0] == 4
    assert sorted(ids.tolist()) == list(range(6))
    assert np.all(corr == 0)


# ---------------------------------------------------------------------------
# surrogate-path gradients (rounding skipped) against finite differences
# ---------------------------------------------------------------------------


def test_pvdbow_surrogate_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for trial in range(4):
        v, d = int(rng.integers(2, 9)), int(rng.integers(1, 9))
        weights, bias, target, ids, corr = _random_softmax(rng, v, d)
        x = rng.standard_normal(d)

        def soft_loss(z):
            return _restricted_softmax(sigmoid(z), ids, corr, weights, bias)[0]

        s = sigmoid(x)
        _, _, grad_code = _restricted_softmax(s, ids, corr, weights, bias)
        analytic = binarize_backward(grad_code, s)
        np.testing.assert_allclose(
            analytic, central_diff(soft_loss, x), rtol=1e-4, atol=1e-8
        )


def test_real_binary_surrogate_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    v, d, c = 7, 5, 3
    weights, bias, target, ids, corr = _random_softmax(rng, v, c)
    doc = rng.standard_normal(d)
    projection = rng.standard_normal((d, c))

    def soft_loss_doc(z):
        return _restricted_softmax(sigmoid(z @ projection), ids, corr, weights, bias)[0]

    def soft_loss_proj(p):
        return _restricted_softmax(sigmoid(doc @ p), ids, corr, weights, bias)[0]

    s = sigmoid(doc @ projection)
    _, _, grad_code = _restricted_softmax(s, ids, corr, weights, bias)
    grad_projected = binarize_backward(grad_code, s)
    np.testing.assert_allclose(
        projection @ grad_projected,
        central_diff(soft_loss_doc, doc),
        rtol=1e-4,
        atol=1e-8,
    )
    np.testing.assert_allclose(
        np.outer(doc, grad_projected),
        central_diff(soft_loss_proj, projection),
        rtol=1e-4,
        atol=1e-8,
    )


def test_pvdm_surrogate_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    v, c, dw, window = 6, 4, 3, 2
    k = c + window * dw
    weights, bias, target, ids, corr = _random_softmax(rng, v, k)
    doc = rng.standard_normal(c)
    ctx = rng.standard_normal((window, dw))

    def soft_loss(flat):
        concat = sigmoid(flat)
        return _restricted_softmax(concat, ids, corr, weights, bias)[0]

    flat = np.concatenate([doc, ctx.ravel()])
    s = sigmoid(flat)
    _, _, grad_code = _restricted_softmax(s, ids, corr, weights, bias)
    analytic = binarize_backward(grad_code, s)
    numeric = central_diff(soft_loss, flat)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)


# ---------------------------------------------------------------------------
# hard-path forwards: wiring invariants
# ---------------------------------------------------------------------------


def test_pvdbow_forward_uses_hard_bits_and_straight_through():
    rng = np.random.default_rng(4)
    v, d = 9, 6
    weights, bias, target, ids, corr = _random_softmax(rng, v, d)
    doc = rng.standard_normal(d)
    res = pvdbow_forward(doc, target, ids, corr, weights, bias)
    bits = (doc >= 0).astype(np.float64)
    np.testing.assert_array_equal(res.code, bits)
    loss, g, grad_code = _restricted_softmax(bits, ids, corr, weights, bias)
    np.testing.assert_allclose(res.loss, loss)
    np.testing.assert_allclose(res.candidate_grad, g)
    s = sigmoid(doc)
    np.testing.assert_allclose(res.grad_doc, grad_code * s * (1 - s), atol=1e-14)


def test_pvdbow_forward_unbinarized_passes_raw_vector():
    rng = np.random.default_rng(5)
    v, d = 5, 4
    weights, bias, target, ids, corr = _random_softmax(rng, v, d)
    doc = rng.standard_normal(d)
    res = pvdbow_forward(doc, target, ids, corr, weights, bias, binarize=False)
    np.testing.assert_array_equal(res.code, doc)
    _, _, grad_code = _restricted_softmax(doc, ids, corr, weights, bias)
    np.testing.assert_allclose(res.grad_doc, grad_code)


def test_pvdm_forward_splits_doc_and_context_gradients():
    rng = np.random.default_rng(6)
    v, c, dw, window = 8, 3, 2, 2
    k = c + window * dw
    weights, bias, target, ids, corr = _random_softmax(rng, v, k)
    doc = rng.standard_normal(c)
    ctx = rng.standard_normal((window, dw))
    res = pvdm_forward(doc, ctx, target, ids, corr, weights, bias)
    assert res.grad_doc.shape == (c,)
    assert res.grad_context.shape == (window, dw)
    concat = np.concatenate([doc, ctx.ravel()])
    np.testing.assert_array_equal(res.code, (concat >= 0).astype(np.float64))


def test_forward_requires_target_first():
    weights = np.zeros((3, 2))
    bias = np.zeros(3)
    ids = np.array([1, 0, 2])
    corr = np.zeros(3)
    with pytest.raises(ValueError, match="target"):
        pvdbow_forward(np.ones(2), 0, ids, corr, weights, bias)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _vocab(n=10):
    counts = {f"term{i:02d}": n - i for i in range(n)}
    return Vocabulary.from_counts(counts, min_count=1, include_bigrams=False)


def test_init_params_shapes_and_ranges():
    vocab = _vocab(12)
    p = init_params(BINARY_PVDBOW, vocab, code_bits=16, doc_count=5, seed=1)
    assert p.doc_embeddings.shape == (5, 16)
    assert np.all(np.abs(p.doc_embeddings) <= 0.5 / 16)
    assert p.softmax_weights.shape == (12, 16)
    assert not p.softmax_weights.any() and not p.softmax_bias.any()
    assert p.projection is None and p.word_embeddings is None

    q = init_params(
        REAL_BINARY_PVDBOW, vocab, code_bits=8, dim=20, doc_count=3, seed=1
    )
    assert q.projection.shape == (20, 8)
    bound = np.sqrt(6.0 / 28)
    assert np.all(np.abs(q.projection) <= bound)
    assert q.softmax_weights.shape == (12, 8)

    r = init_params(
        BINARY_PVDM, vocab, code_bits=6, word_dim=4, context_window=2,
        doc_count=2, seed=1,
    )
    assert r.word_embeddings.shape == (12, 4)
    assert r.softmax_weights.shape == (12, 6 + 2 * 4)

    s = init_params(PLAIN_PVDBOW, vocab, code_bits=0, dim=9, doc_count=2, seed=1)
    assert s.code_bits == 0
    assert s.softmax_weights.shape == (12, 9)


def test_init_params_is_seed_deterministic():
    vocab = _vocab()
    a = init_params(BINARY_PVDBOW, vocab, code_bits=8, doc_count=4, seed=7)
    b = init_params(BINARY_PVDBOW, vocab, code_bits=8, doc_count=4, seed=7)
    np.testing.assert_array_equal(a.doc_embeddings, b.doc_embeddings)


def test_init_params_rejects_bad_configs():
    vocab = _vocab()
    with pytest.raises(ConfigError):
        init_params(BINARY_PVDBOW, vocab, code_bits=8, dim=16)
    with pytest.raises(ConfigError):
        init_params(REAL_BINARY_PVDBOW, vocab, code_bits=8)
    with pytest.raises(ConfigError):
        init_params(PLAIN_PVDBOW, vocab, code_bits=0)
    with pytest.raises(ConfigError):
        init_params(BINARY_PVDM, vocab, code_bits=4, context_window=0)
    with pytest.raises(ConfigError):
        init_params("no-such-kind", vocab, code_bits=4)
    with pytest.raises(ConfigError):
        softmax_input_dim("rhp", 8, 8, 0, 0)


def test_doc_code_per_kind():
    vocab = _vocab()
    p = init_params(BINARY_PVDBOW, vocab, code_bits=4, doc_count=1)
    code = doc_code(p, np.array([-1.0, 0.0, 2.0, -3.0]))
    assert code.unpack().tolist() == [0, 1, 1, 0]

    q = init_params(REAL_BINARY_PVDBOW, vocab, code_bits=3, dim=4, doc_count=1, seed=2)
    vec = np.array([0.3, -0.2, 0.5, 0.1])
    expected = (vec @ q.projection.astype(np.float64) >= 0).astype(int)
    assert doc_code(q, vec).unpack().tolist() == expected.tolist()

    s = init_params(PLAIN_PVDBOW, vocab, code_bits=0, dim=4, doc_count=1)
    with pytest.raises(IncompatibleModel):
        doc_code(s, vec)


# ---------------------------------------------------------------------------
# container round trips
# ---------------------------------------------------------------------------


def _assert_params_equal(a: ModelParams, b: ModelParams, with_docs=True):
    assert a.kind == b.kind
    assert (a.code_bits, a.dim, a.word_dim, a.context_window) == (
        b.code_bits, b.dim, b.word_dim, b.context_window,
    )
    assert a.vocabulary.terms == b.vocabulary.terms
    assert a.vocabulary.counts.tolist() == b.vocabulary.counts.tolist()
    np.testing.assert_array_equal(a.softmax_weights, b.softmax_weights)
    np.testing.assert_array_equal(a.softmax_bias, b.softmax_bias)
    for name in ("projection", "word_embeddings"):
        ma, mb = getattr(a, name), getattr(b, name)
        assert (ma is None) == (mb is None)
        if ma is not None:
            np.testing.assert_array_equal(ma, mb)
    if with_docs:
        np.testing.assert_array_equal(a.doc_embeddings, b.doc_embeddings)
    else:
        assert b.doc_embeddings is None


@pytest.mark.parametrize(
    "kind,kwargs",
    [
        (BINARY_PVDBOW, dict(code_bits=8)),
        (BINARY_PVDM, dict(code_bits=8, word_dim=5, context_window=2)),
        (REAL_BINARY_PVDBOW, dict(code_bits=6, dim=11)),
        (PLAIN_PVDBOW, dict(code_bits=0, dim=7)),
    ],
)
def test_container_roundtrip(tmp_path, kind, kwargs):
    rng = np.random.default_rng(8)
    params = init_params(kind, _vocab(), doc_count=4, seed=3, **kwargs)
    params.softmax_weights[:] = rng.standard_normal(params.softmax_weights.shape)
    params.softmax_bias[:] = rng.standard_normal(params.softmax_bias.shape)
    path = tmp_path / "m.bpv1"
    save_model(str(path), params)
    _assert_params_equal(params, load_model(str(path)))


def test_container_inference_only_omits_doc_matrix(tmp_path):
    params = init_params(BINARY_PVDBOW, _vocab(), code_bits=8, doc_count=100, seed=0)
    full = tmp_path / "full.bpv1"
    slim = tmp_path / "slim.bpv1"
    save_model(str(full), params)
    save_model(str(slim), params, inference_only=True)
    assert slim.stat().st_size < full.stat().st_size
    loaded = load_model(str(slim))
    _assert_params_equal(params, loaded, with_docs=False)
    # kind byte carries the inference-only flag in its high bit
    assert slim.read_bytes()[4] & 0x80


def test_container_rejects_corruption(tmp_path):
    params = init_params(BINARY_PVDBOW, _vocab(), code_bits=8, doc_count=2, seed=0)
    path = tmp_path / "m.bpv1"
    save_model(str(path), params)
    data = path.read_bytes()

    bad = tmp_path / "magic"
    bad.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(IncompatibleModel, match="magic"):
        load_model(str(bad))

    tag = tmp_path / "tag"
    tag.write_bytes(data[:4] + bytes([9]) + data[5:])
    with pytest.raises(IncompatibleModel, match="kind tag"):
        load_model(str(tag))

    trunc = tmp_path / "trunc"
    trunc.write_bytes(data[:-5])
    with pytest.raises(IncompatibleModel, match="truncated"):
        load_model(str(trunc))

    trail = tmp_path / "trail"
    trail.write_bytes(data + b"\x00\x00")
    with pytest.raises(IncompatibleModel, match="trailing"):
        load_model(str(trail))

    # u32 vocab size field (bytes 5..9) contradicting the embedded block
    mismatch = tmp_path / "vmismatch"
    mismatch.write_bytes(data[:5] + (99).to_bytes(4, "little") + data[9:])
    with pytest.raises(IncompatibleModel, match="vocabulary"):
        load_model(str(mismatch))


def test_save_model_rejects_baseline_kinds(tmp_path):
    params = init_params(BINARY_PVDBOW, _vocab(), code_bits=8, doc_count=1)
    params.kind = "rhp"
    with pytest.raises(IncompatibleModel):
        save_model(str(tmp_path / "x"), params)
