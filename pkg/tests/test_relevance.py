"""Relevance map tests: gradient oracle, accumulation rule, invariants."""

from __future__ import annotations

import numpy as np
import pytest

from itdt import model as tm
from itdt import relevance as rel
from itdt.errors import InvalidModel
from itdt.vocab import Vocabulary, tokenize


@pytest.fixture(scope="module")
def rel_model():
    vocab = Vocabulary.build(["alpha beta gamma delta epsilon zeta eta theta"])
    cfg = tm.ModelConfig(layers=2, heads=2, dim=16, ff_dim=32, classes=2, max_len=16, seed=17)
    model = tm.init_classifier(cfg, vocab)
    rng = np.random.default_rng(3)
    for name in model.params:
        model.params[name] = rng.normal(0.0, 0.3, size=model.params[name].shape)
    seq = tokenize("alpha delta gamma zeta beta", vocab)
    return model, seq


def fd_attention_gradient(model, seq, layer, head, i, j, step=1e-4):
    """Central difference on one attention entry, re-running from that point."""
    pred = tm.forward(model, seq)
    label = pred.label

    def logit_with(delta):
        override = pred.attention[layer].copy()
        override[head, i, j] += delta
        out, cache = tm.forward(model, seq, attn_override={layer: override}, return_cache=True)
        return cache["logits"][label]

    return (logit_with(step) - logit_with(-step)) / (2 * step)


def test_attention_gradients_match_finite_differences(rel_model):
    model, seq = rel_model
    attn, grads, _ = rel.attention_gradients(model, seq)
    n = len(seq)
    rng = np.random.default_rng(0)
    for _ in range(60):
        l = int(rng.integers(0, model.config.layers))
        h = int(rng.integers(0, model.config.heads))
        i = int(rng.integers(0, n))
        j = int(rng.integers(0, n))
        fd = fd_attention_gradient(model, seq, l, h, i, j)
        an = grads[l, h, i, j]
        assert abs(an - fd) <= 1e-3 * max(abs(an), abs(fd), 1e-4), (l, h, i, j, an, fd)


def test_attention_gradient_shapes(rel_model):
    model, seq = rel_model
    attn, grads, _ = rel.attention_gradients(model, seq)
    n = len(seq)
    assert grads.shape == (model.config.layers, model.config.heads, n, n)
    assert attn.shape == grads.shape


def test_zero_output_head_gives_zero_gradients(rel_model):
    model, seq = rel_model
    clone = tm.surrogate(model)
    clone.params["wout"][:] = 0.0
    clone.params["bout"][:] = 0.0
    _, grads, _ = rel.attention_gradients(clone, seq)
    assert np.allclose(grads, 0.0, atol=1e-15)


def test_non_finite_model_rejected(rel_model):
    model, seq = rel_model
    broken = tm.surrogate(model)
    broken.params["w1" if "w1" in broken.params else "l0_w1"][0, 0] = np.nan
    with pytest.raises(InvalidModel):
        rel.attention_gradients(broken, seq)


def test_accumulate_all_negative_gradients_yields_identity():
    n = 5
    attention = np.full((2, 2, n, n), 1.0 / n)
    gradients = -np.abs(np.random.default_rng(1).normal(size=(2, 2, n, n))) - 0.01
    a_map, i_grad = rel.accumulate(attention, gradients)
    assert np.array_equal(a_map, np.eye(n))
    assert np.array_equal(i_grad, np.eye(n))
    # per-token scores collapse to the CLS basis vector
    maps = rel.RelevanceMaps(a_map, i_grad, 0)
    assert np.array_equal(maps.a_map, np.eye(n)[0])


def test_accumulate_single_step_hand_computed():
    attention = np.array([[[[0.5, 0.5], [0.25, 0.75]]]])
    gradients = np.array([[[[2.0, -4.0], [1.0, 0.5]]]])
    a_map, i_grad = rel.accumulate(attention, gradients)
    expected_a = np.eye(2) + np.array([[1.0, 0.0], [0.25, 0.375]])
    expected_i = np.eye(2) + np.array([[2.0, 0.0], [1.0, 0.5]])
    assert np.allclose(a_map, expected_a, atol=1e-15)
    assert np.allclose(i_grad, expected_i, atol=1e-15)


def test_relevance_maps_deterministic(rel_model):
    model, seq = rel_model
    m1 = rel.relevance_maps(model, seq)
    m2 = rel.relevance_maps(model, seq)
    assert np.array_equal(m1.a_map_matrix, m2.a_map_matrix)
    assert np.array_equal(m1.i_grad_matrix, m2.i_grad_matrix)


def test_relevance_invariants_random_models():
    vocab = Vocabulary.build(["one two three four five six seven eight nine ten"])
    words = vocab.id_to_token[4:]
    rng = np.random.default_rng(7)
    for trial in range(10):
        cfg = tm.ModelConfig(layers=3, heads=2, dim=8, ff_dim=16, max_len=16, seed=trial)
        model = tm.init_classifier(cfg, vocab)
        for name in model.params:
            model.params[name] = rng.normal(0.0, 0.4, size=model.params[name].shape)
        text = " ".join(rng.choice(words, size=rng.integers(2, 8)))
        seq = tokenize(text, vocab)
        maps = rel.relevance_maps(model, seq)
        n = len(seq)
        for mat in (maps.a_map_matrix, maps.i_grad_matrix):
            assert np.all(np.isfinite(mat))
            assert mat.min() >= 0.0
            assert np.all(np.diag(mat) >= 1.0)
        # monotone in layer count
        prev_a = None
        prev_i = None
        for k in range(1, cfg.layers + 1):
            part = rel.relevance_maps(model, seq, up_to_layer=k)
            if prev_a is not None:
                assert np.all(part.a_map_matrix >= prev_a - 1e-15)
                assert np.all(part.i_grad_matrix >= prev_i - 1e-15)
            prev_a, prev_i = part.a_map_matrix, part.i_grad_matrix


def test_uniform_attention_self_consistency():
    """With attention forced to 1/n, the two maps differ only by that factor."""
    vocab = Vocabulary.build(["ape bee cat dog elk fox"])
    cfg = tm.ModelConfig(layers=1, heads=2, dim=8, ff_dim=16, max_len=16, seed=23)
    model = tm.init_classifier(cfg, vocab)
    rng = np.random.default_rng(9)
    for name in model.params:
        model.params[name] = rng.normal(0.0, 0.4, size=model.params[name].shape)
    seq = tokenize("cat dog fox", vocab)
    n = len(seq)
    uniform = np.full((cfg.heads, n, n), 1.0 / n)
    maps = rel.relevance_maps(model, seq, attn_override={0: uniform})
    lhs = maps.a_map_matrix - np.eye(n)
    rhs = (maps.i_grad_matrix - np.eye(n)) / n
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_dump_relevance_round_trip(tmp_path, rel_model):
    import json

    model, seq = rel_model
    maps = rel.relevance_maps(model, seq)
    path = tmp_path / "relevance.jsonl"
    with open(path, "w") as fh:
        rel.dump_relevance(fh, "ex1", seq.tokens, maps)
    row = json.loads(path.read_text().splitlines()[0])
    assert row["example_id"] == "ex1"
    assert row["tokens"] == seq.tokens
    assert len(row["a_map"]) == len(seq)
