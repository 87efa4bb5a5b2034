"""Embeddings, recurrent layers, subspace views, and output heads."""

import numpy as np
import pytest

from conftest import finite_diff, max_rel_err
from sluicenet import autodiff as ad
from sluicenet.encoder import CharWordEmbedder, LstmCell, RecurrentLayer, TaskHead, \
    Vocabulary, layer_forward, layer_forward_all, output_logits, recurrent_step
from sluicenet.errors import DimensionError, InputError
from sluicenet.rng import Rng


@pytest.fixture
def vocab():
    return Vocabulary(["the", "red", "car", "deal"], list("theredcardl"))


@pytest.fixture
def embedder(vocab):
    return CharWordEmbedder(vocab, word_dim=6, char_dim=4, char_hidden=3, rng=Rng(1))


def test_vocab_unk_reserved(vocab):
    assert vocab.unk_id == 0
    assert vocab.word_id("the") > 0
    assert vocab.word_id("zebra") == 0
    assert vocab.char_ids("zx") == [0, 0]
    # bijection apart from unk
    for tok, i in vocab.token_to_id.items():
        assert vocab.id_to_token[i] == tok


def test_embed_token_shape_and_determinism(embedder):
    with ad.Tape():
        v1 = embedder.embed_token("red")
        v2 = embedder.embed_token("red")
    assert v1.data.shape == (1, 6 + 2 * 3)
    assert np.array_equal(v1.data, v2.data)


def test_unseen_tokens_distinct_by_spelling(embedder):
    # both map to the unk word row, but char encodings differ
    with ad.Tape():
        a = embedder.embed_token("dreld")
        b = embedder.embed_token("ratte")
    assert np.array_equal(a.data[:, :6], b.data[:, :6])
    assert not np.allclose(a.data[:, 6:], b.data[:, 6:])


def test_embed_sentence_matches_per_token(embedder):
    toks = ["the", "red", "the", "car"]
    with ad.Tape():
        sent = embedder.embed_sentence(toks)
        per_tok = [embedder.embed_token(t) for t in toks]
    for i, t in enumerate(per_tok):
        assert np.allclose(sent.data[i], t.data[0], atol=1e-14)


def test_embed_empty_sentence_rejected(embedder):
    with ad.Tape():
        with pytest.raises(InputError):
            embedder.embed_sentence([])


def test_recurrent_step_zero_weights_gives_zero_h():
    cell = LstmCell(3, 4, Rng(0), "c")
    cell.w.data[...] = 0.0
    cell.b.data[...] = 0.0
    with ad.Tape():
        h, c = recurrent_step(cell, ad.constant(np.ones((1, 3))),
                              (ad.constant(np.zeros((1, 4))), ad.constant(np.zeros((1, 4)))))
    assert np.array_equal(h.data, np.zeros((1, 4)))


def test_recurrent_step_output_bounded():
    cell = LstmCell(3, 5, Rng(7), "c")
    rng = Rng(3)
    with ad.Tape():
        h = ad.constant(np.zeros((1, 5)))
        c = ad.constant(np.zeros((1, 5)))
        for _ in range(10):
            h, c = recurrent_step(cell, ad.constant(rng.uniform_array((1, 3), -5, 5)), (h, c))
            assert np.all(np.abs(h.data) < 1.0)


def test_recurrent_step_dimension_error():
    cell = LstmCell(3, 4, Rng(0), "c")
    with ad.Tape():
        with pytest.raises(DimensionError):
            recurrent_step(cell, ad.constant(np.ones((1, 7))),
                           (ad.constant(np.zeros((1, 4))), ad.constant(np.zeros((1, 4)))))


def test_layer_forward_shapes_and_length():
    layer = RecurrentLayer(1, 3, 4, Rng(2), "l")
    rng = Rng(5)
    for t_len in (1, 4):
        with ad.Tape():
            out = layer_forward(layer, ad.constant(rng.uniform_array((t_len, 3))))
        assert out.data.shape == (t_len, 8)
    with ad.Tape():
        with pytest.raises(InputError):
            layer_forward(layer, ad.constant(np.zeros((0, 3))))


def test_layer_forward_reversal_swaps_direction_halves():
    layer = RecurrentLayer(1, 3, 4, Rng(2), "l")
    # tie the direction weights so the swap is exact, not just structural
    layer.bwd.w.data[...] = layer.fwd.w.data
    layer.bwd.b.data[...] = layer.fwd.b.data
    xs = Rng(9).uniform_array((5, 3))
    with ad.Tape():
        fwd_out = layer_forward(layer, ad.constant(xs))
        rev_out = layer_forward(layer, ad.constant(xs[::-1].copy()))
    h = layer.hidden
    assert np.allclose(rev_out.data[::-1, :h], fwd_out.data[:, h:], atol=1e-12)
    assert np.allclose(rev_out.data[::-1, h:], fwd_out.data[:, :h], atol=1e-12)


def test_layer_forward_all_matches_single(tiny_setup=None):
    layers = [RecurrentLayer(1, 3, 4, Rng(s), f"l{s}") for s in (1, 2)]
    xs = [ad.constant(Rng(11).uniform_array((4, 3))),
          ad.constant(Rng(12).uniform_array((4, 3)))]
    with ad.Tape():
        banked = layer_forward_all(layers, xs)
        single = [layer_forward(layer, x) for layer, x in zip(layers, xs)]
    for a, b in zip(banked, single):
        assert np.allclose(a.data, b.data, atol=1e-14)


def test_subspace_views_partition_exactly():
    layer = RecurrentLayer(1, 3, 6, Rng(0), "l")
    s1, s2 = layer.subspace_cols
    assert len(np.intersect1d(s1, s2)) == 0
    assert sorted(np.concatenate([s1, s2]).tolist()) == list(range(12))
    xs = Rng(1).uniform_array((3, 3))
    with ad.Tape():
        out = layer_forward(layer, ad.constant(xs))
        v1 = layer.subspace_view(out, 0)
        v2 = layer.subspace_view(out, 1)
    joined = np.concatenate([v1.data, v2.data], axis=1)
    assert sorted(joined[0].tolist()) == sorted(out.data[0].tolist())


def test_gate_subspace_cols_partition_weight_columns():
    layer = RecurrentLayer(1, 3, 6, Rng(0), "l")
    g1 = layer.gate_subspace_cols(0)
    g2 = layer.gate_subspace_cols(1)
    assert len(np.intersect1d(g1, g2)) == 0
    assert sorted(np.concatenate([g1, g2]).tolist()) == list(range(4 * 6))


def test_head_zero_weights_uniform_softmax():
    head = TaskHead(6, 5, 4, Rng(3), "h")
    for p in head.parameters():
        p.data[...] = 0.0
    with ad.Tape():
        logits = output_logits(head, ad.constant(Rng(1).uniform_array((3, 6))))
    assert logits.data.shape == (3, 4)
    assert np.array_equal(logits.data, np.zeros((3, 4)))
    p = ad.softmax_np(logits.data)
    assert np.allclose(p, 0.25, atol=1e-15)


def test_head_argmax_shift_invariant():
    head = TaskHead(6, 5, 4, Rng(3), "h")
    x = Rng(2).uniform_array((3, 6))
    with ad.Tape():
        logits = output_logits(head, ad.constant(x))
    shifted = logits.data + 11.5
    assert np.array_equal(np.argmax(logits.data, axis=1), np.argmax(shifted, axis=1))


def test_head_dimension_error():
    head = TaskHead(6, 5, 4, Rng(3), "h")
    with ad.Tape():
        with pytest.raises(DimensionError):
            output_logits(head, ad.constant(np.ones((2, 7))))


def test_end_to_end_gradients_embed_layers_head(embedder, vocab):
    """Two-token sentence through embed -> 2 layers -> head vs finite differences."""
    layers = [RecurrentLayer(1, embedder.output_dim, 4, Rng(4), "l1"),
              RecurrentLayer(2, 8, 4, Rng(5), "l2")]
    head = TaskHead(8, 5, 3, Rng(6), "h")

    def loss_tensor():
        x = embedder.embed_sentence(["the", "red"])
        for layer in layers:
            x = layer_forward(layer, x)
        logits = output_logits(head, x)
        return ad.softmax_xent_sum(logits, [0, 2])

    with ad.Tape() as tape:
        tape.backward(loss_tensor())
    checked = [embedder.tables.word_matrix, embedder.tables.char_matrix,
               embedder.char_fwd.w, layers[0].fwd.w, layers[1].bwd.w,
               head.w1, head.b2]
    analytic = {p.name: p.grad.copy() for p in checked}
    for p, _ in [(p, None) for p in tape.parameters]:
        p.grad = None

    def value():
        with ad.Tape():
            return loss_tensor().item()

    for p in checked:
        numeric = finite_diff(value, p)
        # floor 1e-6 keeps central-difference roundoff (~1e-11 absolute) from
        # dominating the ratio on near-zero gradient coordinates
        assert max_rel_err(analytic[p.name], numeric, floor=1e-6) < 1e-4
