"""Sequence representation: word+char embeddings, stacked BiLSTM layers, heads.

Each recurrent layer's per-direction hidden state is split into two equal
subspaces. With hidden size H per direction the layer output is laid out
[forward | backward] = [T x 2H], and subspace s is the concatenation of the
forward and backward halves of that subspace:

    subspace 1 columns = [0, H/2) + [H, H + H/2)
    subspace 2 columns = [H/2, H) + [H + H/2, 2H)

so cross-task mixing always acts on matched halves of both directions.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError, InputError
from .rng import Rng


def glorot(rng: Rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform_array(shape, -bound, bound)


class Vocabulary:
    """Word and character maps with id 0 reserved for unk in both."""

    UNK = "<unk>"

    def __init__(self, tokens: Sequence[str], chars: Sequence[str]):
        self.token_to_id = {self.UNK: 0}
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.token_to_id)
        self.char_to_id = {self.UNK: 0}
        for ch in chars:
            if ch not in self.char_to_id:
                self.char_to_id[ch] = len(self.char_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}
        self.id_to_char = {i: c for c, i in self.char_to_id.items()}
        self.unk_id = 0

    @property
    def n_words(self) -> int:
        return len(self.token_to_id)

    @property
    def n_chars(self) -> int:
        return len(self.char_to_id)

    def word_id(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def char_ids(self, token: str) -> list[int]:
        return [self.char_to_id.get(ch, self.unk_id) for ch in token]


class LstmCell:
    """One direction of an LSTM: fused weight [(d+H) x 4H] and bias [4H]."""

    def __init__(self, input_dim: int, hidden: int, rng: Rng, name: str):
        self.input_dim = input_dim
        self.hidden = hidden
        self.w = ad.parameter(
            glorot(rng, input_dim + hidden, 4 * hidden, (input_dim + hidden, 4 * hidden)),
            name=f"{name}.w")
        self.b = ad.parameter(np.zeros(4 * hidden), name=f"{name}.b")

    def parameters(self):
        return [self.w, self.b]


def recurrent_step(cell: LstmCell, x_t: ad.Tensor, state) -> tuple[ad.Tensor, ad.Tensor]:
    """Single LSTM update. state is (h, c), each [1 x H]; returns the new pair."""
    h, c = state
    return ad.lstm_step(x_t, h, c, cell.w, cell.b)


class EmbeddingTable:
    """Randomly initialized word and character embedding matrices."""

    def __init__(self, vocab: Vocabulary, word_dim: int, char_dim: int, rng: Rng,
                 init_scale: float = 0.1):
        self.word_dim = word_dim
        self.char_dim = char_dim
        self.word_matrix = ad.parameter(
            rng.uniform_array((vocab.n_words, word_dim), -init_scale, init_scale),
            name="embed.word")
        self.char_matrix = ad.parameter(
            rng.uniform_array((vocab.n_chars, char_dim), -init_scale, init_scale),
            name="embed.char")

    def parameters(self):
        return [self.word_matrix, self.char_matrix]


class CharWordEmbedder:
    """Token vector = word embedding ++ final states of a char-level BiLSTM.

    The character encoder is shared across all task networks, like the word
    embedding layer.
    """

    def __init__(self, vocab: Vocabulary, word_dim: int, char_dim: int,
                 char_hidden: int, rng: Rng, embed_init: float = 0.1):
        self.vocab = vocab
        self.tables = EmbeddingTable(vocab, word_dim, char_dim, rng, embed_init)
        self.char_fwd = LstmCell(char_dim, char_hidden, rng, "char.fwd")
        self.char_bwd = LstmCell(char_dim, char_hidden, rng, "char.bwd")
        self.output_dim = word_dim + 2 * char_hidden

    def parameters(self):
        return self.tables.parameters() + self.char_fwd.parameters() + self.char_bwd.parameters()

    def _char_encodings(self, tokens: Sequence[str]) -> ad.Tensor:
        """[N x 2*char_hidden]: final fwd state ++ final bwd state per token."""
        id_seqs = []
        for tok in tokens:
            ids = self.vocab.char_ids(tok)
            if not ids:
                raise InputError("cannot embed an empty token")
            id_seqs.append(ids)
        fwd = ad.char_lstm_final(self.tables.char_matrix, id_seqs,
                                 self.char_fwd.w, self.char_fwd.b)
        bwd = ad.char_lstm_final(self.tables.char_matrix, id_seqs,
                                 self.char_bwd.w, self.char_bwd.b, reverse=True)
        return ad.concat([fwd, bwd], axis=1)

    def embed_token(self, token: str) -> ad.Tensor:
        """[1 x (word_dim + 2*char_hidden)] vector for one token."""
        word = ad.take_rows(self.tables.word_matrix, [self.vocab.word_id(token)])
        return ad.concat([word, self._char_encodings([token])], axis=1)

    def embed_sentence(self, tokens: Sequence[str]) -> ad.Tensor:
        if not tokens:
            raise InputError("cannot embed an empty sentence")
        word = ad.take_rows(self.tables.word_matrix, [self.vocab.word_id(t) for t in tokens])
        uniq = list(dict.fromkeys(tokens))  # char encodings computed once per surface form
        chars = self._char_encodings(uniq)
        pos = {tok: i for i, tok in enumerate(uniq)}
        expanded = ad.take_rows(chars, [pos[t] for t in tokens])
        return ad.concat([word, expanded], axis=1)


class RecurrentLayer:
    """Bidirectional LSTM layer whose output exposes two subspace views."""

    def __init__(self, layer_index: int, input_dim: int, hidden: int, rng: Rng, name: str):
        if hidden % 2 != 0:
            raise DimensionError(f"hidden dimension must be even for the subspace split, got {hidden}")
        self.layer_index = layer_index
        self.input_dim = input_dim
        self.hidden = hidden
        self.fwd = LstmCell(input_dim, hidden, rng, f"{name}.fwd")
        self.bwd = LstmCell(input_dim, hidden, rng, f"{name}.bwd")
        half = hidden // 2
        self.subspace_cols = (
            np.concatenate([np.arange(0, half), np.arange(hidden, hidden + half)]),
            np.concatenate([np.arange(half, hidden), np.arange(hidden + half, 2 * hidden)]),
        )

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self):
        return self.fwd.parameters() + self.bwd.parameters()

    def input_weight_tensors(self):
        """Weight matrices whose input-row block carries the subspace penalty."""
        return [self.fwd.w, self.bwd.w]

    def gate_subspace_cols(self, s: int) -> np.ndarray:
        """Columns of the fused weight matrix that feed subspace s across all 4 gates."""
        half = self.hidden // 2
        start = s * half
        return np.concatenate([np.arange(g * self.hidden + start, g * self.hidden + start + half)
                               for g in range(4)])

    def subspace_view(self, h: ad.Tensor, s: int) -> ad.Tensor:
        return ad.take_columns(h, self.subspace_cols[s])


def layer_forward(layer: RecurrentLayer, xs: ad.Tensor) -> ad.Tensor:
    """[T x d] -> [T x 2H]: per-position concat of forward and backward states."""
    if xs.data.ndim != 2 or xs.data.shape[0] == 0:
        raise InputError("layer_forward needs a non-empty [T x d] input")
    fwd = ad.lstm_sequence(xs, layer.fwd.w, layer.fwd.b)
    bwd = ad.lstm_sequence(xs, layer.bwd.w, layer.bwd.b, reverse=True)
    return ad.concat([fwd, bwd], axis=1)


def layer_forward_all(layers: Sequence[RecurrentLayer],
                      inputs: Sequence[ad.Tensor]) -> list[ad.Tensor]:
    """layer_forward for several same-shaped layers, one recurrence node total."""
    if any(x.data.ndim != 2 or x.data.shape[0] == 0 for x in inputs):
        raise InputError("layer_forward_all needs non-empty [T x d] inputs")
    xs, ws, bs, rev = [], [], [], []
    for layer, x in zip(layers, inputs):
        xs.extend([x, x])
        ws.extend([layer.fwd.w, layer.bwd.w])
        bs.extend([layer.fwd.b, layer.bwd.b])
        rev.extend([False, True])
    states = ad.lstm_bank(xs, ws, bs, rev)
    return [ad.concat([states[2 * i], states[2 * i + 1]], axis=1)
            for i in range(len(layers))]


class TaskHead:
    """One hidden MLP layer (tanh) followed by a linear map to label logits."""

    def __init__(self, input_dim: int, mlp_hidden: int, n_labels: int, rng: Rng, name: str):
        self.n_labels = n_labels
        self.w1 = ad.parameter(glorot(rng, input_dim, mlp_hidden, (input_dim, mlp_hidden)),
                               name=f"{name}.w1")
        self.b1 = ad.parameter(np.zeros(mlp_hidden), name=f"{name}.b1")
        self.w2 = ad.parameter(glorot(rng, mlp_hidden, n_labels, (mlp_hidden, n_labels)),
                               name=f"{name}.w2")
        self.b2 = ad.parameter(np.zeros(n_labels), name=f"{name}.b2")

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]


def output_logits(head: TaskHead, h: ad.Tensor) -> ad.Tensor:
    """[T x d] mixed representation -> [T x n_labels] logits."""
    if h.data.ndim != 2 or h.data.shape[1] != head.w1.data.shape[0]:
        raise DimensionError(
            f"head expects input dim {head.w1.data.shape[0]}, got {h.data.shape}")
    hidden = ad.tanh(ad.affine(h, head.w1, head.b1))
    return ad.affine(hidden, head.w2, head.b2)


class TaskNetwork:
    """K stacked recurrent layers plus an output head for one tagging task."""

    def __init__(self, task_index: int, n_labels: int, input_dim: int, hidden: int,
                 n_layers: int, mlp_hidden: int, head_input_dim: int, rng: Rng,
                 name: str):
        self.task_index = task_index
        self.layers = []
        d = input_dim
        for k in range(n_layers):
            layer = RecurrentLayer(k + 1, d, hidden, rng, f"{name}.layer{k + 1}")
            self.layers.append(layer)
            d = layer.output_dim
        self.head = TaskHead(head_input_dim, mlp_hidden, n_labels, rng, f"{name}.head")

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend(self.head.parameters())
        return params

    def copy_recurrent_weights_from(self, other: "TaskNetwork") -> None:
        """Overwrite the recurrent layers' arrays with another network's.

        Heads stay task-specific (label inventories differ across tasks);
        this provides the symmetric initialization used by hard sharing.
        """
        mine = [p for layer in self.layers for p in layer.parameters()]
        theirs = [p for layer in other.layers for p in layer.parameters()]
        if len(mine) != len(theirs) or any(
                p.data.shape != q.data.shape for p, q in zip(mine, theirs)):
            raise ContractError("task networks have different recurrent layouts")
        for p, q in zip(mine, theirs):
            p.data[...] = q.data
