"""Shared test fixtures and independent gradient/numeric oracles."""

import numpy as np
import pytest

from sluicenet import autodiff as ad
from sluicenet.data import Corpus, TaggedSentence, TaskSpec, build_vocab
from sluicenet.rng import Rng
from sluicenet.sluice import build_sluice_model


def finite_diff(fn, param, h=1e-5):
    """Central-difference gradient of the scalar function fn() w.r.t. param.data.

    fn must re-run the forward pass from scratch (fresh tape) and return a float.
    """
    fd = np.zeros_like(param.data)
    it = np.nditer(param.data, flags=["multi_index"])
    while not it.finished:
        ix = it.multi_index
        orig = param.data[ix]
        param.data[ix] = orig + h
        fp = fn()
        param.data[ix] = orig - h
        fm = fn()
        param.data[ix] = orig
        fd[ix] = (fp - fm) / (2.0 * h)
        it.iternext()
    return fd


def finite_diff_sample(fn, param, coords, h=1e-5):
    """Central differences at selected coordinates only (flat indices)."""
    out = {}
    flat = param.data.reshape(-1)
    for ix in coords:
        orig = flat[ix]
        flat[ix] = orig + h
        fp = fn()
        flat[ix] = orig - h
        fm = fn()
        flat[ix] = orig
        out[ix] = (fp - fm) / (2.0 * h)
    return out


def max_rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def grad_of(param, fn):
    """Analytic gradient of scalar fn (tape-built) w.r.t. param."""
    with ad.Tape() as tape:
        loss = fn()
        tape.backward(loss)
    g = param.grad.copy()
    param.grad = None
    return g


TINY_SENTS_A = [
    TaggedSentence(["the", "red", "car"], [0, 1, 2]),
    TaggedSentence(["a", "small", "deal"], [1, 0, 2]),
    TaggedSentence(["the", "car", "deal"], [0, 2, 1]),
]
TINY_SENTS_B = [
    TaggedSentence(["the", "red", "car"], [0, 1, 0]),
    TaggedSentence(["a", "deal"], [1, 0]),
]


def tiny_tasks():
    return TaskSpec("A", ["x", "y", "z"]), TaskSpec("B", ["p", "q"])


@pytest.fixture
def tiny_setup():
    """Two small tasks sharing a vocabulary, for fast model construction."""
    spec_a, spec_b = tiny_tasks()
    corp_a = Corpus(spec_a, {"train": list(TINY_SENTS_A)})
    corp_b = Corpus(spec_b, {"train": list(TINY_SENTS_B)})
    vocab = build_vocab([corp_a, corp_b])
    return {"tasks": [spec_a, spec_b], "corpora": [corp_a, corp_b], "vocab": vocab}


def tiny_model(setup, seed=0, **kwargs):
    defaults = dict(n_layers=2, hidden=4, word_dim=4, char_dim=3, char_hidden=2,
                    mlp_hidden=4)
    defaults.update(kwargs)
    return build_sluice_model(setup["tasks"], setup["vocab"], Rng(seed), **defaults)
