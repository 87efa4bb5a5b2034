"""Corpus ingestion and synthetic corpus generators.

Input format: one token per line, whitespace-separated columns, blank line
between sentences, '#' comment lines skipped. Column 0 is the token; the
caller picks which tag column to read. Tab- and multi-space-separated files
are both accepted.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .errors import InputError, ParseError
from .rng import Rng


@dataclass
class TaskSpec:
    """A named tagging task and its ordered label inventory."""

    name: str
    labels: list[str]
    is_main: bool = False

    def __post_init__(self):
        if len(self.labels) < 2:
            raise InputError(f"task {self.name!r} needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise InputError(f"task {self.name!r} has duplicate labels")

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label_id(self, label: str) -> int:
        return self.labels.index(label)


@dataclass
class TaggedSentence:
    tokens: list[str]
    tags: list[int]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise InputError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags in sentence")


@dataclass
class Corpus:
    """One task's data, split into train/dev/test (extra eval splits allowed)."""

    task: TaskSpec
    splits: dict[str, list[TaggedSentence]] = field(default_factory=dict)

    @property
    def train(self) -> list[TaggedSentence]:
        return self.splits.get("train", [])

    def split(self, name: str) -> list[TaggedSentence]:
        if name not in self.splits:
            raise InputError(f"corpus for {self.task.name!r} has no split {name!r}")
        return self.splits[name]


def parse_conll(text: str, column: int,
                labels: Optional[Sequence[str]] = None) -> tuple[list[str], list[TaggedSentence]]:
    """Read sentences taking tags from the given column (token is column 0).

    Returns (label inventory, sentences). The inventory accumulates in
    first-seen order unless a fixed one is passed, in which case unseen
    labels are a parse error. An empty file parses to ([], []).
    """
    if column < 1:
        raise ParseError(f"tag column must be >= 1, got {column}")
    inventory: list[str] = list(labels) if labels is not None else []
    fixed = labels is not None
    index = {lab: i for i, lab in enumerate(inventory)}
    sentences: list[TaggedSentence] = []
    tokens: list[str] = []
    tags: list[int] = []

    def flush():
        if tokens:
            sentences.append(TaggedSentence(list(tokens), list(tags)))
            tokens.clear()
            tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            flush()
            continue
        if stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) <= column:
            raise ParseError(
                f"line {lineno}: expected at least {column + 1} columns, got {len(fields)}")
        label = fields[column]
        if label not in index:
            if fixed:
                raise ParseError(f"line {lineno}: label {label!r} not in task inventory")
            index[label] = len(inventory)
            inventory.append(label)
        tokens.append(fields[0])
        tags.append(index[label])
    flush()
    return inventory, sentences


def serialize_conll(task: TaskSpec, sentences: Iterable[TaggedSentence]) -> str:
    """Inverse of parse_conll for a single tag column."""
    lines = []
    for sent in sentences:
        for tok, tag in zip(sent.tokens, sent.tags):
            lines.append(f"{tok}\t{task.labels[tag]}")
        lines.append("")
    return "\n".join(lines)


def build_vocab(corpora: Sequence[Corpus], min_count: int = 1):
    """Word/char vocabulary from the train splits only, first-occurrence order.

    Words below min_count map to unk; characters are always kept (a single
    rare word still deserves a usable character encoding).
    """
    from .encoder import Vocabulary

    counts: dict[str, int] = {}
    order: list[str] = []
    chars: list[str] = []
    seen_chars: set[str] = set()
    any_train = False
    for corpus in corpora:
        for sent in corpus.train:
            any_train = True
            for tok in sent.tokens:
                if tok not in counts:
                    counts[tok] = 0
                    order.append(tok)
                counts[tok] += 1
                for ch in tok:
                    if ch not in seen_chars:
                        seen_chars.add(ch)
                        chars.append(ch)
    if not any_train:
        raise InputError("build_vocab needs non-empty train splits")
    words = [w for w in order if counts[w] >= min_count]
    return Vocabulary(words, chars)


def make_random_relabel(corpus: Corpus, rng: Rng, name_suffix: str = "-RANDOM") -> Corpus:
    """Same tokens, every tag redrawn uniformly from the label inventory."""
    if not any(corpus.splits.values()):
        raise InputError("cannot relabel an empty corpus")
    n_labels = corpus.task.n_labels
    task = TaskSpec(corpus.task.name + name_suffix, list(corpus.task.labels))
    splits = {}
    for split_name, sentences in corpus.splits.items():
        splits[split_name] = [
            TaggedSentence(list(s.tokens), [rng.randint(n_labels) for _ in s.tags])
            for s in sentences
        ]
    return Corpus(task, splits)


def make_copy_aux(corpus: Corpus, name_suffix: str = "-COPY") -> Corpus:
    """Deep copy under a distinct task name."""
    task = TaskSpec(corpus.task.name + name_suffix, list(corpus.task.labels))
    splits = {name: copy.deepcopy(sents) for name, sents in corpus.splits.items()}
    return Corpus(task, splits)


def make_noise_corpus(chunk_corpus: Corpus, pos_corpus: Corpus, rng: Rng,
                      chunk_sentences: int = 200, pos_sentences: int = 100
                      ) -> tuple[Corpus, Corpus]:
    """Noise-fitting protocol data: randomly relabeled chunking + gold tags.

    Returns (main, auxiliary): `chunk_sentences` train sentences with labels
    redrawn uniformly, and `pos_sentences` untouched train sentences.
    """
    if len(chunk_corpus.train) < chunk_sentences:
        raise InputError(
            f"need {chunk_sentences} chunk sentences, have {len(chunk_corpus.train)}")
    if len(pos_corpus.train) < pos_sentences:
        raise InputError(
            f"need {pos_sentences} tag sentences, have {len(pos_corpus.train)}")
    chunk_slice = Corpus(chunk_corpus.task, {"train": chunk_corpus.train[:chunk_sentences]})
    noisy = make_random_relabel(chunk_slice, rng, name_suffix="-NOISE")
    aux = Corpus(pos_corpus.task,
                 {"train": copy.deepcopy(pos_corpus.train[:pos_sentences])})
    return noisy, aux


def batch_iterator(corpora: Sequence[Corpus], batch_size: int, rng: Rng
                   ) -> Iterator[tuple[int, list[TaggedSentence]]]:
    """One epoch of uniform task sampling without replacement.

    Each step draws a task uniformly among those with sentences left, then
    takes up to batch_size of its shuffled train sentences. The epoch ends
    when every task's train split is exhausted.
    """
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    queues = []
    for corpus in corpora:
        order = list(corpus.train)
        rng.shuffle(order)
        queues.append(order)
    cursors = [0] * len(queues)
    while True:
        open_tasks = [i for i, q in enumerate(queues) if cursors[i] < len(q)]
        if not open_tasks:
            return
        m = open_tasks[rng.randint(len(open_tasks))]
        batch = queues[m][cursors[m]:cursors[m] + batch_size]
        cursors[m] += len(batch)
        yield m, batch
