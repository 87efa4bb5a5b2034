"""Bundled synthetic mini-corpus and its generator.

A committed, license-free stand-in for a licensed tagging corpus: ~500
template-generated sentences carrying four tag columns (CHUNK, NER, SRL,
POS) whose label schemas mimic standard annotation inventories. An extra
out-of-domain split uses disjoint name pools and a shifted template mix.

File layout: token<TAB>CHUNK<TAB>NER<TAB>SRL<TAB>POS, blank line between
sentences. The generator is deterministic given a seed.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .data import Corpus, TaskSpec, parse_conll
from .errors import InputError
from .rng import Rng

TOY_TASKS = ("CHUNK", "NER", "SRL", "POS")
TOY_COLUMNS = {"CHUNK": 1, "NER": 2, "SRL": 3, "POS": 4}
TOY_SPLIT_FILES = {
    "train": "toy.train.conll",
    "dev": "toy.dev.conll",
    "test": "toy.test.conll",
    "ood_test": "toy.ood.conll",
}

def _compose(stems, middles, ends, n, title=False):
    """First n syllable compositions, a cheap source of distinct surface forms."""
    out = []
    for i in range(n):
        stem = stems[i % len(stems)]
        mid = middles[(i // len(stems)) % len(middles)]
        end = ends[(i // (len(stems) * len(middles))) % len(ends)]
        word = stem + mid + end
        out.append(word.capitalize() if title else word)
    return out


# pools are deliberately large: the noise-fitting protocol needs sentence
# contexts distinct enough to memorize, which a tiny vocabulary prevents
_POOLS = {
    "person": _compose(["var", "mol", "quil", "ber", "tam", "odu", "fer", "nak"],
                       ["en", "ar", "il", "os"], ["ko", "stad", "rick"], 40, title=True),
    "org": _compose(["dyna", "mer", "blue", "sol", "kan", "tri"],
                    ["c", "t", "v"], ["orp", "ex", "ine"], 16, title=True),
    "place": _compose(["kara", "brent", "ost", "lun", "far", "wel"],
                      ["v", "h", "m"], ["ille", "al", "ark"], 16, title=True),
    "det": ["the", "a"],
    "adj": _compose(["br", "gr", "sl", "cr"], ["ee", "au", "i", "o"],
                    ["sk", "nt", "ld", "m"], 24),
    "noun": _compose(["c", "rep", "meet", "contr", "merg", "budg", "aud", "pl"],
                     ["a", "o", "e"], ["rt", "ng", "ct", "al", "er"], 48),
    "verb": _compose(["fil", "sign", "approv", "reject", "review", "delay"],
                     ["e", "a"], ["d", "red"], 24),
    "prep": ["in", "near", "after", "before", "during"],
    "adv": _compose(["quick", "quiet", "recent", "final"], ["l"], ["y"], 4),
}

_OOD_POOLS = dict(_POOLS)
_OOD_POOLS.update({
    "person": _compose(["zem", "tor", "ive", "quar", "ash", "ost"],
                       ["la", "va", "rse"], ["k", "ld", "n"], 16, title=True),
    "org": _compose(["nova", "grim", "pel"], ["t", "sb"], ["ek", "ier"], 6, title=True),
    "place": _compose(["tarn", "esk", "vir"], ["o", "da"], ["w", "le"], 6, title=True),
    "noun": _compose(["ferr", "bridg", "harv", "fest", "storm", "voyag"],
                     ["e", "i"], ["y", "al", "st"], 16),
})

# each template: slot pool names + aligned tag rows per task
_TEMPLATES = [
    (("person", "verb", "det", "noun", "noun"),
     {"POS": ["NNP", "VBD", "DT", "NN", "NN"],
      "CHUNK": ["O", "B-VP", "B-NP", "I-NP", "I-NP"],
      "NER": ["B-PERSON", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "B-V", "B-ARG1", "I-ARG1", "I-ARG1"]}),
    (("person", "verb", "det", "adj", "noun"),
     {"POS": ["NNP", "VBD", "DT", "JJ", "NN"],
      "CHUNK": ["O", "B-VP", "B-NP", "I-NP", "I-NP"],
      "NER": ["B-PERSON", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "B-V", "B-ARG1", "I-ARG1", "I-ARG1"]}),
    (("org", "verb", "det", "noun", "prep", "place"),
     {"POS": ["NNP", "VBD", "DT", "NN", "IN", "NNP"],
      "CHUNK": ["O", "B-VP", "B-NP", "I-NP", "B-PP", "B-NP"],
      "NER": ["B-ORG", "O", "O", "O", "O", "B-LOC"],
      "SRL": ["B-ARG0", "B-V", "B-ARG1", "I-ARG1", "O", "O"]}),
    (("det", "noun", "verb", "prep", "det", "noun"),
     {"POS": ["DT", "NN", "VBD", "IN", "DT", "NN"],
      "CHUNK": ["B-NP", "I-NP", "B-VP", "B-PP", "B-NP", "I-NP"],
      "NER": ["O", "O", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "I-ARG0", "B-V", "O", "B-ARG1", "I-ARG1"]}),
    (("person", "adv", "verb", "det", "noun"),
     {"POS": ["NNP", "RB", "VBD", "DT", "NN"],
      "CHUNK": ["O", "B-ADVP", "B-VP", "B-NP", "I-NP"],
      "NER": ["B-PERSON", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "O", "B-V", "B-ARG1", "I-ARG1"]}),
    (("det", "adj", "noun", "verb", "det", "noun"),
     {"POS": ["DT", "JJ", "NN", "VBD", "DT", "NN"],
      "CHUNK": ["B-NP", "I-NP", "I-NP", "B-VP", "B-NP", "I-NP"],
      "NER": ["O", "O", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "I-ARG0", "I-ARG0", "B-V", "B-ARG1", "I-ARG1"]}),
    (("org", "verb", "det", "adj", "noun"),
     {"POS": ["NNP", "VBD", "DT", "JJ", "NN"],
      "CHUNK": ["O", "B-VP", "B-NP", "I-NP", "I-NP"],
      "NER": ["B-ORG", "O", "O", "O", "O"],
      "SRL": ["B-ARG0", "B-V", "B-ARG1", "I-ARG1", "I-ARG1"]}),
    (("person", "verb", "prep", "place"),
     {"POS": ["NNP", "VBD", "IN", "NNP"],
      "CHUNK": ["O", "B-VP", "B-PP", "B-NP"],
      "NER": ["B-PERSON", "O", "O", "B-LOC"],
      "SRL": ["B-ARG0", "B-V", "O", "O"]}),
]

# the OOD split leans on the prepositional templates much more heavily
_BASE_TEMPLATE_WEIGHTS = [3, 3, 2, 2, 2, 2, 2, 2]
_OOD_TEMPLATE_WEIGHTS = [1, 1, 4, 4, 1, 2, 1, 4]


def generate_sentences(n: int, rng: Rng, domain: str = "base"):
    """n template sentences as (tokens, {task: tag strings}) pairs."""
    pools = _POOLS if domain == "base" else _OOD_POOLS
    weights = _BASE_TEMPLATE_WEIGHTS if domain == "base" else _OOD_TEMPLATE_WEIGHTS
    bag = [i for i, w in enumerate(weights) for _ in range(w)]
    out = []
    for _ in range(n):
        slots, tag_rows = _TEMPLATES[bag[rng.randint(len(bag))]]
        tokens = [pools[slot][rng.randint(len(pools[slot]))] for slot in slots]
        out.append((tokens, {task: list(tags) for task, tags in tag_rows.items()}))
    return out


def format_conll(sentences) -> str:
    lines = []
    for tokens, tag_rows in sentences:
        for i, tok in enumerate(tokens):
            lines.append("\t".join([tok] + [tag_rows[t][i] for t in TOY_TASKS]))
        lines.append("")
    return "\n".join(lines) + "\n"


def write_toy_corpus(out_dir, seed: int = 20240501,
                     sizes: Optional[dict[str, int]] = None) -> None:
    """Regenerate the committed corpus files (deterministic in the seed)."""
    sizes = sizes or {"train": 320, "dev": 80, "test": 80, "ood_test": 80}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    for key, (split, fname) in enumerate(TOY_SPLIT_FILES.items()):
        domain = "ood" if split == "ood_test" else "base"
        sents = generate_sentences(sizes[split], rng.spawn(key), domain)
        (out_dir / fname).write_text(format_conll(sents), encoding="utf-8")


def toy_file_text(split: str, data_dir=None) -> str:
    """Text of one split file, from disk or the packaged corpus."""
    fname = TOY_SPLIT_FILES[split]
    if data_dir is not None:
        return (Path(data_dir) / fname).read_text(encoding="utf-8")
    return resources.files("sluicenet").joinpath(f"toydata/{fname}").read_text(encoding="utf-8")


def load_toy_corpora(tasks: Sequence[str] = TOY_TASKS, data_dir=None,
                     splits: Sequence[str] = ("train", "dev", "test", "ood_test")
                     ) -> dict[str, Corpus]:
    """Parse the bundled files into one Corpus per requested task."""
    for t in tasks:
        if t not in TOY_COLUMNS:
            raise InputError(f"unknown toy task {t!r}; choose from {sorted(TOY_COLUMNS)}")
    texts = {split: toy_file_text(split, data_dir) for split in splits}
    corpora = {}
    for t in tasks:
        col = TOY_COLUMNS[t]
        inventory, train = parse_conll(texts["train"], col)
        spec = TaskSpec(t, inventory)
        split_data = {"train": train}
        for split in splits:
            if split == "train":
                continue
            _, sents = parse_conll(texts[split], col, labels=inventory)
            split_data[split] = sents
        corpora[t] = Corpus(spec, split_data)
    return corpora


def make_task_corpus(task: str, n: int, seed: int, domain: str = "base") -> Corpus:
    """Freshly generated single-task corpus (train split only).

    Used by the synthetic sharing experiment, which needs more source
    sentences than the committed corpus carries.
    """
    if task not in TOY_COLUMNS:
        raise InputError(f"unknown toy task {task!r}")
    sents = generate_sentences(n, Rng(seed))
    text = format_conll(sents)
    inventory, parsed = parse_conll(text, TOY_COLUMNS[task])
    return Corpus(TaskSpec(task, inventory), {"train": parsed})
