"""Optimization loop, evaluation, early stopping, and experiment protocols."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import Corpus, TaggedSentence, TaskSpec, batch_iterator, build_vocab, \
    make_copy_aux, make_noise_corpus, make_random_relabel
from .errors import ConfigError, InputError, NumericsError
from .rng import Rng
from .sluice import SluiceModel, alpha_rows, alpha_sharing_ratio, beta_rows, \
    build_sluice_model, forward_all_tasks, total_loss


@dataclass
class TrainConfig:
    """Flat run configuration; every field is a config-file key."""

    # tasks and architecture
    tasks: str = "CHUNK,POS"
    main_task: str = "CHUNK"
    preset: str = "learned_sluice"
    n_layers: int = 3
    hidden: int = 100
    word_dim: int = 64
    char_dim: int = 100
    char_hidden: int = 50
    mlp_hidden: int = 100
    # ablation knobs
    mixing: str = "mixture"       # mixture | concat | skip
    alpha_mode: str = "learned"   # learned | constant
    subspaces: bool = True
    alpha_init: str = "biased"    # biased | uniform
    tied_task_init: str = "auto"  # auto | on | off
    embed_init: float = 0.1       # uniform embedding init half-width
    # optimization
    lr: float = 0.1
    lr_decay: float = 0.05
    patience: int = 2
    max_epochs: int = 30
    batch_size: int = 1
    seed: int = 1
    gamma: Optional[float] = None      # None -> preset default
    lambdas: Optional[str] = None      # comma floats aligned with tasks; None -> all 1.0
    min_count: int = 1

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        self.lambda_list()  # validates count against tasks

    def task_list(self) -> list[str]:
        return [t.strip() for t in self.tasks.split(",") if t.strip()]

    def lambda_list(self) -> list[float]:
        names = self.task_list()
        if self.lambdas is None:
            return [1.0] * len(names)
        try:
            vals = [float(x) for x in str(self.lambdas).split(",")]
        except ValueError:
            raise ConfigError(f"lambdas must be comma-separated floats, got {self.lambdas!r}") from None
        if len(vals) != len(names):
            raise ConfigError(f"{len(vals)} lambdas for {len(names)} tasks")
        return vals

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class MetricsRecord:
    """Per-epoch and final results of one run.

    Wall-clock numbers are kept out of to_json_dict(): the metrics file must
    be a byte-identical function of the manifest; timings go to a sidecar.
    """

    config: dict = field(default_factory=dict)
    epochs: list[dict] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    best_epoch: int = 0
    final: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "final": self.final,
            "meta": self.meta,
        }


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Inverse-time decay: lr0 / (1 + decay_rate * epoch), epoch 0-based."""
    return config.lr / (1.0 + config.lr_decay * epoch)


def early_stop_check(history: Sequence[float], patience: int = 2) -> tuple[bool, int]:
    """(stop, best_epoch) given main-task dev accuracies, one per epoch.

    Stops once the best value is `patience` or more epochs old; ties go to
    the earliest epoch. best_epoch is 1-based.
    """
    if not history:
        raise InputError("early_stop_check needs a non-empty history")
    best_idx = int(np.argmax(history))
    stop = (len(history) - 1 - best_idx) >= patience
    return stop, best_idx + 1


def evaluate_accuracy(model: SluiceModel, sentences: Sequence[TaggedSentence],
                      task_index: int) -> float:
    """Token-level accuracy of argmax predictions (ties -> lowest label id)."""
    if not sentences:
        raise InputError("cannot evaluate on an empty split")
    correct = 0
    total = 0
    for sent in sentences:
        with ad.Tape():
            logits = forward_all_tasks(model, sent.tokens, tasks=[task_index])[task_index]
        pred = np.argmax(logits.data, axis=1)
        correct += int((pred == np.asarray(sent.tags)).sum())
        total += len(sent.tags)
    return correct / total


def train_epoch(model: SluiceModel, corpora: Sequence[Corpus], config: TrainConfig,
                rng: Rng, lr: float) -> dict:
    """One uniform-sampling epoch of forward/backward/update steps."""
    ce_sums = {m: 0.0 for m in range(len(corpora))}
    tok_counts = {m: 0 for m in range(len(corpora))}
    max_alpha_grad = 0.0
    max_beta_grad = 0.0
    for batch_idx, (m, sentences) in enumerate(
            batch_iterator(corpora, config.batch_size, rng)):
        parts: dict = {}
        try:
            with ad.Tape() as tape:
                loss = total_loss(model, {m: sentences}, parts=parts)
                tape.backward(loss)
        except NumericsError as exc:
            raise NumericsError(
                f"non-finite loss at batch {batch_idx} (task {corpora[m].task.name})"
            ) from exc
        model.apply_grad_constraints()
        ga, gb = model.sharing_grad_norms()
        max_alpha_grad = max(max_alpha_grad, ga)
        max_beta_grad = max(max_beta_grad, gb)
        ad.sgd_step(tape.parameters, lr)
        model.note_step()
        ce_sums[m] += parts["ce_sum"][m]
        tok_counts[m] += parts["tokens"][m]
    train_loss = {m: (ce_sums[m] / tok_counts[m] if tok_counts[m] else 0.0)
                  for m in ce_sums}
    return {
        "train_loss": train_loss,
        "alpha_grad_norm": max_alpha_grad,
        "beta_grad_norm": max_beta_grad,
    }


def _resolve_flags(config: TrainConfig) -> dict:
    tied = {"auto": None, "on": True, "off": False}.get(config.tied_task_init)
    if tied is None and config.tied_task_init != "auto":
        raise ConfigError(f"tied_task_init must be auto/on/off, got {config.tied_task_init!r}")
    return dict(
        preset=config.preset,
        alpha_mode=None if config.alpha_mode == "learned" else config.alpha_mode,
        subspaces=None if config.subspaces else False,
        mixing=config.mixing,
        gamma=config.gamma,
        tied_task_init=tied,
    )


def build_model_for_run(config: TrainConfig, corpora: dict[str, Corpus],
                        rng: Rng) -> tuple[SluiceModel, list[Corpus]]:
    """Vocabulary, task ordering, and model construction for one run."""
    names = config.task_list()
    missing = [n for n in names if n not in corpora]
    if missing:
        raise InputError(f"no corpus for task(s) {missing}")
    ordered = [corpora[n] for n in names]
    if config.main_task not in names:
        raise ConfigError(f"main_task {config.main_task!r} not among tasks {names}")
    vocab = build_vocab(ordered, min_count=config.min_count)
    model = build_sluice_model(
        [c.task for c in ordered], vocab, rng,
        n_layers=config.n_layers, hidden=config.hidden, word_dim=config.word_dim,
        char_dim=config.char_dim, char_hidden=config.char_hidden,
        mlp_hidden=config.mlp_hidden, alpha_init=config.alpha_init,
        main_task=names.index(config.main_task), lambdas=config.lambda_list(),
        embed_init=config.embed_init, **_resolve_flags(config))
    return model, ordered


def run_training(config: TrainConfig, corpora: dict[str, Corpus]
                 ) -> tuple[MetricsRecord, SluiceModel]:
    """Full loop: epochs with uniform task sampling, early stopping on the
    main task's dev accuracy, final evaluation of the best snapshot on every
    non-train split."""
    seed_rng = Rng(config.seed)
    model, ordered = build_model_for_run(config, corpora, seed_rng.spawn(0))
    data_rng = seed_rng.spawn(1)
    names = config.task_list()
    main_idx = names.index(config.main_task)

    record = MetricsRecord(config=config.to_dict())
    dev_history: list[float] = []
    best_state: Optional[dict] = None
    best_epoch = 0
    for epoch in range(config.max_epochs):
        lr = lr_schedule(epoch, config)
        t0 = time.perf_counter()
        stats = train_epoch(model, ordered, config, data_rng, lr)
        record.wall_clock.append(time.perf_counter() - t0)
        dev_acc = {names[m]: evaluate_accuracy(model, c.split("dev"), m)
                   for m, c in enumerate(ordered)}
        record.epochs.append({
            "epoch": epoch + 1,
            "lr": lr,
            "train_loss": {names[m]: v for m, v in stats["train_loss"].items()},
            "dev_accuracy": dev_acc,
            "alpha_grad_norm": stats["alpha_grad_norm"],
            "beta_grad_norm": stats["beta_grad_norm"],
            "alpha": [list(r) for r in alpha_rows(model)],
            "beta": [list(r) for r in beta_rows(model)],
        })
        dev_history.append(dev_acc[config.main_task])
        stop, best_epoch = early_stop_check(dev_history, config.patience)
        if best_epoch == len(dev_history):
            best_state = model.state_dict()
        if stop:
            break
    record.best_epoch = best_epoch
    if best_state is not None:
        model.load_state_dict(best_state)
    eval_splits = sorted({s for c in ordered for s in c.splits if s != "train"})
    record.final = {
        names[m]: {split: evaluate_accuracy(model, c.split(split), m)
                   for split in eval_splits if split in c.splits}
        for m, c in enumerate(ordered)
    }
    record.meta["main_task"] = config.main_task
    return record, model


# ---------------------------------------------------------------------------
# experiment protocols
# ---------------------------------------------------------------------------

def run_synthetic_experiment(config: TrainConfig, source: Corpus,
                             sweep: Sequence[int], mode: str,
                             seeds: Sequence[int]) -> dict:
    """Cross/within sharing-ratio curve over training set sizes.

    For each n: the target task is the first n source sentences; the
    auxiliary is either a uniform relabeling of those sentences (Random) or
    an exact copy (Copy). Trains a 2-task model from uniform combiner
    weights for max_epochs and records the main task's cross/within ratio.
    """
    if mode not in ("random", "copy"):
        raise ConfigError(f"mode must be random or copy, got {mode!r}")
    if max(sweep) > len(source.train):
        raise InputError(
            f"sweep needs {max(sweep)} source sentences, have {len(source.train)}")
    rows = []
    init_ratios = []
    dev_size = min(len(source.train) - max(sweep), max(50, max(sweep) // 10))
    dev = source.train[len(source.train) - dev_size:] if dev_size > 0 else []
    for n in sweep:
        target = Corpus(TaskSpec(source.task.name, list(source.task.labels)),
                        {"train": source.train[:n]})
        for seed in seeds:
            seed_rng = Rng(seed)
            if mode == "random":
                aux = make_random_relabel(target, seed_rng.spawn(2))
            else:
                aux = make_copy_aux(target)
            run_cfg = replace(config, tasks=f"{target.task.name},{aux.task.name}",
                              main_task=target.task.name, alpha_init="uniform",
                              seed=seed, lambdas=None)
            corpora = {target.task.name: target, aux.task.name: aux}
            model, ordered = build_model_for_run(run_cfg, corpora, seed_rng.spawn(0))
            init_ratios.append(alpha_sharing_ratio(model))
            data_rng = seed_rng.spawn(1)
            dev_history: list[float] = []
            for epoch in range(run_cfg.max_epochs):
                train_epoch(model, ordered, run_cfg, data_rng, lr_schedule(epoch, run_cfg))
                if dev:  # the standard recipe: stop when target dev stalls
                    dev_history.append(evaluate_accuracy(model, dev, 0))
                    stop, _ = early_stop_check(dev_history, run_cfg.patience)
                    if stop:
                        break
            rows.append({"mode": mode, "n": n, "seed": seed,
                         "epochs": len(dev_history) or run_cfg.max_epochs,
                         "ratio": alpha_sharing_ratio(model)})
    medians = {n: float(np.median([r["ratio"] for r in rows if r["n"] == n]))
               for n in sweep}
    return {"mode": mode, "rows": rows, "medians": medians,
            "init_ratio": float(np.mean(init_ratios))}


NOISE_ARCHITECTURES = ("single_task", "hard_sharing", "learned_sluice")


def plateaued(history: Sequence[float], window: int = 3, min_gain: float = 0.001,
              min_epochs: int = 0) -> bool:
    """True once the best value improved by < min_gain over the last `window` epochs."""
    if len(history) <= max(window, min_epochs):
        return False
    return max(history) - max(history[:-window]) < min_gain


def run_noise_experiment(config: TrainConfig, chunk_corpus: Corpus,
                         pos_corpus: Corpus, seeds: Sequence[int]) -> dict:
    """Memorization curves on randomly relabeled data for three architectures.

    The main task is a 200-sentence random relabeling of the chunk corpus,
    the auxiliary 100 untouched tag sentences. Each architecture trains
    until its train accuracy plateaus (<0.1% gain over 3 epochs) or
    max_epochs. Returns per-seed accuracy-per-epoch curves.
    """
    curves: dict[str, list[list[float]]] = {arch: [] for arch in NOISE_ARCHITECTURES}
    for seed in seeds:
        noise, aux = make_noise_corpus(chunk_corpus, pos_corpus, Rng(seed).spawn(9))
        for arch in NOISE_ARCHITECTURES:
            if arch == "single_task":
                run_tasks = {noise.task.name: noise}
                task_key = noise.task.name
            else:
                run_tasks = {noise.task.name: noise, aux.task.name: aux}
                task_key = f"{noise.task.name},{aux.task.name}"
            lam = None if arch == "single_task" else config.lambdas
            run_cfg = replace(config, preset=arch, tasks=task_key,
                              main_task=noise.task.name, seed=seed, lambdas=lam)
            seed_rng = Rng(seed)
            model, ordered = build_model_for_run(run_cfg, run_tasks, seed_rng.spawn(0))
            data_rng = seed_rng.spawn(1)
            history: list[float] = []
            for epoch in range(run_cfg.max_epochs):
                train_epoch(model, ordered, run_cfg, data_rng, lr_schedule(epoch, run_cfg))
                history.append(evaluate_accuracy(model, noise.train, 0))
                if plateaued(history, min_epochs=10):
                    break
            curves[arch].append(history)
    return {
        "curves": curves,
        "meta": {"plateau_rule": "stop when best train accuracy improves by "
                                 "<0.1% absolute over 3 epochs, checked from "
                                 "epoch 11 on (memorization starts slowly)",
                 "chunk_sentences": len(chunk_corpus.train[:200]),
                 "pos_sentences": len(pos_corpus.train[:100])},
    }


ABLATION_GRID: tuple[tuple[str, str, bool], ...] = (
    ("constant", "concat", False),
    ("constant", "skip", False),
    ("constant", "mixture", False),
    ("learned", "concat", False),
    ("learned", "skip", False),
    ("learned", "mixture", False),
    ("learned", "mixture", True),
)


def run_ablation(config: TrainConfig, corpora: dict[str, Corpus],
                 grid: Sequence[tuple[str, str, bool]] = ABLATION_GRID) -> list[dict]:
    """One training run per (alpha mode, mixing mode, subspaces) cell."""
    rows = []
    for alpha_mode, mixing, subspaces in grid:
        cell_cfg = replace(config, preset="learned_sluice", alpha_mode=alpha_mode,
                           mixing=mixing, subspaces=subspaces)
        record, _ = run_training(cell_cfg, corpora)
        final_main = record.final[config.main_task]
        rows.append({
            "alpha": alpha_mode,
            "mixing": mixing,
            "subspaces": "on" if subspaces else "off",
            "dev_accuracy": max(e["dev_accuracy"][config.main_task]
                                for e in record.epochs),
            "test_accuracy": final_main.get("test"),
            "max_alpha_grad_norm": max(e["alpha_grad_norm"] for e in record.epochs),
            "epochs_run": len(record.epochs),
        })
    return rows
