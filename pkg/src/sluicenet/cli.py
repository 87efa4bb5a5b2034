"""Command-line entry point: train, eval, and the experiment harnesses.

Every artifact-producing command writes manifest.json before doing any work;
all files except timings.json are deterministic functions of that manifest.
Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from . import __version__
from .data import Corpus
from .encoder import Vocabulary
from .errors import ConfigError, ContractError, SluiceError
from .rng import Rng
from .sluice import write_alpha_csv, write_beta_csv
from .toy import TOY_SPLIT_FILES, load_toy_corpora, make_task_corpus, toy_file_text
from .training import ABLATION_GRID, TrainConfig, evaluate_accuracy, \
    run_ablation, run_noise_experiment, run_synthetic_experiment, run_training

SNAPSHOT_FORMAT = "sluicenet-snapshot"
SNAPSHOT_VERSION = 1

_BOOL_WORDS = {"true": True, "1": True, "on": True, "yes": True,
               "false": False, "0": False, "off": False, "no": False}


def _parse_bool(key: str, raw: str) -> bool:
    if raw.lower() not in _BOOL_WORDS:
        raise ConfigError(f"key {key!r} expects a boolean, got {raw!r}")
    return _BOOL_WORDS[raw.lower()]


_INT_KEYS = {"n_layers", "hidden", "word_dim", "char_dim", "char_hidden",
             "mlp_hidden", "patience", "max_epochs", "batch_size", "seed",
             "min_count"}
_FLOAT_KEYS = {"lr", "lr_decay", "gamma", "embed_init"}
_BOOL_KEYS = {"subspaces"}
_STR_KEYS = {"tasks", "main_task", "preset", "mixing", "alpha_mode",
             "alpha_init", "tied_task_init", "lambdas"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r} expects a number, got {raw!r}") from None
    if key in _BOOL_KEYS:
        return _parse_bool(key, raw)
    return raw


def parse_config(path: Optional[str], overrides: Optional[dict] = None) -> TrainConfig:
    """Flat key=value file merged with command-line overrides (overrides win)."""
    values: dict = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in _ALL_KEYS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, str(raw))
    return TrainConfig(**values)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _corpus_manifest(data_dir: Optional[str], splits) -> list[dict]:
    entries = []
    for split in splits:
        text = toy_file_text(split, data_dir)
        fname = TOY_SPLIT_FILES[split]
        path = str(Path(data_dir) / fname) if data_dir else f"builtin:toydata/{fname}"
        entries.append({"split": split, "path": path,
                        "sha256": _sha256(text.encode("utf-8"))})
    return entries


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(outdir: Path, command: str, config: TrainConfig,
                    data_dir: Optional[str], splits, extra: Optional[dict] = None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "sluicenet",
        "version": __version__,
        "command": command,
        "config": config.to_dict(),
        "corpus_files": _corpus_manifest(data_dir, splits),
        "output_dir": str(outdir),
    }
    if extra:
        manifest.update(extra)
    _write_json(outdir / "manifest.json", manifest)


def _load_corpora(config: TrainConfig, data_dir: Optional[str],
                  splits=("train", "dev", "test", "ood_test")) -> dict[str, Corpus]:
    return load_toy_corpora(tasks=tuple(config.task_list()), data_dir=data_dir,
                            splits=splits)


def write_snapshot(path: Path, model, config: TrainConfig) -> None:
    """Self-contained parameter dump: config, vocab, label inventories, arrays."""
    words = [model.vocab.id_to_token[i] for i in range(1, model.vocab.n_words)]
    chars = [model.vocab.id_to_char[i] for i in range(1, model.vocab.n_chars)]
    snap = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "config": config.to_dict(),
        "vocab": {"words": words, "chars": chars},
        "tasks": [{"name": t.name, "labels": t.labels} for t in model.tasks],
        "params": {name: {"shape": list(p.data.shape),
                          "values": p.data.reshape(-1).tolist()}
                   for name, p in model.named_parameters()},
    }
    _write_json(path, snap)


def cmd_train(args) -> int:
    config = parse_config(args.config, _override_dict(args))
    outdir = Path(args.outdir)
    _write_manifest(outdir, "train", config, args.data_dir,
                    ("train", "dev", "test", "ood_test"))
    corpora = _load_corpora(config, args.data_dir)
    record, model = run_training(config, corpora)
    _write_json(outdir / "metrics.json", record.to_json_dict())
    _write_json(outdir / "timings.json",
                {"wall_clock_per_epoch_s": record.wall_clock})
    write_alpha_csv(model, outdir / "alpha.csv")
    write_beta_csv(model, outdir / "beta.csv")
    write_snapshot(outdir / "snapshot.json", model, config)
    print(f"trained {config.preset} for {len(record.epochs)} epochs; "
          f"best epoch {record.best_epoch}; outputs in {outdir}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from .data import TaskSpec, parse_conll
    from .errors import InputError
    from .sluice import build_sluice_model
    from .toy import TOY_COLUMNS
    from .training import _resolve_flags

    snap = json.loads(Path(args.snapshot).read_text(encoding="utf-8"))
    if snap.get("format") != SNAPSHOT_FORMAT or snap.get("version") != SNAPSHOT_VERSION:
        raise ContractError(f"not a {SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION} file: {args.snapshot}")
    config = TrainConfig(**snap["config"])
    tasks = [TaskSpec(t["name"], list(t["labels"])) for t in snap["tasks"]]
    vocab = Vocabulary(snap["vocab"]["words"], snap["vocab"]["chars"])
    names = config.task_list()
    model = build_sluice_model(
        tasks, vocab, Rng(config.seed),
        n_layers=config.n_layers, hidden=config.hidden, word_dim=config.word_dim,
        char_dim=config.char_dim, char_hidden=config.char_hidden,
        mlp_hidden=config.mlp_hidden, alpha_init=config.alpha_init,
        main_task=names.index(config.main_task), lambdas=config.lambda_list(),
        embed_init=config.embed_init, **_resolve_flags(config))
    state = {name: np.array(entry["values"]).reshape(entry["shape"])
             for name, entry in snap["params"].items()}
    model.load_state_dict(state)
    text = toy_file_text(args.split, args.data_dir)
    result = {}
    for m, task in enumerate(tasks):
        _, sentences = parse_conll(text, TOY_COLUMNS[task.name], labels=task.labels)
        if not sentences:
            raise InputError(f"split {args.split!r} is empty")
        result[task.name] = evaluate_accuracy(model, sentences, m)
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_synthetic(args) -> int:
    config = parse_config(args.config, _override_dict(args))
    sweep = [int(x) for x in args.sweep.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    outdir = Path(args.outdir)
    _write_manifest(outdir, "synthetic", config, None, (),
                    extra={"sweep": sweep, "seeds": seeds, "mode": args.mode,
                           "source_sentences": args.source_sentences,
                           "source_seed": args.source_seed})
    source = make_task_corpus("POS", args.source_sentences, args.source_seed)
    result = run_synthetic_experiment(config, source, sweep, args.mode, seeds)
    with open(outdir / "ratio_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "n", "median_ratio"])
        for n in sweep:
            w.writerow([args.mode, n, repr(result["medians"][n])])
    with open(outdir / "ratio_runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "n", "seed", "ratio"])
        for row in result["rows"]:
            w.writerow([row["mode"], row["n"], row["seed"], repr(row["ratio"])])
    print(f"synthetic {args.mode}: medians "
          f"{ {n: round(result['medians'][n], 4) for n in sweep} }")
    return 0


def cmd_noise(args) -> int:
    config = parse_config(args.config, _override_dict(args))
    seeds = [int(x) for x in args.seeds.split(",")]
    outdir = Path(args.outdir)
    _write_manifest(outdir, "noise", config, args.data_dir, ("train",),
                    extra={"seeds": seeds})
    corpora = _load_corpora(config, args.data_dir, splits=("train",))
    chunk, pos = corpora[config.main_task], corpora[config.task_list()[1]]
    result = run_noise_experiment(config, chunk, pos, seeds)
    with open(outdir / "noise_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["architecture", "seed", "epoch", "train_accuracy"])
        for arch, per_seed in result["curves"].items():
            for seed, curve in zip(seeds, per_seed):
                for epoch, acc in enumerate(curve, start=1):
                    w.writerow([arch, seed, epoch, repr(acc)])
    _write_json(outdir / "noise_meta.json", result["meta"])
    print(f"noise experiment: wrote curves for {list(result['curves'])}")
    return 0


def _ablation_cell(payload):
    cfg_dict, data_dir, cell = payload
    config = TrainConfig(**cfg_dict)
    corpora = load_toy_corpora(tasks=tuple(config.task_list()), data_dir=data_dir)
    return run_ablation(config, corpora, grid=[tuple(cell)])[0]


def cmd_ablate(args) -> int:
    config = parse_config(args.config, _override_dict(args))
    outdir = Path(args.outdir)
    _write_manifest(outdir, "ablate", config, args.data_dir,
                    ("train", "dev", "test", "ood_test"),
                    extra={"grid": [list(c) for c in ABLATION_GRID],
                           "jobs": args.jobs})
    if args.jobs > 1:
        payloads = [(config.to_dict(), args.data_dir, cell) for cell in ABLATION_GRID]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_ablation_cell, payloads))
    else:
        corpora = _load_corpora(config, args.data_dir)
        rows = run_ablation(config, corpora)
    with open(outdir / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "mixing", "subspaces", "dev_accuracy",
                    "test_accuracy", "max_alpha_grad_norm", "epochs_run"])
        for row in rows:
            w.writerow([row["alpha"], row["mixing"], row["subspaces"],
                        repr(row["dev_accuracy"]), repr(row["test_accuracy"]),
                        repr(row["max_alpha_grad_norm"]), row["epochs_run"]])
    print(f"ablation grid complete: {len(rows)} rows in {outdir / 'ablation.csv'}")
    return 0


def _override_dict(args) -> dict:
    return {key: getattr(args, f"opt_{key}") for key in sorted(_ALL_KEYS)}


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="flat key=value config file")
    for key in sorted(_ALL_KEYS):
        parser.add_argument(f"--{key.replace('_', '-')}", dest=f"opt_{key}",
                            default=None, help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sluicenet",
        description="Multi-task sequence tagging with learned cross-task sharing")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write run artifacts")
    _add_config_options(p_train)
    p_train.add_argument("--data-dir", default=None, help="corpus directory (default: bundled)")
    p_train.add_argument("--outdir", required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a snapshot; prints JSON accuracies")
    p_eval.add_argument("--snapshot", required=True)
    p_eval.add_argument("--split", default="dev")
    p_eval.add_argument("--data-dir", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_syn = sub.add_parser("synthetic", help="relabeled/copied auxiliary sharing curve")
    _add_config_options(p_syn)
    p_syn.add_argument("--mode", choices=("random", "copy"), required=True)
    p_syn.add_argument("--sweep", default="100,500,2000")
    p_syn.add_argument("--seeds", default="1,2,3,4,5")
    p_syn.add_argument("--source-sentences", type=int, default=2500)
    p_syn.add_argument("--source-seed", type=int, default=77)
    p_syn.add_argument("--outdir", required=True)
    p_syn.set_defaults(func=cmd_synthetic)

    p_noise = sub.add_parser("noise", help="noise-fitting learning curves")
    _add_config_options(p_noise)
    p_noise.add_argument("--seeds", default="1,2,3,4,5")
    p_noise.add_argument("--data-dir", default=None)
    p_noise.add_argument("--outdir", required=True)
    p_noise.set_defaults(func=cmd_noise)

    p_abl = sub.add_parser("ablate", help="7-cell sharing ablation grid")
    _add_config_options(p_abl)
    p_abl.add_argument("--data-dir", default=None)
    p_abl.add_argument("--jobs", type=int, default=1)
    p_abl.add_argument("--outdir", required=True)
    p_abl.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SluiceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
