"""Config parsing, run artifacts, exit codes, and rerun determinism."""

import json
import pytest

from sluicenet.cli import main, parse_config
from sluicenet.errors import ConfigError

FAST_ARGS = [
    "--tasks", "CHUNK,POS", "--main-task", "CHUNK",
    "--hidden", "4", "--word-dim", "4", "--char-dim", "3", "--char-hidden", "2",
    "--mlp-hidden", "4", "--n-layers", "2", "--max-epochs", "1", "--seed", "7",
]


def write_small_data(tmp_path):
    """A private copy of the bundled corpus, truncated for speed."""
    from sluicenet.toy import TOY_SPLIT_FILES, toy_file_text

    d = tmp_path / "data"
    d.mkdir()
    for split, fname in TOY_SPLIT_FILES.items():
        text = toy_file_text(split)
        sentences = text.split("\n\n")
        keep = 30 if split == "train" else 10
        (d / fname).write_text("\n\n".join(sentences[:keep]) + "\n", encoding="utf-8")
    return d


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def test_empty_config_gives_paper_defaults(tmp_path):
    cfg_file = tmp_path / "empty.cfg"
    cfg_file.write_text("")
    cfg = parse_config(str(cfg_file))
    assert cfg.lr == 0.1
    assert cfg.patience == 2
    assert cfg.n_layers == 3
    assert cfg.hidden == 100
    assert cfg.word_dim == 64
    assert cfg.char_dim == 100
    assert cfg.mlp_hidden == 100
    assert cfg.lr_decay > 0


def test_config_parses_types_and_comments(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("# a comment\nlr=0.05\nhidden=32\nsubspaces=off\npreset=cross_stitch\n")
    cfg = parse_config(str(cfg_file))
    assert cfg.lr == 0.05
    assert cfg.hidden == 32
    assert cfg.subspaces is False
    assert cfg.preset == "cross_stitch"


def test_config_bad_type_names_key(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("lr=abc\n")
    with pytest.raises(ConfigError) as err:
        parse_config(str(cfg_file))
    assert "lr" in str(err.value)


def test_config_unknown_key_rejected(tmp_path):
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("learning_rate=0.1\n")
    with pytest.raises(ConfigError) as err:
        parse_config(str(cfg_file))
    assert "learning_rate" in str(err.value)


def test_cli_override_beats_file(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("lr=0.1\n")
    cfg = parse_config(str(cfg_file), {"lr": "0.05"})
    assert cfg.lr == 0.05


# ---------------------------------------------------------------------------
# train / eval commands
# ---------------------------------------------------------------------------

def test_train_writes_all_artifacts(tmp_path, capsys):
    data = write_small_data(tmp_path)
    out = tmp_path / "run"
    code = main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS])
    assert code == 0
    for fname in ["manifest.json", "metrics.json", "timings.json",
                  "alpha.csv", "beta.csv", "snapshot.json"]:
        assert (out / fname).exists(), fname
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert all("sha256" in entry for entry in manifest["corpus_files"])
    metrics = json.loads((out / "metrics.json").read_text())
    assert len(metrics["epochs"]) == 1
    assert "wall_clock" not in metrics


def test_train_then_eval_consistency(tmp_path, capsys):
    data = write_small_data(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS]) == 0
    capsys.readouterr()
    code = main(["eval", "--snapshot", str(out / "snapshot.json"),
                 "--split", "dev", "--data-dir", str(data)])
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    metrics = json.loads((out / "metrics.json").read_text())
    best = metrics["epochs"][metrics["best_epoch"] - 1]["dev_accuracy"]
    assert printed == best


def test_eval_on_empty_split_fails_cleanly(tmp_path, capsys):
    data = write_small_data(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS]) == 0
    (data / "toy.dev.conll").write_text("\n")
    capsys.readouterr()
    assert main(["eval", "--snapshot", str(out / "snapshot.json"),
                 "--split", "dev", "--data-dir", str(data)]) == 1


def test_eval_snapshot_model_mismatch_exits_one(tmp_path, capsys):
    data = write_small_data(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS]) == 0
    snap = json.loads((out / "snapshot.json").read_text())
    snap["params"]["renamed.param"] = snap["params"].pop("embed.word")
    (out / "bad_snapshot.json").write_text(json.dumps(snap))
    capsys.readouterr()
    assert main(["eval", "--snapshot", str(out / "bad_snapshot.json"),
                 "--split", "dev", "--data-dir", str(data)]) == 1


def test_missing_data_dir_exits_one(tmp_path, capsys):
    code = main(["train", "--data-dir", str(tmp_path / "nope"),
                 "--outdir", str(tmp_path / "out"), *FAST_ARGS])
    assert code == 1
    assert "nope" in capsys.readouterr().err


def test_bad_config_value_exits_two(tmp_path, capsys):
    data = write_small_data(tmp_path)
    code = main(["train", "--data-dir", str(data), "--outdir", str(tmp_path / "o"),
                 "--lr", "abc"])
    assert code == 2


def test_rerun_same_outdir_is_byte_identical(tmp_path):
    data = write_small_data(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS]) == 0
    first = {f: (out / f).read_bytes()
             for f in ["manifest.json", "metrics.json", "alpha.csv", "beta.csv",
                       "snapshot.json"]}
    assert main(["train", "--data-dir", str(data), "--outdir", str(out), *FAST_ARGS]) == 0
    for fname, blob in first.items():
        assert (out / fname).read_bytes() == blob, fname


# ---------------------------------------------------------------------------
# experiment commands (smallest possible runs; full protocols live in acceptance)
# ---------------------------------------------------------------------------

def test_synthetic_command_writes_curve(tmp_path, capsys):
    out = tmp_path / "syn"
    code = main(["synthetic", "--mode", "random", "--sweep", "8,16",
                 "--seeds", "1", "--source-sentences", "20", "--outdir", str(out),
                 "--tasks", "POS,POS-RANDOM", "--main-task", "POS",
                 "--hidden", "4", "--word-dim", "4", "--char-dim", "3",
                 "--char-hidden", "2", "--mlp-hidden", "4", "--n-layers", "1",
                 "--max-epochs", "1"])
    assert code == 0
    lines = (out / "ratio_curve.csv").read_text().strip().splitlines()
    assert lines[0] == "mode,n,median_ratio"
    assert len(lines) == 3
    assert (out / "ratio_runs.csv").exists()


def test_noise_command_writes_three_series(tmp_path):
    out = tmp_path / "noise"
    code = main(["noise", "--seeds", "1", "--outdir", str(out),
                 "--tasks", "CHUNK,POS", "--main-task", "CHUNK",
                 "--hidden", "4", "--word-dim", "4", "--char-dim", "3",
                 "--char-hidden", "2", "--mlp-hidden", "4", "--n-layers", "1",
                 "--max-epochs", "1"])
    assert code == 0
    lines = (out / "noise_curves.csv").read_text().strip().splitlines()
    archs = {line.split(",")[0] for line in lines[1:]}
    assert archs == {"single_task", "hard_sharing", "learned_sluice"}
    meta = json.loads((out / "noise_meta.json").read_text())
    assert "plateau_rule" in meta


def test_ablate_command_writes_seven_rows(tmp_path):
    data = write_small_data(tmp_path)
    out = tmp_path / "abl"
    code = main(["ablate", "--data-dir", str(data), "--outdir", str(out),
                 "--tasks", "CHUNK,POS", "--main-task", "CHUNK",
                 "--hidden", "4", "--word-dim", "4", "--char-dim", "3",
                 "--char-hidden", "2", "--mlp-hidden", "4", "--n-layers", "1",
                 "--max-epochs", "1"])
    assert code == 0
    lines = (out / "ablation.csv").read_text().strip().splitlines()
    assert len(lines) == 8  # header + 7 grid cells
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["grid"]) == 7
