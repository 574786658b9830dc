"""CLI surface: subcommands, exit codes, parseable error lines, map export."""

import contextlib
import io
import shutil

import numpy as np
import pytest

from stcorr.checkpoint import save_checkpoint
from stcorr.cli import main
from stcorr.config import RunConfig
from stcorr.data import load_split
from stcorr.flops import count_model
from stcorr.model import ModelConfig, init_model_params
from stcorr.tensor import parameter
from stcorr.visualize import (
    collect_stage_maps,
    dump_stage_maps,
    gate_to_pixels,
    read_pgm,
    write_pgm,
)

SMALL = dict(stage_channels=(4, 8, 8, 16), hidden=16, reduction=4, batch_size=2,
             seed=11)


def write_config(path, data_dir, **overrides):
    fields = dict(SMALL, data_dir=str(data_dir), **overrides)
    config = RunConfig(**fields)
    path.write_text(config.lines(), encoding="utf-8")
    return config


def run_cli(argv):
    out = io.StringIO()
    with contextlib.redirect_stdout(out):
        code = main(argv)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "corpus.spec"
    spec.write_text("train=4\ndev=2\ntest=1\nseed=11\n", encoding="utf-8")
    data = root / "data"
    code, _ = run_cli(["gen-data", "--spec", str(spec), "--out", str(data)])
    assert code == 0
    return data


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, corpus_dir):
    """One baseline epoch via the CLI; returns (run_dir, train stdout)."""
    out = tmp_path_factory.mktemp("run") / "baseline"
    cfg = out.parent / "run.cfg"
    write_config(cfg, corpus_dir, with_st_stages=False, epochs=1)
    code, stdout = run_cli(["train", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    return out, stdout


@pytest.fixture(scope="module")
def st_run(tmp_path_factory, corpus_dir):
    """Untrained (epochs=0) full-model checkpoint for map dumping."""
    out = tmp_path_factory.mktemp("strun") / "full"
    cfg = out.parent / "run.cfg"
    write_config(cfg, corpus_dir, with_st_stages=True, epochs=0)
    code, _ = run_cli(["train", "--config", str(cfg), "--out", str(out)])
    assert code == 0
    return out


def test_gen_data_reports_splits(tmp_path, capsys):
    spec = tmp_path / "c.spec"
    spec.write_text("train=1\ndev=1\ntest=1\nseed=3\n", encoding="utf-8")
    assert main(["gen-data", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "wrote split=train samples=1" in lines
    assert "wrote split=dev samples=1" in lines
    assert "wrote split=test samples=1" in lines
    assert lines[-1].endswith("seed=3")
    assert (tmp_path / "d" / "train" / "labels.txt").exists()


def test_gen_data_rejects_unknown_spec_key(tmp_path, capsys):
    spec = tmp_path / "c.spec"
    spec.write_text("train=1\nframes=9\n", encoding="utf-8")
    assert main(["gen-data", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert err.count("\n") == 1
    assert "unknown corpus spec keys" in err


def test_train_cli_outputs(trained_run):
    out, stdout = trained_run
    assert (out / "config.txt").exists()
    assert (out / "metrics.log").exists()
    assert (out / "best.ckpt").exists()
    summary = stdout.splitlines()[-1].split()
    assert summary[0] == "epochs_run=1"
    assert summary[1].startswith("best_dev_wer=")
    assert summary[2] == f"checkpoint={out / 'best.ckpt'}"
    assert summary[3] == "early_stop=false"


def test_train_cli_resume_flag(tmp_path, corpus_dir):
    out = tmp_path / "run"
    cfg1 = tmp_path / "one.cfg"
    write_config(cfg1, corpus_dir, with_st_stages=False, epochs=1)
    assert run_cli(["train", "--config", str(cfg1), "--out", str(out)])[0] == 0

    cfg2 = tmp_path / "two.cfg"
    write_config(cfg2, corpus_dir, with_st_stages=False, epochs=2)
    code, stdout = run_cli(["train", "--config", str(cfg2), "--out", str(out),
                            "--resume", str(out / "best.ckpt")])
    assert code == 0
    assert stdout.splitlines()[-1].startswith("epochs_run=2 ")
    log_lines = (out / "metrics.log").read_text(encoding="utf-8").splitlines()
    assert [line.split()[0] for line in log_lines] == ["epoch=0", "epoch=1"]


def test_train_cli_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "o")]) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_eval_cli_table(trained_run, capsys):
    out, _ = trained_run
    assert main(["eval", "--checkpoint", str(out / "best.ckpt"),
                 "--split", "dev"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:6] == ["sample", "ref", "sub", "ins", "del", "wer%"]
    assert lines[1].startswith("dev00000")
    assert lines[-1].startswith("split=dev samples=2 ")


def test_eval_cli_rejects_unknown_split(trained_run):
    out, _ = trained_run
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--checkpoint", str(out / "best.ckpt"), "--split", "val"])
    assert exc.value.code == 2


def test_eval_cli_needs_config_beside_checkpoint(trained_run, tmp_path, capsys):
    out, _ = trained_run
    bare = tmp_path / "bare.ckpt"
    shutil.copyfile(out / "best.ckpt", bare)
    assert main(["eval", "--checkpoint", str(bare), "--split", "dev"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: no config.txt next to ")


def test_eval_cli_vocabulary_mismatch(tmp_path, corpus_dir, capsys):
    # checkpoint trained against a 3-token vocabulary, corpus has 8
    other = ModelConfig(vocab_size=3, stage_channels=(4, 8, 8, 16), hidden=16,
                        reduction=4, with_st_stages=False)
    flat = init_model_params(other, seed=11).flat()
    zeros = {name: np.zeros_like(t.data) for name, t in flat.items()}
    ckpt = tmp_path / "best.ckpt"
    save_checkpoint(ckpt, flat, step=0, seed=11, moment1=zeros, moment2=zeros)
    write_config(tmp_path / "config.txt", corpus_dir, with_st_stages=False)
    assert main(["eval", "--checkpoint", str(ckpt), "--split", "dev"]) == 2
    assert capsys.readouterr().err == (
        "error: vocabulary mismatch: checkpoint classifies 3 tokens, "
        "corpus vocabulary has 8\n")


def test_flops_cli_report(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    config = write_config(cfg, "unused", flops_frames=8)
    assert main(["flops", "--config", str(cfg)]) == 0
    text, keyvalues = capsys.readouterr().out.split("\n\n")
    assert "GFLOPs" in text
    pairs = dict(line.split("=") for line in keyvalues.strip().splitlines())
    expected = count_model(config.model_config(), 8)
    assert int(pairs["total_flops"]) == expected.total_flops
    component_sum = sum(
        int(v) for k, v in pairs.items() if not k.startswith("total_"))
    assert component_sum == expected.total_flops


def test_flops_cli_rejects_bad_config(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("reduction=5\n", encoding="utf-8")
    assert main(["flops", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert capsys.readouterr().err.startswith("error: ")


def test_dump_maps_cli(st_run, tmp_path, capsys):
    out = tmp_path / "maps"
    assert main(["dump-maps", "--checkpoint", str(st_run / "best.ckpt"),
                 "--sample", "0", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out.strip()
    assert stdout.startswith("sample=dev00000 files=")
    count = int(stdout.split()[1].split("=")[1])
    files = sorted(out.iterdir())
    assert len(files) == count
    # per-stage spatial resolutions follow the stride-2 extractor: 16, 8, 4
    for stage, side in ((2, 16), (3, 8), (4, 4)):
        image = read_pgm(out / f"stage{stage}_frame000_ident.pgm")
        assert image.shape == (side, side)
        trace = (out / f"stage{stage}_temporal.txt").read_text().splitlines()
        values = [float(v) for v in trace]
        assert all(0.0 <= v < 0.5 for v in values)
    corr0 = read_pgm(out / "stage2_frame000_corr0.pgm")
    assert corr0.shape == (16, 16)


def test_dump_maps_sample_out_of_range(st_run, capsys):
    assert main(["dump-maps", "--checkpoint", str(st_run / "best.ckpt"),
                 "--sample", "99", "--out", "/tmp/unused"]) == 2
    assert capsys.readouterr().err == (
        "error: sample index 99 out of range for dev split of 2\n")


def test_dump_maps_rejects_baseline(trained_run, tmp_path, capsys):
    out, _ = trained_run
    assert main(["dump-maps", "--checkpoint", str(out / "best.ckpt"),
                 "--sample", "0", "--out", str(tmp_path / "m")]) == 2
    assert capsys.readouterr().err == (
        "error: the baseline model has no gate maps to dump\n")


def test_divergence_exit_code(tmp_path, corpus_dir, capsys, monkeypatch):
    real_init = init_model_params

    def poisoned(model_config, seed):
        params = real_init(model_config, seed)
        params.stages[3].bias.data[0] = np.inf
        return params

    monkeypatch.setattr("stcorr.train.init_model_params", poisoned)
    cfg = tmp_path / "run.cfg"
    write_config(cfg, corpus_dir, with_st_stages=False, epochs=1)
    with np.errstate(all="ignore"):
        code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3
    assert capsys.readouterr().err.startswith(
        "error: divergence at step 1 (epoch 0):")


# ------------------------------------------------------------- map plumbing

def test_gate_to_pixels_frozen_values():
    gates = [-0.6, -0.5, -0.25, 0.0, 0.25, 0.499, 0.6]
    assert gate_to_pixels(gates).tolist() == [0, 0, 64, 128, 192, 255, 255]
    assert gate_to_pixels(np.float64(-1.0 / 512)).tolist() == 127


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
    path = tmp_path / "x.pgm"
    write_pgm(path, image)
    assert np.array_equal(read_pgm(path), image)
    with pytest.raises(ValueError):
        write_pgm(path, image.astype(np.uint16))
    with pytest.raises(ValueError):
        write_pgm(path, image[None])


def test_zeroed_recover_projection_gives_midgray_maps(corpus_dir, tmp_path):
    # With zero recover weights the identification gates are sigmoid(0) - 0.5
    # = 0 everywhere, which must land on the exact mid-gray pixel.
    config = RunConfig(**SMALL, data_dir=str(corpus_dir)).model_config()
    params = init_model_params(config, seed=11)
    for st in params.st_stages:
        st.ident.recover_weight.data[...] = 0.0
        st.ident.recover_bias.data[...] = 0.0
    frames = load_split(corpus_dir, "dev")[0].frames[:8]
    maps = collect_stage_maps(parameter(frames), config, params)
    assert [m.stage for m in maps] == [2, 3, 4]
    for stage_maps in maps:
        assert np.array_equal(stage_maps.identification_gates,
                              np.zeros_like(stage_maps.identification_gates))
    written = dump_stage_maps(maps, tmp_path / "maps")
    ident = [p for p in written if p.name.endswith("_ident.pgm")]
    assert ident
    for path in ident:
        assert (read_pgm(path) == 128).all()
