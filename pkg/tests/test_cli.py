import numpy as np

from usev.cli import main
from usev.mixsim import read_manifest


def run(args):
    return main([str(a) for a in args])


def test_simulate_stats_round_trip(tmp_path, capsys):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("clip_s = 1.0,1.4\nutterance_s = 3.0,4.0\n"
                   "n_utterances = 10\nn_speakers = 5\n")
    out = tmp_path / "corpus"
    assert run(["simulate", "--config", cfg, "--out", out, "--count", 3,
                "--seed", 5]) == 0
    rows = read_manifest(out / "manifest.jsonl")
    assert len(rows) == 3
    assert run(["stats", "--manifest", out / "manifest.jsonl"]) == 0
    captured = capsys.readouterr().out
    assert "clips by overlap bucket" in captured


def test_simulate_with_occlusion_flag(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("clip_s = 1.0,1.4\nutterance_s = 3.0,4.0\n"
                   "n_utterances = 10\nn_speakers = 5\n")
    out = tmp_path / "corpus"
    assert run(["simulate", "--config", cfg, "--out", out, "--count", 2,
                "--seed", 6, "--occlusion", "0.4,0.6", "--noisy"]) == 0
    rows = read_manifest(out / "manifest.jsonl")
    assert any(r["occlusion_spans"] for r in rows)
    assert all(r["noise_snr_db"] is not None for r in rows)


def test_train_evaluate_pipeline(tmp_path, capsys):
    simcfg = tmp_path / "sim.cfg"
    simcfg.write_text("clip_s = 0.6,0.8\nutterance_s = 3.0,4.0\n"
                      "n_utterances = 8\nn_speakers = 4\n")
    data = tmp_path / "corpus"
    assert run(["simulate", "--config", simcfg, "--out", data, "--count", 3,
                "--seed", 7]) == 0
    runcfg = tmp_path / "run.cfg"
    runcfg.write_text(
        "sample_rate = 8000\nencoder_dim = 8\nkernel_len = 8\n"
        "bottleneck = 4\nrepeats = 1\nchunk = 8\nvtcn_repeats = 1\n"
        "visual_dim = 8\n"
        "lr0 = 0.001\nmax_epochs = 1\nbatch_size = 2\n"
        "clip_truncate_s = 0.5\nloss = uniform\n")
    manifest = data / "manifest.jsonl"
    assert run(["train", "--config", runcfg, "--train-manifest", manifest,
                "--val-manifest", manifest, "--out", tmp_path / "run"]) == 0
    ckpt = tmp_path / "run" / "best.ckpt"
    assert ckpt.exists()
    assert run(["evaluate", "--checkpoint", ckpt, "--test-manifest", manifest,
                "--out", tmp_path / "eval"]) == 0
    assert "mixture" in capsys.readouterr().out


def test_gradcheck_command(capsys):
    assert run(["gradcheck", "--scope", "ops", "--seeds", 1]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "max_rel_err" in out


def test_missing_manifest_gives_io_exit_code(tmp_path):
    assert run(["stats", "--manifest", tmp_path / "nope.jsonl"]) == 3


def test_bad_config_gives_param_exit_code(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("clip_s = 9.0,9.5\nutterance_s = 3.0,4.0\n")
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "o",
                "--count", 1, "--seed", 0]) == 2
