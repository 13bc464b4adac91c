"""Training and evaluation orchestration.

Stage 2 pre-trains on highly overlapped clips with the SDR loss; stage 3
trains on general mixtures with the differentiated loss, optionally starting
from a stage-2 checkpoint (configs are locked together in the checkpoint
header, so shape mismatches fail before training starts). The learning rate
decays multiplicatively per epoch and early stopping watches the validation
loss.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import mixsim
from .checkpoint import load_checkpoint, save_checkpoint
from .dsp import AudioClip
from .losses import (LossWeights, loss_differentiated, loss_sdr,
                     loss_uniform, tensor_loss_differentiated,
                     tensor_loss_sdr, tensor_loss_uniform)
from .metrics import ReportTables, eval_report, write_report
from .model import UsevConfig, UsevNet
from .scenario import crop_track

STAGES = ("pretrain_overlapped", "train_general")
LOSSES = ("uniform", "differentiated", "sdr")

# Default sweep grid over loss-weight tuples; includes the default tuple.
DEFAULT_WEIGHT_GRID = (
    (0.01, 1.0, 1.0, 0.01),
    (0.01, 0.1, 1.0, 0.01),
    (0.005, 1.0, 1.0, 0.005),
    (0.001, 0.1, 1.0, 0.001),
)


@dataclass
class TrainConfig:
    stage: str = "train_general"
    lr0: float = 0.001
    lr_decay_per_epoch: float = 0.98
    max_epochs: int = 30
    patience: int = 8
    batch_size: int = 4
    clip_truncate_s: float = 6.0
    loss: str = "differentiated"
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    init_checkpoint: str | None = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not 0.0 < self.lr_decay_per_epoch <= 1.0:
            raise ValueError("lr_decay_per_epoch must lie in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainResult:
    best_checkpoint: Path
    log_path: Path
    loss_log_path: Path
    history: list
    best_val: float
    model: UsevNet


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr0 * cfg.lr_decay_per_epoch**epoch


def _load_records(data, base_dir=None):
    """Accept a manifest path or an in-memory list of MixtureRecords."""
    if isinstance(data, (str, Path)):
        base = Path(data).parent if base_dir is None else Path(base_dir)
        return [mixsim.load_record(row, base) for row in mixsim.read_manifest(data)]
    return list(data)


def _clip_loss_graph(cfg: TrainConfig, est, ref, track):
    if cfg.loss == "differentiated":
        return tensor_loss_differentiated(est, ref, track, cfg.weights)
    if cfg.loss == "sdr":
        return tensor_loss_sdr(est, ref)
    return tensor_loss_uniform(est, ref)


def _clip_loss_value(cfg: TrainConfig, est: np.ndarray, record) -> float:
    if cfg.loss == "differentiated":
        return loss_differentiated(est, record.target_truth.samples,
                                   record.track, cfg.weights)
    if cfg.loss == "sdr":
        return loss_sdr(est, record.target_truth.samples)
    return loss_uniform(est, record.target_truth.samples)


def _random_crop(rng, record, n_trunc: int, spf: int):
    """Seeded crop to the truncation length, scenario track recomputed."""
    n = len(record.mixture)
    if n <= n_trunc:
        return (record.mixture.samples, record.target_truth.samples,
                record.viseme_stream, record.track)
    start = int(rng.integers(0, (n - n_trunc) // spf + 1)) * spf
    end = start + n_trunc
    return (record.mixture.samples[start:end],
            record.target_truth.samples[start:end],
            record.viseme_stream[start // spf : end // spf],
            crop_track(record.track, start, end))


def _validation_loss(cfg: TrainConfig, model: UsevNet, records) -> float:
    vals = []
    with ad.no_grad(model.params.values()):
        for rec in records:
            out = model.forward(rec.mixture.samples, rec.viseme_stream)
            vals.append(_clip_loss_value(cfg, out.data, rec))
    return float(np.mean(vals))


def train(cfg: TrainConfig, model_cfg: UsevConfig | None, train_data, val_data,
          out_dir) -> TrainResult:
    """Run one training stage; returns the best checkpoint and the logs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_records = _load_records(train_data)
    val_records = _load_records(val_data)
    if not train_records or not val_records:
        raise ValueError("empty training or validation set")

    if cfg.init_checkpoint is not None:
        model, meta = load_model(cfg.init_checkpoint)
        if model_cfg is not None and model.cfg != model_cfg:
            raise ValueError(
                f"model config {model_cfg} conflicts with checkpoint config "
                f"{model.cfg} from {cfg.init_checkpoint}")
    else:
        if model_cfg is None:
            raise ValueError("need a model config or an init checkpoint")
        model = UsevNet(model_cfg, seed=cfg.seed)

    sr = model.cfg.sample_rate
    spf = sr // model.cfg.viseme_fps
    n_trunc = max(model.cfg.kernel_len,
                  int(round(cfg.clip_truncate_s * sr)) // spf * spf)
    rng = np.random.default_rng([cfg.seed, 99])
    opt = ad.Adam(model.trainable_params(), lr=cfg.lr0)

    history = []
    best_val = np.inf
    best_epoch = -1
    since_best = 0
    best_path = out / "best.ckpt"
    log_path = out / "train_log.jsonl"
    loss_log_path = out / "loss_log.txt"
    log_f = open(log_path, "w")
    loss_f = open(loss_log_path, "w")

    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.monotonic()
            opt.lr = learning_rate(cfg, epoch)
            order = rng.permutation(len(train_records))
            batch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                opt.zero_grad()
                terms = []
                for idx in batch:
                    rec = train_records[int(idx)]
                    mix, ref, vis, track = _random_crop(rng, rec, n_trunc, spf)
                    est = model.forward(mix, vis)
                    terms.append(_clip_loss_graph(cfg, est, ref, track))
                total = terms[0]
                for t in terms[1:]:
                    total = total + t
                loss = total * (1.0 / len(terms))
                loss.backward()
                opt.step()
                batch_losses.append(loss.item())
            train_loss = float(np.mean(batch_losses))
            val_loss = _validation_loss(cfg, model, val_records)
            wall = time.monotonic() - t0

            entry = {"epoch": epoch, "lr": opt.lr, "train_loss": train_loss,
                     "val_loss": val_loss, "wall_time_s": wall}
            history.append(entry)
            log_f.write(json.dumps(entry, sort_keys=True) + "\n")
            log_f.flush()
            loss_f.write(f"{epoch} {opt.lr!r} {train_loss!r} {val_loss!r}\n")
            loss_f.flush()

            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                since_best = 0
                save_model(best_path, model,
                           extra_meta={"stage": cfg.stage, "epoch": epoch,
                                       "val_loss": val_loss})
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    break
    finally:
        log_f.close()
        loss_f.close()

    if best_epoch < 0:
        save_model(best_path, model, extra_meta={"stage": cfg.stage, "epoch": -1})
    return TrainResult(best_path, log_path, loss_log_path, history,
                       best_val, model)


def save_model(path, model: UsevNet, extra_meta: dict | None = None) -> None:
    meta = {"model_config": model.cfg.__dict__}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, model.state_dict(), meta)


def load_model(path) -> tuple[UsevNet, dict]:
    state, meta = load_checkpoint(path)
    if "model_config" not in meta:
        raise ValueError(f"{path}: checkpoint lacks a model config header")
    model = UsevNet(UsevConfig(**meta["model_config"]))
    model.load_state_dict(state)
    return model, meta


def extraction_pairs(model: UsevNet, records):
    """Forward full-length clips (no truncation, no output normalization)."""
    pairs = []
    with ad.no_grad(model.params.values()):
        for rec in records:
            out = model.forward(rec.mixture.samples, rec.viseme_stream)
            pairs.append((rec, AudioClip(out.data, rec.mixture.sample_rate)))
    return pairs


def evaluate(model_or_checkpoint, test_data, out_dir,
             mixture_baseline: bool = True) -> dict[str, ReportTables]:
    """Evaluate a checkpoint (or live model) on full clips; write reports."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(model_or_checkpoint, (str, Path)):
        model, _ = load_model(model_or_checkpoint)
    else:
        model = model_or_checkpoint
    records = _load_records(test_data)
    reports = {"model": eval_report(extraction_pairs(model, records))}
    write_report(reports["model"], out / "model")
    if mixture_baseline:
        reports["mixture"] = eval_report([(r, r.mixture) for r in records])
        write_report(reports["mixture"], out / "mixture")
    return reports


def sweep_weights(base_cfg: TrainConfig, model_cfg: UsevConfig, weight_grid,
                  train_data, val_data, out_dir) -> list[dict]:
    """Train and evaluate one system per weight tuple; emit a comparison."""
    weight_grid = list(weight_grid)
    if not weight_grid:
        raise ValueError("weight grid is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_records = _load_records(train_data)
    val_records = _load_records(val_data)
    rows = []
    for i, tup in enumerate(weight_grid):
        weights = tup if isinstance(tup, LossWeights) else LossWeights(*tup)
        cfg = replace(base_cfg, weights=weights, loss="differentiated")
        result = train(cfg, model_cfg, train_records, val_records,
                       out / f"system{i}")
        report = eval_report(extraction_pairs(result.model, val_records))
        row = {"weights": (weights.alpha, weights.beta, weights.gamma,
                           weights.delta)}
        for kind in ("QQ", "SQ", "SS", "QS"):
            row[kind] = report.kind_means.get(kind)
        rows.append(row)

    with open(out / "sweep.csv", "w") as f:
        f.write("alpha,beta,gamma,delta,QQ_power,SQ_si_sdr,SS_si_sdr,QS_power\n")
        for row in rows:
            a, b, g, d = row["weights"]
            cells = [f"{v:.4f}" if isinstance(v, float) else "" for v in
                     (row["QQ"], row["SQ"], row["SS"], row["QS"])]
            f.write(f"{a},{b},{g},{d},{','.join(cells)}\n")
    lines = [f"{'alpha-beta-gamma-delta':>26} {'QQ pow':>9} {'SQ sisdr':>9} "
             f"{'SS sisdr':>9} {'QS pow':>9}"]
    for row in rows:
        tag = "-".join(str(v) for v in row["weights"])
        cells = " ".join(
            f"{row[k]:>9.2f}" if row[k] is not None else f"{'n/a':>9}"
            for k in ("QQ", "SQ", "SS", "QS"))
        lines.append(f"{tag:>26} {cells}")
    (out / "sweep.txt").write_text("\n".join(lines) + "\n")
    return rows
