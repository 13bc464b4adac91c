"""General speech mixture simulation with scenario labels and manifests.

A mixture clip is target speech (possibly absent) plus 1-2 SNR-scaled
interference segments plus optional colored noise, with the ground-truth
scenario track derived from the activity masks. The corpus planner steers
each clip toward a sampled overlap bucket by searching interference
alignments over the activity masks, then verifies the bucket exactly.

Per-clip randomness comes from (corpus seed, clip index), so generation
order and parallelism never change outputs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from . import audio_io
from .dsp import AudioClip, snr_gain
from .scenario import (BUCKETS, KINDS, ScenarioTrack, clip_bucket,
                       label_scenarios, overlap_bucket, overlap_ratio)
from .synth import UtteranceBank, colored_noise

_BUCKET_RANGE = {
    "0%": (0.0, 0.0),
    "(0,20]%": (0.0, 0.2),
    "(20,40]%": (0.2, 0.4),
    "(40,60]%": (0.4, 0.6),
    "(60,80]%": (0.6, 0.8),
    "(80,100]%": (0.8, 1.0),
}

# Default target-present bucket mix; conversational corpora skew toward
# higher overlap, so the upper buckets carry more weight.
_DEFAULT_BUCKET_WEIGHTS = {
    "0%": 0.092, "(0,20]%": 0.064, "(20,40]%": 0.123,
    "(40,60]%": 0.194, "(60,80]%": 0.224, "(80,100]%": 0.303,
}

_VISEME_MAGIC = b"VISM"


@dataclass
class SimConfig:
    sample_rate: int = 8000
    viseme_fps: int = 25
    visual_dim: int = 8
    n_speakers: int = 10
    n_utterances: int = 40
    utterance_s: tuple = (6.5, 9.5)
    min_utterance_s: float = 3.0
    speech_span_s: tuple = (0.5, 1.8)
    clip_s: tuple = (4.0, 6.0)
    ta_prob: float = 0.05
    snr_db: tuple = (-10.0, 10.0)
    noisy: bool = False
    noise_snr_db: tuple = (-5.0, 15.0)
    ta_reference_rms: float = 0.1
    utterance_rms: float = 0.1
    bucket_weights: dict = field(default_factory=lambda: dict(_DEFAULT_BUCKET_WEIGHTS))
    max_tries: int = 40

    def __post_init__(self):
        if self.sample_rate % self.viseme_fps:
            raise ValueError("sample_rate must be a multiple of viseme_fps")
        if self.utterance_s[0] < self.clip_s[1]:
            raise ValueError("utterances must be at least as long as the longest clip")
        if self.utterance_s[0] < self.min_utterance_s:
            raise ValueError("utterance_s below min_utterance_s")
        if not 0.0 <= self.ta_prob <= 1.0:
            raise ValueError("ta_prob must lie in [0, 1]")

    @property
    def samples_per_frame(self) -> int:
        return self.sample_rate // self.viseme_fps


@dataclass
class MixtureSpec:
    """Everything needed to rebuild one clip from an utterance bank."""

    target_source: int | None
    target_crop: tuple  # (start_sample, length) within the utterance
    interference_sources: list
    interference_crops: list  # (start_sample, length) per source
    interference_offsets: list  # placement within the clip, per source
    snr_db: list
    noise_snr_db: float | None
    target_absent: bool
    clip_len: int
    seed: int  # drives noise synthesis

    def __post_init__(self):
        if not 1 <= len(self.interference_sources) <= 2:
            raise ValueError("need 1 or 2 interference sources")
        if not (len(self.interference_sources) == len(self.interference_crops)
                == len(self.interference_offsets) == len(self.snr_db)):
            raise ValueError("interference field lengths disagree")


@dataclass
class MixtureRecord:
    clip_id: str
    mixture: AudioClip
    target_truth: AudioClip
    viseme_stream: np.ndarray  # [frames, visual_dim]
    track: ScenarioTrack
    spec: MixtureSpec | None
    occlusion_spans: list
    effective_visual_ratio: float
    # Scaled, placed addends of the mixture; None for records loaded from disk.
    components: dict | None = None


# -- core simulation ------------------------------------------------------------

def simulate_general(spec: MixtureSpec, corpus: UtteranceBank,
                     clip_id: str = "clip") -> MixtureRecord:
    """Mix one general speech clip exactly as the MixtureSpec dictates.

    Interference gains are set against the energy of the full target segment
    (or a fixed reference level for target-absent clips), before placement.
    """
    cfg = corpus.cfg
    length = spec.clip_len
    spf = cfg.samples_per_frame
    if length % spf:
        raise ValueError(f"clip_len {length} not on the viseme frame grid ({spf})")
    n_frames = length // spf

    if spec.target_absent:
        target = np.zeros(length)
        t_mask = np.zeros(length, dtype=bool)
        visemes = np.zeros((n_frames, cfg.visual_dim))
        ref_energy = cfg.ta_reference_rms**2 * length
    else:
        utt = corpus.get(spec.target_source)
        t0, tlen = spec.target_crop
        if tlen != length:
            raise ValueError("target segment must span the whole clip")
        if t0 % spf:
            raise ValueError("target crop must start on the viseme frame grid")
        if t0 < 0 or t0 + tlen > len(utt.clip):
            raise ValueError("target crop outside the utterance")
        target = utt.clip.samples[t0 : t0 + length].copy()
        t_mask = utt.activity[t0 : t0 + length].copy()
        f0 = t0 // spf
        visemes = utt.viseme_frames[f0 : f0 + n_frames].copy()
        ref_energy = float(np.dot(target, target))
        if ref_energy <= 0.0:
            raise ValueError("target segment has zero energy; pick an active crop")

    components = {"target": target}
    i_mask = np.zeros(length, dtype=bool)
    for j, (src, crop, off, snr) in enumerate(zip(
            spec.interference_sources, spec.interference_crops,
            spec.interference_offsets, spec.snr_db)):
        utt = corpus.get(src)
        c0, clen = crop
        if c0 < 0 or c0 + clen > len(utt.clip):
            raise ValueError(f"interference crop {crop} outside utterance {src}")
        seg = utt.clip.samples[c0 : c0 + clen]
        seg_act = utt.activity[c0 : c0 + clen]
        seg_energy = float(np.dot(seg, seg))
        if seg_energy <= 0.0:
            raise ValueError(f"interference segment {j} has zero energy")
        gain = snr_gain(ref_energy, seg_energy, snr)
        end = min(length, off + clen)
        if off < 0 or end <= off:
            raise ValueError(f"interference offset {off} outside the clip")
        placed = np.zeros(length)
        placed[off:end] = gain * seg[: end - off]
        components[f"interference_{j}"] = placed
        i_mask[off:end] |= seg_act[: end - off]

    if spec.noise_snr_db is not None:
        nrng = np.random.default_rng(spec.seed)
        tilt = float(nrng.uniform(-1.5, 0.5))
        raw = colored_noise(nrng, length, tilt)
        gain = snr_gain(ref_energy, float(np.dot(raw, raw)), spec.noise_snr_db)
        components["noise"] = gain * raw

    mixture = np.zeros(length)
    for part in components.values():
        mixture += part

    return MixtureRecord(
        clip_id=clip_id,
        mixture=AudioClip(mixture, cfg.sample_rate),
        target_truth=AudioClip(target, cfg.sample_rate),
        viseme_stream=visemes,
        track=label_scenarios(t_mask, i_mask),
        spec=spec,
        occlusion_spans=[],
        effective_visual_ratio=1.0,
        components=components,
    )


def simulate_highly_overlapped(spec: MixtureSpec, corpus: UtteranceBank,
                               clip_id: str = "clip") -> MixtureRecord:
    """Full-overlap mixing: every source is truncated to the shortest one.

    Meant for banks of active-dominant utterances; the resulting track is
    (near-)all SS.
    """
    cfg = corpus.cfg
    lengths = [len(corpus.get(spec.target_source).clip)]
    lengths += [len(corpus.get(i).clip) for i in spec.interference_sources]
    spf = cfg.samples_per_frame
    clip_len = (min(lengths) // spf) * spf
    full = replace(
        spec,
        clip_len=clip_len,
        target_crop=(0, clip_len),
        interference_crops=[(0, clip_len)] * len(spec.interference_sources),
        interference_offsets=[0] * len(spec.interference_sources),
        target_absent=False,
    )
    return simulate_general(full, corpus, clip_id)


def apply_occlusion(record: MixtureRecord, seed,
                    occlusion_fraction_range) -> MixtureRecord:
    """Zero a contiguous span of viseme frames; audio stays intact."""
    lo, hi = occlusion_fraction_range
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError(f"occlusion fractions must lie in [0, 1], got {lo}, {hi}")
    rng = np.random.default_rng(seed)
    frac = float(rng.uniform(lo, hi)) if hi > lo else lo
    n_frames = record.viseme_stream.shape[0]
    n_occ = int(round(frac * n_frames))
    visemes = record.viseme_stream.copy()
    if n_occ <= 0:
        spans = []
    elif n_occ >= n_frames:
        visemes[:] = 0.0
        spans = [(0, n_frames)]
    else:
        start = int(rng.integers(0, n_frames - n_occ + 1))
        visemes[start : start + n_occ] = 0.0
        spans = [(start, start + n_occ)]
    occluded = sum(b - a for a, b in spans)
    return replace(record, viseme_stream=visemes, occlusion_spans=spans,
                   effective_visual_ratio=1.0 - occluded / n_frames)


# -- corpus planning ----------------------------------------------------------------

def _window_overlap(t_mask: np.ndarray, seq: np.ndarray, win: int):
    """Overlap counts of every win-length window of seq against t_mask.

    Returns (ss, act): ss[c] = |t_mask AND seq[c:c+win]| (t_mask may be
    shorter than win; it is compared left-aligned), act[c] = |seq[c:c+win]|.
    """
    tf = t_mask.astype(np.float64)
    ss = np.rint(fftconvolve(seq.astype(np.float64), tf[::-1], mode="valid"))
    cums = np.concatenate(([0], np.cumsum(seq.astype(np.int64))))
    act = cums[win:] - cums[:-win]
    n = len(seq) - win + 1
    return ss[:n], act[:n]


def _pick_shift(rng, ss, i_act, t_act, lo, hi):
    """Choose a shift whose predicted ratio falls in (lo, hi]; else nearest."""
    i_act = np.broadcast_to(np.asarray(i_act, dtype=np.float64), ss.shape)
    denom = t_act + i_act - ss
    usable = (i_act > 0) & (denom > 0)
    if not usable.any():
        return None
    ratio = np.full(ss.shape, np.nan)
    ratio[usable] = ss[usable] / denom[usable]
    if hi == 0.0:
        hit = usable & (ss == 0)
    else:
        hit = usable & (ratio > lo) & (ratio <= hi)
    cands = np.flatnonzero(hit)
    if len(cands):
        return int(rng.choice(cands))
    mid = 0.0 if hi == 0.0 else 0.5 * (lo + hi)
    scores = np.where(usable, np.abs(ratio - mid), np.inf)
    return int(np.argmin(scores))


def _pick_utterance(rng, bank: UtteranceBank, min_len: int,
                    exclude_speakers=(), prefer: str | None = None) -> int | None:
    pool = [i for i in range(len(bank))
            if bank.speaker_of(i) not in exclude_speakers
            and len(bank.get(i).clip) >= min_len]
    if not pool:
        return None
    picks = rng.choice(len(pool), size=min(6, len(pool)), replace=False)
    cands = [pool[int(p)] for p in picks]
    if prefer == "dense":
        return max(cands, key=bank.active_fraction)
    if prefer == "sparse":
        return min(cands, key=bank.active_fraction)
    return cands[0]


def _bucket_distance(actual: str, desired: str) -> int:
    return abs(BUCKETS.index(actual) - BUCKETS.index(desired))


def plan_clip(rng, bank: UtteranceBank, cfg: SimConfig) -> MixtureSpec:
    """Draw a clip plan whose overlap bucket follows cfg.bucket_weights."""
    spf = cfg.samples_per_frame
    clip_frames = int(round(rng.uniform(*cfg.clip_s) * cfg.viseme_fps))
    clip_len = clip_frames * spf
    target_absent = bool(rng.random() < cfg.ta_prob)

    def draw_noise():
        return float(rng.uniform(*cfg.noise_snr_db)) if cfg.noisy else None

    def draw_seed():
        return int(rng.integers(2**62))

    if target_absent:
        n_interf = int(rng.integers(1, 3))
        sources, crops, offsets, snrs, speakers = [], [], [], [], []
        for _ in range(cfg.max_tries):
            idx = _pick_utterance(rng, bank, clip_len, exclude_speakers=speakers)
            if idx is None:
                break
            utt = bank.get(idx)
            c0 = int(rng.integers(0, len(utt.clip) - clip_len + 1))
            if not utt.activity[c0 : c0 + clip_len].any():
                continue
            speakers.append(bank.speaker_of(idx))
            sources.append(idx)
            crops.append((c0, clip_len))
            offsets.append(0)
            snrs.append(float(rng.uniform(*cfg.snr_db)))
            if len(sources) == n_interf:
                break
        if not sources:
            raise ValueError("could not place any audible interference")
        return MixtureSpec(None, (0, 0), sources, crops, offsets, snrs,
                           draw_noise(), True, clip_len, draw_seed())

    names = list(_BUCKET_RANGE)
    weights = np.array([cfg.bucket_weights.get(n, 0.0) for n in names])
    desired = names[int(rng.choice(len(names), p=weights / weights.sum()))]
    lo, hi = _BUCKET_RANGE[desired]
    prefer = {"(80,100]%": "dense", "0%": "sparse", "(0,20]%": "sparse"}.get(desired)
    n_interf = 1 if desired in ("0%", "(80,100]%") else int(rng.integers(1, 3))

    best = None
    for _ in range(cfg.max_tries):
        t_idx = _pick_utterance(rng, bank, clip_len, prefer=prefer)
        if t_idx is None:
            raise ValueError("no utterance long enough for the requested clip")
        t_utt = bank.get(t_idx)
        t0 = int(rng.integers(0, (len(t_utt.clip) - clip_len) // spf + 1)) * spf
        t_mask = t_utt.activity[t0 : t0 + clip_len]
        if not t_mask.any():
            continue
        t_act = int(t_mask.sum())
        t_speaker = bank.speaker_of(t_idx)

        sources, crops, offsets, snrs, speakers = [], [], [], [], []
        combined = np.zeros(clip_len, dtype=bool)
        for _j in range(n_interf):
            idx = _pick_utterance(rng, bank, clip_len,
                                  exclude_speakers=[t_speaker] + speakers,
                                  prefer=prefer)
            if idx is None:
                break
            utt = bank.get(idx)
            act = utt.activity
            short = hi <= 0.4 and rng.random() < 0.5
            if short:
                # Short burst placed inside the clip.
                burst_len = int(rng.uniform(0.8, 2.5) * cfg.sample_rate)
                burst_len = min(burst_len, clip_len, len(act))
                c0 = int(rng.integers(0, len(act) - burst_len + 1))
                crop_mask = act[c0 : c0 + burst_len]
                if not crop_mask.any():
                    continue
                ss, _ = _window_overlap(crop_mask, t_mask, burst_len)
                off = _pick_shift(rng, ss, int(crop_mask.sum()), t_act, lo, hi)
                if off is None:
                    continue
                sources.append(idx)
                crops.append((c0, burst_len))
                offsets.append(off)
            else:
                # Full-cover crop; search the crop start inside the utterance.
                ss, act_w = _window_overlap(t_mask, act, clip_len)
                c0 = _pick_shift(rng, ss, act_w, t_act, lo, hi)
                if c0 is None or act_w[c0] == 0:
                    continue
                sources.append(idx)
                crops.append((c0, clip_len))
                offsets.append(0)
            speakers.append(bank.speaker_of(idx))
            src_c0, src_len = crops[-1]
            place = np.zeros(clip_len, dtype=bool)
            place[offsets[-1] : offsets[-1] + src_len] = \
                bank.get(idx).activity[src_c0 : src_c0 + src_len]
            combined |= place
            snrs.append(float(rng.uniform(*cfg.snr_db)))
        if not sources:
            continue

        track = label_scenarios(t_mask, combined)
        actual = clip_bucket(track)
        spec = MixtureSpec(t_idx, (t0, clip_len), sources, crops, offsets,
                           snrs, draw_noise(), False, clip_len, draw_seed())
        dist = _bucket_distance(actual, desired)
        if best is None or dist < best[0]:
            best = (dist, spec)
        if dist == 0:
            break
    if best is None:
        raise ValueError("corpus planning failed; widen clip/utterance settings")
    return best[1]


def simulate_clip(cfg: SimConfig, bank: UtteranceBank, corpus_seed: int,
                  index: int) -> MixtureRecord:
    """Clip `index` of the corpus; a pure function of (corpus seed, index)."""
    rng = np.random.default_rng([corpus_seed, 2, index])
    spec = plan_clip(rng, bank, cfg)
    return simulate_general(spec, bank, clip_id=f"clip-{index:06d}")


def iter_corpus(cfg: SimConfig, count: int, seed: int, occlusion=None):
    """Yield `count` simulated records without touching the filesystem."""
    bank = UtteranceBank(cfg, seed, cfg.n_utterances)
    for idx in range(count):
        record = simulate_clip(cfg, bank, seed, idx)
        if occlusion is not None:
            record = apply_occlusion(record, [seed, 3, idx], occlusion)
        yield record


def iter_overlapped_corpus(cfg: SimConfig, count: int, seed: int):
    """Highly overlapped clips from a fully-active bank, with noise."""
    bank = UtteranceBank(cfg, seed, cfg.n_utterances, fully_active=True)
    for idx in range(count):
        rng = np.random.default_rng([seed, 2, idx])
        t_idx = int(rng.integers(len(bank)))
        others = [i for i in range(len(bank))
                  if bank.speaker_of(i) != bank.speaker_of(t_idx)]
        i_idx = others[int(rng.integers(len(others)))]
        spec = MixtureSpec(
            target_source=t_idx, target_crop=(0, 0),
            interference_sources=[i_idx], interference_crops=[(0, 0)],
            interference_offsets=[0],
            snr_db=[float(rng.uniform(*cfg.snr_db))],
            noise_snr_db=float(rng.uniform(*cfg.noise_snr_db)),
            target_absent=False, clip_len=0, seed=int(rng.integers(2**62)))
        yield simulate_highly_overlapped(spec, bank, clip_id=f"clip-{idx:06d}")


# -- viseme stream files ---------------------------------------------------------------

def write_visemes(path, frames: np.ndarray, fps: int) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(_VISEME_MAGIC)
        f.write(struct.pack("<III", frames.shape[0], frames.shape[1], fps))
        f.write(frames.astype("<f4").tobytes())


def read_visemes(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _VISEME_MAGIC:
            raise ValueError(f"{path}: not a viseme stream file")
        n_frames, dim, fps = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != n_frames * dim:
        raise ValueError(f"{path}: truncated viseme payload")
    return data.reshape(n_frames, dim).astype(np.float64), int(fps)


# -- manifests ----------------------------------------------------------------------------

def record_row(record: MixtureRecord, mixture_path: str, target_path: str,
               visemes_path: str) -> dict:
    spec = record.spec
    return {
        "clip_id": record.clip_id,
        "mixture_path": mixture_path,
        "target_path": target_path,
        "visemes_path": visemes_path,
        "sample_rate": record.mixture.sample_rate,
        "clip_len": len(record.mixture),
        "track": record.track.to_triples(),
        "snr_db": list(spec.snr_db) if spec else [],
        "noise_snr_db": spec.noise_snr_db if spec else None,
        "target_absent": spec.target_absent if spec else False,
        "seed": spec.seed if spec else None,
        "occlusion_spans": [list(s) for s in record.occlusion_spans],
        "effective_visual_ratio": record.effective_visual_ratio,
    }


_ROW_REQUIRED = ("clip_id", "sample_rate", "clip_len", "track",
                 "effective_visual_ratio")


def write_manifest(path, rows) -> None:
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_manifest(path) -> list[dict]:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: line {lineno}: invalid record: {e}") from e
            missing = [k for k in _ROW_REQUIRED if k not in row]
            if missing:
                raise ValueError(f"{path}: line {lineno}: missing fields {missing}")
            rows.append(row)
    return rows


def load_record(row: dict, base_dir) -> MixtureRecord:
    """Rebuild a record from its manifest row and data files."""
    base = Path(base_dir)
    mixture = audio_io.read_wav(base / row["mixture_path"])
    target = audio_io.read_wav(base / row["target_path"])
    visemes, _ = read_visemes(base / row["visemes_path"])
    track = ScenarioTrack.from_triples(row["track"], row["clip_len"])
    return MixtureRecord(
        clip_id=row["clip_id"], mixture=mixture, target_truth=target,
        viseme_stream=visemes, track=track, spec=None,
        occlusion_spans=[tuple(s) for s in row.get("occlusion_spans", [])],
        effective_visual_ratio=float(row["effective_visual_ratio"]),
        components=None)


def write_corpus(cfg: SimConfig, count: int, seed: int, out_dir,
                 occlusion=None, overlapped: bool = False) -> Path:
    """Simulate a corpus to disk; returns the manifest path."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    if overlapped:
        records = iter_overlapped_corpus(cfg, count, seed)
    else:
        records = iter_corpus(cfg, count, seed, occlusion=occlusion)
    rows = []
    for record in records:
        stem = f"audio/{record.clip_id}"
        audio_io.write_wav(out / f"{stem}.mix.wav", record.mixture)
        audio_io.write_wav(out / f"{stem}.target.wav", record.target_truth)
        write_visemes(out / f"{stem}.visemes.bin", record.viseme_stream,
                      cfg.viseme_fps)
        rows.append(record_row(record, f"{stem}.mix.wav", f"{stem}.target.wav",
                               f"{stem}.visemes.bin"))
    manifest = out / "manifest.jsonl"
    write_manifest(manifest, rows)
    return manifest


# -- corpus statistics -------------------------------------------------------------------

@dataclass
class StatsReport:
    clip_counts: dict  # bucket -> clips
    kind_hours: dict  # kind -> hours
    total_clips: int

    def table_text(self) -> str:
        lines = ["clips by overlap bucket:"]
        for b in BUCKETS:
            lines.append(f"  {b:>10}  {self.clip_counts.get(b, 0)}")
        lines.append(f"  {'total':>10}  {self.total_clips}")
        lines.append("duration by scenario (hours):")
        for k in KINDS:
            lines.append(f"  {k:>10}  {self.kind_hours.get(k, 0.0):.4f}")
        return "\n".join(lines)


def corpus_stats(manifest_path) -> StatsReport:
    """Clip counts per overlap bucket and total per-kind durations in hours."""
    rows = read_manifest(manifest_path)
    counts = {b: 0 for b in BUCKETS}
    kind_samples = {k: 0.0 for k in KINDS}
    for row in rows:
        track = ScenarioTrack.from_triples(row["track"], row["clip_len"])
        counts[clip_bucket(track)] += 1
        sr = row["sample_rate"]
        for kind, samples in track.durations().items():
            kind_samples[kind] += samples / sr / 3600.0
    return StatsReport(clip_counts=counts, kind_hours=kind_samples,
                       total_clips=len(rows))
