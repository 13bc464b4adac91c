"""Deterministic synthetic utterances standing in for recorded corpora.

An utterance is a sum of amplitude-modulated harmonic tones (speaker-specific
fundamental, per-phoneme jitter) gated by an alternating speech/quiet
activity pattern. Viseme frames at 25 fps are a function of the local audio
envelope and the pseudo-phoneme index; quiet frames are exact zero vectors,
as are quiet audio spans. Everything is a pure function of the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioClip

_N_PHONEMES = 20
_PHONEME_S = (0.08, 0.25)
_RAMP_S = 0.02

# Fixed viseme projection of (envelope, phoneme) pairs; positive entries so
# active frames are never accidentally zero.
_BASIS_SEED = 271828


def viseme_basis(dim: int, n_phonemes: int = _N_PHONEMES) -> np.ndarray:
    rng = np.random.default_rng(_BASIS_SEED)
    return rng.uniform(0.3, 1.0, size=(n_phonemes, dim))


def speaker_f0(speaker: int, n_speakers: int) -> float:
    """Geometrically spaced fundamentals over ~90-230 Hz."""
    if n_speakers <= 1:
        return 140.0
    return 90.0 * (230.0 / 90.0) ** (speaker / (n_speakers - 1))


@dataclass
class SyntheticUtterance:
    clip: AudioClip
    activity: np.ndarray  # bool per sample
    viseme_frames: np.ndarray  # [ceil(dur*fps), dim]
    speaker_id: str
    seed: object  # whatever seeded the generator, kept for provenance

    @property
    def active_fraction(self) -> float:
        return float(np.mean(self.activity))


def _activity_pattern(rng, n: int, sample_rate: int, duty: float,
                      speech_s: tuple[float, float]) -> np.ndarray:
    """Alternating speech/quiet spans starting with speech, targeting `duty`."""
    mask = np.zeros(n, dtype=bool)
    mean_speech = 0.5 * (speech_s[0] + speech_s[1])
    mean_quiet = max(mean_speech * (1.0 - duty) / max(duty, 1e-3), 0.05)
    pos = 0
    speaking = True
    while pos < n:
        if speaking:
            span = rng.uniform(*speech_s)
        else:
            span = rng.uniform(0.5 * mean_quiet, 1.5 * mean_quiet)
        end = min(n, pos + max(1, int(round(span * sample_rate))))
        if speaking:
            mask[pos:end] = True
        pos = end
        speaking = not speaking
    return mask


def gen_utterance(seed, duration_s: float, cfg, duty: float | None = None,
                  quiet: bool = False, speaker: int | None = None) -> SyntheticUtterance:
    """Synthesize one utterance; bit-identical for identical arguments.

    cfg needs: sample_rate, viseme_fps, visual_dim, n_speakers,
    min_utterance_s, speech_span_s, utterance_rms.
    """
    if duration_s < cfg.min_utterance_s:
        raise ValueError(
            f"utterance of {duration_s:.2f}s is below the minimum "
            f"{cfg.min_utterance_s:.2f}s")
    rng = np.random.default_rng(seed)
    sr = cfg.sample_rate
    n = int(round(duration_s * sr))
    if speaker is None:
        speaker = int(rng.integers(cfg.n_speakers))
    f0 = speaker_f0(speaker, cfg.n_speakers) * rng.uniform(0.97, 1.03)

    if quiet:
        activity = np.zeros(n, dtype=bool)
    elif duty is not None and duty >= 1.0:
        activity = np.ones(n, dtype=bool)
    else:
        if duty is None:
            duty = rng.uniform(0.35, 0.95)
        activity = _activity_pattern(rng, n, sr, duty, cfg.speech_span_s)

    audio = np.zeros(n)
    phoneme = np.full(n, -1, dtype=np.int32)
    ramp_n = int(_RAMP_S * sr)

    # Walk each active run, tiling it with pseudo-phonemes.
    edges = np.flatnonzero(np.diff(activity.astype(np.int8)))
    bounds = np.concatenate(([0], edges + 1, [n]))
    for a, b in zip(bounds[:-1], bounds[1:]):
        if not activity[a]:
            continue
        pos = a
        while pos < b:
            ph_n = min(b - pos, max(1, int(round(rng.uniform(*_PHONEME_S) * sr))))
            ph = int(rng.integers(_N_PHONEMES))
            jitter = rng.uniform(0.97, 1.03)
            amps = rng.uniform(0.2, 1.0, size=4) * (0.6 ** np.arange(4))
            phases = rng.uniform(0.0, 2.0 * np.pi, size=4)
            t = np.arange(ph_n) / sr
            seg = np.zeros(ph_n)
            for h in range(4):
                seg += amps[h] * np.sin(2.0 * np.pi * f0 * jitter * (h + 1) * t + phases[h])
            r = min(ramp_n, ph_n // 3)
            if r > 0:
                win = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
                seg[:r] *= win
                seg[-r:] *= win[::-1]
            audio[pos : pos + ph_n] = seg
            phoneme[pos : pos + ph_n] = ph
            pos += ph_n

    if activity.any():
        rms = np.sqrt(np.mean(audio[activity] ** 2))
        if rms > 0:
            audio *= cfg.utterance_rms / rms
    audio[~activity] = 0.0

    # ceil(duration_s * fps) computed exactly on sample counts
    spf = sr // cfg.viseme_fps
    n_frames = -(-n // spf)
    basis = viseme_basis(cfg.visual_dim)
    frames = np.zeros((n_frames, cfg.visual_dim))
    for k in range(n_frames):
        a = k * spf
        b = min(n, a + spf)
        center = min(n - 1, a + spf // 2)
        if a < n and activity[center]:
            env = np.sqrt(np.mean(audio[a:b] ** 2))
            frames[k] = env * basis[phoneme[center]]

    return SyntheticUtterance(
        clip=AudioClip(audio, sr),
        activity=activity,
        viseme_frames=frames,
        speaker_id=f"spk{speaker:03d}",
        seed=seed,
    )


class UtteranceBank:
    """Lazy, cached pool of utterances; utterance i is a pure function of
    (bank seed, i). Speakers cycle so distinct-speaker picks are easy."""

    def __init__(self, cfg, seed: int, count: int, fully_active: bool = False):
        if count < 2:
            raise ValueError("a mixing bank needs at least 2 utterances")
        self.cfg = cfg
        self.seed = int(seed)
        self.count = int(count)
        self.fully_active = fully_active
        self._cache: dict[int, SyntheticUtterance] = {}

    def __len__(self) -> int:
        return self.count

    def speaker_of(self, i: int) -> int:
        return i % self.cfg.n_speakers

    def get(self, i: int) -> SyntheticUtterance:
        if not 0 <= i < self.count:
            raise ValueError(f"utterance index {i} out of range [0, {self.count})")
        if i not in self._cache:
            rng = np.random.default_rng([self.seed, 1000 + i])
            duration = float(rng.uniform(*self.cfg.utterance_s))
            # Snap to the viseme-frame grid so crops stay frame-aligned.
            frame_s = 1.0 / self.cfg.viseme_fps
            duration = max(self.cfg.min_utterance_s,
                           round(duration / frame_s) * frame_s)
            duty = 1.0 if self.fully_active else float(rng.uniform(0.35, 0.95))
            self._cache[i] = gen_utterance(
                [self.seed, 1000 + i, 1], duration, self.cfg,
                duty=duty, speaker=self.speaker_of(i))
        return self._cache[i]

    def active_fraction(self, i: int) -> float:
        return self.get(i).active_fraction


def colored_noise(rng, n: int, tilt: float) -> np.ndarray:
    """Unit-RMS filtered white noise with spectral slope f^(tilt/2)."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    shape = np.ones_like(freqs)
    nz = freqs > 0
    shape[nz] = (freqs[nz] / freqs[nz][0]) ** (tilt / 2.0)
    shape[0] = shape[1] if len(shape) > 1 else 1.0
    noise = np.fft.irfft(spec * shape, n=n)
    rms = np.sqrt(np.mean(noise**2))
    return noise / rms if rms > 0 else noise
