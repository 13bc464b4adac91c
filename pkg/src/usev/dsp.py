"""Time-domain waveform primitives shared by the simulator, losses and model.

All kernels run in double precision. Functions are pure and hold no state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _samples(x) -> np.ndarray:
    """Coerce an AudioClip or array-like to a 1-D float64 array."""
    if isinstance(x, AudioClip):
        return x.samples
    return np.asarray(x, dtype=np.float64)


@dataclass
class AudioClip:
    """A mono waveform (dimensionless amplitude) with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite (no NaN/Inf)")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class FrameMatrix:
    """Strided frames of a clip: T rows of frame_len samples, advanced by hop."""

    frames: np.ndarray  # [T, frame_len]
    frame_len: int
    hop: int
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def frame_signal(clip: AudioClip, frame_len: int, hop: int) -> FrameMatrix:
    """Slice a clip into T = floor((n - frame_len)/hop) + 1 overlapping frames.

    Row t holds samples [t*hop, t*hop + frame_len); trailing samples that do
    not fill a frame are dropped.
    """
    if frame_len < 1:
        raise ValueError(f"frame_len must be >= 1, got {frame_len}")
    if not 1 <= hop <= frame_len:
        raise ValueError(f"hop must be in [1, frame_len], got {hop}")
    x = clip.samples
    if len(x) < frame_len:
        raise ValueError(
            f"signal of {len(x)} samples is shorter than one frame ({frame_len})"
        )
    num = (len(x) - frame_len) // hop + 1
    idx = hop * np.arange(num)[:, None] + np.arange(frame_len)[None, :]
    return FrameMatrix(x[idx], frame_len, hop, clip.sample_rate)


def overlap_add(frames: FrameMatrix, hop: int | None = None) -> AudioClip:
    """Sum frames back into a waveform of length (T-1)*hop + frame_len."""
    if hop is None:
        hop = frames.hop
    mat = np.asarray(frames.frames, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError(f"frames must be a non-empty 2-D matrix, got {mat.shape}")
    num, flen = mat.shape
    out = np.zeros((num - 1) * hop + flen)
    for t in range(num):
        out[t * hop : t * hop + flen] += mat[t]
    return AudioClip(out, frames.sample_rate)


def energy(x) -> float:
    """Total energy: sum of squared samples."""
    s = _samples(x)
    return float(np.dot(s, s))


def snr_gain(reference_energy: float, signal_energy: float, snr_db: float) -> float:
    """Gain g so that 10*log10(reference_energy / (g^2 * signal_energy)) = snr_db."""
    if reference_energy <= 0.0 or signal_energy <= 0.0:
        raise ValueError("SNR scaling requires strictly positive energies")
    return float(np.sqrt(reference_energy / (signal_energy * 10.0 ** (snr_db / 10.0))))


def scale_to_snr(reference: AudioClip, signal: AudioClip, snr_db: float) -> AudioClip:
    """Scale `signal` so its energy sits snr_db below `reference`'s energy."""
    g = snr_gain(energy(reference), energy(signal), snr_db)
    return AudioClip(g * signal.samples, signal.sample_rate)


def measure_snr_db(reference, signal) -> float:
    """Measured 10*log10(E_ref / E_sig); the round-trip check for scale_to_snr."""
    e_ref = energy(reference)
    e_sig = energy(signal)
    if e_ref <= 0.0 or e_sig <= 0.0:
        raise ValueError("SNR is undefined for zero-energy inputs")
    return float(10.0 * np.log10(e_ref / e_sig))
