"""WAV (16-bit PCM / 32-bit float) and raw float32 file I/O.

Float32 WAV is the default for simulator output: the float64 -> float32 cast
is deterministic, so re-running a simulation reproduces files byte for byte.
"""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .dsp import AudioClip


def write_wav(path, clip: AudioClip, encoding: str = "float32") -> None:
    if encoding == "float32":
        wavfile.write(path, clip.sample_rate, clip.samples.astype("<f4"))
    elif encoding == "pcm16":
        scaled = np.clip(np.rint(clip.samples * 32767.0), -32768, 32767)
        wavfile.write(path, clip.sample_rate, scaled.astype("<i2"))
    else:
        raise ValueError(f"unknown WAV encoding {encoding!r}")


def read_wav(path) -> AudioClip:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"expected mono WAV, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return AudioClip(samples, int(rate))


def write_raw_f32(path, samples) -> None:
    np.asarray(samples, dtype=np.float64).astype("<f4").tofile(path)


def read_raw_f32(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f4").astype(np.float64)
