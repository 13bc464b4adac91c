"""Training objectives over scenario-labeled clips.

Two parallel routes compute the same formulas: plain-numpy functions that
return floats (used for evaluation and as the reference in tests), and
graph-building functions over autodiff Tensors (used for training). The
per-kind losses only ever see sums of squares, so samples of one kind are
combined with boolean masks; concatenation order cannot matter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dsp import _samples
from .scenario import KINDS, ScenarioTrack

EPS = 1e-8

# Scenario kinds where the target is speaking take the reconstruction loss,
# the quiet-target kinds take the output-energy loss.
SDR_KINDS = ("SQ", "SS")
ENERGY_KINDS = ("QQ", "QS")


@dataclass(frozen=True)
class LossWeights:
    """Weights (QQ, SQ, SS, QS) of the differentiated loss terms."""

    alpha: float = 0.005
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 0.005

    def __post_init__(self):
        vals = (self.alpha, self.beta, self.gamma, self.delta)
        if any(v < 0 for v in vals):
            raise ValueError(f"loss weights must be nonnegative, got {vals}")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")

    def for_kind(self, kind: str) -> float:
        return {"QQ": self.alpha, "SQ": self.beta,
                "SS": self.gamma, "QS": self.delta}[kind]


def _pair(est, ref) -> tuple[np.ndarray, np.ndarray]:
    e, r = _samples(est), _samples(ref)
    if e.shape != r.shape:
        raise ValueError(f"length mismatch: est {e.shape} vs ref {r.shape}")
    return e, r


def loss_uniform(est, ref) -> float:
    """-10*log10((||s||^2 + eps) / (||s_hat - s||^2 + eps)).

    The eps in the numerator turns the loss into energy minimization when the
    target is silent, while still maximizing SDR when it speaks.
    """
    e, r = _pair(est, ref)
    num = np.dot(r, r) + EPS
    den = np.dot(e - r, e - r) + EPS
    return float(-10.0 * np.log10(num / den))


def loss_sdr(est, ref) -> float:
    """-10*log10(||s||^2 / (||s_hat - s||^2 + eps) + eps); scale-sensitive."""
    e, r = _pair(est, ref)
    return float(-10.0 * np.log10(
        np.dot(r, r) / (np.dot(e - r, e - r) + EPS) + EPS))


def loss_energy(est) -> float:
    """10*log10(||s_hat||^2 + eps); minimized where the target is quiet."""
    e = _samples(est)
    return float(10.0 * np.log10(np.dot(e, e) + EPS))


def loss_differentiated(est, ref, track: ScenarioTrack,
                        weights: LossWeights = LossWeights()) -> float:
    """Weighted per-scenario loss over one clip.

    All samples of a kind are pooled across the clip; SQ/SS take the SDR
    loss, QQ/QS the energy loss. Kinds absent from the track contribute 0.
    """
    e, r = _pair(est, ref)
    if len(e) != track.clip_len:
        raise ValueError(f"clip length {len(e)} != track length {track.clip_len}")
    total = 0.0
    for kind in KINDS:
        w = weights.for_kind(kind)
        mask = track.kind_mask(kind)
        if not mask.any():
            continue
        if kind in SDR_KINDS:
            if not np.any(r[mask]):
                raise ValueError(
                    f"zero-energy reference on a {kind} segment; activity "
                    "masks and scenario labels disagree")
            total += w * loss_sdr(e[mask], r[mask])
        else:
            total += w * loss_energy(e[mask])
    return total


# -- autodiff graph versions -----------------------------------------------------

def tensor_loss_uniform(est: ad.Tensor, ref) -> ad.Tensor:
    r = _samples(ref)
    diff = est - r
    num = float(np.dot(r, r)) + EPS
    den = (diff * diff).sum() + EPS
    return ad.log10(ad.div(num, den)) * -10.0


def tensor_loss_sdr(est: ad.Tensor, ref, mask=None) -> ad.Tensor:
    r = _samples(ref)
    diff = est - r
    if mask is not None:
        diff = diff * mask
        r = r * mask
    den = (diff * diff).sum() + EPS
    return ad.log10(ad.div(float(np.dot(r, r)), den) + EPS) * -10.0


def tensor_loss_energy(est: ad.Tensor, mask=None) -> ad.Tensor:
    if mask is not None:
        est = est * mask
    return ad.log10((est * est).sum() + EPS) * 10.0


def tensor_loss_differentiated(est: ad.Tensor, ref, track: ScenarioTrack,
                               weights: LossWeights = LossWeights()) -> ad.Tensor:
    """Differentiated loss as a graph node over the model output.

    Masked sums of squares make the per-kind terms exact: the gradient on a
    sample of some other kind is identically zero, not just small.
    """
    r = _samples(ref)
    terms = []
    for kind in KINDS:
        w = weights.for_kind(kind)
        mask = track.kind_mask(kind).astype(np.float64)
        if not mask.any() or w == 0.0:
            continue
        if kind in SDR_KINDS:
            if not np.any(r[mask.astype(bool)]):
                raise ValueError(
                    f"zero-energy reference on a {kind} segment; activity "
                    "masks and scenario labels disagree")
            terms.append(tensor_loss_sdr(est, r, mask=mask) * w)
        else:
            terms.append(tensor_loss_energy(est, mask=mask) * w)
    if not terms:
        return ad.Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total
