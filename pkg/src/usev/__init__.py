"""Universal speaker extraction with a visual cue, at desk scale.

Mixture simulation with scenario labels, the scenario-aware differentiated
loss, SI-SDR/power evaluation, a minimal reverse-mode autodiff engine, the
visual-cued DPRNN extraction network, and a training/evaluation harness.
"""

from .dsp import AudioClip, FrameMatrix, energy, frame_signal, overlap_add, scale_to_snr
from .losses import LossWeights, loss_differentiated, loss_energy, loss_sdr, loss_uniform
from .metrics import eval_report, power_db_per_s, si_sdr
from .mixsim import (MixtureRecord, MixtureSpec, SimConfig, apply_occlusion,
                     corpus_stats, simulate_general, simulate_highly_overlapped)
from .model import UsevConfig, UsevNet
from .scenario import (ScenarioSegment, ScenarioTrack, classify_clip,
                       clip_bucket, label_scenarios, overlap_bucket,
                       overlap_ratio)
from .synth import SyntheticUtterance, UtteranceBank, gen_utterance

__version__ = "0.1.0"
