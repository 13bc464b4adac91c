"""The extraction network: speech encoder, visual adaptor, DPRNN masker, decoder.

Feature maps are channel-major [C, T]. The visual front-end is a frozen
linear projection of the synthetic viseme features (standing in for a
pretrained lip encoder), adapted by trainable V-TCN blocks and upsampled to
the speech frame rate. The masker is a dual-path stack: intra-chunk and
inter-chunk BLSTMs with residual connections over half-overlapping chunks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class UsevConfig:
    """Architecture hyperparameters; defaults are the desk-scale setup."""

    sample_rate: int = 8000
    encoder_dim: int = 64  # N: speech embedding channels
    kernel_len: int = 40  # L: encoder kernel, stride L/2
    bottleneck: int = 16  # B: extractor channel width
    repeats: int = 2  # R: DPRNN block count
    chunk: int = 16  # K: chunk length (hop K/2)
    vtcn_repeats: int = 5
    visual_dim: int = 8  # D_v: viseme feature size
    viseme_fps: int = 25

    def __post_init__(self):
        if self.kernel_len % 2 or self.kernel_len < 2:
            raise ValueError("encoder kernel_len must be even and positive")
        if self.chunk % 2 or self.chunk < 2:
            raise ValueError("chunk size must be even and positive")
        for f in ("sample_rate", "encoder_dim", "bottleneck", "repeats",
                  "vtcn_repeats", "visual_dim", "viseme_fps"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if self.sample_rate % self.viseme_fps:
            raise ValueError("sample_rate must be a multiple of viseme_fps")

    @property
    def hop(self) -> int:
        return self.kernel_len // 2

    @classmethod
    def full_scale(cls) -> "UsevConfig":
        return cls(sample_rate=16000, encoder_dim=256, kernel_len=40,
                   bottleneck=64, repeats=6, chunk=100, visual_dim=8)

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.kernel_len:
            raise ValueError(
                f"clip of {n_samples} samples is shorter than the encoder "
                f"kernel ({self.kernel_len})")
        return (n_samples - self.kernel_len) // self.hop + 1


class UsevNet:
    """Extractor network; owns named parameter tensors and a config."""

    def __init__(self, cfg: UsevConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        self._build(np.random.default_rng(seed))

    # -- parameter setup ---------------------------------------------------

    def _add(self, name: str, data, trainable: bool = True) -> Tensor:
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=trainable)
        self.params[name] = t
        return t

    def _uniform(self, rng, name, shape, fan_in, trainable=True) -> Tensor:
        limit = 1.0 / np.sqrt(fan_in)
        return self._add(name, rng.uniform(-limit, limit, size=shape), trainable)

    def _ln(self, rng, name, channels, extra_dims=1):
        shape = (channels,) + (1,) * extra_dims
        self._add(f"{name}.gain", np.ones(shape))
        self._add(f"{name}.bias", np.zeros(shape))

    def _lstm(self, rng, name, in_dim, hidden):
        for d in ("f", "b"):
            self._uniform(rng, f"{name}.wx_{d}", (in_dim, 4 * hidden), in_dim)
            self._uniform(rng, f"{name}.wh_{d}", (hidden, 4 * hidden), hidden)
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
            self._add(f"{name}.b_{d}", bias)

    def _build(self, rng):
        cfg = self.cfg
        n, b, l = cfg.encoder_dim, cfg.bottleneck, cfg.kernel_len
        self._uniform(rng, "enc.w", (n, 1, l), l)
        self._add("enc.b", np.zeros(n))

        # Frozen stand-in for a pretrained lip-embedding front-end.
        self._uniform(rng, "vis.proj", (cfg.visual_dim, n), cfg.visual_dim,
                      trainable=False)
        for v in range(cfg.vtcn_repeats):
            p = f"vtcn{v}"
            self._ln(rng, f"{p}.ln1", n)
            self._uniform(rng, f"{p}.lin1.w", (2 * n, n), n)
            self._add(f"{p}.lin1.b", np.zeros((2 * n, 1)))
            self._ln(rng, f"{p}.ln2", 2 * n)
            self._uniform(rng, f"{p}.conv.w", (2 * n, 1, 3), 3)
            self._add(f"{p}.conv.b", np.zeros(2 * n))
            self._ln(rng, f"{p}.ln3", 2 * n)
            self._uniform(rng, f"{p}.lin2.w", (n, 2 * n), 2 * n)
            self._add(f"{p}.lin2.b", np.zeros((n, 1)))

        self._ln(rng, "ext.ln_in", n)
        self._uniform(rng, "ext.lin1.w", (b, n), n)
        self._add("ext.lin1.b", np.zeros((b, 1)))
        self._uniform(rng, "ext.lin2.w", (b, b + n), b + n)
        self._add("ext.lin2.b", np.zeros((b, 1)))

        hidden = 2 * b
        for r in range(cfg.repeats):
            for path in ("intra", "inter"):
                p = f"dprnn{r}.{path}"
                self._lstm(rng, f"{p}.lstm", b, hidden)
                self._uniform(rng, f"{p}.lin.w", (4 * b, b), 4 * b)
                self._add(f"{p}.lin.b", np.zeros(b))
                self._ln(rng, f"{p}.ln", b, extra_dims=2)

        self._add("ext.prelu", np.array(0.25))
        self._uniform(rng, "ext.lin5.w", (n, b), b)
        self._add("ext.lin5.b", np.zeros((n, 1)))

        self._uniform(rng, "dec.w", (l, n), n)
        self._add("dec.b", np.zeros((l, 1)))

    # -- parameter access ----------------------------------------------------

    def trainable_params(self) -> list[Tensor]:
        return [t for t in self.params.values() if t.requires_grad]

    def param_count(self, trainable_only: bool = False) -> int:
        return sum(t.size for t in self.params.values()
                   if t.requires_grad or not trainable_only)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for k, t in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: checkpoint "
                                 f"{arr.shape} vs model {t.data.shape}")
            t.data = arr.copy()

    # -- building blocks -------------------------------------------------------

    def _layer_norm(self, x, name) -> Tensor:
        return ad.layer_norm(x, self.params[f"{name}.gain"],
                             self.params[f"{name}.bias"], axis=0)

    def _vtcn_block(self, x, prefix: str) -> Tensor:
        t = self._layer_norm(ad.relu(x), f"{prefix}.ln1")
        t = ad.matmul(self.params[f"{prefix}.lin1.w"], t) + self.params[f"{prefix}.lin1.b"]
        t = self._layer_norm(ad.relu(t), f"{prefix}.ln2")
        t = ad.pad_axis(t, axis=1, before=1, after=1)
        t = ad.conv1d(t, self.params[f"{prefix}.conv.w"],
                      self.params[f"{prefix}.conv.b"], stride=1,
                      groups=2 * self.cfg.encoder_dim)
        t = self._layer_norm(ad.relu(t), f"{prefix}.ln3")
        t = ad.matmul(self.params[f"{prefix}.lin2.w"], t) + self.params[f"{prefix}.lin2.b"]
        return x + t

    def _dprnn_half(self, chunks, prefix: str, intra: bool) -> Tensor:
        # chunks: [B, K, P]; recur over K (intra) or P (inter).
        b, k, p = chunks.shape
        seq = ad.transpose(chunks, (1, 2, 0) if intra else (2, 1, 0))
        pr = self.params
        out = ad.bilstm(seq,
                        pr[f"{prefix}.lstm.wx_f"], pr[f"{prefix}.lstm.wh_f"],
                        pr[f"{prefix}.lstm.b_f"],
                        pr[f"{prefix}.lstm.wx_b"], pr[f"{prefix}.lstm.wh_b"],
                        pr[f"{prefix}.lstm.b_b"])
        t_len, batch, feat = out.shape
        flat = ad.reshape(out, (t_len * batch, feat))
        flat = ad.linear(flat, pr[f"{prefix}.lin.w"], pr[f"{prefix}.lin.b"])
        back = ad.reshape(flat, (t_len, batch, b))
        back = ad.transpose(back, (2, 0, 1) if intra else (2, 1, 0))
        normed = ad.layer_norm(back, pr[f"{prefix}.ln.gain"],
                               pr[f"{prefix}.ln.bias"], axis=0)
        return chunks + normed

    # -- network stages -----------------------------------------------------------

    def speech_encode(self, samples) -> Tensor:
        """Waveform -> nonnegative embeddings [N, T]."""
        x = np.asarray(samples, dtype=np.float64)
        self.cfg.num_frames(len(x))  # raises on too-short input
        sig = Tensor(x.reshape(1, -1))
        return ad.relu(ad.conv1d(sig, self.params["enc.w"], self.params["enc.b"],
                                 stride=self.cfg.hop))

    def visual_encode(self, viseme_frames, t_target: int) -> Tensor:
        """Viseme frames [F, D_v] -> embeddings [N, t_target] in speech time."""
        frames = np.asarray(viseme_frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"viseme stream must be [frames, dim], got {frames.shape}")
        if frames.shape[1] != self.cfg.visual_dim:
            raise ValueError(f"viseme dim {frames.shape[1]} != config "
                             f"{self.cfg.visual_dim}")
        v = ad.transpose(ad.matmul(Tensor(frames), self.params["vis.proj"]))
        for i in range(self.cfg.vtcn_repeats):
            v = self._vtcn_block(v, f"vtcn{i}")
        # Nearest-neighbor upsampling onto the speech frame grid.
        step_s = self.cfg.hop / self.cfg.sample_rate
        idx = np.minimum((np.arange(t_target) * step_s * self.cfg.viseme_fps)
                         .astype(np.intp), frames.shape[0] - 1)
        return ad.index_select(v, axis=1, indices=idx)

    def extract_mask(self, speech_emb: Tensor, visual_emb: Tensor) -> Tensor:
        """Estimate the nonnegative mask [N, T] from speech + visual cues."""
        if speech_emb.shape != visual_emb.shape:
            raise ValueError(f"embedding shapes differ: {speech_emb.shape} "
                             f"vs {visual_emb.shape}")
        t_len = speech_emb.shape[1]
        pr = self.params
        x = self._layer_norm(speech_emb, "ext.ln_in")
        x = ad.matmul(pr["ext.lin1.w"], x) + pr["ext.lin1.b"]
        x = ad.concat([x, visual_emb], axis=0)
        x = ad.matmul(pr["ext.lin2.w"], x) + pr["ext.lin2.b"]
        chunks = ad.segment_chunks(x, self.cfg.chunk)
        for r in range(self.cfg.repeats):
            chunks = self._dprnn_half(chunks, f"dprnn{r}.intra", intra=True)
            chunks = self._dprnn_half(chunks, f"dprnn{r}.inter", intra=False)
        x = ad.aggregate_chunks(chunks, t_len)
        x = ad.prelu(x, pr["ext.prelu"])
        x = ad.matmul(pr["ext.lin5.w"], x) + pr["ext.lin5.b"]
        return ad.relu(x)

    def decode(self, masked_emb: Tensor, out_len: int) -> Tensor:
        """Embeddings [N, T] -> waveform [out_len] via frame overlap-add."""
        frames = ad.matmul(self.params["dec.w"], masked_emb) + self.params["dec.b"]
        wave = ad.overlap_add_frames(ad.transpose(frames), self.cfg.hop)
        n = wave.shape[0]
        if n < out_len:
            wave = ad.pad_axis(wave, axis=0, before=0, after=out_len - n)
        elif n > out_len:
            wave = wave[:out_len]
        return wave

    def forward(self, samples, viseme_frames) -> Tensor:
        """Extract the target speaker; output length equals input length."""
        x = np.asarray(samples, dtype=np.float64)
        speech = self.speech_encode(x)
        visual = self.visual_encode(viseme_frames, speech.shape[1])
        mask = self.extract_mask(speech, visual)
        return self.decode(speech * mask, len(x))
