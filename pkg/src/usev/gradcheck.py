"""Central finite-difference verification of every autodiff operator.

Each check builds a scalar loss through one operator (projected by a fixed
random weighting so all outputs matter), backpropagates, and compares the
analytic gradients against central differences at h=1e-6 in float64.
Inputs for kinked ops (relu/prelu) are kept away from zero so the finite
difference never straddles the kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .losses import LossWeights, tensor_loss_differentiated
from .model import UsevConfig, UsevNet
from .scenario import label_scenarios

FD_STEP = 1e-6
OP_TOL = 1e-5
MODEL_TOL = 1e-4


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Elementwise relative error with the denominator floored at 1% of the
    largest gradient magnitude, so FD noise on near-zero entries cannot
    dominate while scale errors anywhere still show."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(n), initial=0.0))
    if scale == 0.0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 0.01 * scale)
    return float(np.max(np.abs(a - n) / denom))


def fd_check(build, arrays: dict, h: float = FD_STEP,
             tamper: bool = False) -> float:
    """Max relative error between backprop and central differences.

    `build` maps {name: Tensor} to a scalar Tensor. `tamper` corrupts the
    analytic gradients before comparison; the negative control proving the
    harness can fail.
    """
    tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    loss = build(tensors)
    loss.backward()
    worst = 0.0
    for name, base in arrays.items():
        grad = tensors[name].grad
        analytic = np.zeros_like(base) if grad is None else grad.copy()
        if tamper:
            analytic = analytic * 1.5 + 1e-3
        numeric = np.zeros_like(base)
        flat = numeric.ravel()
        for i in range(base.size):
            for sign in (+1.0, -1.0):
                shifted = base.copy()
                shifted.ravel()[i] += sign * h
                probe = {k: Tensor(v if k != name else shifted)
                         for k, v in arrays.items()}
                flat[i] += sign * build(probe).item()
        numeric /= 2.0 * h
        worst = max(worst, max_rel_err(analytic, numeric))
    return worst


def _projector(rng):
    """Fixed random projection to a scalar; weights are drawn once per shape
    so repeated loss evaluations (analytic pass, FD probes) agree."""
    cache: dict = {}

    def project(out: Tensor) -> Tensor:
        if out.shape not in cache:
            cache[out.shape] = Tensor(rng.standard_normal(out.shape))
        return (out * cache[out.shape]).sum()

    return project


def _away_from_zero(rng, shape, lo=0.2, hi=1.2):
    mag = rng.uniform(lo, hi, size=shape)
    return mag * rng.choice([-1.0, 1.0], size=shape)


# -- per-operator checks; each returns the error for one seed -------------------

def _check_elementwise(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    c = rng.uniform(0.5, 2.0, size=(3, 1))  # broadcast divisor
    return fd_check(
        lambda t: proj(ad.div(ad.mul(ad.add(t["a"], t["b"]),
                                     ad.sub(t["a"], 0.5)), t["c"])),
        {"a": a, "b": b, "c": c}, tamper=tamper)


def _check_pow_exp_log_sqrt(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.uniform(0.5, 2.0, size=(2, 5))
    return fd_check(
        lambda t: proj(ad.power(t["x"], 1.7) + ad.exp(t["x"])
                           + ad.log(t["x"]) + ad.sqrt(t["x"])),
        {"x": x}, tamper=tamper)


def _check_relu(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = _away_from_zero(rng, (4, 6))
    return fd_check(lambda t: proj(ad.relu(t["x"])), {"x": x},
                    tamper=tamper)


def _check_prelu(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = _away_from_zero(rng, (4, 6))
    a = np.array(rng.uniform(0.1, 0.5))
    return fd_check(lambda t: proj(ad.prelu(t["x"], t["a"])),
                    {"x": x, "a": a}, tamper=tamper)


def _check_sigmoid_tanh(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((3, 5))
    return fd_check(
        lambda t: proj(ad.sigmoid(t["x"]) * ad.tanh(t["x"])),
        {"x": x}, tamper=tamper)


def _check_matmul_linear(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((4, 3))
    w = rng.standard_normal((3, 5))
    b = rng.standard_normal(5)
    return fd_check(lambda t: proj(ad.linear(t["x"], t["w"], t["b"])),
                    {"x": x, "w": w, "b": b}, tamper=tamper)


def _check_conv1d(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((4, 12))
    w = rng.standard_normal((6, 4, 3))
    b = rng.standard_normal(6)
    return fd_check(
        lambda t: proj(ad.conv1d(t["x"], t["w"], t["b"], stride=2)),
        {"x": x, "w": w, "b": b}, tamper=tamper)


def _check_conv1d_depthwise(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((5, 10))
    w = rng.standard_normal((5, 1, 3))
    b = rng.standard_normal(5)
    return fd_check(
        lambda t: proj(ad.conv1d(t["x"], t["w"], t["b"], stride=1,
                                     groups=5)),
        {"x": x, "w": w, "b": b}, tamper=tamper)


def _check_conv1d_grouped(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((6, 9))
    w = rng.standard_normal((4, 3, 2))
    b = rng.standard_normal(4)
    return fd_check(
        lambda t: proj(ad.conv1d(t["x"], t["w"], t["b"], stride=1,
                                     groups=2)),
        {"x": x, "w": w, "b": b}, tamper=tamper)


def _check_layer_norm(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((5, 7))
    g = rng.uniform(0.5, 1.5, size=(5, 1))
    b = rng.standard_normal((5, 1))
    return fd_check(
        lambda t: proj(ad.layer_norm(t["x"], t["g"], t["b"], axis=0)),
        {"x": x, "g": g, "b": b}, tamper=tamper)


def _check_global_layer_norm(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((4, 6))
    g = rng.uniform(0.5, 1.5, size=(4, 1))
    b = rng.standard_normal((4, 1))
    return fd_check(
        lambda t: proj(ad.global_layer_norm(t["x"], t["g"], t["b"])),
        {"x": x, "g": g, "b": b}, tamper=tamper)


def _check_reductions_shapes(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((3, 4, 2))

    def build(t):
        y = ad.transpose(ad.reshape(t["x"], (3, 8)), (1, 0))
        y = ad.pad_axis(y, axis=0, before=1, after=2)
        z = ad.concat([y, y * 2.0], axis=1)
        s = ad.stack([z[:4, 0], z[:4, 1]], axis=0)
        return (ad.ssum(z, axis=0) * 0.3).sum() + proj(s) \
            + ad.smean(t["x"], axis=1).sum()

    return fd_check(build, {"x": x}, tamper=tamper)


def _check_slice_index(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    proj2 = _projector(rng)
    x = rng.standard_normal((5, 8))
    idx = rng.integers(0, 8, size=11)

    def build(t):
        picked = ad.index_select(t["x"], axis=1, indices=idx)
        return proj(picked) + proj2(t["x"][1:4, ::2])

    return fd_check(build, {"x": x}, tamper=tamper)


def _check_lstm_cell(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    arrays = {
        "x": rng.standard_normal((2, 3)),
        "h": rng.standard_normal((2, 2)),
        "c": rng.standard_normal((2, 2)),
        "wx": rng.standard_normal((3, 8)) * 0.5,
        "wh": rng.standard_normal((2, 8)) * 0.5,
        "b": rng.standard_normal(8) * 0.5,
    }

    def build(t):
        h, c = ad.lstm_cell(t["x"], t["h"], t["c"], t["wx"], t["wh"], t["b"])
        return proj(h) + proj(c)

    return fd_check(build, arrays, tamper=tamper)


def _check_bilstm(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    arrays = {
        "x": rng.standard_normal((3, 2, 3)),
        "wx_f": rng.standard_normal((3, 8)) * 0.5,
        "wh_f": rng.standard_normal((2, 8)) * 0.5,
        "b_f": rng.standard_normal(8) * 0.3,
        "wx_b": rng.standard_normal((3, 8)) * 0.5,
        "wh_b": rng.standard_normal((2, 8)) * 0.5,
        "b_b": rng.standard_normal(8) * 0.3,
    }

    def build(t):
        out = ad.bilstm(t["x"], t["wx_f"], t["wh_f"], t["b_f"],
                        t["wx_b"], t["wh_b"], t["b_b"])
        return proj(out)

    return fd_check(build, arrays, tamper=tamper)


def _check_chunking(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    x = rng.standard_normal((2, 11))
    y = rng.standard_normal((2, 4, 7))

    def build(t):
        seg = ad.segment_chunks(t["x"], 4)
        agg = ad.aggregate_chunks(t["y"], 11)
        return proj(seg) + proj(agg)

    return fd_check(build, {"x": x, "y": y}, tamper=tamper)


def _check_overlap_add(seed, tamper=False):
    rng = np.random.default_rng(seed)
    proj = _projector(rng)
    frames = rng.standard_normal((5, 6))
    return fd_check(
        lambda t: proj(ad.overlap_add_frames(t["f"], 3)),
        {"f": frames}, tamper=tamper)


OP_CHECKS = {
    "elementwise(add,sub,mul,div)": _check_elementwise,
    "pow/exp/log/sqrt": _check_pow_exp_log_sqrt,
    "relu": _check_relu,
    "prelu": _check_prelu,
    "sigmoid/tanh": _check_sigmoid_tanh,
    "matmul/linear": _check_matmul_linear,
    "conv1d": _check_conv1d,
    "conv1d(depthwise)": _check_conv1d_depthwise,
    "conv1d(grouped)": _check_conv1d_grouped,
    "layer_norm": _check_layer_norm,
    "global_layer_norm": _check_global_layer_norm,
    "sum/mean/reshape/transpose/pad/concat/stack": _check_reductions_shapes,
    "slice/index_select": _check_slice_index,
    "lstm_cell": _check_lstm_cell,
    "bilstm": _check_bilstm,
    "segment/aggregate_chunks": _check_chunking,
    "overlap_add_frames": _check_overlap_add,
}


def micro_config() -> UsevConfig:
    """Tiny architecture for end-to-end finite-difference checks."""
    return UsevConfig(sample_rate=8000, encoder_dim=4, kernel_len=4,
                      bottleneck=2, repeats=1, chunk=4, vtcn_repeats=2,
                      visual_dim=2)


def model_fd_check(h: float = FD_STEP, seed: int = 0,
                   tamper: bool = False) -> float:
    """FD-verify the whole extractor + differentiated loss on a micro config.

    All trainable parameters are randomized first: the zero-initialized
    biases would otherwise park relu preactivations exactly on their kink,
    where a finite difference straddles the nondifferentiable point. The
    relative error is aggregated over all parameters at once so FD noise on
    the few near-zero gradients is judged against the overall gradient scale.
    """
    cfg = micro_config()
    rng = np.random.default_rng(seed)
    model = UsevNet(cfg, seed=seed)
    for p in model.trainable_params():
        p.data = rng.uniform(-0.6, 0.6, size=p.data.shape)
    n_frames = 8
    n = (n_frames - 1) * cfg.hop + cfg.kernel_len
    mix = rng.standard_normal(n)
    ref = rng.standard_normal(n)
    visemes = rng.uniform(0.1, 1.0, size=(2, cfg.visual_dim))
    half = n // 2
    track = label_scenarios(np.arange(n) < half + 3, np.arange(n) >= half - 3)
    weights = LossWeights(0.5, 1.0, 1.0, 0.5)

    def loss_value() -> float:
        est = model.forward(mix, visemes)
        return tensor_loss_differentiated(est, ref, track, weights).item()

    est = model.forward(mix, visemes)
    loss = tensor_loss_differentiated(est, ref, track, weights)
    loss.backward()

    analytic_all = []
    numeric_all = []
    for name, p in model.params.items():
        if not p.requires_grad:
            continue
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if tamper:
            analytic = analytic * 1.5 + 1e-3
        numeric = np.zeros_like(p.data)
        flat_num = numeric.ravel()
        flat_p = p.data.ravel()
        for i in range(p.data.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_value()
            flat_p[i] = orig - h
            down = loss_value()
            flat_p[i] = orig
            flat_num[i] = (up - down) / (2.0 * h)
        analytic_all.append(analytic.ravel())
        numeric_all.append(numeric.ravel())
        p.grad = None
    return max_rel_err(np.concatenate(analytic_all),
                       np.concatenate(numeric_all))


@dataclass
class CheckResult:
    name: str
    max_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_err <= self.tol


def run_gradcheck(scope: str = "all", seeds: int = 20,
                  corrupt: str | None = None) -> list[CheckResult]:
    """Run the op and/or model suites. `corrupt` names one check whose
    analytic gradients get deliberately tampered (negative control)."""
    results = []
    if scope in ("all", "ops"):
        for name, check in OP_CHECKS.items():
            err = max(check(s, tamper=corrupt == name) for s in range(seeds))
            results.append(CheckResult(name, err, OP_TOL))
    if scope in ("all", "model"):
        err = model_fd_check(tamper=corrupt == "model")
        results.append(CheckResult("usev-micro-end-to-end", err, MODEL_TOL))
    return results


def format_report(results) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<48} max_rel_err={r.max_err:.3e} "
                     f"tol={r.tol:.0e} {status}")
    overall = "PASS" if all(r.passed for r in results) else "FAIL"
    lines.append(f"{'overall':<48} {overall}")
    return "\n".join(lines)
