"""Intensity + depth loss, training loop and finite-difference gradient checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .apf import ApfParams
from .errors import NonFiniteLoss, ShapeMismatch
from .forward import Scene
from .lpc import LpcParams
from .pipeline import PipelineConfig, Sample, backward, forward, make_sample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")


def total_loss(i_ref, i_hat, d_ref, d_hat, weights: LossWeights | float = LossWeights()):
    """Mean-squared intensity and depth errors, ``L = L_I + lam * L_D``."""
    lam = weights.lam if isinstance(weights, LossWeights) else float(weights)
    arrays = [np.asarray(a, dtype=float) for a in (i_ref, i_hat, d_ref, d_hat)]
    if len({a.shape for a in arrays}) != 1:
        raise ShapeMismatch(f"image shapes differ: {[a.shape for a in arrays]}")
    i_ref, i_hat, d_ref, d_hat = arrays
    l_i = float(np.mean((i_ref - i_hat) ** 2))
    l_d = float(np.mean((d_ref - d_hat) ** 2))
    return l_i + lam * l_d, l_i, l_d


def backprop_pipeline(
    sample: Sample,
    params: tuple[LpcParams, ApfParams],
    cfg: PipelineConfig,
    weights: LossWeights = LossWeights(),
    mask=None,
):
    """Loss and exact gradients ``(L, dL/dlogits, dL/ds)``; band mask frozen."""
    lpc, apf = params
    trace = forward(sample.data, lpc, apf, cfg, mask)
    views, gt = trace.views, sample.gt
    loss, _, _ = total_loss(gt.intensity, views.intensity, gt.depth, views.depth, weights)
    n = gt.intensity.size
    g_i = 2 * (views.intensity - gt.intensity) / n
    g_d = 2 * weights.lam * (views.depth - gt.depth) / n
    g_logits, g_s = backward(sample.data, lpc, apf, cfg, trace, g_i, g_d)
    return loss, g_logits, g_s


def pipeline_loss(sample: Sample, params, cfg: PipelineConfig, weights: LossWeights = LossWeights(), mask=None):
    lpc, apf = params
    views = forward(sample.data, lpc, apf, cfg, mask).views
    return total_loss(sample.gt.intensity, views.intensity, sample.gt.depth, views.depth, weights)[0]


def central_differences(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float) -> np.ndarray:
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        hi = f(x)
        x[i] = orig - eps
        lo = f(x)
        x[i] = orig
        grad[i] = (hi - lo) / (2 * eps)
    return grad


def finite_diff_check(f: Callable[[np.ndarray], float], grad, params, eps: float = 1e-5) -> float:
    """Max discrepancy between ``grad`` and central differences of ``f`` at ``params``.

    Reported as ``max|analytic - numeric| / (max|numeric| + 1e-12)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.atleast_1d(np.asarray(params, dtype=float))
    analytic = np.atleast_1d(np.asarray(grad(x) if callable(grad) else grad, dtype=float))
    numeric = central_differences(lambda v: float(f(v.reshape(np.shape(params)))), x, eps)
    return float(np.max(np.abs(analytic - numeric)) / (np.max(np.abs(numeric)) + 1e-12))


@dataclass
class TrainConfig:
    learning_rate: float = 6e-5
    epochs: int = 50
    optimizer: Literal["plain_gd", "adaptive_moment"] = "adaptive_moment"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.95
    weight_decay_mode: Literal["lr_schedule", "l2"] = "lr_schedule"
    tau: float | None = None
    snr_db: float | None = None
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    train_lpc: bool = True
    train_apf: bool = True
    init_sigma_s: float | None = None

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("plain_gd", "adaptive_moment"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Adam:
    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Plain:
    def step(self, grad, lr):
        return lr * grad


@dataclass
class TrainResult:
    lpc: LpcParams
    apf: list[ApfParams]
    history: list[float]
    best_epoch: int


def _prepare(dataset, cfg: PipelineConfig, config: TrainConfig) -> list[Sample]:
    samples = []
    for i, item in enumerate(dataset):
        if isinstance(item, Sample):
            samples.append(item)
            continue
        scene, snr = item if isinstance(item, tuple) else (item, None)
        if config.snr_db is not None:
            snr = config.snr_db
        samples.append(make_sample(scene, cfg, snr, seed=config.seed + i))
    return samples


def train(
    dataset: Sequence[tuple[Scene, float | None] | Sample],
    config: TrainConfig,
    cfg: PipelineConfig,
    callback: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Fit shared LPC logits and one APF parameter per measurement.

    One optimizer step per sample per epoch (batch size 1). The returned
    parameters are the checkpoint with the lowest epoch-mean loss.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if config.tau is not None:
        cfg = replace(cfg, tau=config.tau)
    samples = _prepare(dataset, cfg, config)
    lpc = LpcParams.zeros(cfg.grid.nx, cfg.grid.ny)
    sigma0 = config.init_sigma_s if config.init_sigma_s is not None else cfg.default_sigma
    apfs = [ApfParams.from_sigma(sigma0, cfg.bin_width_s) for _ in samples]

    def make_opt(shape):
        if config.optimizer == "plain_gd":
            return _Plain()
        return Adam(shape, config.beta1, config.beta2, config.eps)

    lpc_opt = make_opt(lpc.logits.shape)
    apf_opts = [make_opt(()) for _ in samples]
    history: list[float] = []
    best = (np.inf, -1, None)
    for epoch in range(config.epochs):
        lr = config.learning_rate
        if config.weight_decay_mode == "lr_schedule":
            lr *= config.weight_decay**epoch
        losses = []
        snapshot = (lpc.logits.copy(), [a.s for a in apfs])
        for sample, apf, apf_opt in zip(samples, apfs, apf_opts):
            loss, g_logits, g_s = backprop_pipeline(sample, (lpc, apf), cfg, config.loss)
            losses.append(loss)
            if not (np.isfinite(loss) and np.isfinite(g_s) and np.all(np.isfinite(g_logits))):
                raise NonFiniteLoss(epoch, loss if not np.isfinite(loss) else float("nan"))
            if config.weight_decay_mode == "l2":
                g_logits = g_logits + config.weight_decay * lpc.logits
                g_s = g_s + config.weight_decay * apf.s
            if config.train_lpc:
                lpc.logits = lpc.logits - lpc_opt.step(g_logits, lr)
            if config.train_apf:
                apf.s = float(apf.s - apf_opt.step(np.asarray(g_s), lr))
        epoch_loss = float(np.mean(losses))
        history.append(epoch_loss)
        log.debug("epoch %d loss %.6g", epoch, epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
        if epoch_loss < best[0]:
            best = (epoch_loss, epoch, snapshot)
    _, best_epoch, (logits, s_values) = best
    best_apf = [ApfParams(s, a.sigma_min, a.unit) for s, a in zip(s_values, apfs)]
    return TrainResult(LpcParams(logits), best_apf, history, best_epoch)

