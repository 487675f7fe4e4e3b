"""Loss, optimizer, schedule, and the training/evaluation loops.

The loss combines a mean absolute error in pixel space with a spectral
term: the mean absolute modulus of the DFT of the residual.  Both terms
can be evaluated on an average-pooled pyramid; each scale is normalized
by its own pixel count so scales contribute comparably.

Optimization is AdamW with decoupled weight decay applied before the
moment update, under a cosine learning-rate schedule.  Everything is
seeded through counter-based RNG, so a training run is a pure function
of (dataset, config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import metrics
from .autodiff import ContractError, Parameter, Tape, Tensor
from .blur import DatasetItem
from .model import Model, forward_model


class NonFiniteGradientError(RuntimeError):
    """A gradient or loss left the finite range; the step was aborted."""


@dataclass(frozen=True)
class LossConfig:
    lam: float = 0.1
    scales: int = 1

    def __post_init__(self):
        if self.lam < 0.0:
            raise ContractError(f"loss weight must be >= 0, got {self.lam}")
        if self.scales < 1:
            raise ContractError(f"scale count must be >= 1, got {self.scales}")


def multiscale_loss(pred: Tensor, target: np.ndarray, cfg: LossConfig = LossConfig()) -> Tensor:
    """Pixel L1 plus weighted spectral L1 over an average-pooled pyramid."""
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 2:
        target = target[:, :, None]
    if tuple(pred.shape) != target.shape:
        raise ContractError(
            f"loss: prediction {pred.shape} does not match target {target.shape}")
    h, w = target.shape[:2]
    if cfg.scales > 1:
        factor = 2 ** (cfg.scales - 1)
        if h % factor or w % factor:
            raise ContractError(
                f"loss: {h}x{w} image does not pool down {cfg.scales} scales")

    tape = pred.tape
    p = pred
    t = tape.constant(target)
    total = None
    for s in range(cfg.scales):
        if s > 0:
            p = ad.avgpool2(p)
            t = ad.avgpool2(t)
        hs, ws, _ = p.shape
        count = hs * ws
        diff = ad.sub(p, t)
        spatial = ad.scale(ad.sum_all(ad.absolute(diff)), 1.0 / count)
        fd = ad.sub(ad.fft2(ad.reshape(p, (hs, ws))), ad.fft2(ad.reshape(t, (hs, ws))))
        spectral = ad.scale(ad.sum_all(ad.complex_modulus(fd)), 1.0 / count)
        term = ad.add(spatial, ad.scale(spectral, cfg.lam))
        total = term if total is None else ad.add(total, term)
    return total


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamWConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ContractError("AdamW betas must lie in [0, 1)")
        if self.eps <= 0.0 or self.weight_decay < 0.0:
            raise ContractError("AdamW eps must be positive, weight decay >= 0")


class AdamWState:
    """First and second moment accumulators plus the step counter."""

    def __init__(self, params: list[Parameter]):
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}
        self.t = 0


def adamw_step(params: list[Parameter], state: AdamWState, lr: float,
               cfg: AdamWConfig = AdamWConfig()) -> None:
    """One decoupled-weight-decay Adam update on all parameters.

    Decay is applied to the value first, then the bias-corrected moment
    ratio.  Non-finite gradients abort before any parameter changes.
    """
    for p in params:
        if not np.all(np.isfinite(p.gradient)):
            raise NonFiniteGradientError(
                f"non-finite gradient for parameter {p.name!r} at step {state.t + 1}")
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    for p in params:
        g = p.gradient
        m = b1 * state.m[p.name] + (1.0 - b1) * g
        v = b2 * state.v[p.name] + (1.0 - b2) * g * g
        state.m[p.name] = m
        state.v[p.name] = v
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        value = p.value * (1.0 - lr * cfg.weight_decay)
        p.value = value - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass(frozen=True)
class CosineSchedule:
    lr0: float = 3e-4
    lr_min: float = 1e-6
    total_steps: int = 2000

    def __post_init__(self):
        if self.total_steps < 1:
            raise ContractError(f"schedule length must be >= 1, got {self.total_steps}")
        if self.lr_min < 0.0 or self.lr0 < self.lr_min:
            raise ContractError(f"bad learning-rate range [{self.lr_min}, {self.lr0}]")

    def lr(self, step: int) -> float:
        """Cosine decay from lr0 at step 0 to lr_min at total_steps."""
        s = min(max(step, 0), self.total_steps)
        cos = np.cos(np.pi * s / self.total_steps)
        return float(self.lr_min + (self.lr0 - self.lr_min) * 0.5 * (1.0 + cos))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch: int = 4
    lr: float = 3e-4
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    loss_lambda: float = 0.1
    loss_scales: int = 1
    augment: bool = True
    seed: int = 123

    def __post_init__(self):
        if self.steps < 1 or self.batch < 1:
            raise ContractError("steps and batch must be >= 1")


@dataclass
class TrainResult:
    model: Model
    log_rows: list[tuple]
    final_val_psnr: float
    diverged: bool = False


LOG_COLUMNS = ("epoch", "step", "lr", "train_loss", "val_psnr")


def _pairs(items: list[DatasetItem]) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(it.blurred, it.sharp) for it in items]


def validation_psnr(model: Model, items: list[DatasetItem]) -> float:
    values = []
    for it in items:
        out = forward_model(it.blurred, model, Tape())
        values.append(metrics.psnr(np.clip(out.data, 0.0, 1.0), it.sharp))
    return float(np.mean(values))


def train(model: Model, train_items: list[DatasetItem],
          val_items: list[DatasetItem], cfg: TrainConfig) -> TrainResult:
    """Optimize the model in place; returns the per-epoch log.

    One optimizer step consumes one batch; the gradient is the mean of
    the per-sample loss gradients.  Validation PSNR is measured at the
    end of every epoch and once more after the final partial epoch.  On
    a non-finite loss or gradient the loop stops and reports the state
    from the last completed epoch.
    """
    if not train_items:
        raise ContractError("train: empty training set")
    loss_cfg = LossConfig(cfg.loss_lambda, cfg.loss_scales)
    opt_cfg = AdamWConfig(cfg.beta1, cfg.beta2, weight_decay=cfg.weight_decay)
    sched = CosineSchedule(cfg.lr, cfg.lr_min, cfg.steps)
    params = model.parameters()
    state = AdamWState(params)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))

    rows: list[tuple] = []
    step = 0
    epoch = 0
    last_good = {p.name: p.value.copy() for p in params}
    diverged = False
    last_lr = sched.lr(0)

    while step < cfg.steps and not diverged:
        order = rng.permutation(len(train_items))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch):
            if step >= cfg.steps:
                break
            batch = [train_items[i] for i in order[start:start + cfg.batch]]
            last_lr = sched.lr(step)
            for p in params:
                p.reset_gradient()
            batch_loss = 0.0
            finite = True
            for it in batch:
                blurred, sharp = it.blurred, it.sharp
                if cfg.augment:
                    if rng.random() < 0.5:
                        blurred, sharp = blurred[::-1].copy(), sharp[::-1].copy()
                    if rng.random() < 0.5:
                        blurred = blurred[:, ::-1].copy()
                        sharp = sharp[:, ::-1].copy()
                tape = Tape()
                out = forward_model(blurred, model, tape)
                loss = multiscale_loss(out, sharp, loss_cfg)
                value = float(loss.data)
                if not np.isfinite(value):
                    finite = False
                    break
                batch_loss += value
                tape.backward(ad.scale(loss, 1.0 / len(batch)))
            if not finite:
                diverged = True
                break
            try:
                adamw_step(params, state, last_lr, opt_cfg)
            except NonFiniteGradientError:
                diverged = True
                break
            epoch_losses.append(batch_loss / len(batch))
            step += 1
        if diverged:
            for p in params:
                p.value = last_good[p.name].copy()
                p.reset_gradient()
            break
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        val = validation_psnr(model, val_items) if val_items else 0.0
        rows.append((epoch, step, last_lr, train_loss, val))
        last_good = {p.name: p.value.copy() for p in params}
        epoch += 1

    final_val = validation_psnr(model, val_items) if val_items else 0.0
    return TrainResult(model, rows, final_val, diverged)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(model: Model, items: list[DatasetItem], quantile: float = 0.9,
             dilation: int = 2, keep_outputs: bool = False):
    """Restore every item and compute the per-image metric reports plus
    column means.  Outputs are clipped to [0, 1] before scoring."""
    reports = []
    outputs = []
    for it in items:
        out = forward_model(it.blurred, model, Tape())
        restored = np.clip(out.data, 0.0, 1.0)
        if keep_outputs:
            outputs.append(restored)
        reports.append(metrics.image_report(
            it.image_id, restored, it.sharp, 1.0, quantile, dilation))
    aggregate = aggregate_reports(reports)
    if keep_outputs:
        return reports, aggregate, outputs
    return reports, aggregate


def aggregate_reports(reports) -> dict[str, float]:
    edge_vals = [r.edge_psnr for r in reports if r.edge_psnr is not None]
    return {
        "psnr": float(np.mean([r.psnr for r in reports])),
        "ssim": float(np.mean([r.ssim for r in reports])),
        "edge_psnr": float(np.mean(edge_vals)) if edge_vals else float("nan"),
        "interior_psnr": float(np.mean([r.interior_psnr for r in reports])),
    }


def input_baseline(items: list[DatasetItem], quantile: float = 0.9,
                   dilation: int = 2):
    """Metrics of the blurred input itself, the floor any restorer must beat."""
    reports = [metrics.image_report(it.image_id, it.blurred, it.sharp,
                                    1.0, quantile, dilation) for it in items]
    return reports, aggregate_reports(reports)


def rank_trajectories(model: Model, items: list[DatasetItem]) -> list[tuple]:
    """Effective rank of the latent field after every stage, averaged
    over the given images.

    Rows are (scale, step, variant, r_eff, d, utilization): step 0 is
    the post-lift field, step t the field after operator layer t; d is
    the channel count of the flattened pixels x channels matrix.
    """
    c = model.config.channels
    sums = None
    for it in items:
        _, latents = forward_model(it.blurred, model, Tape(), collect_latents=True)
        values = [metrics.effective_rank(z.reshape(-1, c)) for z in latents]
        sums = values if sums is None else [a + b for a, b in zip(sums, values)]
    rows = []
    for t, total in enumerate(sums):
        r_eff = total / len(items)
        rows.append((1, t, model.config.variant, r_eff, c, r_eff / c))
    return rows
