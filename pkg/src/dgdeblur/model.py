"""Restoration model: lift, stacked operator layers, projection.

The scalar input image is lifted into a C-channel latent field by a
pointwise linear map followed by a reflect-padded 3x3 convolution and
the nonlinearity.  A stack of operator layers mixes the latent field,
and a pointwise projection maps back to one channel.  The projection
output is added to the input image, so the network learns a residual
correction on top of the blurred observation.

For the partitioned variants the input is reflect-padded on the bottom
and right up to a multiple of the element size, and the output is
cropped back.  The global variant operates on the raw extent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Parameter, Tape, Tensor
from .operator import (FluxConfig, GalerkinHeadWeights, LayerWeights,
                       dg_layer, global_galerkin_layer)
from .partition import ElementPartition

DEFAULT_FLUX = {"face": "avg_jump", "cell": "jump", "gg": "none"}
DEFAULT_BC = {"face": "dirichlet", "cell": "neumann", "gg": "periodic"}

NONLIN_KINDS = ("gelu", "relu")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs.  ``flux`` and ``bc`` accept "auto", which
    resolves to the preferred pairing of the chosen variant."""

    channels: int = 16
    heads: int = 4
    element_size: int = 8
    layers: int = 2
    variant: str = "face"
    flux: str = "auto"
    bc: str = "auto"
    penalty: str = "learnable"
    nonlin: str = "gelu"
    seed: int = 7

    def __post_init__(self):
        if self.variant not in ("gg", "face", "cell"):
            raise ContractError(f"unknown variant {self.variant!r}")
        if self.channels < 1 or self.heads < 1 or self.channels % self.heads:
            raise ContractError(
                f"channels {self.channels} not divisible into {self.heads} heads")
        if self.element_size < 1 or self.layers < 0:
            raise ContractError("element_size must be >= 1 and layers >= 0")
        if self.nonlin not in NONLIN_KINDS:
            raise ContractError(f"unknown nonlinearity {self.nonlin!r}, expected {NONLIN_KINDS}")
        if self.penalty != "learnable":
            try:
                float(self.penalty)
            except ValueError:
                raise ContractError(
                    f"penalty must be 'learnable' or a number, got {self.penalty!r}")

    def resolved_flux(self) -> str:
        return DEFAULT_FLUX[self.variant] if self.flux == "auto" else self.flux

    def resolved_bc(self) -> str:
        return DEFAULT_BC[self.variant] if self.bc == "auto" else self.bc


@dataclass
class Model:
    config: ModelConfig
    lift_w: Parameter
    lift_b: Parameter
    conv_w: Parameter
    conv_b: Parameter
    layers: list[LayerWeights]
    proj_w: Parameter
    proj_b: Parameter

    def parameters(self) -> list[Parameter]:
        params = [self.lift_w, self.lift_b, self.conv_w, self.conv_b]
        for lw in self.layers:
            params.extend([lw.heads.wq, lw.heads.wk, lw.heads.wv, lw.w, lw.b])
            if isinstance(lw.flux.tau, Parameter):
                params.append(lw.flux.tau)
        params.extend([self.proj_w, self.proj_b])
        return params

    def named_values(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.value.copy()) for p in self.parameters()]

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in values:
                raise ContractError(f"checkpoint is missing parameter {p.name!r}")
            v = np.asarray(values[p.name], dtype=np.float64)
            if v.shape != p.value.shape:
                raise ContractError(
                    f"parameter {p.name!r}: checkpoint shape {v.shape} != {p.value.shape}")
            p.value = v.copy()
            p.reset_gradient()


def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.standard_normal(shape) * std


def build_model(cfg: ModelConfig) -> Model:
    """Construct parameters with a counter-based RNG; the same seed
    always produces bit-identical initial values."""
    c = cfg.channels
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))

    lift_w = Parameter(_glorot(rng, 1, c, (1, c)), "lift.w")
    lift_b = Parameter(np.zeros(c), "lift.b")
    conv_w = Parameter(_glorot(rng, 9 * c, c, (3, 3, c, c)), "lift.conv_w")
    conv_b = Parameter(np.zeros(c), "lift.conv_b")

    flux_kind = cfg.resolved_flux()
    bc = cfg.resolved_bc()

    layers = []
    for t in range(cfg.layers):
        heads = GalerkinHeadWeights(
            Parameter(_glorot(rng, c, c, (c, c)), f"layers.{t}.wq"),
            Parameter(_glorot(rng, c, c, (c, c)), f"layers.{t}.wk"),
            Parameter(_glorot(rng, c, c, (c, c)), f"layers.{t}.wv"),
            cfg.heads,
        )
        w = Parameter(_glorot(rng, c, c, (c, c)), f"layers.{t}.w")
        b = Parameter(np.zeros(c), f"layers.{t}.b")
        if flux_kind in ("jump", "avg_jump"):
            if cfg.penalty == "learnable":
                tau = Parameter(np.asarray(0.5), f"layers.{t}.tau")
            else:
                tau = float(cfg.penalty)
        else:
            tau = None
        layers.append(LayerWeights(heads, w, b, FluxConfig(flux_kind, bc, cfg.variant, tau)))

    # zero-initialized projection: the untrained model is exactly the
    # identity on the blurred input, so optimization starts from the
    # input-PSNR baseline instead of digging out of projection noise
    proj_w = Parameter(np.zeros((c, 1)), "proj.w")
    proj_b = Parameter(np.zeros(1), "proj.b")
    return Model(cfg, lift_w, lift_b, conv_w, conv_b, layers, proj_w, proj_b)


def lift(x: Tensor, model: Model) -> Tensor:
    """Scalar field -> C-channel latent: pointwise linear, 3x3 conv
    over a reflect-padded neighborhood, bias, nonlinearity."""
    h, w, cin = x.shape
    tape = x.tape
    c = model.config.channels
    flat = ad.matmul(ad.reshape(x, (h * w, cin)), tape.param(model.lift_w))
    flat = ad.add(flat, tape.param(model.lift_b))
    grid = ad.reshape(flat, (h, w, c))
    padded = ad.pad_reflect(grid, ((1, 1), (1, 1)))
    conv = ad.conv3x3(padded, tape.param(model.conv_w))
    conv = ad.add(conv, tape.param(model.conv_b))
    return ad.pointwise(conv, model.config.nonlin)


def project(z: Tensor, model: Model, residual: Tensor,
            out_height: int, out_width: int) -> Tensor:
    """Latent -> scalar correction, cropped to the output extent and
    added to the blurred input."""
    h, w, c = z.shape
    tape = z.tape
    flat = ad.matmul(ad.reshape(z, (h * w, c)), tape.param(model.proj_w))
    flat = ad.add(flat, tape.param(model.proj_b))
    grid = ad.reshape(flat, (h, w, 1))
    return ad.add(ad.crop(grid, out_height, out_width), residual)


def forward_model(x: np.ndarray, model: Model, tape: Tape,
                  collect_latents: bool = False):
    """Run the restoration network on one image.

    Returns the output tensor, or ``(output, latents)`` when latent
    snapshots are requested: the post-lift field followed by the field
    after each operator layer, as plain arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[2] != 1:
        raise ContractError(f"forward_model: expected H x W x 1 image, got shape {x.shape}")
    h, w, _ = x.shape
    cfg = model.config

    if cfg.variant == "gg":
        xin = x
        part = None
    else:
        p = cfg.element_size
        ph, pw = (-h) % p, (-w) % p
        xin = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="reflect") if ph or pw else x
        part = ElementPartition.build(h + ph, w + pw, p)

    z = lift(tape.constant(xin), model)
    latents = [z.data.copy()] if collect_latents else None
    for lw in model.layers:
        if part is None:
            z = global_galerkin_layer(z, lw, cfg.nonlin)
        else:
            z = dg_layer(z, lw, part, cfg.nonlin)
        if collect_latents:
            latents.append(z.data.copy())

    out = project(z, model, tape.constant(x), h, w)
    if collect_latents:
        return out, latents
    return out


def restore(x: np.ndarray, model: Model) -> np.ndarray:
    """Convenience inference path: forward on a throwaway tape, clipped
    to the displayable range."""
    out = forward_model(x, model, Tape())
    return np.clip(out.data, 0.0, 1.0)
