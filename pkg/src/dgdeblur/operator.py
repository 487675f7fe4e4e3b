"""Element-local Galerkin operator layers with interface fluxes.

Each layer projects the latent field into per-head query, key, and
value maps, normalizes keys and values per sample, and contracts them
into a small d x d coefficient matrix per head: the volume operator of
an element.  Neighboring elements exchange information only through
numerical fluxes, which combine the operator coefficients of the two
sides of a shared face into a correction term.  The assembled operator
is applied to the element's queries and added to a pointwise linear
path before the nonlinearity.

Two element variants exist.  The ``face`` variant recomputes operator
coefficients from one-pixel face strips, so flux arguments see only
samples adjacent to the interface.  The ``cell`` variant reuses the
volume coefficients of both elements as flux arguments, which is the
natural choice when elements shrink toward single cells.  A partition
with one global element and no fluxes reduces exactly to a plain
Galerkin mixing layer over the whole field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, Parameter, Tensor
from .partition import BOUNDARY_KINDS, OPPOSITE, SIDES, ElementPartition

FLUX_KINDS = ("central", "jump", "avg_jump", "upwind", "none")
VARIANTS = ("gg", "face", "cell")

LAYERNORM_EPS = 1e-5


@dataclass
class GalerkinHeadWeights:
    """Query/key/value projections, each C x C, split into equal heads."""

    wq: Parameter
    wk: Parameter
    wv: Parameter
    heads: int

    def __post_init__(self):
        c = self.wq.value.shape
        if len(c) != 2 or c[0] != c[1]:
            raise ContractError(f"head weights must be square, got {c}")
        for w in (self.wk, self.wv):
            if w.value.shape != c:
                raise ContractError("query/key/value projections must share one shape")
        if self.heads < 1 or c[0] % self.heads:
            raise ContractError(
                f"channel count {c[0]} not divisible into {self.heads} heads")

    @property
    def channels(self) -> int:
        return self.wq.value.shape[0]

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


@dataclass
class FluxConfig:
    """How interface coefficients combine: flux kind, penalty strength,
    boundary closure, and which element variant supplies the arguments."""

    kind: str
    bc: str
    variant: str
    tau: Parameter | float | None = None

    def __post_init__(self):
        if self.kind not in FLUX_KINDS:
            raise ContractError(f"unknown flux kind {self.kind!r}, expected {FLUX_KINDS}")
        if self.bc not in BOUNDARY_KINDS:
            raise ContractError(f"unknown boundary kind {self.bc!r}, expected {BOUNDARY_KINDS}")
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown variant {self.variant!r}, expected {VARIANTS}")
        if self.kind in ("jump", "avg_jump") and self.tau is None:
            raise ContractError(f"flux kind {self.kind!r} requires a penalty tau")


@dataclass
class LayerWeights:
    heads: GalerkinHeadWeights
    w: Parameter
    b: Parameter
    flux: FluxConfig


def _coefficients_from_samples(samples: Tensor, weights: GalerkinHeadWeights) -> Tensor:
    """m x C samples -> h x d x d operator coefficients.

    Keys and values are projected, normalized per sample over the head
    dimension, and contracted over samples with a 1/m average.
    """
    if samples.ndim != 2 or samples.shape[1] != weights.channels:
        raise ContractError(
            f"expected m x {weights.channels} samples, got shape {samples.shape}")
    m = samples.shape[0]
    h, d = weights.heads, weights.head_dim
    tape = samples.tape

    def heads_of(wp: Parameter) -> Tensor:
        t = ad.matmul(samples, tape.param(wp))
        return ad.permute(ad.reshape(t, (m, h, d)), (1, 0, 2))

    kt = ad.layernorm(heads_of(weights.wk), LAYERNORM_EPS)
    vt = ad.layernorm(heads_of(weights.wv), LAYERNORM_EPS)
    return ad.scale(ad.bmm(ad.transpose2(kt), vt), 1.0 / m)


def volume_coefficients(z_e: Tensor, weights: GalerkinHeadWeights) -> Tensor:
    """Operator coefficients of one element from all p^2 interior samples."""
    return _coefficients_from_samples(z_e, weights)


def face_coefficients(strip: Tensor, weights: GalerkinHeadWeights) -> Tensor:
    """Operator coefficients of one face from its n_f strip samples."""
    return _coefficients_from_samples(strip, weights)


def _last3(t: Tensor) -> tuple[int, ...]:
    return tuple(range(t.ndim - 3, t.ndim))


def numerical_flux(k_e: Tensor, k_n: Tensor, cfg: FluxConfig) -> Tensor:
    """Combine own-side and neighbor-side coefficients across a face.

    Supports single matrices (h x d x d) and element batches
    (E x h x d x d); the upwind average runs over the trailing three
    axes either way.
    """
    if k_e.shape != k_n.shape:
        raise ContractError(f"flux operands differ in shape: {k_e.shape} vs {k_n.shape}")
    if cfg.kind == "central":
        return ad.scale(ad.add(k_e, k_n), 0.5)
    if cfg.kind == "jump":
        return _jump_term(k_e, k_n, cfg)
    if cfg.kind == "avg_jump":
        avg = ad.scale(ad.add(k_e, k_n), 0.5)
        return ad.add(avg, _jump_term(k_e, k_n, cfg))
    if cfg.kind == "upwind":
        m_e = ad.mean_axes(k_e, _last3(k_e))
        m_n = ad.mean_axes(k_n, _last3(k_n))
        alpha = ad.pointwise(ad.sub(m_e, m_n), "sigmoid")
        return ad.add(k_n, ad.mul(alpha, ad.sub(k_e, k_n)))
    raise ContractError(f"flux kind {cfg.kind!r} produces no interface term")


def _jump_term(k_e: Tensor, k_n: Tensor, cfg: FluxConfig) -> Tensor:
    diff = ad.sub(k_e, k_n)
    if isinstance(cfg.tau, Parameter):
        return ad.neg(ad.mul(k_e.tape.param(cfg.tau), diff))
    return ad.scale(diff, -float(cfg.tau))


def boundary_exterior(k_e: Tensor, bc: str) -> Tensor:
    """Exterior coefficient state at a domain boundary face.

    Dirichlet closes with a copy of the interior state (zero jump),
    Neumann with a zero operator.  Periodic faces are interior and have
    no exterior state.
    """
    if bc == "dirichlet":
        return k_e
    if bc == "neumann":
        return k_e.tape.constant(np.zeros(k_e.shape))
    if bc == "periodic":
        raise ContractError("periodic faces are interior; no exterior state exists")
    raise ContractError(f"unknown boundary kind {bc!r}, expected {BOUNDARY_KINDS}")


def assemble_element(k_vol: Tensor, fluxes: list[Tensor]) -> Tensor:
    """Volume coefficients plus flux corrections, summed in list order."""
    out = k_vol
    for f in fluxes:
        if f.shape != k_vol.shape:
            raise ContractError(
                f"flux shape {f.shape} does not match volume shape {k_vol.shape}")
        out = ad.add(out, f)
    return out


def apply_operator(q_heads: Tensor, coeff: Tensor) -> Tensor:
    """Apply assembled coefficients to per-head queries: Q K per head."""
    return ad.bmm(q_heads, coeff)


# ---------------------------------------------------------------------------
# full layers
# ---------------------------------------------------------------------------

def _split_heads(flat: Tensor, e: int, n: int, h: int, d: int) -> Tensor:
    return ad.permute(ad.reshape(flat, (e, n, h, d)), (0, 2, 1, 3))


def _merge_heads(t: Tensor, e: int, n: int, c: int) -> Tensor:
    return ad.reshape(ad.permute(t, (0, 2, 1, 3)), (e, n, c))


def _operator_term(zp: Tensor, lw: LayerWeights,
                   part: ElementPartition | None) -> Tensor:
    """Shared core: E x n x C partitioned latents -> E x n x C operator output.

    With ``part`` None (or flux kind "none") only the volume operator
    acts, which is the global Galerkin path when E = 1.
    """
    e, n, c = zp.shape
    hw = lw.heads
    h, d = hw.heads, hw.head_dim
    tape = zp.tape
    flat = ad.reshape(zp, (e * n, c))

    def project(wp: Parameter) -> Tensor:
        return _split_heads(ad.matmul(flat, tape.param(wp)), e, n, h, d)

    q = project(hw.wq)
    kt = ad.layernorm(project(hw.wk), LAYERNORM_EPS)
    vt = ad.layernorm(project(hw.wv), LAYERNORM_EPS)
    k_vol = ad.scale(ad.bmm(ad.transpose2(kt), vt), 1.0 / n)

    cfg = lw.flux
    if part is not None and cfg.kind != "none":
        if cfg.variant == "face":
            p = part.p
            own = {}
            for side in SIDES:
                idx = part.face_local_indices(side)
                strip_k = ad.take(kt, idx, axis=2)
                strip_v = ad.take(vt, idx, axis=2)
                own[side] = ad.scale(ad.bmm(ad.transpose2(strip_k), strip_v), 1.0 / p)
        else:
            own = {side: k_vol for side in SIDES}
        fluxes = []
        for side in SIDES:
            k_self = own[side]
            idx, interior = part.neighbor_table(side)
            gathered = ad.take(own[OPPOSITE[side]], idx, axis=0)
            if cfg.bc == "periodic":
                k_other = gathered
            else:
                if cfg.bc == "dirichlet":
                    closure = k_self
                else:
                    closure = tape.constant(np.zeros(k_self.shape))
                mask = interior[:, None, None, None]
                k_other = ad.select(mask, gathered, closure)
            fluxes.append(numerical_flux(k_self, k_other, cfg))
        k_dg = assemble_element(k_vol, fluxes)
    else:
        k_dg = k_vol

    return _merge_heads(apply_operator(q, k_dg), e, n, c)


def _linear_path(z: Tensor, lw: LayerWeights) -> Tensor:
    h, w, c = z.shape
    flat = ad.matmul(ad.reshape(z, (h * w, c)), z.tape.param(lw.w))
    return ad.reshape(ad.add(flat, z.tape.param(lw.b)), (h, w, c))


def dg_layer(z: Tensor, lw: LayerWeights, part: ElementPartition,
             nonlin: str = "gelu") -> Tensor:
    """One operator layer over a partitioned field: sigma(W z + Q K_dg)."""
    h, w, c = z.shape
    if (h, w) != (part.height, part.width):
        raise ContractError(
            f"field {h}x{w} does not match partition {part.height}x{part.width}")
    if c != lw.heads.channels:
        raise ContractError(f"field channels {c} != weight channels {lw.heads.channels}")
    zp = ad.partition_op(z, part.p)
    term = ad.unpartition_op(_operator_term(zp, lw, part), h, w)
    return ad.pointwise(ad.add(_linear_path(z, lw), term), nonlin)


def global_galerkin_layer(z: Tensor, lw: LayerWeights, nonlin: str = "gelu") -> Tensor:
    """Volume-only layer treating the whole field as a single element."""
    h, w, c = z.shape
    if c != lw.heads.channels:
        raise ContractError(f"field channels {c} != weight channels {lw.heads.channels}")
    zp = ad.reshape(z, (1, h * w, c))
    term = ad.reshape(_operator_term(zp, lw, None), (h, w, c))
    return ad.pointwise(ad.add(_linear_path(z, lw), term), nonlin)
