"""Synthetic scenes and spatially varying Gaussian defocus blur.

Scenes are compositions of filled squares, hollow boxes, and thin lines
on a dark background.  A per-pixel sigma map drives an isotropic
Gaussian blur whose kernel width follows the map, so different image
regions are defocused by different amounts.  Borders are handled by
reflection padding; kernels are truncated at a fixed multiple of sigma
and normalized to unit mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .autodiff import ContractError

PATTERN_KINDS = ("filled_square", "hollow_box", "thin_line")
SIGMA_MODES = ("constant", "ramp", "smooth_random")
BLUR_MODES = ("output", "input")

MIN_CANVAS = 16
IDENTITY_SIGMA = 0.3


@dataclass(frozen=True)
class PatternSpec:
    """One shape: kind, geometry, intensity, and the seed it was drawn with."""

    kind: str
    geometry: dict
    intensity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ContractError(f"unknown pattern kind {self.kind!r}, expected {PATTERN_KINDS}")
        if not 0.0 < self.intensity <= 1.0:
            raise ContractError(f"intensity {self.intensity} outside (0, 1]")


@dataclass(frozen=True)
class BlurConfig:
    """Kernel truncation multiple, sigma sampling mode, and normalization."""

    trunc: float = 3.0
    mode: str = "output"
    normalize: bool = True

    def __post_init__(self):
        if self.trunc <= 0.0:
            raise ContractError(f"truncation multiple must be positive, got {self.trunc}")
        if self.mode not in BLUR_MODES:
            raise ContractError(f"unknown blur mode {self.mode!r}, expected {BLUR_MODES}")


def _check_canvas(height: int, width: int) -> None:
    if height < MIN_CANVAS or width < MIN_CANVAS:
        raise ContractError(
            f"canvas {height}x{width} below the {MIN_CANVAS}-pixel minimum")


def gen_pattern(spec: PatternSpec, height: int, width: int) -> np.ndarray:
    """Render one shape onto a zero canvas.  Geometry must fit inside."""
    _check_canvas(height, width)
    canvas = np.zeros((height, width))
    g = spec.geometry
    r0, c0 = int(g["row"]), int(g["col"])

    if spec.kind == "filled_square":
        side = int(g["side"])
        if side < 1 or r0 < 0 or c0 < 0 or r0 + side > height or c0 + side > width:
            raise ContractError(f"filled_square geometry {g} leaves the canvas")
        canvas[r0:r0 + side, c0:c0 + side] = spec.intensity

    elif spec.kind == "hollow_box":
        bh, bw = int(g["height"]), int(g["width"])
        t = int(g.get("thickness", 1))
        if min(bh, bw) < 2 * t + 1 or t < 1:
            raise ContractError(f"hollow_box geometry {g} has no interior")
        if r0 < 0 or c0 < 0 or r0 + bh > height or c0 + bw > width:
            raise ContractError(f"hollow_box geometry {g} leaves the canvas")
        canvas[r0:r0 + bh, c0:c0 + bw] = spec.intensity
        canvas[r0 + t:r0 + bh - t, c0 + t:c0 + bw - t] = 0.0

    elif spec.kind == "thin_line":
        length = int(g["length"])
        wdt = int(g.get("width", 1))
        orient = g["orientation"]
        if length < 1 or wdt < 1:
            raise ContractError(f"thin_line geometry {g} is degenerate")
        if orient == "h":
            if r0 < 0 or c0 < 0 or r0 + wdt > height or c0 + length > width:
                raise ContractError(f"thin_line geometry {g} leaves the canvas")
            canvas[r0:r0 + wdt, c0:c0 + length] = spec.intensity
        elif orient == "v":
            if r0 < 0 or c0 < 0 or r0 + length > height or c0 + wdt > width:
                raise ContractError(f"thin_line geometry {g} leaves the canvas")
            canvas[r0:r0 + length, c0:c0 + wdt] = spec.intensity
        elif orient == "d":
            if r0 < 0 or c0 < 0 or r0 + length > height or c0 + length + wdt - 1 > width:
                raise ContractError(f"thin_line geometry {g} leaves the canvas")
            rows = r0 + np.arange(length)
            cols = c0 + np.arange(length)
            for k in range(wdt):
                canvas[rows, cols + k] = spec.intensity
        else:
            raise ContractError(f"unknown line orientation {orient!r}")

    return canvas


def random_pattern(rng: np.random.Generator, height: int, width: int,
                   weights: dict[str, float] | None = None, seed: int = 0) -> PatternSpec:
    """Draw one shape with geometry guaranteed to fit the canvas."""
    if weights is None:
        weights = {k: 1.0 for k in PATTERN_KINDS}
    kinds = [k for k in PATTERN_KINDS if weights.get(k, 0.0) > 0.0]
    probs = np.array([weights[k] for k in kinds])
    kind = kinds[int(rng.choice(len(kinds), p=probs / probs.sum()))]
    intensity = float(rng.uniform(0.5, 1.0))
    small = min(height, width)

    if kind == "filled_square":
        side = int(rng.integers(3, max(4, small // 3)))
        geometry = {
            "row": int(rng.integers(0, height - side + 1)),
            "col": int(rng.integers(0, width - side + 1)),
            "side": side,
        }
    elif kind == "hollow_box":
        bh = int(rng.integers(5, max(6, small // 2)))
        bw = int(rng.integers(5, max(6, small // 2)))
        geometry = {
            "row": int(rng.integers(0, height - bh + 1)),
            "col": int(rng.integers(0, width - bw + 1)),
            "height": bh,
            "width": bw,
            "thickness": int(rng.integers(1, max(2, min(bh, bw) // 3))),
        }
    else:
        orient = ("h", "v", "d")[int(rng.integers(0, 3))]
        length = int(rng.integers(small // 4, small - 1))
        if orient == "h":
            row = int(rng.integers(0, height))
            col = int(rng.integers(0, width - length + 1))
        elif orient == "v":
            row = int(rng.integers(0, height - length + 1))
            col = int(rng.integers(0, width))
        else:
            row = int(rng.integers(0, height - length + 1))
            col = int(rng.integers(0, width - length + 1))
        geometry = {"row": row, "col": col, "length": length, "orientation": orient}

    return PatternSpec(kind, geometry, intensity, seed)


def render_scene(specs: list[PatternSpec], height: int, width: int) -> np.ndarray:
    """Compose shapes by maximum so overlaps stay within [0, 1]."""
    canvas = np.zeros((height, width))
    for spec in specs:
        canvas = np.maximum(canvas, gen_pattern(spec, height, width))
    return canvas


# ---------------------------------------------------------------------------
# sigma maps
# ---------------------------------------------------------------------------

def gen_sigma_map(mode: str, sigma_min: float, sigma_max: float,
                  height: int, width: int, seed: int = 0) -> np.ndarray:
    """Per-pixel blur widths in one of three spatial layouts."""
    if mode not in SIGMA_MODES:
        raise ContractError(f"unknown sigma mode {mode!r}, expected {SIGMA_MODES}")
    if sigma_min < 0.0 or sigma_max < sigma_min:
        raise ContractError(f"bad sigma range [{sigma_min}, {sigma_max}]")

    if mode == "constant":
        return np.full((height, width), float(sigma_min))

    if mode == "ramp":
        if width == 1:
            return np.full((height, width), float(sigma_min))
        ramp = sigma_min + (sigma_max - sigma_min) * np.arange(width) / (width - 1)
        return np.broadcast_to(ramp, (height, width)).copy()

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    noise = rng.standard_normal((height, width))
    # low-pass in the frequency domain for smooth, seamless variation
    ky = np.fft.fftfreq(height)[:, None]
    kx = np.fft.fftfreq(width)[None, :]
    ell = max(min(height, width) / 8.0, 1.0)
    damp = np.exp(-2.0 * (np.pi * ell) ** 2 * (ky ** 2 + kx ** 2))
    smooth = np.real(np.fft.ifft2(np.fft.fft2(noise) * damp))
    lo, hi = smooth.min(), smooth.max()
    if hi == lo:
        return np.full((height, width), float(sigma_min))
    return sigma_min + (sigma_max - sigma_min) * (smooth - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# blur
# ---------------------------------------------------------------------------

def gaussian_kernel(sigma: float, trunc: float = 3.0, normalize: bool = True) -> np.ndarray:
    """Explicit truncated kernel for one sigma; radius = ceil(trunc * sigma)."""
    if sigma < IDENTITY_SIGMA:
        return np.ones((1, 1))
    r = int(np.ceil(trunc * sigma))
    u = np.arange(-r, r + 1)
    w = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma * sigma))
    return w / w.sum() if normalize else w


def blur(sharp: np.ndarray, sigma_map: np.ndarray, cfg: BlurConfig = BlurConfig()) -> np.ndarray:
    """Spatially varying Gaussian blur of an H x W (x C) image.

    In ``output`` mode the kernel width is read at the output pixel and
    the window is gathered from the reflect-padded input; in ``input``
    mode each input pixel scatters its mass with its own width.  Pixels
    with sigma below the identity threshold are copied through exactly.
    """
    sharp = np.asarray(sharp, dtype=np.float64)
    squeeze = sharp.ndim == 2
    if squeeze:
        sharp = sharp[:, :, None]
    if sharp.ndim != 3:
        raise ContractError(f"blur: expected H x W (x C) image, got shape {sharp.shape}")
    sigma_map = np.asarray(sigma_map, dtype=np.float64)
    if sigma_map.shape != sharp.shape[:2]:
        raise ContractError(
            f"blur: sigma map {sigma_map.shape} does not match image {sharp.shape[:2]}")
    if np.any(sigma_map < 0.0):
        raise ContractError("blur: sigma map must be nonnegative")

    h, w, c = sharp.shape
    radius = np.where(sigma_map < IDENTITY_SIGMA, 0,
                      np.ceil(cfg.trunc * sigma_map).astype(np.int64))
    rmax = int(radius.max())
    if rmax == 0:
        out = sharp.copy()
        return out[:, :, 0] if squeeze else out

    out = np.zeros_like(sharp)
    if cfg.mode == "output":
        padded = np.pad(sharp, ((rmax, rmax), (rmax, rmax), (0, 0)), mode="reflect")
        for r in sorted(set(radius.ravel().tolist())):
            mask = radius == r
            ii, jj = np.nonzero(mask)
            if r == 0:
                out[ii, jj] = sharp[ii, jj]
                continue
            sig = sigma_map[ii, jj]
            u = np.arange(-r, r + 1)
            dist2 = u[:, None] ** 2 + u[None, :] ** 2
            wts = np.exp(-dist2[None, :, :] / (2.0 * sig * sig)[:, None, None])
            if cfg.normalize:
                wts = wts / wts.sum(axis=(1, 2), keepdims=True)
            # gather the (2r+1)^2 neighborhood of each selected pixel
            acc = np.zeros((len(ii), c))
            for dy in range(2 * r + 1):
                rows = ii + dy + (rmax - r)
                for dx in range(2 * r + 1):
                    cols = jj + dx + (rmax - r)
                    acc += wts[:, dy, dx, None] * padded[rows, cols]
            out[ii, jj] = acc
    else:
        pad = rmax
        padded_out = np.zeros((h + 2 * pad, w + 2 * pad, c))
        for r in sorted(set(radius.ravel().tolist())):
            mask = radius == r
            ii, jj = np.nonzero(mask)
            if r == 0:
                padded_out[ii + pad, jj + pad] += sharp[ii, jj]
                continue
            sig = sigma_map[ii, jj]
            u = np.arange(-r, r + 1)
            dist2 = u[:, None] ** 2 + u[None, :] ** 2
            wts = np.exp(-dist2[None, :, :] / (2.0 * sig * sig)[:, None, None])
            if cfg.normalize:
                wts = wts / wts.sum(axis=(1, 2), keepdims=True)
            vals = sharp[ii, jj]
            for dy in range(2 * r + 1):
                rows = ii + dy + (pad - r)
                for dx in range(2 * r + 1):
                    cols = jj + dx + (pad - r)
                    np.add.at(padded_out, (rows, cols), wts[:, dy, dx, None] * vals)
        # fold reflected margins back into the domain
        rows = np.pad(np.arange(h), (pad, pad), mode="reflect")
        cols = np.pad(np.arange(w), (pad, pad), mode="reflect")
        flat = (rows[:, None] * w + cols[None, :]).ravel()
        folded = np.zeros((h * w, c))
        np.add.at(folded, flat, padded_out.reshape(-1, c))
        out = folded.reshape(h, w, c)

    return out[:, :, 0] if squeeze else out


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetItem:
    image_id: str
    sharp: np.ndarray
    blurred: np.ndarray
    sigma: np.ndarray
    seed: int
    sigma_min: float
    sigma_max: float


def gen_dataset(out_dir, n: int, height: int, width: int,
                sigma_mode: str = "smooth_random",
                sigma_min: float = 1.0, sigma_max: float = 4.0,
                shapes_range: tuple[int, int] = (3, 6),
                weights: dict[str, float] | None = None,
                seed: int = 0,
                blur_cfg: BlurConfig = BlurConfig(),
                write_pgm: bool = False) -> list[dict]:
    """Render n scenes, blur them, and write grids plus a manifest.

    Every image derives its own seed from the dataset seed and its
    index, so the output is a pure function of the arguments.  Returns
    the manifest rows that were written.
    """
    _check_canvas(height, width)
    if n < 1:
        raise ContractError(f"dataset size must be >= 1, got {n}")
    lo, hi = shapes_range
    if not 1 <= lo <= hi:
        raise ContractError(f"bad shapes range {shapes_range}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for i in range(n):
        img_seed = int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0])
        scene_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(img_seed, spawn_key=(0,))))
        sigma_seed = int(
            np.random.SeedSequence(img_seed, spawn_key=(1,)).generate_state(1)[0])

        count = int(scene_rng.integers(lo, hi + 1))
        specs = [random_pattern(scene_rng, height, width, weights, img_seed)
                 for _ in range(count)]
        sharp = render_scene(specs, height, width)
        sigma = gen_sigma_map(sigma_mode, sigma_min, sigma_max, height, width, sigma_seed)
        blurred = blur(sharp, sigma, blur_cfg)

        image_id = f"{i:04d}"
        names = {
            "sharp": f"sharp_{image_id}.f32g",
            "blur": f"blur_{image_id}.f32g",
            "sigma": f"sigma_{image_id}.f32g",
        }
        fileio.write_f32g(out_dir / names["sharp"], sharp)
        fileio.write_f32g(out_dir / names["blur"], blurred)
        fileio.write_f32g(out_dir / names["sigma"], sigma)
        if write_pgm:
            fileio.write_pgm(out_dir / f"sharp_{image_id}.pgm", sharp)
            fileio.write_pgm(out_dir / f"blur_{image_id}.pgm", blurred)
        rows.append({
            "id": image_id,
            "sharp_path": names["sharp"],
            "blur_path": names["blur"],
            "sigma_path": names["sigma"],
            "seed": img_seed,
            "sigma_min": fileio.fmt_float(sigma_min),
            "sigma_max": fileio.fmt_float(sigma_max),
        })
    fileio.write_manifest(out_dir / "manifest.csv", rows)
    return rows


def load_dataset(manifest_path) -> list[DatasetItem]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    items = []
    for row in fileio.read_manifest(manifest_path):
        items.append(DatasetItem(
            image_id=row["id"],
            sharp=fileio.read_f32g(base / row["sharp_path"]),
            blurred=fileio.read_f32g(base / row["blur_path"]),
            sigma=fileio.read_f32g(base / row["sigma_path"])[:, :, 0],
            seed=int(row["seed"]),
            sigma_min=float(row["sigma_min"]),
            sigma_max=float(row["sigma_max"]),
        ))
    return items
