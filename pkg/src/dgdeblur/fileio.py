"""On-disk formats: raw float grids, manifests, CSV reports, checkpoints.

All formats are deterministic down to the byte so that rerunning a
pipeline with the same seed reproduces identical files.  Floats in text
files use repr, which round-trips float64 exactly; binary payloads are
little-endian float64.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .autodiff import ContractError

F32G_MAGIC = "F32G"
CKPT_MAGIC = "DGCKPT1"

MANIFEST_COLUMNS = ("id", "sharp_path", "blur_path", "sigma_path",
                    "seed", "sigma_min", "sigma_max")


def fmt_float(x: float) -> str:
    """Shortest decimal string that parses back to the same float64."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# raw float grids
# ---------------------------------------------------------------------------

def write_f32g(path, arr: np.ndarray) -> None:
    """Write a float grid: ASCII header ``F32G H W C`` then the values
    as little-endian float64, row-major with the channel axis fastest."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ContractError(f"write_f32g: expected H x W x C, got shape {arr.shape}")
    h, w, c = arr.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"{F32G_MAGIC} {h} {w} {c}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr).astype("<f8").tobytes())


def read_f32g(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != F32G_MAGIC:
            raise ContractError(f"{path}: not a {F32G_MAGIC} file")
        h, w, c = (int(t) for t in header[1:])
        payload = fh.read()
    expected = h * w * c * 8
    if len(payload) != expected:
        raise ContractError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(h, w, c)


def write_pgm(path, arr: np.ndarray) -> None:
    """8-bit grayscale preview; values are clipped to [0, 1] first."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] != 1:
            raise ContractError(f"write_pgm: expected one channel, got shape {arr.shape}")
        arr = arr[:, :, 0]
    h, w = arr.shape
    quantized = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantized.tobytes())


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, (np.floating,)):
        return fmt_float(float(v))
    return str(v)


def write_csv(path, header: tuple[str, ...], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ContractError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def write_manifest(path, rows: list[dict]) -> None:
    write_csv(path, MANIFEST_COLUMNS, [[r[c] for c in MANIFEST_COLUMNS] for r in rows])


def read_manifest(path) -> list[dict]:
    header, body = read_csv(path)
    if tuple(header) != MANIFEST_COLUMNS:
        raise ContractError(f"{path}: manifest columns {header} != {list(MANIFEST_COLUMNS)}")
    return [dict(zip(header, row)) for row in body]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, named_values: list[tuple[str, np.ndarray]],
                    config_digest: str) -> None:
    """ASCII header with the config digest, then one block per parameter:
    name length, name bytes, rank, dims (all uint32 LE), then the values
    as little-endian float64."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"{CKPT_MAGIC} {config_digest} {len(named_values)}\n".encode("ascii"))
        for name, value in named_values:
            raw = name.encode("utf-8")
            value = np.asarray(value, dtype=np.float64)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(np.ascontiguousarray(value).astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3 or header[0] != CKPT_MAGIC:
            raise ContractError(f"{path}: not a {CKPT_MAGIC} checkpoint")
        digest, count = header[1], int(header[2])
        values: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            payload = fh.read(8 * n)
            if len(payload) != 8 * n:
                raise ContractError(f"{path}: truncated block for parameter {name!r}")
            values[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    return digest, values
