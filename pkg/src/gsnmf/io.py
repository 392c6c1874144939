"""File formats: matrices (binary and CSV), model archives, PGM images,
and grayscale heatmap export.

Binary matrix files carry magic ``GSNM``, a version byte of 1, two
little-endian uint64 shape fields, then the row-major float64 payload.
Model archives carry magic ``GSNMA`` and embed the same matrix blocks.
Both round-trip bitwise.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import FitResult, VariationalState
from .model import GroupAssignment, Hyperparameters

__all__ = [
    "FormatError",
    "ModelArchive",
    "save_matrix",
    "load_matrix",
    "save_model",
    "load_model",
    "load_pgm",
    "save_pgm",
    "histogram_equalize",
    "vectorize_images",
    "apply_mask",
    "downsample",
    "export_heatmap",
]

MATRIX_MAGIC = b"GSNM"
ARCHIVE_MAGIC = b"GSNMA"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed or unsupported file content."""


def _atomic_write(path, payload: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _matrix_block(matrix: np.ndarray) -> bytes:
    m = np.ascontiguousarray(matrix, dtype="<f8")
    rows, cols = m.shape
    return struct.pack("<QQ", rows, cols) + m.tobytes()


def _read_matrix_block(buf: memoryview, offset: int) -> tuple[np.ndarray, int]:
    if len(buf) < offset + 16:
        raise FormatError("truncated matrix block header")
    rows, cols = struct.unpack_from("<QQ", buf, offset)
    offset += 16
    nbytes = rows * cols * 8
    if len(buf) < offset + nbytes:
        raise FormatError("truncated matrix payload")
    data = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=offset)
    return data.reshape(rows, cols).copy(), offset + nbytes


def save_matrix(matrix, path, format: str = "binary"):
    """Write a 2-D float64 matrix as binary (bit-exact) or CSV text."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("only 2-D matrices are supported")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if format == "binary":
        _atomic_write(path, MATRIX_MAGIC + bytes([FORMAT_VERSION]) + _matrix_block(m))
    elif format == "csv":
        lines = "\n".join(",".join(f"{v:.17g}" for v in row) for row in m)
        _atomic_write(path, (lines + "\n").encode("ascii"))
    else:
        raise ValueError(f"unknown format {format!r}")


def load_matrix(path) -> np.ndarray:
    """Read a matrix file, auto-detecting binary versus CSV by magic bytes."""
    raw = Path(path).read_bytes()
    if raw.startswith(ARCHIVE_MAGIC):
        raise FormatError(f"{path} is a model archive, not a matrix file")
    if raw.startswith(MATRIX_MAGIC):
        if len(raw) < 5:
            raise FormatError("truncated binary matrix header")
        if raw[4] != FORMAT_VERSION:
            raise FormatError(f"unsupported matrix format version {raw[4]}")
        matrix, end = _read_matrix_block(memoryview(raw), 5)
        if end != len(raw):
            raise FormatError("trailing bytes after matrix payload")
        return matrix
    return _parse_csv(raw, path)


def _parse_csv(raw: bytes, path) -> np.ndarray:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: neither a binary matrix nor text") from exc
    rows = []
    width = None
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise FormatError(f"{path}:{ln}: cell does not parse as a real") from exc
        if any(not np.isfinite(v) for v in values):
            raise FormatError(f"{path}:{ln}: non-finite cell")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise FormatError(f"{path}:{ln}: ragged row ({len(values)} != {width})")
        rows.append(values)
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class ModelArchive:
    """Everything needed to reuse a fitted model, bitwise-stable on disk."""

    hyper: Hyperparameters
    groups: GroupAssignment
    state: VariationalState
    bound_trace: list[tuple[int, float]]
    seed: int
    converged: bool
    version: int = FORMAT_VERSION

    @classmethod
    def from_fit(
        cls, hyper: Hyperparameters, groups: GroupAssignment, result: FitResult
    ) -> "ModelArchive":
        return cls(
            hyper=hyper,
            groups=groups,
            state=result.state,
            bound_trace=list(result.bound_trace),
            seed=result.seed,
            converged=result.converged,
        )


_STATE_FIELDS = (
    "E_t",
    "L_t",
    "E_v",
    "L_v",
    "Sigma_t",
    "Sigma_v",
    "E_lambda",
    "L_lambda",
    "Delta",
    "Pi",
    "alpha_t",
    "beta_t",
    "alpha_v",
    "beta_v",
    "alpha_lambda",
    "beta_lambda",
)


def save_model(archive: ModelArchive, path):
    """Serialize a model archive; load_model(save_model(m)) is bitwise exact."""
    h = archive.hyper
    parts = [
        ARCHIVE_MAGIC,
        bytes([archive.version]),
        struct.pack(
            "<BqB",
            1 if archive.groups.observed else 0,
            int(archive.seed),
            1 if archive.converged else 0,
        ),
        struct.pack("<Q", archive.groups.n_groups),
    ]
    z = archive.groups.z if archive.groups.observed else np.zeros(0, dtype=int)
    parts.append(_matrix_block(np.asarray(z, dtype=float).reshape(1, -1)))
    for m in (h.A_t, h.B_t, h.A_lambda, h.B_lambda, h.U):
        parts.append(_matrix_block(m))
    for name in _STATE_FIELDS:
        parts.append(_matrix_block(getattr(archive.state, name)))
    trace = np.array(
        [(float(s), b) for s, b in archive.bound_trace], dtype=float
    ).reshape(-1, 2)
    parts.append(_matrix_block(trace))
    _atomic_write(path, b"".join(parts))


def load_model(path) -> ModelArchive:
    raw = Path(path).read_bytes()
    if not raw.startswith(ARCHIVE_MAGIC):
        raise FormatError(f"{path} is not a model archive")
    if raw[len(ARCHIVE_MAGIC)] != FORMAT_VERSION:
        raise FormatError(f"unsupported archive version {raw[len(ARCHIVE_MAGIC)]}")
    buf = memoryview(raw)
    offset = len(ARCHIVE_MAGIC) + 1
    observed, seed, converged = struct.unpack_from("<BqB", buf, offset)
    offset += struct.calcsize("<BqB")
    (n_groups,) = struct.unpack_from("<Q", buf, offset)
    offset += 8
    z_matrix, offset = _read_matrix_block(buf, offset)
    blocks = []
    for _ in range(5 + len(_STATE_FIELDS) + 1):
        block, offset = _read_matrix_block(buf, offset)
        blocks.append(block)
    if offset != len(raw):
        raise FormatError("trailing bytes after archive payload")
    A_t, B_t, A_lambda, B_lambda, U = blocks[:5]
    hyper = Hyperparameters(A_t=A_t, B_t=B_t, A_lambda=A_lambda, B_lambda=B_lambda, U=U)
    if observed:
        groups = GroupAssignment(int(n_groups), z_matrix.ravel().astype(int))
    else:
        groups = GroupAssignment.latent(int(n_groups))
    state = VariationalState(**dict(zip(_STATE_FIELDS, blocks[5:-1])))
    trace = [(int(s), float(b)) for s, b in blocks[-1]]
    return ModelArchive(
        hyper=hyper,
        groups=groups,
        state=state,
        bound_trace=trace,
        seed=int(seed),
        converged=bool(converged),
    )


def load_pgm(path) -> np.ndarray:
    """Read a P2 (ascii) or P5 (binary) PGM image as a float64 matrix."""
    raw = Path(path).read_bytes()
    if raw[:2] not in (b"P2", b"P5"):
        raise FormatError(f"{path}: unsupported magic {raw[:2]!r}")
    binary = raw[:2] == b"P5"

    # Header tokens (width, height, maxval) with '#' comments allowed.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        if pos >= len(raw):
            raise FormatError(f"{path}: truncated header")
        ch = raw[pos : pos + 1]
        if ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            tokens.append(raw[start:pos])
    width, height, maxval = (int(t) for t in tokens)
    if not (0 < maxval <= 65535):
        raise FormatError(f"{path}: maxval {maxval} out of range")

    if binary:
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        count = width * height
        itemsize = 2 if maxval > 255 else 1
        if len(raw) - pos < count * itemsize:
            raise FormatError(f"{path}: truncated pixel payload")
        data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    else:
        values = raw[pos:].split()
        if len(values) != width * height:
            raise FormatError(f"{path}: expected {width * height} pixels, got {len(values)}")
        data = np.array([int(v) for v in values])
    if data.max(initial=0) > maxval:
        raise FormatError(f"{path}: pixel exceeds maxval")
    return data.reshape(height, width).astype(float)


def save_pgm(image, path, maxval: int = 255):
    """Write an integer-valued matrix as a binary (P5) PGM."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if not (0 < maxval <= 65535):
        raise ValueError("maxval out of range")
    clipped = np.clip(np.rint(img), 0, maxval)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    payload = clipped.astype(">u2" if maxval > 255 else "u1").tobytes()
    _atomic_write(path, header + payload)


def histogram_equalize(image, maxval: int = 255) -> np.ndarray:
    """Global histogram equalization onto the [0, maxval] integer range.

    Each intensity maps through the empirical cumulative histogram:
    out = round(cdf(v) * maxval). A constant image therefore maps to maxval.
    """
    img = np.asarray(image, dtype=float)
    levels = np.rint(img).astype(int)
    if levels.min() < 0 or levels.max() > maxval:
        raise ValueError(f"intensities must lie in [0, {maxval}]")
    hist = np.bincount(levels.ravel(), minlength=maxval + 1)
    cdf = np.cumsum(hist) / levels.size
    mapped = np.floor(cdf * maxval + 0.5)
    return mapped[levels].astype(float)


def vectorize_images(images) -> np.ndarray:
    """Stack equal-shape images as columns, pixels in column-major scan order."""
    mats = [np.asarray(im, dtype=float) for im in images]
    if not mats:
        raise ValueError("need at least one image")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("images must share one shape")
    return np.column_stack([m.flatten(order="F") for m in mats])


def apply_mask(data, mask) -> np.ndarray:
    """Keep the rows of a vectorized data matrix where the mask is nonzero.

    The mask may be given as an image (same shape as the originals,
    vectorized in the same column-major order) or directly as a row vector.
    """
    X = np.asarray(data, dtype=float)
    m = np.asarray(mask, dtype=float)
    flat = m.flatten(order="F")
    if flat.size != X.shape[0]:
        raise ValueError("mask size does not match data rows")
    return X[flat != 0.0, :]


def downsample(image, factor: float) -> np.ndarray:
    """Shrink an image by area-averaged pooling (factor in (0, 1])."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if not (0.0 < factor <= 1.0):
        raise ValueError("factor must be in (0, 1]")
    out_h = max(1, int(round(img.shape[0] * factor)))
    out_w = max(1, int(round(img.shape[1] * factor)))
    return _area_average(_area_average(img, out_h, axis=0), out_w, axis=1)


def _area_average(img: np.ndarray, out: int, axis: int) -> np.ndarray:
    # Each output cell averages the input cells it overlaps, weighted by
    # overlap length, so integer factors reduce to plain block pooling.
    n = img.shape[axis]
    edges = np.linspace(0.0, n, out + 1)
    cells = np.arange(n)
    lo = np.maximum(edges[:-1, None], cells[None, :])
    hi = np.minimum(edges[1:, None], cells[None, :] + 1.0)
    weights = np.clip(hi - lo, 0.0, None)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.moveaxis(weights @ np.moveaxis(img, axis, 0), 0, axis)


def export_heatmap(matrix, path, style: str = "magnitude", cell_px: int = 8):
    """Render a matrix as a grayscale PGM.

    ``magnitude`` shades each cell linearly (dark = large); ``hinton`` draws
    a centered dark square per cell with side proportional to sqrt(value).
    The output image is (cell_px * rows, cell_px * cols).
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    mags = np.maximum(m, 0.0)
    top = mags.max()
    scaled = mags / top if top > 0.0 else np.zeros_like(mags)
    rows, cols = m.shape
    canvas = np.full((rows * cell_px, cols * cell_px), 255.0)
    if style == "magnitude":
        shades = np.rint(255.0 * (1.0 - scaled))
        canvas = np.kron(shades, np.ones((cell_px, cell_px)))
    elif style == "hinton":
        sides = np.rint(cell_px * np.sqrt(scaled)).astype(int)
        for r in range(rows):
            for c in range(cols):
                s = sides[r, c]
                if s <= 0:
                    continue
                r0 = r * cell_px + (cell_px - s) // 2
                c0 = c * cell_px + (cell_px - s) // 2
                canvas[r0 : r0 + s, c0 : c0 + s] = 0.0
    else:
        raise ValueError(f"unknown heatmap style {style!r}")
    save_pgm(canvas, path)
