"""Grayscale images to quantized microimage counts.

Pipeline per image: clamp both histogram tails, log-transform, quantize the
resulting range uniformly into L levels, then count every overlapping n x n
patch as a point of the centered lattice {-(L-1)/2, ..., (L-1)/2}^(n*n).
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadDimensions,
    EmptyList,
    InconsistentK,
    LevelOutOfRange,
    ParseError,
    TruncatedFile,
    ValidationError,
)
from .group import LatticeSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ImageGray:
    pixels: np.ndarray  # h x w, unsigned integers
    source: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise BadDimensions(f"image must be a nonempty 2-d array, got shape {px.shape}")
        if px.dtype.kind not in "iu" or px.min() < 0:
            raise ValidationError("pixels must be nonnegative integers")
        object.__setattr__(self, "pixels", px.astype(np.int64))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.pixels).tobytes()).hexdigest()


@dataclass(frozen=True)
class PreprocessConfig:
    clip_fraction: float = 0.005
    log_transform: bool = True
    levels: int = 4
    patch: int = 2

    def __post_init__(self):
        if not 0 <= self.clip_fraction < 0.5:
            raise ValidationError("clip_fraction must lie in [0, 0.5)")
        if self.levels < 2:
            raise ValidationError("need at least two levels")
        if self.patch < 1:
            raise ValidationError("patch size must be positive")


@dataclass(frozen=True, eq=False)
class QuantizedImage:
    levels: np.ndarray  # h x w, values in 0..L-1
    L: int
    constant: bool = False  # zero dynamic range after clipping


@dataclass(frozen=True, eq=False)
class PatchCounts:
    counts: np.ndarray
    total: int
    source: str = ""

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    def frequencies(self) -> np.ndarray:
        return self.counts / self.total


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    probs: np.ndarray
    pooled_counts: np.ndarray
    n_images: int
    sources: tuple[str, ...] = ()


# -- loading ------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(data: bytes, count: int) -> tuple[list[int], int]:
    values, pos = [], 0
    for _ in range(count):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise TruncatedFile("PGM header ends early")
        try:
            values.append(int(m.group(1)))
        except ValueError:
            raise ParseError(f"bad PGM header field {m.group(1)!r}") from None
        pos = m.end()
    return values, pos


def parse_pgm(data: bytes, source: str = "") -> ImageGray:
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a P2/P5 PGM (magic {magic!r})")
    (w, h, maxval), pos = _pgm_header(data[2:], 3)
    pos += 2
    if w <= 0 or h <= 0:
        raise BadDimensions(f"bad PGM size {w}x{h}")
    if not 0 < maxval <= 65535:
        raise ParseError(f"PGM maxval {maxval} outside 1..65535")
    if magic == b"P2":
        fields = data[pos:].split()
        if len(fields) < w * h:
            raise TruncatedFile(f"expected {w * h} pixels, found {len(fields)}")
        try:
            px = np.array([int(f) for f in fields[: w * h]], dtype=np.int64)
        except ValueError as exc:
            raise ParseError(f"non-integer pixel value: {exc}") from None
    else:
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        raster = data[pos:pos + need]
        if len(raster) < need:
            raise TruncatedFile(f"expected {need} raster bytes, found {len(raster)}")
        px = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    if px.max(initial=0) > maxval:
        raise ParseError(f"pixel value above maxval {maxval}")
    return ImageGray(px.reshape(h, w), source)


def parse_raw16(data: bytes, width: int, height: int, endian: str = "big", source: str = "") -> ImageGray:
    if width <= 0 or height <= 0:
        raise BadDimensions(f"bad raw16 size {width}x{height}")
    if endian not in ("big", "little"):
        raise ValidationError("endian must be 'big' or 'little'")
    need = 2 * width * height
    if len(data) < need:
        raise TruncatedFile(f"expected {need} bytes for {width}x{height}, found {len(data)}")
    if len(data) > need:
        raise BadDimensions(f"{len(data)} bytes is more than {width}x{height} 16-bit pixels")
    dtype = np.dtype(">u2" if endian == "big" else "<u2")
    return ImageGray(np.frombuffer(data, dtype=dtype).astype(np.int64).reshape(height, width), source)


def load_image(path, fmt: str = "pgm", width: int | None = None, height: int | None = None,
               endian: str = "big") -> ImageGray:
    path = Path(path)
    data = path.read_bytes()
    if fmt == "pgm":
        return parse_pgm(data, str(path))
    if fmt == "raw16":
        if width is None or height is None:
            raise BadDimensions("raw16 images need an explicit width and height")
        return parse_raw16(data, width, height, endian, str(path))
    raise ValidationError(f"unknown image format {fmt!r}")


def pgm_bytes(pixels: np.ndarray, maxval: int | None = None, binary: bool = True) -> bytes:
    px = np.asarray(pixels, dtype=np.int64)
    if px.ndim != 2:
        raise BadDimensions("PGM needs a 2-d array")
    maxval = int(px.max(initial=0)) if maxval is None else maxval
    maxval = max(maxval, 1)
    if px.min(initial=0) < 0 or px.max(initial=0) > maxval or maxval > 65535:
        raise ValidationError("pixel values must lie in 0..maxval <= 65535")
    h, w = px.shape
    if not binary:
        body = "\n".join(" ".join(map(str, row)) for row in px)
        return f"P2\n{w} {h}\n{maxval}\n{body}\n".encode()
    dtype = ">u2" if maxval > 255 else "u1"
    return f"P5\n{w} {h}\n{maxval}\n".encode() + px.astype(dtype).tobytes()


def write_pgm(path, pixels: np.ndarray, maxval: int | None = None, binary: bool = True) -> None:
    Path(path).write_bytes(pgm_bytes(pixels, maxval, binary))


# -- preprocessing ------------------------------------------------------------


def clip_bounds(values: np.ndarray, fraction: float) -> tuple[int, int]:
    """Integer winsorizing bounds: the k-th smallest and k-th largest pixel.

    k = ceil(fraction * n), at least 1, so fraction 0 leaves the range as is.
    """
    flat = np.sort(np.asarray(values).ravel())
    n = flat.size
    k = max(1, math.ceil(fraction * n))
    return int(flat[k - 1]), int(flat[n - k])


def preprocess(img: ImageGray, cfg: PreprocessConfig = PreprocessConfig()) -> QuantizedImage:
    lo, hi = clip_bounds(img.pixels, cfg.clip_fraction)
    v = np.clip(img.pixels, lo, hi).astype(float)
    if cfg.log_transform:
        v = np.log1p(v)
    vmin, vmax = float(v.min()), float(v.max())
    if not vmax > vmin:
        log.warning("%s: constant after clipping; all pixels set to level 0", img.source or "image")
        return QuantizedImage(np.zeros(v.shape, dtype=np.int64), cfg.levels, True)
    q = np.floor((v - vmin) / (vmax - vmin) * cfg.levels).astype(np.int64)
    return QuantizedImage(np.minimum(q, cfg.levels - 1), cfg.levels, False)


# -- counting -----------------------------------------------------------------


def patch_offsets(n: int) -> list[tuple[int, int]]:
    """Pixel (row, col) offsets giving the coordinates x1..x_{n*n} of a patch.

    For n = 2 the coordinates go around the square counterclockwise from the
    top-left corner (top-left, bottom-left, bottom-right, top-right), so the
    cyclic shift of coordinates is a quarter turn and x1, x3 are diagonal
    neighbours. Larger patches are read row by row.
    """
    if n == 2:
        return [(0, 0), (1, 0), (1, 1), (0, 1)]
    return [(i, j) for i in range(n) for j in range(n)]


def _is_centered_grid(space: LatticeSpace, L: int) -> bool:
    levels = tuple(2 * lv - (L - 1) for lv in range(L))
    return space.levels2 == levels and space.K == L ** space.m


def extract_counts(q: QuantizedImage, n: int, space: LatticeSpace) -> PatchCounts:
    lv = q.levels
    h, w = lv.shape
    if h < n or w < n:
        raise BadDimensions(f"{w}x{h} image is smaller than the {n}x{n} patch")
    if space.m != n * n:
        raise ValidationError(f"{n}x{n} patches need a lattice in R^{n * n}, got R^{space.m}")
    if lv.min() < 0 or lv.max() >= q.L:
        raise LevelOutOfRange(f"levels outside 0..{q.L - 1}")
    hh, ww = h - n + 1, w - n + 1
    # doubled lattice coordinate of each pixel
    doubled = 2 * lv - (q.L - 1)
    cols = [doubled[i:i + hh, j:j + ww].ravel() for i, j in patch_offsets(n)]
    if _is_centered_grid(space, q.L):
        # grid enumeration: first coordinate is the most significant base-L digit
        idx = np.zeros(hh * ww, dtype=np.int64)
        for c in cols:
            idx = idx * q.L + (c + q.L - 1) // 2
    else:
        lookup = {pt: k for k, pt in enumerate(map(tuple, space.points2))}
        try:
            idx = np.array([lookup[pt] for pt in zip(*(c.tolist() for c in cols))], dtype=np.int64)
        except KeyError as exc:
            raise LevelOutOfRange(f"patch {exc.args[0]} is not a lattice point") from None
    counts = np.bincount(idx, minlength=space.K)
    return PatchCounts(counts, hh * ww)


def image_counts(img: ImageGray, space: LatticeSpace, cfg: PreprocessConfig = PreprocessConfig()) -> tuple[PatchCounts, bool]:
    q = preprocess(img, cfg)
    pc = extract_counts(q, cfg.patch, space)
    return PatchCounts(pc.counts, pc.total, img.source), q.constant


def aggregate(counts: Sequence[PatchCounts]) -> EmpiricalDistribution:
    """Average of per-image relative frequencies; pooled counts ride along."""
    if not counts:
        raise EmptyList("no count vectors to aggregate")
    K = {c.K for c in counts}
    if len(K) != 1:
        raise InconsistentK(f"count vectors of lengths {sorted(K)}")
    probs = np.mean([c.frequencies() for c in counts], axis=0)
    pooled = np.sum([c.counts for c in counts], axis=0)
    return EmpiricalDistribution(probs, pooled, len(counts), tuple(c.source for c in counts))
