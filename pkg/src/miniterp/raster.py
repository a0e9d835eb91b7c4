"""8-bit grayscale raster images: PGM I/O, corner crops, area-average resampling.

Images are immutable value objects over a read-only numpy buffer. All
reduction arithmetic is exact-integer (no float resampling), so results are
bit-reproducible across platforms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray


class PgmError(Exception):
    """Base class for PGM load failures."""


class PgmMissingFileError(PgmError):
    pass


class PgmHeaderError(PgmError):
    """Malformed or unsupported header structure."""


class PgmUnsupportedFormatError(PgmError):
    """Recognizable PNM magic other than binary P5."""


class PgmMaxvalError(PgmError):
    """maxval present but not 255."""


class PgmTruncatedError(PgmError):
    """Header promised more pixel bytes than the file holds."""


class ReductionExhaustedError(ValueError):
    """A reduction step would shrink the image below 2x2."""


class StepKind(enum.Enum):
    CROP_TOP_LEFT = "crop-top-left"
    CROP_TOP_RIGHT = "crop-top-right"
    CROP_BOTTOM_LEFT = "crop-bottom-left"
    CROP_BOTTOM_RIGHT = "crop-bottom-right"
    RESOLUTION = "resolution"


CROP_KINDS = (
    StepKind.CROP_TOP_LEFT,
    StepKind.CROP_TOP_RIGHT,
    StepKind.CROP_BOTTOM_LEFT,
    StepKind.CROP_BOTTOM_RIGHT,
)


@dataclass(frozen=True)
class ReductionStep:
    kind: StepKind
    factor: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.factor < 1.0):
            raise ValueError(f"reduction factor must lie in (0, 1), got {self.factor}")


@dataclass(frozen=True)
class Image:
    """Immutable 8-bit grayscale image; pixels shape (height, width)."""

    pixels: NDArray[np.uint8] = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.uint8)
        if arr.ndim != 2:
            raise ValueError("image buffer must be 2-D")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must have positive dimensions")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def data(self) -> bytes:
        """Row-major pixel bytes."""
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.data))


def _ceil_frac(n: int, num: float) -> int:
    """ceil(n * num) computed safely for factor given as a float in (0,1)."""
    # Use Fraction-free exact arithmetic: floats like 0.8 are binary fractions;
    # ceil on the float product is stable for the sizes we handle (< 1e6 px),
    # but guard the boundary where n*num is integral within float error.
    prod = n * num
    rounded = round(prod)
    if abs(prod - rounded) < 1e-9:
        return int(rounded)
    return int(np.ceil(prod))


def reduce(img: Image, step: ReductionStep) -> Image:
    """One reduction step: corner crop or resolution halving by `factor`.

    Result dimensions are ceil(factor * dim) in both axes. Raises
    ReductionExhaustedError if the result would be smaller than 2x2.
    """
    w, h = img.width, img.height
    new_w = _ceil_frac(w, step.factor)
    new_h = _ceil_frac(h, step.factor)
    if new_w < 2 or new_h < 2:
        raise ReductionExhaustedError(
            f"reduction exhausted: {w}x{h} at factor {step.factor} "
            f"would give {new_w}x{new_h}"
        )
    px = img.pixels
    if step.kind == StepKind.CROP_TOP_LEFT:
        return Image(px[:new_h, :new_w])
    if step.kind == StepKind.CROP_TOP_RIGHT:
        return Image(px[:new_h, w - new_w :])
    if step.kind == StepKind.CROP_BOTTOM_LEFT:
        return Image(px[h - new_h :, :new_w])
    if step.kind == StepKind.CROP_BOTTOM_RIGHT:
        return Image(px[h - new_h :, w - new_w :])
    if step.kind == StepKind.RESOLUTION:
        return Image(_area_average(px, new_w, new_h))
    raise ValueError(f"unknown reduction kind {step.kind!r}")


def _overlap_matrix(n_out: int, n_in: int) -> NDArray[np.int64]:
    """Integer overlap lengths (scaled by n_out) between output cell i
    covering [i*n_in/n_out, (i+1)*n_in/n_out) and input cell k covering
    [k, k+1). Row sums equal n_in; column sums equal n_out."""
    ov = np.zeros((n_out, n_in), dtype=np.int64)
    for i in range(n_out):
        lo = i * n_in  # scaled by n_out
        hi = (i + 1) * n_in
        k0 = lo // n_out
        k1 = -(-hi // n_out)  # ceil div
        for k in range(k0, min(k1, n_in)):
            a = max(lo, k * n_out)
            b = min(hi, (k + 1) * n_out)
            if b > a:
                ov[i, k] = b - a
    return ov


def _area_average(px: NDArray[np.uint8], new_w: int, new_h: int) -> NDArray[np.uint8]:
    """Exact box resampling: each output pixel is the area-weighted mean of
    the input pixels its footprint covers, in integer arithmetic, rounded
    half-up. Preserves the global mean to within one gray level."""
    h, w = px.shape
    oy = _overlap_matrix(new_h, h)  # scaled by new_h
    ox = _overlap_matrix(new_w, w)  # scaled by new_w
    vals = px.astype(np.int64)
    # numerator[i, j] = sum_k,l oy[i,k] * vals[k,l] * ox[j,l]; denominator w*h
    num = oy @ vals @ ox.T
    den = w * h
    out = (2 * num + den) // (2 * den)  # round half up; num >= 0 always
    return out.astype(np.uint8)


def descendants(img: Image, factor: float = 0.8) -> list[tuple[ReductionStep, Image]]:
    """The full reduction set: four corner crops plus one resolution
    reduction, in that fixed order. All five or an error — never a partial
    list."""
    steps = [ReductionStep(kind, factor) for kind in CROP_KINDS] + [
        ReductionStep(StepKind.RESOLUTION, factor)
    ]
    return [(step, reduce(img, step)) for step in steps]


# --- PGM (binary P5, maxval 255) ------------------------------------------


def load_pgm(path: str | Path) -> Image:
    """Read a binary PGM. Only P5 with maxval 255 is accepted; one optional
    comment line may follow the magic."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except FileNotFoundError as e:
        raise PgmMissingFileError(f"no such file: {p}") from e
    except IsADirectoryError as e:
        raise PgmMissingFileError(f"not a file: {p}") from e

    if raw[:2] == b"P2":
        raise PgmUnsupportedFormatError("ASCII PGM (P2) is not supported; use binary P5")
    if raw[:2] != b"P5":
        raise PgmHeaderError("not a PGM file (missing P5 magic)")

    pos = 2
    tokens: list[int] = []
    comment_seen = False
    # Scan header tokens: width, height, maxval. Exactly whitespace-separated
    # decimal integers, with at most one '#' comment line after the magic.
    while len(tokens) < 3:
        if pos >= len(raw):
            raise PgmHeaderError("truncated header")
        c = raw[pos : pos + 1]
        if c.isspace():
            pos += 1
            continue
        if c == b"#":
            if comment_seen or tokens:
                raise PgmHeaderError("only a single comment line directly after the magic is allowed")
            comment_seen = True
            nl = raw.find(b"\n", pos)
            if nl < 0:
                raise PgmHeaderError("unterminated comment")
            pos = nl + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tok = raw[start:pos]
        if not tok.isdigit():
            raise PgmHeaderError(f"bad header token {tok!r}")
        tokens.append(int(tok))
    # Exactly one whitespace byte separates the header from pixel data.
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise PgmHeaderError("missing whitespace after maxval")
    pos += 1

    width, height, maxval = tokens
    if width < 1 or height < 1:
        raise PgmHeaderError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PgmMaxvalError(f"unsupported maxval {maxval} (only 255)")
    need = width * height
    data = raw[pos : pos + need]
    if len(data) < need:
        raise PgmTruncatedError(
            f"pixel data truncated: expected {need} bytes, found {len(data)}"
        )
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return Image(arr)


def save_pgm(img: Image, path: str | Path) -> None:
    """Write binary P5 with maxval 255. load(save(img)) is bit-identical."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.data)


def save_png(img: Image, path: str | Path) -> None:
    """Render-only PNG export (8-bit grayscale). Never read back."""
    from PIL import Image as PILImage

    PILImage.fromarray(np.asarray(img.pixels), mode="L").save(str(path), format="PNG")
