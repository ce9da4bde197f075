"""The 14-operation augmentation space over 8-bit images.

Every operation is parameterized by a continuous magnitude m in [0, 1];
the applied strength is the operation's maximum allowable strength times
m.  Each operation preserves image dimensions, and every
magnitude-parameterized operation is a byte-exact identity at m = 0.

Conventions shared by all pixel math:
  - rounding is half-up: round(x) = floor(x + 0.5)
  - geometric ops use inverse affine mapping about the image center
    ((w-1)/2, (h-1)/2) with nearest-neighbor sampling; source points
    falling outside the image take the fill value (default 128)
  - positive rotation angles turn content counterclockwise as displayed
    (row 0 at top)
"""

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .image import Image

DEFAULT_FILL = 128


class TransformKind(enum.Enum):
    IDENTITY = "identity"
    AUTO_CONTRAST = "auto_contrast"
    EQUALIZE = "equalize"
    COLOR = "color"
    CONTRAST = "contrast"
    BRIGHTNESS = "brightness"
    SHARPNESS = "sharpness"
    ROTATE = "rotate"
    TRANSLATE_X = "translate_x"
    TRANSLATE_Y = "translate_y"
    SHEAR_X = "shear_x"
    SHEAR_Y = "shear_y"
    SOLARIZE = "solarize"
    POSTERIZE = "posterize"


@dataclass(frozen=True)
class TransformSpec:
    """One operation with its maximum strength and direction symmetry."""

    kind: TransformKind
    s_max: Optional[float]
    symmetric: bool


TRANSFORM_TABLE: dict[TransformKind, TransformSpec] = {
    k: TransformSpec(k, s, sym)
    for k, s, sym in [
        (TransformKind.IDENTITY, None, False),
        (TransformKind.AUTO_CONTRAST, None, False),
        (TransformKind.EQUALIZE, None, False),
        (TransformKind.COLOR, 1.9, False),
        (TransformKind.CONTRAST, 1.9, False),
        (TransformKind.BRIGHTNESS, 1.9, False),
        (TransformKind.SHARPNESS, 1.9, False),
        (TransformKind.ROTATE, 30.0, True),
        (TransformKind.TRANSLATE_X, 10.0, True),
        (TransformKind.TRANSLATE_Y, 10.0, True),
        (TransformKind.SHEAR_X, 0.3, True),
        (TransformKind.SHEAR_Y, 0.3, True),
        (TransformKind.SOLARIZE, 256.0, False),
        (TransformKind.POSTERIZE, 4.0, False),
    ]
}

KINDS: tuple[TransformKind, ...] = tuple(TRANSFORM_TABLE)

# Kinds whose effect scales with m (identity at m = 0 is byte-exact).
MAGNITUDE_KINDS: tuple[TransformKind, ...] = tuple(
    k for k in KINDS if k not in (TransformKind.AUTO_CONTRAST, TransformKind.EQUALIZE)
)

ENHANCEMENT_KINDS = (
    TransformKind.COLOR,
    TransformKind.CONTRAST,
    TransformKind.BRIGHTNESS,
    TransformKind.SHARPNESS,
)


def spec_for(kind: TransformKind) -> TransformSpec:
    return TRANSFORM_TABLE[kind]


def sample_transform(rng: np.random.Generator) -> TransformKind:
    """Draw one operation uniformly from the 14-kind space."""
    return KINDS[int(rng.integers(0, len(KINDS)))]


def _round_u8(values: np.ndarray) -> np.ndarray:
    """Half-up rounding to uint8 with clamping to [0, 255]."""
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


def _luma(px: np.ndarray) -> np.ndarray:
    """Per-pixel luma (float). Single-channel images are their own luma."""
    if px.shape[2] == 1:
        return px[:, :, 0].astype(np.float64)
    return px.astype(np.float64) @ np.array([0.299, 0.587, 0.114])


def _blend(img: Image, degenerate: np.ndarray, factor: float) -> Image:
    """out = degenerate + factor * (img - degenerate), clamped to bytes."""
    base = img.pixels.astype(np.float64)
    return Image(_round_u8(degenerate + factor * (base - degenerate)))


def adjust_color(img: Image, factor: float) -> Image:
    """Blend toward the per-pixel luma gray image (factor 0) or away (factor > 1)."""
    gray = _luma(img.pixels)[:, :, None]
    return _blend(img, np.broadcast_to(gray, img.pixels.shape), factor)


def adjust_contrast(img: Image, factor: float) -> Image:
    """Blend toward a constant image at the mean luma."""
    mean = float(_luma(img.pixels).mean())
    return _blend(img, np.full(img.pixels.shape, mean), factor)


def adjust_brightness(img: Image, factor: float) -> Image:
    """Blend toward black."""
    return _blend(img, np.zeros(img.pixels.shape), factor)


def adjust_sharpness(img: Image, factor: float) -> Image:
    """Blend toward a 3x3 smoothed image; border pixels stay untouched."""
    px = img.pixels.astype(np.float64)
    deg = px.copy()
    if img.height >= 3 and img.width >= 3:
        kernel = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0
        acc = np.zeros_like(px[1:-1, 1:-1, :])
        h, w = img.height, img.width
        for dy in range(3):
            for dx in range(3):
                acc += kernel[dy, dx] * px[dy : dy + h - 2, dx : dx + w - 2, :]
        deg[1:-1, 1:-1, :] = acc
    return _blend(img, deg, factor)


def autocontrast(img: Image) -> Image:
    """Per channel, linearly rescale [min, max] to [0, 255] (no-op if min == max)."""
    out = img.pixels.copy()
    for c in range(img.channels):
        chan = out[:, :, c]
        lo, hi = int(chan.min()), int(chan.max())
        if lo == hi:
            continue
        lut = _round_u8((np.arange(256, dtype=np.float64) - lo) * 255.0 / (hi - lo))
        out[:, :, c] = lut[chan]
    return Image(out)


def equalize(img: Image) -> Image:
    """Per-channel cumulative-histogram equalization.

    With step = (total_pixels - count_of_last_nonzero_bin) // 255, maps
    v -> (cumsum_before(v) + step // 2) // step, clamped to [0, 255];
    the channel is left unchanged when step == 0.
    """
    out = img.pixels.copy()
    for c in range(img.channels):
        chan = out[:, :, c]
        hist = np.bincount(chan.ravel(), minlength=256)
        nonzero = np.flatnonzero(hist)
        step = int(hist.sum() - hist[nonzero[-1]]) // 255
        if step == 0:
            continue
        cum_before = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.clip((cum_before + step // 2) // step, 0, 255).astype(np.uint8)
        out[:, :, c] = lut[chan]
    return Image(out)


def solarize(img: Image, threshold: int) -> Image:
    """Invert every pixel value >= threshold."""
    px = img.pixels
    return Image(np.where(px >= threshold, 255 - px.astype(np.int16), px).astype(np.uint8))


def posterize(img: Image, keep_bits: int) -> Image:
    """Mask each byte down to its top keep_bits bits."""
    if not 0 <= keep_bits <= 8:
        raise InvalidInputError(f"keep_bits must be in [0, 8], got {keep_bits}")
    mask = np.uint8((0xFF << (8 - keep_bits)) & 0xFF) if keep_bits else np.uint8(0)
    return Image(img.pixels & mask)


_GRID_CACHE: dict = {}


def _grid(h: int, w: int):
    if (h, w) not in _GRID_CACHE:
        _GRID_CACHE[(h, w)] = np.meshgrid(
            np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
        )
    return _GRID_CACHE[(h, w)]


def _inverse_affine(img: Image, inv_mat, shift, fill: int) -> Image:
    """Nearest-neighbor resample via an inverse affine map about the center.

    For destination point d (x, y), the source point is
    inv_mat @ (d - center - shift) + center.
    """
    h, w = img.height, img.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = _grid(h, w)
    dx = xs - cx - shift[0]
    dy = ys - cy - shift[1]
    sx = inv_mat[0][0] * dx + inv_mat[0][1] * dy + cx
    sy = inv_mat[1][0] * dx + inv_mat[1][1] * dy + cy
    sxi = np.floor(sx + 0.5).astype(np.int64)
    syi = np.floor(sy + 0.5).astype(np.int64)
    valid = (sxi >= 0) & (sxi < w) & (syi >= 0) & (syi < h)
    out = np.full(img.pixels.shape, fill, dtype=np.uint8)
    out[valid] = img.pixels[syi[valid], sxi[valid]]
    return Image(out)


def rotate(img: Image, degrees: float, fill: int = DEFAULT_FILL) -> Image:
    """Rotate about the image center; positive = counterclockwise as displayed."""
    a = np.radians(degrees)
    return _inverse_affine(img, ((np.cos(a), -np.sin(a)), (np.sin(a), np.cos(a))), (0.0, 0.0), fill)


def translate_x(img: Image, pixels: float, fill: int = DEFAULT_FILL) -> Image:
    """Shift content right by the given (possibly fractional) pixel count."""
    return _inverse_affine(img, ((1.0, 0.0), (0.0, 1.0)), (pixels, 0.0), fill)


def translate_y(img: Image, pixels: float, fill: int = DEFAULT_FILL) -> Image:
    """Shift content down by the given pixel count."""
    return _inverse_affine(img, ((1.0, 0.0), (0.0, 1.0)), (0.0, pixels), fill)


def shear_x(img: Image, factor: float, fill: int = DEFAULT_FILL) -> Image:
    """Shear horizontally about the center: x' = x + factor * (y - cy)."""
    return _inverse_affine(img, ((1.0, -factor), (0.0, 1.0)), (0.0, 0.0), fill)


def shear_y(img: Image, factor: float, fill: int = DEFAULT_FILL) -> Image:
    """Shear vertically about the center: y' = y + factor * (x - cx)."""
    return _inverse_affine(img, ((1.0, 0.0), (-factor, 1.0)), (0.0, 0.0), fill)


def _sign(rng: np.random.Generator) -> float:
    return 1.0 if int(rng.integers(0, 2)) else -1.0


def apply(
    spec: TransformSpec,
    img: Image,
    m: float,
    rng: np.random.Generator,
    fill: int = DEFAULT_FILL,
) -> Image:
    """Apply one operation at magnitude m, drawing any needed sign from rng.

    Geometric kinds use the signed parameter sign * s_max * m.  The
    enhancement family (color/contrast/brightness/sharpness) blends with
    factor 1 + (s_max - 1) * m * sign, so m = 0 leaves the image intact
    and larger m moves it further from (or past) the original.  Exactly
    one sign is drawn for those families; the remaining kinds draw
    nothing.
    """
    if not 0.0 <= m <= 1.0:
        raise InvalidInputError(f"magnitude must be in [0, 1], got {m}")
    kind = spec.kind
    if kind is TransformKind.IDENTITY:
        return img.copy()
    if kind is TransformKind.AUTO_CONTRAST:
        return autocontrast(img)
    if kind is TransformKind.EQUALIZE:
        return equalize(img)
    if kind in ENHANCEMENT_KINDS:
        factor = 1.0 + (spec.s_max - 1.0) * m * _sign(rng)
        return {
            TransformKind.COLOR: adjust_color,
            TransformKind.CONTRAST: adjust_contrast,
            TransformKind.BRIGHTNESS: adjust_brightness,
            TransformKind.SHARPNESS: adjust_sharpness,
        }[kind](img, factor)
    if kind is TransformKind.ROTATE:
        return rotate(img, _sign(rng) * spec.s_max * m, fill)
    if kind is TransformKind.TRANSLATE_X:
        return translate_x(img, _sign(rng) * spec.s_max * m, fill)
    if kind is TransformKind.TRANSLATE_Y:
        return translate_y(img, _sign(rng) * spec.s_max * m, fill)
    if kind is TransformKind.SHEAR_X:
        return shear_x(img, _sign(rng) * spec.s_max * m, fill)
    if kind is TransformKind.SHEAR_Y:
        return shear_y(img, _sign(rng) * spec.s_max * m, fill)
    if kind is TransformKind.SOLARIZE:
        return solarize(img, int(np.floor(spec.s_max * (1.0 - m) + 0.5)))
    if kind is TransformKind.POSTERIZE:
        return posterize(img, 8 - int(np.floor(4.0 * m + 0.5)))
    raise InvalidInputError(f"unknown transform kind {kind!r}")
