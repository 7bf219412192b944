"""
Transform registry: the 14-operation augmentation space, each operation driven by a
continuous magnitude m in [0, 1] and applied to uint8 images of shape (H, W, C).
"""
import math
import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from entaug.exceptions import InvalidInputError

DEFAULT_FILL = 128
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


class TransformKind(str, Enum):
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


ENHANCEMENTS = frozenset({
    TransformKind.COLOR, TransformKind.CONTRAST, TransformKind.BRIGHTNESS, TransformKind.SHARPNESS,
})


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind
    s_max: Optional[float]
    symmetric: bool
    description: str = ""

    @property
    def uses_magnitude(self) -> bool:
        return self.s_max is not None

    @property
    def draws_sign(self) -> bool:
        # enhancement factors swing around 1 in both directions as well
        return self.symmetric or self.kind in ENHANCEMENTS

    def strength(self, m: float, sign: int = 1) -> float:
        """Kind-specific parameter actually handed to the pixel operation."""
        if self.s_max is None:
            return 0.0
        if self.kind in ENHANCEMENTS:
            return 1.0 + (self.s_max - 1.0) * m * sign
        if self.kind == TransformKind.SOLARIZE:
            return float(round(self.s_max * (1.0 - m)))
        if self.kind == TransformKind.POSTERIZE:
            return float(8 - round(self.s_max * m))
        return sign * self.s_max * m


AUGMENTATION_SPACE: Tuple[TransformSpec, ...] = (
    TransformSpec(TransformKind.IDENTITY, None, False, "returns the image unchanged"),
    TransformSpec(TransformKind.AUTO_CONTRAST, None, False, "stretches each channel to [0, 255]"),
    TransformSpec(TransformKind.EQUALIZE, None, False, "per-channel histogram equalization"),
    TransformSpec(TransformKind.COLOR, 1.9, False, "blend with the luma image"),
    TransformSpec(TransformKind.CONTRAST, 1.9, False, "blend with the mean-luma image"),
    TransformSpec(TransformKind.BRIGHTNESS, 1.9, False, "blend with black"),
    TransformSpec(TransformKind.SHARPNESS, 1.9, False, "blend with the smoothed image"),
    TransformSpec(TransformKind.ROTATE, 30.0, True, "rotation in degrees about the center"),
    TransformSpec(TransformKind.TRANSLATE_X, 10.0, True, "horizontal shift in pixels"),
    TransformSpec(TransformKind.TRANSLATE_Y, 10.0, True, "vertical shift in pixels"),
    TransformSpec(TransformKind.SHEAR_X, 0.3, True, "horizontal shear factor"),
    TransformSpec(TransformKind.SHEAR_Y, 0.3, True, "vertical shear factor"),
    TransformSpec(TransformKind.SOLARIZE, 256.0, False, "inverts pixels above a threshold"),
    TransformSpec(TransformKind.POSTERIZE, 4.0, False, "drops low-order bits"),
)

TRANSFORM_REGISTRY: Dict[TransformKind, TransformSpec] = {spec.kind: spec for spec in AUGMENTATION_SPACE}
ALL_KINDS: Tuple[TransformKind, ...] = tuple(spec.kind for spec in AUGMENTATION_SPACE)


class AugRng:
    """Deterministic random stream keyed by (global_seed, epoch, sample_index)."""

    def __init__(self, global_seed: int, epoch: int, sample_index: int):
        if min(global_seed, epoch, sample_index) < 0:
            raise InvalidInputError("seed triple entries must be non-negative")
        self.seed_triple = (int(global_seed), int(epoch), int(sample_index))
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(self.seed_triple))))

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))

    def uniform(self) -> float:
        return float(self._gen.random())

    def coin(self, p: float = 0.5) -> bool:
        return self._gen.random() < p

    def sign(self) -> int:
        return 1 if self.coin() else -1


def sample_transform(rng: AugRng, space: Optional[Sequence[TransformKind]] = None) -> TransformKind:
    kinds = tuple(space) if space else ALL_KINDS
    return kinds[rng.integers(0, len(kinds))]


def validate_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise InvalidInputError("images must be uint8 numpy arrays")
    if img.ndim != 3 or img.shape[2] not in (1, 3) or img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError(f"images must have shape (H, W, 1|3), got {img.shape}")
    return img


def _to_byte(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


# ---- magnitude-free operations ----

def auto_contrast(img: np.ndarray) -> np.ndarray:
    out = img.copy()
    for c in range(img.shape[2]):
        ch = img[..., c].astype(np.float64)
        lo, hi = ch.min(), ch.max()
        if hi > lo:
            out[..., c] = _to_byte((ch - lo) * (255.0 / (hi - lo)))
    return out


def equalize(img: np.ndarray) -> np.ndarray:
    out = img.copy()
    for c in range(img.shape[2]):
        ch = img[..., c]
        hist = np.bincount(ch.ravel(), minlength=256)
        used = hist[hist > 0]
        step = (int(used.sum()) - int(used[-1])) // 255
        if step == 0:
            continue
        before = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.clip((before + step // 2) // step, 0, 255).astype(np.uint8)
        out[..., c] = lut[ch]
    return out


# ---- enhancement family: out = degenerate + factor * (img - degenerate) ----

def luma(img: np.ndarray) -> np.ndarray:
    if img.shape[2] == 1:
        return img[..., 0].copy()
    return _to_byte(img.astype(np.float64) @ LUMA_WEIGHTS)


def blend(img: np.ndarray, degenerate: np.ndarray, factor: float) -> np.ndarray:
    d = degenerate.astype(np.float64)
    return _to_byte(d + factor * (img.astype(np.float64) - d))


def color(img: np.ndarray, factor: float) -> np.ndarray:
    gray = np.repeat(luma(img)[..., None], img.shape[2], axis=2)
    return blend(img, gray, factor)


def contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = math.floor(float(luma(img).mean()) + 0.5)
    return blend(img, np.full_like(img, mean), factor)


def brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return blend(img, np.zeros_like(img), factor)


def smooth(img: np.ndarray) -> np.ndarray:
    """3x3 smoothing filter; the one-pixel border keeps its original values."""
    out = img.copy()
    if img.shape[0] < 3 or img.shape[1] < 3:
        return out
    filtered = ndimage.correlate(img.astype(np.float64), SMOOTH_KERNEL[..., None], mode="nearest")
    out[1:-1, 1:-1] = _to_byte(filtered[1:-1, 1:-1])
    return out


def sharpness(img: np.ndarray, factor: float) -> np.ndarray:
    return blend(img, smooth(img), factor)


# ---- geometric family: inverse affine mapping, nearest-neighbour sampling ----

def warp(img: np.ndarray, source_of: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]],
         fill: int = DEFAULT_FILL) -> np.ndarray:
    """Fill each output pixel from source_of(x, y); out-of-bounds sources take `fill`."""
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx, sy = source_of(xs, ys)
    ix = np.floor(sx + 0.5).astype(np.int64)
    iy = np.floor(sy + 0.5).astype(np.int64)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.full_like(img, fill)
    out[inside] = img[iy[inside], ix[inside]]
    return out


def rotate(img: np.ndarray, degrees: float, fill: int = DEFAULT_FILL) -> np.ndarray:
    """Counter-clockwise rotation (positive degrees) about ((W-1)/2, (H-1)/2)."""
    theta = math.radians(degrees)
    cos, sin = math.cos(theta), math.sin(theta)
    cx, cy = (img.shape[1] - 1) / 2.0, (img.shape[0] - 1) / 2.0

    def source_of(xs, ys):
        dx, dy = xs - cx, ys - cy
        return cx + cos * dx - sin * dy, cy + sin * dx + cos * dy

    return warp(img, source_of, fill)


def translate_x(img: np.ndarray, pixels: float, fill: int = DEFAULT_FILL) -> np.ndarray:
    return warp(img, lambda xs, ys: (xs - pixels, ys), fill)


def translate_y(img: np.ndarray, pixels: float, fill: int = DEFAULT_FILL) -> np.ndarray:
    return warp(img, lambda xs, ys: (xs, ys - pixels), fill)


def shear_x(img: np.ndarray, factor: float, fill: int = DEFAULT_FILL) -> np.ndarray:
    return warp(img, lambda xs, ys: (xs + factor * ys, ys), fill)


def shear_y(img: np.ndarray, factor: float, fill: int = DEFAULT_FILL) -> np.ndarray:
    return warp(img, lambda xs, ys: (xs, ys + factor * xs), fill)


# ---- bit-level family ----

def solarize(img: np.ndarray, threshold: int) -> np.ndarray:
    return np.where(img >= threshold, 255 - img, img).astype(np.uint8)


def posterize(img: np.ndarray, bits: int) -> np.ndarray:
    mask = (0xFF << (8 - int(bits))) & 0xFF
    return img & np.uint8(mask)


_PIXEL_OPS: Dict[TransformKind, Callable[[np.ndarray, float, int], np.ndarray]] = {
    TransformKind.IDENTITY: lambda img, s, fill: img.copy(),
    TransformKind.AUTO_CONTRAST: lambda img, s, fill: auto_contrast(img),
    TransformKind.EQUALIZE: lambda img, s, fill: equalize(img),
    TransformKind.COLOR: lambda img, s, fill: color(img, s),
    TransformKind.CONTRAST: lambda img, s, fill: contrast(img, s),
    TransformKind.BRIGHTNESS: lambda img, s, fill: brightness(img, s),
    TransformKind.SHARPNESS: lambda img, s, fill: sharpness(img, s),
    TransformKind.ROTATE: rotate,
    TransformKind.TRANSLATE_X: translate_x,
    TransformKind.TRANSLATE_Y: translate_y,
    TransformKind.SHEAR_X: shear_x,
    TransformKind.SHEAR_Y: shear_y,
    TransformKind.SOLARIZE: lambda img, s, fill: solarize(img, int(s)),
    TransformKind.POSTERIZE: lambda img, s, fill: posterize(img, int(s)),
}


def apply_signed(spec: TransformSpec, img: np.ndarray, m: float, sign: int = 1,
                 fill: int = DEFAULT_FILL) -> np.ndarray:
    """Apply `spec` at magnitude m with an explicit direction sign."""
    validate_image(img)
    if not (0.0 <= m <= 1.0):
        raise InvalidInputError(f"magnitude must lie in [0, 1], got {m}")
    if sign not in (-1, 1):
        raise InvalidInputError("sign must be -1 or +1")
    return _PIXEL_OPS[spec.kind](img, spec.strength(m, sign), fill)


def apply(spec: TransformSpec, img: np.ndarray, m: float, rng: AugRng,
          fill: int = DEFAULT_FILL) -> np.ndarray:
    """Apply `spec` at magnitude m; the direction sign, when used, comes from rng."""
    sign = rng.sign() if spec.draws_sign else 1
    return apply_signed(spec, img, m, sign, fill)


# ---- preview dump ----

def preview_filename(split: str, index: int, kind: TransformKind, m: float) -> str:
    return f"{split}_{index}_{kind.value}_{int(round(m * 1000))}.ppm"


def save_ppm(img: np.ndarray, path: str):
    """Write a binary (P6) PPM; single-channel images are replicated to RGB."""
    validate_image(img)
    rgb = np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    PILImage.fromarray(np.ascontiguousarray(rgb), mode="RGB").save(path, format="PPM")
