"""Image representation, PNG I/O, preprocessing and stochastic augmentation.

Images are numpy ``float32`` arrays of shape ``(channels, height, width)``
with 1 or 3 channels and intensities in ``[0, 1]``. An 8-bit pixel value
``v`` maps to ``v / 255`` on load and back to ``round(v * 255)`` on save.
All operations are pure given an explicit random generator, so concurrent
use on distinct images is safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage
from PIL import Image, UnidentifiedImageError


class UnsupportedFormatError(Exception):
    """File exists but is not a supported 8-bit raster image."""


class CorruptImageError(Exception):
    """File looks like a raster image but its data cannot be decoded."""


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the image contract: (C, H, W), C in {1, 3}, finite values in [0, 1].

    Returns the array unchanged so calls can be inlined; raises ValueError
    on any violation.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected (channels, height, width), got shape {img.shape}")
    c, h, w = img.shape
    if c not in (1, 3):
        raise ValueError(f"expected 1 or 3 channels, got {c}")
    if h < 1 or w < 1:
        raise ValueError(f"empty spatial extent: {h}x{w}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")
    return img


def load_image(path: str | Path) -> np.ndarray:
    """Load an 8-bit PNG (grayscale or RGB) into a float32 (C, H, W) array in [0, 1].

    Raises FileNotFoundError for a missing file, UnsupportedFormatError for
    anything that is not an 8-bit 1- or 3-channel raster, and
    CorruptImageError when decoding fails partway.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                raise UnsupportedFormatError(
                    f"{path}: mode {im.mode!r} not supported (need 8-bit L or RGB)"
                )
            try:
                arr = np.asarray(im, dtype=np.uint8)
            except (OSError, SyntaxError, ValueError) as exc:
                raise CorruptImageError(f"{path}: failed to decode image data: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a recognized raster format") from exc
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return (arr.astype(np.float32)) / np.float32(255.0)


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write an image as an 8-bit PNG, quantizing by round-half-up to round(v*255)."""
    img = validate_image(img)
    quantized = np.floor(img.astype(np.float64) * 255.0 + 0.5)
    quantized = np.clip(quantized, 0, 255).astype(np.uint8)
    if quantized.shape[0] == 1:
        pil = Image.fromarray(quantized[0], mode="L")
    else:
        pil = Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB")
    pil.save(Path(path), format="PNG")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling.

    Source coordinates for output index i are ``i * (in - 1) / (out - 1)``,
    so the four image corners map exactly onto each other and a SxS -> SxS
    resize is the identity.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"non-positive output size {out_h}x{out_w}")
    c, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_out == 1:
            src = np.array([(n_in - 1) / 2.0])
        else:
            src = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
        lo = np.clip(np.floor(src).astype(np.int64), 0, n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h, out_h)
    x0, x1, fx = axis_coords(w, out_w)
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    img64 = img.astype(np.float64)
    top = img64[:, y0, :][:, :, x0] * (1 - fx) + img64[:, y0, :][:, :, x1] * fx
    bot = img64[:, y1, :][:, :, x0] * (1 - fx) + img64[:, y1, :][:, :, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def center_crop_resize(img: np.ndarray, side: int) -> np.ndarray:
    """Crop the largest centered square, then bilinearly resize to side x side."""
    img = validate_image(img)
    if side < 8:
        raise ValueError(f"target side must be >= 8, got {side}")
    _, h, w = img.shape
    s = min(h, w)
    top = (h - s) // 2
    left = (w - s) // 2
    cropped = img[:, top : top + s, left : left + s]
    return resize_bilinear(cropped, side, side)


@dataclass(frozen=True)
class AugmentSpec:
    """Stochastic augmentation policy: flips, random crop, random rotation.

    ``crop_fraction`` is the side fraction of the random crop (1.0 disables
    cropping); the crop is resized back to the input size. Rotation angles
    are drawn uniformly from [-max_rotation_deg, +max_rotation_deg] and
    out-of-bounds pixels are filled with black.
    """

    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    max_rotation_deg: float = 0.0
    crop_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("hflip_prob", "vflip_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if not 0.0 <= self.max_rotation_deg <= 180.0:
            raise ValueError(f"max_rotation_deg must be in [0, 180], got {self.max_rotation_deg}")
        if not 0.0 < self.crop_fraction <= 1.0:
            raise ValueError(f"crop_fraction must be in (0, 1], got {self.crop_fraction}")


def augment(
    img: np.ndarray, spec: AugmentSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Apply horizontal flip, vertical flip, random crop and random rotation.

    Output size equals input size (the crop is re-resized). Deterministic
    given the generator state; with ``rng=None`` a fresh generator is seeded
    from ``spec.seed``.
    """
    img = validate_image(img)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    out = img
    if spec.hflip_prob > 0 and rng.random() < spec.hflip_prob:
        out = out[:, :, ::-1]
    if spec.vflip_prob > 0 and rng.random() < spec.vflip_prob:
        out = out[:, ::-1, :]
    if spec.crop_fraction < 1.0:
        _, h, w = out.shape
        ch = max(1, int(round(spec.crop_fraction * h)))
        cw = max(1, int(round(spec.crop_fraction * w)))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        out = resize_bilinear(out[:, top : top + ch, left : left + cw], h, w)
    if spec.max_rotation_deg > 0.0:
        angle = float(rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg))
        rotated = scipy.ndimage.rotate(
            out.astype(np.float64),
            angle,
            axes=(2, 1),
            reshape=False,
            order=1,
            mode="constant",
            cval=0.0,
        )
        out = np.clip(rotated, 0.0, 1.0).astype(np.float32)
    return np.ascontiguousarray(out, dtype=np.float32)
