"""Simulators: a parameterized degradation model (smooth illumination bias,
Gaussian blur, soft circular occlusions) and a synthetic fundus-like image
generator that emits labeled corpora for end-to-end tests at desk scale.

Both are deterministic given their seeds, and corpus generation derives one
independent stream per image so images are reproducible individually.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.ndimage

from .imaging import save_image
from .metrics import QualityLabel
from .pairing import FundusRecord, write_manifest


class GeometryError(Exception):
    """Requested synthetic geometry does not fit the canvas."""


@dataclass(frozen=True)
class DegradationSpec:
    """Knobs of the three-factor degradation: illumination x blur x occlusion.

    ``illumination_strength`` s produces a smooth multiplicative field in
    [1-s, 1+s]; ``blur_sigma`` is the Gaussian blur radius in pixels;
    ``artifact_count`` soft-edged circular occlusions are stamped at random
    positions with radii drawn from ``artifact_radius_range``.
    """

    illumination_strength: float = 0.3
    blur_sigma: float = 1.2
    artifact_count: int = 3
    artifact_radius_range: tuple[float, float] = (3.0, 7.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.illumination_strength < 0 or self.blur_sigma < 0 or self.artifact_count < 0:
            raise ValueError("degradation magnitudes must be nonnegative")
        lo, hi = self.artifact_radius_range
        if self.artifact_count > 0 and not 0 < lo <= hi:
            raise ValueError(f"empty artifact radius interval ({lo}, {hi})")

    @classmethod
    def null(cls) -> "DegradationSpec":
        return cls(illumination_strength=0.0, blur_sigma=0.0, artifact_count=0)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic fundus renderer parameters.

    The realized lesion count is ``lesion_base_count * dr_grade`` (so grade
    0 renders none); the optic disc position and radius are side fractions.
    """

    side: int = 64
    channels: int = 3
    vessel_count: int = 6
    dr_grade: int = 0
    lesion_base_count: int = 2
    disc_center: tuple[float, float] = (0.62, 0.40)
    disc_radius: float = 0.10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.side < 32:
            raise ValueError(f"side must be >= 32, got {self.side}")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.dr_grade not in (0, 1, 2, 3, 4):
            raise ValueError(f"dr_grade must be 0..4, got {self.dr_grade}")
        if self.vessel_count < 0 or self.lesion_base_count < 0:
            raise ValueError("counts must be nonnegative")
        if not 0 < self.disc_radius < 0.5:
            raise ValueError("disc_radius must be a fraction in (0, 0.5)")

    @property
    def lesion_count(self) -> int:
        return self.lesion_base_count * self.dr_grade


def _smooth_field(
    h: int, w: int, lo: float, hi: float, rng: np.random.Generator, grid: int = 4
) -> np.ndarray:
    """Low-frequency random field in [lo, hi]: coarse grid, bilinear upsample."""
    coarse = rng.uniform(lo, hi, size=(grid, grid))
    ys = np.linspace(0.0, grid - 1.0, h)
    xs = np.linspace(0.0, grid - 1.0, w)
    y0 = np.minimum(ys.astype(np.int64), grid - 2)
    x0 = np.minimum(xs.astype(np.int64), grid - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    c00 = coarse[y0][:, x0]
    c01 = coarse[y0][:, x0 + 1]
    c10 = coarse[y0 + 1][:, x0]
    c11 = coarse[y0 + 1][:, x0 + 1]
    return (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
            + c10 * fy * (1 - fx) + c11 * fy * fx)


def _stamp_soft_disc(
    canvas: np.ndarray, cy: float, cx: float, radius: float, edge: float
) -> None:
    """Max-accumulate a soft-edged disc opacity into a (H, W) canvas."""
    h, w = canvas.shape
    y0, y1 = max(0, int(cy - radius - edge - 1)), min(h, int(cy + radius + edge + 2))
    x0, x1 = max(0, int(cx - radius - edge - 1)), min(w, int(cx + radius + edge + 2))
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    alpha = np.clip((radius + edge - dist) / max(edge, 1e-9), 0.0, 1.0)
    np.maximum(canvas[y0:y1, x0:x1], alpha, out=canvas[y0:y1, x0:x1])


def degrade(
    img: np.ndarray, spec: DegradationSpec, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Apply illumination bias, then blur, then occlusions; output in [0, 1].

    The all-zero spec is the exact identity. Deterministic given the
    generator state (seeded from ``spec.seed`` when ``rng`` is omitted).
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    c, h, w = img.shape
    out = img.astype(np.float64)
    if spec.illumination_strength > 0:
        field = _smooth_field(
            h, w, 1.0 - spec.illumination_strength, 1.0 + spec.illumination_strength, rng
        )
        out = np.clip(out * field[None, :, :], 0.0, 1.0)
    if spec.blur_sigma > 0:
        out = scipy.ndimage.gaussian_filter(out, sigma=(0.0, spec.blur_sigma, spec.blur_sigma))
    for _ in range(spec.artifact_count):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        radius = rng.uniform(*spec.artifact_radius_range)
        bright = rng.random() < 0.5
        level = rng.uniform(0.75, 0.95) if bright else rng.uniform(0.02, 0.2)
        alpha = np.zeros((h, w))
        _stamp_soft_disc(alpha, cy, cx, radius, edge=max(1.5, 0.4 * radius))
        out = out * (1 - alpha[None]) + level * alpha[None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# Reference colors (RGB); grayscale rendering uses their mean.
_FUNDUS_COLOR = np.array([0.78, 0.38, 0.14])
_DISC_COLOR = np.array([0.97, 0.87, 0.55])
_VESSEL_DIM = np.array([0.45, 0.75, 0.75])  # per-channel darkening fraction
_BRIGHT_LESION = np.array([0.98, 0.92, 0.55])
_DARK_LESION = np.array([0.30, 0.06, 0.05])


def _color(vec: np.ndarray, channels: int) -> np.ndarray:
    return vec if channels == 3 else np.array([float(vec.mean())])


def synth_fundus(
    spec: SynthSpec,
    rng: np.random.Generator | None = None,
    with_mask: bool = False,
):
    """Render a fundus-like image: dark surround, bright circular field of
    view, optic disc, dark vessels radiating from the disc, and
    grade-scaled lesion blobs (alternating bright and dark).

    Lesions are placed pairwise-disjoint so they remain individually
    countable. Returns ``(image, dr_grade)``, plus the boolean lesion mask
    when ``with_mask`` is set.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    s = spec.side
    fov_c = (s / 2.0, s / 2.0)
    fov_r = 0.47 * s

    yy, xx = np.mgrid[0:s, 0:s]
    dist_fov = np.sqrt((yy - fov_c[0]) ** 2 + (xx - fov_c[1]) ** 2)
    fov_alpha = np.clip((fov_r - dist_fov) / 1.5, 0.0, 1.0)

    base = _color(_FUNDUS_COLOR, spec.channels)
    radial = 1.0 - 0.35 * np.clip(dist_fov / fov_r, 0.0, 1.2) ** 2
    texture = _smooth_field(s, s, 0.92, 1.08, rng, grid=5)
    img = np.full((spec.channels, s, s), 0.02)
    fundus = base[:, None, None] * (radial * texture)[None]
    img = img * (1 - fov_alpha[None]) + fundus * fov_alpha[None]

    # Optic disc, jittered around its configured position.
    disc_cy = spec.disc_center[0] * s + rng.uniform(-0.02, 0.02) * s
    disc_cx = spec.disc_center[1] * s + rng.uniform(-0.02, 0.02) * s
    disc_r = spec.disc_radius * s
    if dist_fov[int(np.clip(disc_cy, 0, s - 1)), int(np.clip(disc_cx, 0, s - 1))] > fov_r:
        raise GeometryError("optic disc center lies outside the field of view")
    disc_alpha = np.zeros((s, s))
    _stamp_soft_disc(disc_alpha, disc_cy, disc_cx, disc_r, edge=1.5)
    disc_col = _color(_DISC_COLOR, spec.channels)
    img = img * (1 - disc_alpha[None]) + disc_col[:, None, None] * disc_alpha[None]

    # Vessels: smooth curves growing outward from the disc.
    vessel_alpha = np.zeros((s, s))
    for _ in range(spec.vessel_count):
        theta = rng.uniform(0, 2 * np.pi)
        curvature = rng.uniform(-1.2, 1.2)
        length = rng.uniform(0.6, 1.05) * fov_r
        width0 = rng.uniform(0.035, 0.055) * s / 2.6
        steps = max(24, int(length / 0.6))
        for t in np.linspace(0.0, 1.0, steps):
            ang = theta + curvature * t
            py = disc_cy + np.sin(ang) * t * length
            px = disc_cx + np.cos(ang) * t * length
            if (py - fov_c[0]) ** 2 + (px - fov_c[1]) ** 2 > (0.99 * fov_r) ** 2:
                break
            width = width0 * (1.0 - 0.55 * t) + 0.35
            _stamp_soft_disc(vessel_alpha, py, px, width, edge=0.9)
    dim = _color(1.0 - _VESSEL_DIM, spec.channels)  # per-channel keep fraction
    img = img * (1 - vessel_alpha[None] * (1 - dim[:, None, None]))

    # Lesions: pairwise-disjoint blobs, count = lesion_base_count * grade.
    lesion_mask = np.zeros((s, s), dtype=bool)
    placed: list[tuple[float, float, float]] = []
    for k in range(spec.lesion_count):
        radius = rng.uniform(0.022, 0.042) * s
        for attempt in range(300):
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0.15, 0.82) * fov_r
            cy = fov_c[0] + np.sin(ang) * rad
            cx = fov_c[1] + np.cos(ang) * rad
            near_disc = (cy - disc_cy) ** 2 + (cx - disc_cx) ** 2 < (disc_r + radius + 2) ** 2
            clash = any(
                (cy - oy) ** 2 + (cx - ox) ** 2 < (radius + orad + 2.5) ** 2
                for oy, ox, orad in placed
            )
            if not near_disc and not clash:
                break
        else:
            raise GeometryError(
                f"could not place lesion {k + 1}/{spec.lesion_count} without overlap"
            )
        placed.append((cy, cx, radius))
        alpha = np.zeros((s, s))
        _stamp_soft_disc(alpha, cy, cx, radius, edge=1.0)
        color = _color(_BRIGHT_LESION if k % 2 == 0 else _DARK_LESION, spec.channels)
        img = img * (1 - alpha[None]) + color[:, None, None] * alpha[None]
        lesion_mask |= alpha > 0.5

    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    if with_mask:
        return img, spec.dr_grade, lesion_mask
    return img, spec.dr_grade


def build_corpus(
    n_per_grade: int,
    out_dir: str | Path,
    template: SynthSpec | None = None,
    degradation: DegradationSpec | None = None,
) -> Path:
    """Emit a labeled corpus: clean images as GOOD records, degraded copies
    as REJECT records, a pairing manifest, and a clean/degraded id sidecar.

    Layout: ``<dir>/good/*.png``, ``<dir>/reject/*.png``, ``manifest.csv``,
    ``pairs.csv``. Returns the manifest path.
    """
    if n_per_grade < 1:
        raise ValueError("n_per_grade must be >= 1")
    template = template or SynthSpec()
    degradation = degradation or DegradationSpec()
    out_dir = Path(out_dir)
    (out_dir / "good").mkdir(parents=True, exist_ok=True)
    (out_dir / "reject").mkdir(parents=True, exist_ok=True)

    records: list[FundusRecord] = []
    pairs: list[tuple[str, str]] = []
    for grade in range(5):
        for i in range(n_per_grade):
            render_rng = np.random.default_rng(
                np.random.SeedSequence([template.seed, grade, i, 0])
            )
            degrade_rng = np.random.default_rng(
                np.random.SeedSequence([template.seed, grade, i, 1])
            )
            clean, _ = synth_fundus(replace(template, dr_grade=grade), render_rng)
            clean_id = f"g{grade}_{i:04d}"
            degraded_id = clean_id + "d"
            clean_path = out_dir / "good" / f"{clean_id}.png"
            degraded_path = out_dir / "reject" / f"{degraded_id}.png"
            save_image(clean, clean_path)
            save_image(degrade(clean, degradation, degrade_rng), degraded_path)
            records.append(FundusRecord(clean_id, clean_path, QualityLabel.GOOD, grade))
            records.append(FundusRecord(degraded_id, degraded_path, QualityLabel.REJECT, grade))
            pairs.append((clean_id, degraded_id))

    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest_path, records)
    with open(out_dir / "pairs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["clean_id", "degraded_id"])
        writer.writerows(pairs)
    return manifest_path
