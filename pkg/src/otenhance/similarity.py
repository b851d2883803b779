"""Differentiable SSIM and multi-scale SSIM on torch tensors.

These functions operate on batched ``(N, C, H, W)`` tensors and are
differentiable with respect to both inputs, so the multi-scale index can
serve directly as a structure-preservation loss. The numpy-facing metric
wrappers live in :mod:`otenhance.metrics`.

Conventions: Gaussian-weighted statistics over all fully valid window
positions (no padding); per-channel scores averaged at the end; dynamic
range defaults to 1 for intensities in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

# Scale weights from the canonical five-level multi-scale SSIM calibration.
CANONICAL_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

# Contrast-structure terms are clamped here before weighting; keeps the
# product differentiable when a term crosses zero on anti-correlated inputs.
CS_FLOOR = 1e-6


@dataclass(frozen=True)
class SsimParams:
    """Window and stabilization constants for single-scale SSIM."""

    window_side: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self) -> None:
        if self.window_side < 3 or self.window_side % 2 == 0:
            raise ValueError(f"window_side must be odd and >= 3, got {self.window_side}")
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be positive")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")


@dataclass(frozen=True)
class MsSsimParams:
    """Multi-scale configuration: base window plus per-scale weights.

    Weights are renormalized to sum to 1. The number of scales must let the
    coarsest dyadic downsampling still admit the window; use
    :func:`adapted_ms_params` to pick the largest valid scale count for a
    given image side.
    """

    base: SsimParams = field(default_factory=SsimParams)
    scale_weights: tuple[float, ...] = CANONICAL_SCALE_WEIGHTS

    def __post_init__(self) -> None:
        n = len(self.scale_weights)
        if not 1 <= n <= 5:
            raise ValueError(f"need between 1 and 5 scales, got {n}")
        if any(w <= 0 for w in self.scale_weights):
            raise ValueError("scale weights must be positive")
        total = float(sum(self.scale_weights))
        object.__setattr__(
            self, "scale_weights", tuple(float(w) / total for w in self.scale_weights)
        )

    @property
    def levels(self) -> int:
        return len(self.scale_weights)

    def min_side(self) -> int:
        """Smallest image side this configuration can evaluate."""
        return self.base.window_side * 2 ** (self.levels - 1)


def adapted_ms_params(side: int, base: SsimParams | None = None) -> MsSsimParams:
    """Largest-scale-count MsSsimParams valid for images of the given side.

    Truncates the canonical five weights to the feasible count and
    renormalizes; small images end up with fewer scales.
    """
    base = base or SsimParams()
    levels = 1
    while levels < 5 and side // (2**levels) >= base.window_side:
        levels += 1
    return MsSsimParams(base=base, scale_weights=CANONICAL_SCALE_WEIGHTS[:levels])


def gaussian_window(side: int, sigma: float, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Normalized 1D Gaussian window of odd length ``side``."""
    half = (side - 1) / 2.0
    coords = torch.arange(side, dtype=dtype) - half
    g = torch.exp(-(coords**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _window_means(x: torch.Tensor, kernel_1d: torch.Tensor) -> torch.Tensor:
    # Separable valid-mode Gaussian filtering, grouped per channel.
    c = x.size(1)
    kh = kernel_1d.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    kv = kernel_1d.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    return F.conv2d(F.conv2d(x, kh, groups=c), kv, groups=c)


def ssim_parts(
    x: torch.Tensor, y: torch.Tensor, params: SsimParams
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel luminance*cs score and cs-only score, shape (N, C) each.

    Both terms are means over all valid window positions.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() != 4:
        raise ValueError(f"expected (N, C, H, W), got {tuple(x.shape)}")
    if min(x.size(-1), x.size(-2)) < params.window_side:
        raise ValueError(
            f"image {x.size(-2)}x{x.size(-1)} smaller than window {params.window_side}"
        )
    kernel = gaussian_window(params.window_side, params.gaussian_sigma, dtype=x.dtype)
    kernel = kernel.to(x.device)
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2

    mu_x = _window_means(x, kernel)
    mu_y = _window_means(y, kernel)
    var_x = _window_means(x * x, kernel) - mu_x * mu_x
    var_y = _window_means(y * y, kernel) - mu_y * mu_y
    cov = _window_means(x * y, kernel) - mu_x * mu_y

    luminance = (2 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2 * cov + c2) / (var_x + var_y + c2)
    full = (luminance * cs).mean(dim=(2, 3))
    return full, cs.mean(dim=(2, 3))


def ssim_t(x: torch.Tensor, y: torch.Tensor, params: SsimParams | None = None) -> torch.Tensor:
    """Single-scale SSIM per batch element (channels averaged), shape (N,)."""
    full, _ = ssim_parts(x, y, params or SsimParams())
    return full.mean(dim=1)


def _downsample_2x(x: torch.Tensor) -> torch.Tensor:
    # Replicate-pad odd sides, then 2x2 mean pooling (box low-pass + decimate).
    pad_h = x.size(-2) % 2
    pad_w = x.size(-1) % 2
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="replicate")
    return F.avg_pool2d(x, kernel_size=2)


def ms_ssim_t(
    x: torch.Tensor, y: torch.Tensor, params: MsSsimParams | None = None
) -> torch.Tensor:
    """Multi-scale SSIM per batch element (channels averaged), shape (N,).

    Contrast-structure terms from every scale are raised to their weights
    and multiplied per channel; the luminance term enters only at the
    coarsest scale, and channels are averaged after the product.
    """
    params = params or MsSsimParams()
    if min(x.size(-1), x.size(-2)) < params.min_side():
        raise ValueError(
            f"image {x.size(-2)}x{x.size(-1)} too small for {params.levels} scales "
            f"with window {params.base.window_side} (need >= {params.min_side()})"
        )
    if params.levels == 1:
        # Weight is exactly 1 after normalization; no fractional power, so
        # no clamping: this coincides with plain SSIM even on negatives.
        return ssim_t(x, y, params.base)
    result = None
    for level, weight in enumerate(params.scale_weights):
        last = level == params.levels - 1
        full, cs = ssim_parts(x, y, params.base)
        term = (full if last else cs).clamp(min=CS_FLOOR) ** weight
        result = term if result is None else result * term
        if not last:
            x = _downsample_2x(x)
            y = _downsample_2x(y)
    return result.mean(dim=1)
