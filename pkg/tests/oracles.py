"""Independent brute-force reference implementations used to cross-check the
library. Everything here recomputes results from first principles (explicit
window loops, exhaustive pair counting, permutation search, finite
differences) without sharing code with the package internals.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import torch

CS_FLOOR = 1e-6  # mirrors the documented clamp in the multi-scale definition


def psnr_loop(a: np.ndarray, b: np.ndarray) -> float:
    """Elementwise double-precision accumulation of the mean squared error."""
    terms = []
    for av, bv in zip(a.ravel().tolist(), b.ravel().tolist()):
        diff = float(av) - float(bv)
        terms.append(diff * diff)
    mse = math.fsum(terms) / len(terms)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_kernel_2d(side: int, sigma: float) -> np.ndarray:
    half = (side - 1) / 2.0
    coords = np.arange(side, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim_windows(
    a: np.ndarray,
    b: np.ndarray,
    window_side: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    dynamic_range: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct per-window evaluation; returns per-channel (full, cs) scores."""
    kernel = gaussian_kernel_2d(window_side, sigma)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    channels, h, w = a.shape
    fulls = np.zeros(channels)
    css = np.zeros(channels)
    for ch in range(channels):
        x = a[ch].astype(np.float64)
        y = b[ch].astype(np.float64)
        full_vals = []
        cs_vals = []
        for i in range(h - window_side + 1):
            for j in range(w - window_side + 1):
                wx = x[i : i + window_side, j : j + window_side]
                wy = y[i : i + window_side, j : j + window_side]
                mx = float((kernel * wx).sum())
                my = float((kernel * wy).sum())
                vx = float((kernel * wx * wx).sum()) - mx * mx
                vy = float((kernel * wy * wy).sum()) - my * my
                cov = float((kernel * wx * wy).sum()) - mx * my
                lum = (2 * mx * my + c1) / (mx * mx + my * my + c1)
                cs = (2 * cov + c2) / (vx + vy + c2)
                full_vals.append(lum * cs)
                cs_vals.append(cs)
        fulls[ch] = np.mean(full_vals)
        css[ch] = np.mean(cs_vals)
    return fulls, css


def ssim_reference(a: np.ndarray, b: np.ndarray, **kwargs) -> float:
    fulls, _ = ssim_windows(a, b, **kwargs)
    return float(fulls.mean())


def downsample_reference(img: np.ndarray) -> np.ndarray:
    """Replicate-pad odd sides on the right/bottom, then 2x2 mean pooling."""
    c, h, w = img.shape
    if h % 2:
        img = np.concatenate([img, img[:, -1:, :]], axis=1)
    if w % 2:
        img = np.concatenate([img, img[:, :, -1:]], axis=2)
    c, h, w = img.shape
    return img.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def ms_ssim_reference(
    a: np.ndarray,
    b: np.ndarray,
    scale_weights: tuple[float, ...],
    window_side: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    dynamic_range: float = 1.0,
) -> float:
    weights = np.asarray(scale_weights, dtype=np.float64)
    weights = weights / weights.sum()
    levels = len(weights)
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    per_channel = np.ones(a.shape[0])
    for level in range(levels):
        fulls, css = ssim_windows(
            x, y, window_side=window_side, sigma=sigma, k1=k1, k2=k2,
            dynamic_range=dynamic_range,
        )
        term = fulls if level == levels - 1 else css
        if levels > 1:  # fractional exponents: clamp mirrors the definition
            term = np.maximum(term, CS_FLOOR)
        per_channel = per_channel * term ** weights[level]
        if level != levels - 1:
            x = downsample_reference(x)
            y = downsample_reference(y)
    return float(per_channel.mean())


def kappa_reference(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    p_o = sum(counts[i, i] for i in range(counts.shape[0])) / total
    p_e = sum(
        (counts[i, :].sum() / total) * (counts[:, i].sum() / total)
        for i in range(counts.shape[0])
    )
    return (p_o - p_e) / (1.0 - p_e)


def auroc_pairs(items: list[tuple[float, bool]]) -> float:
    """Exhaustive counting over all (positive, negative) pairs."""
    pos = [s for s, p in items if p]
    neg = [s for s, p in items if not p]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def w1_quantile_1d(a: np.ndarray, b: np.ndarray) -> float:
    """Empirical 1D Wasserstein-1: integral of |inverse CDF difference|.

    For equal sample counts this is the mean absolute difference of the
    sorted samples; unequal counts use a merged quantile grid.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if len(a) == len(b):
        return float(np.abs(a - b).mean())
    grid = np.union1d(np.arange(1, len(a) + 1) / len(a), np.arange(1, len(b) + 1) / len(b))
    inner = (grid[:-1] + grid[1:]) / 2.0
    widths = np.diff(np.concatenate([[0.0], grid]))
    qa = a[np.minimum((inner * len(a)).astype(int), len(a) - 1)]
    qb = b[np.minimum((inner * len(b)).astype(int), len(b) - 1)]
    qa = np.concatenate([[a[0]], qa])
    qb = np.concatenate([[b[0]], qb])
    return float((np.abs(qa - qb) * widths).sum())


def monge_bruteforce(src: np.ndarray, tgt: np.ndarray, cost: str) -> float:
    """Minimum mean assignment cost over all permutations (n <= 9)."""
    src = np.asarray(src, dtype=np.float64).ravel()
    tgt = np.asarray(tgt, dtype=np.float64).ravel()
    best = math.inf
    for perm in itertools.permutations(range(len(tgt))):
        diffs = np.abs(src - tgt[list(perm)])
        value = float((diffs if cost == "absolute" else diffs**2).mean())
        best = min(best, value)
    return best


def _scalar(value) -> float:
    if isinstance(value, torch.Tensor):
        return float(value.detach())
    return float(value)


def central_diff_params(
    func, params: list[torch.Tensor], step: float = 1e-5
) -> list[torch.Tensor]:
    """Central finite differences of a scalar function w.r.t. each tensor entry.

    Only the perturbation bypasses autograd, so ``func`` may itself rely on
    gradient machinery (e.g. penalties built from input gradients).
    """
    grads = []
    for tensor in params:
        grad = torch.zeros_like(tensor)
        flat = tensor.data.view(-1)
        gflat = grad.view(-1)
        for idx in range(flat.numel()):
            original = float(flat[idx])
            flat[idx] = original + step
            hi = _scalar(func())
            flat[idx] = original - step
            lo = _scalar(func())
            flat[idx] = original
            gflat[idx] = (hi - lo) / (2 * step)
        grads.append(grad)
    return grads


def relative_error(approx: torch.Tensor, exact: torch.Tensor) -> float:
    num = float((approx - exact).norm())
    den = float(exact.norm()) + 1e-12
    return num / den


def total_variation(img: np.ndarray) -> float:
    """Direct-differencing anisotropic total variation."""
    x = img.astype(np.float64)
    return float(np.abs(np.diff(x, axis=1)).sum() + np.abs(np.diff(x, axis=2)).sum())
