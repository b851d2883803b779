"""Quality and agreement metrics: PSNR, SSIM, MS-SSIM, Cohen's kappa, AUROC,
and the converted ratio of a quality-labeled image set.

Image metrics take (C, H, W) numpy arrays in [0, 1] and compute in double
precision. All functions are pure.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .similarity import MsSsimParams, SsimParams, adapted_ms_params, ms_ssim_t, ssim_t


class QualityLabel(enum.Enum):
    """Closed three-level image quality grade."""

    GOOD = "good"
    USABLE = "usable"
    REJECT = "reject"

    @classmethod
    def parse(cls, text: str) -> "QualityLabel":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown quality label {text!r} (expected good, usable or reject)"
            ) from None


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range.

    Returns ``math.inf`` when the images are identical (zero MSE).
    """
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _to_batch(img: np.ndarray) -> torch.Tensor:
    if img.ndim != 3:
        raise ValueError(f"expected (C, H, W), got shape {img.shape}")
    return torch.from_numpy(np.ascontiguousarray(img, dtype=np.float64)).unsqueeze(0)


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams | None = None) -> float:
    """Mean windowed SSIM over all valid window positions, channels averaged."""
    _check_pair(a, b)
    return float(ssim_t(_to_batch(a), _to_batch(b), params or SsimParams()))


def ms_ssim(a: np.ndarray, b: np.ndarray, params: MsSsimParams | None = None) -> float:
    """Multi-scale SSIM; with ``params=None`` the scale count adapts to the image side."""
    _check_pair(a, b)
    if params is None:
        params = adapted_ms_params(min(a.shape[1], a.shape[2]))
    return float(ms_ssim_t(_to_batch(a), _to_batch(b), params))


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion matrix entries must be nonnegative")
        if counts.sum() < 1:
            raise ValueError("confusion matrix must contain at least one observation")
        object.__setattr__(self, "counts", counts.astype(np.float64))

    @classmethod
    def from_predictions(
        cls, true: list[int] | np.ndarray, pred: list[int] | np.ndarray, n_classes: int
    ) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        for t, p in zip(true, pred, strict=True):
            counts[int(t), int(p)] += 1
        return cls(counts)

    def write_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.counts, fmt="%.0f", delimiter=",")

    @classmethod
    def read_csv(cls, path: str | Path) -> "ConfusionMatrix":
        return cls(np.atleast_2d(np.loadtxt(path, delimiter=",")))


def cohens_kappa(matrix: ConfusionMatrix | np.ndarray) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e) from a confusion matrix."""
    if not isinstance(matrix, ConfusionMatrix):
        matrix = ConfusionMatrix(matrix)
    counts = matrix.counts
    total = counts.sum()
    observed = np.trace(counts) / total
    marg_true = counts.sum(axis=1) / total
    marg_pred = counts.sum(axis=0) / total
    expected = float(np.dot(marg_true, marg_pred))
    if expected == 1.0:
        raise ValueError("degenerate confusion matrix: chance agreement is 1")
    return float((observed - expected) / (1.0 - expected))


@dataclass(frozen=True)
class ScoredLabels:
    """Binary-labeled scores for ranking metrics: list of (score, is_positive)."""

    items: tuple[tuple[float, bool], ...]

    def __post_init__(self) -> None:
        items = tuple((float(s), bool(p)) for s, p in self.items)
        n_pos = sum(1 for _, p in items if p)
        if n_pos == 0 or n_pos == len(items):
            raise ValueError("need at least one positive and one negative item")
        object.__setattr__(self, "items", items)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["score", "positive"])
            for score, positive in self.items:
                writer.writerow([repr(score), int(positive)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "ScoredLabels":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple((float(r["score"]), bool(int(r["positive"]))) for r in rows))


def auroc(scored: ScoredLabels | list[tuple[float, bool]]) -> float:
    """Probability a random positive outscores a random negative; ties count 0.5.

    Computed exactly from midranks (the Mann-Whitney statistic), not by
    integrating an ROC curve.
    """
    items = scored.items if isinstance(scored, ScoredLabels) else ScoredLabels(tuple(scored)).items
    scores = np.array([s for s, _ in items])
    positives = np.array([p for _, p in items], dtype=bool)
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    n_pos = int(positives.sum())
    n_neg = len(scores) - n_pos
    u = float(ranks[positives].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def converted_ratio(labels: list[QualityLabel]) -> float:
    """Fraction of labels graded GOOD."""
    if not labels:
        raise ValueError("empty label list")
    return sum(1 for lab in labels if lab is QualityLabel.GOOD) / len(labels)
