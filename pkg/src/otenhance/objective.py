"""Training objectives: structure-preserving transport cost, Wasserstein-1
dual estimate, gradient penalty, and their Lagrangian combination.

The generator minimizes ``transport_cost + weight * W1(target, generated)``;
the critic minimizes the negated dual estimate plus a gradient penalty that
softly enforces its 1-Lipschitz constraint. A 1D closed-form transport
solver and point-cloud containers are included as test oracles for the
adversarial estimates.

Batches are torch tensors: images as (N, C, H, W), point clouds as (N, D).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple

import numpy as np
import torch

from .similarity import MsSsimParams, adapted_ms_params, ms_ssim_t

COST_KINDS = ("ms_ssim_cost", "squared_distance")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Hyperparameters of the relaxed transport objective.

    ``divergence_weight`` trades structure preservation against matching
    the target distribution; ``gp_coefficient`` scales the critic's
    gradient penalty; ``critic_steps`` is the number of critic updates per
    generator update.
    """

    divergence_weight: float = 40.0
    gp_coefficient: float = 10.0
    critic_steps: int = 5
    cost_kind: str = "ms_ssim_cost"

    def __post_init__(self) -> None:
        if self.divergence_weight < 0:
            raise ValueError("divergence_weight must be >= 0")
        if self.gp_coefficient < 0:
            raise ValueError("gp_coefficient must be >= 0")
        if self.critic_steps < 1:
            raise ValueError("critic_steps must be >= 1")
        if self.cost_kind not in COST_KINDS:
            raise ValueError(f"cost_kind must be one of {COST_KINDS}, got {self.cost_kind!r}")


@dataclass
class LossBreakdown:
    """One training step's loss terms. ``generator_total`` always equals
    ``transport_cost + divergence_weight * w1_estimate`` by construction."""

    transport_cost: float
    w1_estimate: float
    gp_term: float
    generator_total: float
    critic_total: float

    LOG_COLUMNS = ("epoch", "step", "transport_cost", "w1_estimate", "gp_term",
                   "generator_total", "critic_total")


def append_loss_log(path: str | Path, epoch: int, step: int, loss: LossBreakdown) -> None:
    """Append one CSV row to the training log, writing the header if new."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(LossBreakdown.LOG_COLUMNS)
        writer.writerow(
            [epoch, step, repr(loss.transport_cost), repr(loss.w1_estimate),
             repr(loss.gp_term), repr(loss.generator_total), repr(loss.critic_total)]
        )


def _check_batches(y: torch.Tensor, gy: torch.Tensor) -> None:
    if y.shape != gy.shape:
        raise ValueError(f"batch shape mismatch: {tuple(y.shape)} vs {tuple(gy.shape)}")
    if y.size(0) == 0:
        raise ValueError("empty batch")


def transport_cost(
    y: torch.Tensor,
    gy: torch.Tensor,
    cfg: ObjectiveConfig,
    ms_params: MsSsimParams | None = None,
) -> torch.Tensor:
    """Mean per-pair transport cost between sources and their images.

    ``ms_ssim_cost``: 1 - MS-SSIM per pair (image batches); the scale count
    adapts to the image side when ``ms_params`` is not given.
    ``squared_distance``: squared Euclidean distance per pair (point clouds).
    Differentiable with respect to ``gy``.
    """
    _check_batches(y, gy)
    if cfg.cost_kind == "ms_ssim_cost":
        if y.dim() != 4:
            raise ValueError(f"ms_ssim_cost expects image batches, got shape {tuple(y.shape)}")
        params = ms_params or adapted_ms_params(min(y.size(-1), y.size(-2)))
        return (1.0 - ms_ssim_t(y, gy, params)).mean()
    return ((y - gy) ** 2).flatten(1).sum(dim=1).mean()


def w1_dual_estimate(
    critic: Callable[[torch.Tensor], torch.Tensor],
    x_batch: torch.Tensor,
    gy_batch: torch.Tensor,
) -> torch.Tensor:
    """Kantorovich-Rubinstein dual gap: mean critic score on real samples
    minus mean critic score on generated samples."""
    if x_batch.size(0) == 0 or gy_batch.size(0) == 0:
        raise ValueError("empty batch")
    return critic(x_batch).mean() - critic(gy_batch).mean()


def gradient_penalty(
    critic: Callable[[torch.Tensor], torch.Tensor],
    x_batch: torch.Tensor,
    gy_batch: torch.Tensor,
    gp_coefficient: float,
    rng: torch.Generator | None = None,
) -> torch.Tensor:
    """Two-sided unit-norm gradient penalty at random interpolates.

    Draws one mixing coefficient per sample, evaluates the critic's exact
    input gradient at the interpolate, and penalizes squared deviation of
    its norm from 1. The result stays connected to the critic's parameters
    (the inner gradient is taken with ``create_graph=True``).
    """
    _check_batches(x_batch, gy_batch)
    eps_shape = (x_batch.size(0),) + (1,) * (x_batch.dim() - 1)
    eps = torch.rand(eps_shape, generator=rng, dtype=x_batch.dtype, device=x_batch.device)
    interp = (eps * x_batch + (1.0 - eps) * gy_batch).detach().requires_grad_(True)
    scores = critic(interp)
    grads = torch.autograd.grad(scores.sum(), interp, create_graph=True)[0]
    norms = torch.sqrt((grads.flatten(1) ** 2).sum(dim=1) + 1e-12)
    return gp_coefficient * ((norms - 1.0) ** 2).mean()


def generator_objective(
    y: torch.Tensor,
    gy: torch.Tensor,
    critic: Callable[[torch.Tensor], torch.Tensor],
    cfg: ObjectiveConfig,
    ms_params: MsSsimParams | None = None,
    x_batch: torch.Tensor | None = None,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Generator loss and its reported breakdown.

    Returns the differentiable loss (gradient flows only through ``gy``;
    the real-sample critic mean is constant in the generator) and a float
    breakdown whose ``w1_estimate`` includes the real-sample term when
    ``x_batch`` is provided.
    """
    cost = transport_cost(y, gy, cfg, ms_params)
    fake_score = critic(gy).mean()
    real_score = (
        critic(x_batch).mean().detach()
        if x_batch is not None
        else torch.zeros((), dtype=gy.dtype)
    )
    loss = cost + cfg.divergence_weight * (-fake_score)
    w1 = float(real_score) - float(fake_score.detach())
    cost_value = float(cost.detach())
    breakdown = LossBreakdown(
        transport_cost=cost_value,
        w1_estimate=w1,
        gp_term=0.0,
        generator_total=cost_value + cfg.divergence_weight * w1,
        critic_total=-w1,
    )
    return loss, breakdown


def critic_objective(
    critic: Callable[[torch.Tensor], torch.Tensor],
    x_batch: torch.Tensor,
    gy_batch: torch.Tensor,
    cfg: ObjectiveConfig,
    rng: torch.Generator | None = None,
) -> tuple[torch.Tensor, float, float]:
    """Critic loss: negated dual estimate plus gradient penalty.

    Descending this ascends the Wasserstein-1 dual. Returns the
    differentiable loss along with float (w1_estimate, gp_term) for logging.
    """
    w1 = w1_dual_estimate(critic, x_batch, gy_batch)
    gp = gradient_penalty(critic, x_batch, gy_batch, cfg.gp_coefficient, rng)
    return -w1 + gp, float(w1.detach()), float(gp.detach())


@dataclass(frozen=True)
class DiscreteCloud:
    """Uniformly weighted point cloud: (n, d) array of finite coordinates."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            raise ValueError("empty point cloud")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


class MongeAssignment(NamedTuple):
    assignment: np.ndarray  # assignment[i] = target index matched to source i
    mean_cost: float


def exact_monge_1d(
    source: DiscreteCloud, target: DiscreteCloud, cost: str = "absolute"
) -> MongeAssignment:
    """Exact optimal matching between equal-size 1D clouds.

    Sorting both clouds and pairing by rank is optimal for any convex
    displacement cost in one dimension. Returns the source-to-target index
    assignment and the mean per-point cost.
    """
    if cost not in ("absolute", "squared"):
        raise ValueError(f"cost must be 'absolute' or 'squared', got {cost!r}")
    if source.dim != 1 or target.dim != 1:
        raise ValueError(f"1D clouds required, got dims {source.dim} and {target.dim}")
    if len(source) != len(target):
        raise ValueError(f"cloud sizes differ: {len(source)} vs {len(target)}")
    src = source.points[:, 0]
    tgt = target.points[:, 0]
    src_order = np.argsort(src, kind="stable")
    tgt_order = np.argsort(tgt, kind="stable")
    assignment = np.empty(len(src), dtype=np.int64)
    assignment[src_order] = tgt_order
    diffs = np.abs(src - tgt[assignment])
    costs = diffs if cost == "absolute" else diffs**2
    return MongeAssignment(assignment, float(costs.mean()))


def assignment_cost(
    source: DiscreteCloud, target: DiscreteCloud, assignment: Iterable[int], cost: str
) -> float:
    """Mean cost of an arbitrary source-to-target assignment (for bounds checks)."""
    idx = np.asarray(list(assignment), dtype=np.int64)
    diffs = np.abs(source.points[:, 0] - target.points[idx, 0])
    return float((diffs if cost == "absolute" else diffs**2).mean())
