"""Generator and critic architectures with deterministic initialization.

The generator is a U-shaped encoder/decoder: strided downsampling stages,
a bottleneck of residual blocks (each with an efficient-channel-attention
gate on its residual branch), and nearest-neighbor upsampling stages with
skip concatenation. Its output is produced by adding a zero-initialized
correction to the input's logit and squashing back through a sigmoid, so a
freshly built generator is the identity map and outputs always lie in
[0, 1].

The critic is a plain strided conv stack with a scalar linear head and no
normalization layers, keeping per-sample input gradients independent (a
requirement for interpolate-based gradient penalties).
"""

from __future__ import annotations

import datetime
import hashlib
import json
import math
import zipfile
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

LOGIT_EPS = 1e-6  # input clamp before logit; bounds the identity-map error


class CheckpointError(Exception):
    """Parameter file unreadable, truncated, or failing its checksum."""


class FingerprintMismatch(CheckpointError):
    """Parameter file was produced under a different architecture spec."""


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int = 3
    base_channels: int = 16
    depth: int = 2
    residual_blocks: int = 3
    eca_enabled: bool = True
    eca_gamma: float = 2.0
    eca_beta: float = 1.0

    def __post_init__(self) -> None:
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 4:
            raise ValueError("base_channels must be >= 4")
        if self.residual_blocks < 0:
            raise ValueError("residual_blocks must be >= 0")
        if self.eca_gamma <= 0:
            raise ValueError("eca_gamma must be positive")


@dataclass(frozen=True)
class CriticSpec:
    in_channels: int = 3
    base_channels: int = 16
    conv_layers: int = 4

    def __post_init__(self) -> None:
        if self.in_channels not in (1, 3):
            raise ValueError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if self.conv_layers < 2:
            raise ValueError("conv_layers must be >= 2")
        if self.base_channels < 4:
            raise ValueError("base_channels must be >= 4")


def eca_kernel_size(channels: int, gamma: float = 2.0, beta: float = 1.0) -> int:
    """Odd 1D kernel size nearest to (log2(C) + beta) / gamma, at least 1."""
    value = abs((math.log2(channels) + beta) / gamma)
    k = 2 * int(value // 2) + 1
    return max(1, k)


class EcaGate(nn.Module):
    """Efficient channel attention: pool, 1D conv over channels, sigmoid gate.

    Setting ``force_identity`` bypasses the gate (multiplies by 1), which is
    useful for verifying that gating is the only behavioral difference.
    """

    def __init__(self, channels: int, gamma: float = 2.0, beta: float = 1.0) -> None:
        super().__init__()
        k = eca_kernel_size(channels, gamma, beta)
        self.conv = nn.Conv1d(1, 1, kernel_size=k, bias=True)
        self.force_identity = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.force_identity:
            return x
        pooled = x.mean(dim=(2, 3)).unsqueeze(1)  # (N, 1, C)
        half = self.conv.kernel_size[0] // 2
        if half:
            # Replicate at the channel ends: uniform descriptors then gate
            # every channel identically.
            pooled = F.pad(pooled, (half, half), mode="replicate")
        gate = torch.sigmoid(self.conv(pooled).squeeze(1))
        return x * gate.unsqueeze(-1).unsqueeze(-1)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, spec: GeneratorSpec) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gate = (
            EcaGate(channels, spec.eca_gamma, spec.eca_beta) if spec.eca_enabled else None
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv2(F.leaky_relu(self.conv1(x), 0.2))
        if self.gate is not None:
            h = self.gate(h)
        return x + h


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec) -> None:
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        self.stem = nn.Conv2d(spec.in_channels, c, 3, padding=1)
        downs = []
        for _ in range(spec.depth):
            downs.append(nn.Conv2d(c, c * 2, 4, stride=2, padding=1))
            c *= 2
        self.downs = nn.ModuleList(downs)
        self.blocks = nn.ModuleList(ResidualBlock(c, spec) for _ in range(spec.residual_blocks))
        ups = []
        for _ in range(spec.depth):
            # input: upsampled features + skip from the matching encoder level
            ups.append(nn.Conv2d(c + c // 2, c // 2, 3, padding=1))
            c //= 2
        self.ups = nn.ModuleList(ups)
        self.head = nn.Conv2d(c, spec.in_channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.size(1) != self.spec.in_channels:
            raise ValueError(
                f"expected (N, {self.spec.in_channels}, H, W), got {tuple(x.shape)}"
            )
        factor = 2**self.spec.depth
        if x.size(-1) % factor or x.size(-2) % factor:
            raise ValueError(
                f"input side must be divisible by {factor} for depth {self.spec.depth}, "
                f"got {x.size(-2)}x{x.size(-1)}"
            )
        h = F.leaky_relu(self.stem(x), 0.2)
        skips = []
        for down in self.downs:
            skips.append(h)
            h = F.leaky_relu(down(h), 0.2)
        for block in self.blocks:
            h = block(h)
        for up, skip in zip(self.ups, reversed(skips)):
            h = F.interpolate(h, scale_factor=2, mode="nearest")
            h = F.leaky_relu(up(torch.cat([h, skip], dim=1)), 0.2)
        base = torch.logit(x.clamp(LOGIT_EPS, 1 - LOGIT_EPS))
        return torch.sigmoid(base + self.head(h))


class Critic(nn.Module):
    def __init__(self, spec: CriticSpec) -> None:
        super().__init__()
        self.spec = spec
        c = spec.base_channels
        layers = [nn.Conv2d(spec.in_channels, c, 4, stride=2, padding=1)]
        for _ in range(spec.conv_layers - 1):
            layers += [nn.LeakyReLU(0.2), nn.Conv2d(c, c * 2, 4, stride=2, padding=1)]
            c *= 2
        layers.append(nn.LeakyReLU(0.2))
        self.features = nn.Sequential(*layers)
        self.score = nn.Linear(c, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        return self.score(h.mean(dim=(2, 3))).squeeze(1)


def _as_torch_generator(rng: torch.Generator | int | None) -> torch.Generator:
    if isinstance(rng, torch.Generator):
        return rng
    g = torch.Generator()
    g.manual_seed(0 if rng is None else int(rng))
    return g


def _init_conv_or_linear(module: nn.Module, g: torch.Generator) -> None:
    weight = module.weight
    fan_in = weight.size(1) * (weight[0][0].numel() if weight.dim() > 2 else 1)
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        weight.uniform_(-bound, bound, generator=g)
        if module.bias is not None:
            module.bias.uniform_(-bound, bound, generator=g)


def _deterministic_init(net: nn.Module, g: torch.Generator, skip: set[int]) -> None:
    for module in net.modules():
        if id(module) in skip:
            continue
        if isinstance(module, (nn.Conv2d, nn.Conv1d, nn.Linear)):
            _init_conv_or_linear(module, g)


def build_generator(spec: GeneratorSpec, rng: torch.Generator | int | None = None) -> Generator:
    """Construct a generator with reproducible initialization from ``rng``.

    The trunk is initialized first and the attention gates afterward, so a
    gated and an ungated build from the same seed share trunk parameters.
    The output head starts at zero, making the fresh generator an identity
    map.
    """
    g = _as_torch_generator(rng)
    net = Generator(spec)
    gates = [m for m in net.modules() if isinstance(m, EcaGate)]
    gate_params = {id(gate.conv) for gate in gates}
    _deterministic_init(net, g, skip=gate_params)
    for gate in gates:
        _init_conv_or_linear(gate.conv, g)
    with torch.no_grad():
        net.head.weight.zero_()
        net.head.bias.zero_()
    return net


def build_critic(spec: CriticSpec, rng: torch.Generator | int | None = None) -> Critic:
    """Construct a critic with reproducible initialization from ``rng``."""
    g = _as_torch_generator(rng)
    net = Critic(spec)
    _deterministic_init(net, g, skip=set())
    return net


def parameter_count(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def spec_fingerprint(spec) -> str:
    """Stable hex digest of an architecture spec (class name + field values)."""
    payload = json.dumps(
        {"kind": type(spec).__name__, "fields": asdict(spec)}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _arrays_checksum(arrays: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(arrays):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(arrays[name]).tobytes())
    return digest.hexdigest()


def save_parameters(net: nn.Module, spec, path) -> str:
    """Write all named parameters plus a fingerprint/checksum header.

    Returns the checksum over the stored arrays.
    """
    arrays = {name: p.detach().cpu().numpy() for name, p in net.state_dict().items()}
    meta = {
        "format": 1,
        "fingerprint": spec_fingerprint(spec),
        "checksum": _arrays_checksum(arrays),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "parameter_count": parameter_count(net),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    return meta["checksum"]


def load_parameters(path, spec, net: nn.Module) -> dict:
    """Load parameters saved by :func:`save_parameters` into ``net``.

    Verifies the architecture fingerprint and the array checksum before
    touching the network. Returns the stored metadata.
    """
    try:
        with np.load(path) as data:
            arrays = {name: data[name] for name in data.files if name != "__meta__"}
            meta = json.loads(bytes(data["__meta__"]).decode())
    except (OSError, ValueError, KeyError, json.JSONDecodeError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"unreadable parameter file {path}: {exc}") from exc
    expected = spec_fingerprint(spec)
    if meta.get("fingerprint") != expected:
        raise FingerprintMismatch(
            f"{path}: fingerprint {meta.get('fingerprint')} does not match spec {expected}"
        )
    if meta.get("checksum") != _arrays_checksum(arrays):
        raise CheckpointError(f"{path}: array checksum mismatch (file corrupted?)")
    state = {name: torch.from_numpy(arr.copy()) for name, arr in arrays.items()}
    net.load_state_dict(state)
    return meta
