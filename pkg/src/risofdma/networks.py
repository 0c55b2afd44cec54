"""BeamNet / AllocationNet, their input packing, and the joint model."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .channel import effective_channel
from .exceptions import DimensionError
from .relaxations import gumbel_softmax, hard_allocation, hard_quantize, sample_gumbel, soft_quantize
from .scenario import ScenarioConfig

__all__ = [
    "features_beam",
    "unpack_beam",
    "features_alloc",
    "unpack_alloc",
    "ArchitectureDescriptor",
    "SEResBlock",
    "Backbone",
    "BeamNet",
    "AllocationNet",
    "JointModel",
    "PHASE_MODES",
]

PHASE_MODES = ("discrete", "continuous")


def _lib(x):
    return torch if isinstance(x, torch.Tensor) else np


def _split_complex(z, axis):
    """Stack real and imaginary parts along a new axis inserted at ``axis``."""
    lib = _lib(z)
    return lib.stack([z.real, z.imag], axis) if lib is np else torch.stack([z.real, z.imag], axis)


def features_beam(hd_f, hr_f):
    """Pack direct and cascaded channels into ``(..., 2K, M+1, N, N_t)`` reals.

    Plane ``2k`` holds real parts of user ``k`` and ``2k+1`` the imaginary
    parts; row 0 of the ``M+1`` axis is the direct channel, rows ``1..M`` the
    cascaded channel.
    """
    lib = _lib(hd_f)
    if lib is np:
        stacked = np.concatenate([np.asarray(hd_f)[..., None, :], np.asarray(hr_f)], axis=-2)
    else:
        stacked = torch.cat([hd_f.unsqueeze(-2), hr_f], dim=-2)
    # (..., N, K, M+1, T) -> (..., K, M+1, N, T)
    moved = np.moveaxis(stacked, -4, -2) if lib is np else stacked.movedim(-4, -2)
    parts = _split_complex(moved, -4)  # (..., K, 2, M+1, N, T)
    shape = tuple(parts.shape)
    return parts.reshape(shape[:-5] + (2 * shape[-5],) + shape[-3:])


def unpack_beam(x):
    """Inverse of :func:`features_beam`, returns ``(hd_f, hr_f)``."""
    shape = tuple(x.shape)
    parts = x.reshape(shape[:-4] + (shape[-4] // 2, 2) + shape[-3:])
    z = parts[..., 0, :, :, :] + 1j * parts[..., 1, :, :, :]  # (..., K, M+1, N, T)
    if isinstance(z, torch.Tensor):
        z = z.movedim(-2, -4)
    else:
        z = np.moveaxis(z, -2, -4)  # (..., N, K, M+1, T)
    return z[..., 0, :], z[..., 1:, :]


def features_alloc(h_eff):
    """Pack an effective channel ``(..., Q, N, K, N_t)`` into ``(..., 2Q, N, K, N_t)``."""
    parts = _split_complex(h_eff, -4)  # (..., Q, 2, N, K, T)
    shape = tuple(parts.shape)
    return parts.reshape(shape[:-5] + (2 * shape[-5],) + shape[-3:])


def unpack_alloc(x):
    shape = tuple(x.shape)
    parts = x.reshape(shape[:-4] + (shape[-4] // 2, 2) + shape[-3:])
    return parts[..., 0, :, :, :] + 1j * parts[..., 1, :, :, :]


@dataclass(frozen=True)
class ArchitectureDescriptor:
    N_t: int
    K: int
    M: int
    N: int
    Q: int
    conv_channels: int = 32
    deep_channels: int = 64
    fc_width: int = 512
    se_reduction: int = 16
    phase_mode: str = "discrete"

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, phase_mode: str = "discrete"):
        if phase_mode not in PHASE_MODES:
            raise ValueError(f"phase_mode must be one of {PHASE_MODES}")
        return cls(N_t=cfg.N_t, K=cfg.K, M=cfg.M, N=cfg.N, Q=cfg.Q,
                   conv_channels=cfg.conv_channels, deep_channels=cfg.deep_channels,
                   fc_width=cfg.fc_width, se_reduction=cfg.se_reduction, phase_mode=phase_mode)

    def to_dict(self):
        return asdict(self)


def _init_weights(module: nn.Module):
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class SEResBlock(nn.Module):
    """Two 3x3 convolutions re-weighted by squeeze-and-excitation, plus a skip.

    The second batch norm starts with zero scale, so a fresh block is the
    identity map.
    """

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)
        self.squeeze = nn.Linear(channels, hidden)
        self.excite = nn.Linear(hidden, channels)
        _init_weights(self)
        nn.init.zeros_(self.bn2.weight)

    def forward(self, x):
        y = torch.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        s = torch.sigmoid(self.excite(torch.relu(self.squeeze(y.mean(dim=(2, 3))))))
        return x + y * s[:, :, None, None]


class Backbone(nn.Module):
    """Conv-BN-pool, SE-Res, two convs, then a two-layer fully connected head."""

    def __init__(self, in_channels: int, height: int, width: int, out_features: int,
                 desc: ArchitectureDescriptor):
        super().__init__()
        c1, c2 = desc.conv_channels, desc.deep_channels
        self.in_shape = (in_channels, height, width)
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, c1, 3, padding=1),
            nn.BatchNorm2d(c1),
            nn.ReLU(),
            nn.AvgPool2d((min(2, height), min(2, width))),
        )
        self.se_res = SEResBlock(c1, desc.se_reduction)
        self.body = nn.Sequential(
            nn.Conv2d(c1, c2, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(c2, c2, 3, padding=1),
            nn.ReLU(),
        )
        ph, pw = height // min(2, height), width // min(2, width)
        self.fc1 = nn.Linear(c2 * ph * pw, desc.fc_width)
        self.fc2 = nn.Linear(desc.fc_width, out_features)
        _init_weights(self.stem)
        _init_weights(self.body)
        _init_weights(self.fc1)
        # small output layer keeps the initial phases near the quantizer's
        # transition region, where its gradient is informative
        nn.init.normal_(self.fc2.weight, std=1e-3 / math.sqrt(desc.fc_width))
        nn.init.zeros_(self.fc2.bias)

    def forward(self, x):
        if tuple(x.shape[1:]) != self.in_shape:
            raise DimensionError(f"expected input (B, {self.in_shape}), got {tuple(x.shape)}")
        y = self.body(self.se_res(self.stem(x)))
        return self.fc2(torch.relu(self.fc1(y.flatten(1))))


class BeamNet(nn.Module):
    """CSI features -> RIS phases ``(B, M, Q)``."""

    def __init__(self, desc: ArchitectureDescriptor, beta_q: float = 100.0):
        super().__init__()
        self.desc = desc
        self.beta_q = beta_q
        self.backbone = Backbone(2 * desc.K, desc.M + 1, desc.N * desc.N_t, desc.M * desc.Q, desc)

    def raw_phases(self, x):
        """Continuous phases in ``[0, 2*pi]`` before quantization."""
        b = x.shape[0]
        z = self.backbone(x.reshape(b, 2 * self.desc.K, self.desc.M + 1, -1))
        return 2 * math.pi * torch.sigmoid(z).reshape(b, self.desc.M, self.desc.Q)

    def forward(self, x, mode: str = "soft"):
        phi = self.raw_phases(x)
        if self.desc.phase_mode == "continuous":
            return phi
        if mode == "soft":
            return soft_quantize(phi, self.beta_q)
        if mode == "hard":
            return hard_quantize(phi)
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")


class AllocationNet(nn.Module):
    """Effective-channel features -> allocation ``(B, N, K, Q)``."""

    def __init__(self, desc: ArchitectureDescriptor, tau: float = 0.5):
        super().__init__()
        self.desc = desc
        self.tau = tau
        self.backbone = Backbone(2 * desc.Q, desc.N, desc.K * desc.N_t, desc.N * desc.K * desc.Q,
                                 desc)

    def logits(self, x):
        b = x.shape[0]
        z = self.backbone(x.reshape(b, 2 * self.desc.Q, self.desc.N, -1))
        return z.reshape(b, self.desc.N, self.desc.K, self.desc.Q)

    def forward(self, x, mode: str = "soft", generator: torch.Generator | None = None,
                tau: float | None = None):
        P = self.logits(x)
        if mode == "hard":
            return hard_allocation(P)
        if mode != "soft":
            raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
        noise = None
        if generator is not None:
            noise = sample_gumbel(tuple(P.shape), generator).to(P.dtype)
        return gumbel_softmax(P, self.tau if tau is None else tau, noise)


class JointModel(nn.Module):
    """BeamNet and AllocationNet chained through the effective channel.

    Input channels are in raw units; fixed per-block scales (set when the
    estimator is fitted) bring features to order one before the networks.
    """

    def __init__(self, desc: ArchitectureDescriptor, beta_q: float = 100.0, tau: float = 0.5):
        super().__init__()
        self.desc = desc
        self.beamnet = BeamNet(desc, beta_q) if desc.M > 0 else None
        self.allocnet = AllocationNet(desc, tau)
        self.register_buffer("direct_scale", torch.ones((), dtype=torch.float64))
        self.register_buffer("cascade_scale", torch.ones((), dtype=torch.float64))
        self.register_buffer("eff_scale", torch.ones((), dtype=torch.float64))
        self.double()

    def set_scales(self, direct: float, cascade: float, eff: float):
        self.direct_scale.fill_(direct)
        self.cascade_scale.fill_(cascade)
        self.eff_scale.fill_(eff)

    def beam_input(self, hd, hr):
        return features_beam(hd / self.direct_scale, hr / self.cascade_scale)

    def phases(self, hd, hr, mode: str = "soft"):
        if self.beamnet is None or hr.shape[-2] == 0:
            return torch.zeros(hd.shape[:-3] + (0, self.desc.Q), dtype=torch.float64,
                               device=hd.device)
        return self.beamnet(self.beam_input(hd, hr), mode)

    def allocate(self, h_eff, mode: str = "soft", generator=None):
        return self.allocnet(features_alloc(h_eff / self.eff_scale), mode, generator)

    def forward(self, hd, hr, mode: str = "soft", generator=None):
        """Return ``(theta, alloc, h_eff)`` for a batch of frequency channels."""
        theta = self.phases(hd, hr, mode)
        h_eff = effective_channel(hd, hr, theta)
        alloc = self.allocate(h_eff, mode, generator)
        return theta, alloc, h_eff

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        beam = list(self.beamnet.parameters()) if self.beamnet is not None else []
        return {"beamnet": beam, "allocationnet": list(self.allocnet.parameters())}
