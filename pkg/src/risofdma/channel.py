"""Multi-tap channel generation, RIS cascading and the frequency transform.

Array layouts (leading batch axes are allowed wherever ``...`` appears):

- direct taps ``h_d``: ``(L0, K, N_t)``
- BS->RIS taps ``G``: ``(L1, M, N_t)``
- RIS->user taps ``r``: ``(L2, K, M)``
- frequency direct channel ``hd_f``: ``(..., N, K, N_t)``
- frequency cascaded channel ``hr_f``: ``(..., N, K, M, N_t)``
- effective channel: ``(..., Q, N, K, N_t)``
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import DimensionError, ModelAssumptionError
from .scenario import Geometry, ScenarioConfig, anchor_positions, path_gain

__all__ = [
    "ChannelRealization",
    "FrequencyChannel",
    "sample_taps",
    "cascade_taps",
    "to_frequency",
    "effective_channel",
    "steering_vector",
    "draw_frequency_channel",
]

# array axes: BS ULA along y, RIS ULA along x (RIS sits on the y axis)
_BS_AXIS = np.array([0.0, 1.0])
_RIS_AXIS = np.array([1.0, 0.0])


@dataclass(frozen=True)
class ChannelRealization:
    h_d: np.ndarray
    G: np.ndarray
    r: np.ndarray
    geometry: Geometry | None = None

    @property
    def dims(self) -> dict:
        L0, K, N_t = self.h_d.shape
        L1, M, _ = self.G.shape
        L2 = self.r.shape[0]
        return dict(L0=L0, L1=L1, L2=L2, K=K, M=M, N_t=N_t)


@dataclass(frozen=True)
class FrequencyChannel:
    hd_f: np.ndarray
    hr_f: np.ndarray
    geometry: Geometry | None = None

    def __post_init__(self):
        if self.hd_f.ndim != 3 or self.hr_f.ndim != 4:
            raise DimensionError("expected hd_f (N, K, N_t) and hr_f (N, K, M, N_t)")
        n, k, t = self.hd_f.shape
        if (self.hr_f.shape[0], self.hr_f.shape[1], self.hr_f.shape[3]) != (n, k, t):
            raise DimensionError(
                f"hd_f {self.hd_f.shape} and hr_f {self.hr_f.shape} disagree on N, K or N_t")

    @property
    def N(self) -> int:
        return self.hd_f.shape[0]

    @property
    def K(self) -> int:
        return self.hd_f.shape[1]

    @property
    def M(self) -> int:
        return self.hr_f.shape[2]

    @property
    def N_t(self) -> int:
        return self.hd_f.shape[2]


def steering_vector(n: int, direction: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Half-wavelength ULA response toward a 2-D unit ``direction``."""
    cos_angle = float(np.dot(direction, axis))
    return np.exp(1j * np.pi * np.arange(n) * cos_angle)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _profile(n_taps: int, decay_db: float) -> np.ndarray:
    w = 10.0 ** (-decay_db * np.arange(n_taps) / 10.0)
    return w / w.sum()


def _los_fraction(kappa: float) -> float:
    return 1.0 if np.isinf(kappa) else kappa / (1.0 + kappa)


def _rician_taps(rng, n_taps: int, los: np.ndarray, gain, kappa: float, decay_db: float):
    """Tap 0 carries the LoS part, taps >= 1 share the NLoS power.

    ``gain`` broadcasts against ``los`` (per-user gains for the RIS->user link).
    With a single tap the NLoS part is superposed on tap 0 instead.
    """
    f_los = _los_fraction(kappa)
    shape = (n_taps,) + los.shape
    taps = np.zeros(shape, dtype=complex)
    amp = np.sqrt(gain)
    if n_taps == 1:
        taps[0] = amp * (np.sqrt(f_los) * los + np.sqrt(1.0 - f_los) * _cn(rng, los.shape))
        return taps
    taps[0] = amp * np.sqrt(f_los) * los
    prof = _profile(n_taps - 1, decay_db)
    nlos = _cn(rng, (n_taps - 1,) + los.shape)
    taps[1:] = amp * np.sqrt((1.0 - f_los) * prof)[(...,) + (None,) * los.ndim] * nlos
    return taps


def sample_taps(cfg: ScenarioConfig, geo: Geometry, rng: np.random.Generator) -> ChannelRealization:
    """Draw the time-domain taps of all three links for one coherence block.

    The direct link is Rayleigh with its path gain spread over ``L0`` taps.
    The BS->RIS and RIS->user links are Rician: tap 0 is a deterministic
    steering-vector LoS term and the remaining taps are Gaussian NLoS, with
    the LoS/NLoS power split set by ``k_BR`` / ``k_RU``.
    """
    bs, ris = anchor_positions(cfg)
    K, M, N_t = cfg.K, cfg.M, cfg.N_t

    beta_d = path_gain(geo.d_direct, cfg.xi0, cfg)
    prof_d = _profile(cfg.L0, cfg.tap_decay_db)
    h_d = np.sqrt(prof_d[:, None, None] * beta_d[None, :, None]) * _cn(rng, (cfg.L0, K, N_t))

    beta_br = path_gain(geo.d_br, cfg.xi1, cfg)
    a_bs = steering_vector(N_t, _unit(ris - bs), _BS_AXIS)
    a_ris = steering_vector(M, _unit(bs - ris), _RIS_AXIS)
    G = _rician_taps(rng, cfg.L1, np.outer(a_ris, a_bs), beta_br, cfg.k_br_linear, cfg.tap_decay_db)

    beta_ru = path_gain(geo.d_ru, cfg.xi2, cfg)
    los_r = np.stack([steering_vector(M, _unit(p - ris), _RIS_AXIS) for p in geo.user_positions])
    r = _rician_taps(rng, cfg.L2, los_r.reshape(K, M), beta_ru[:, None], cfg.k_ru_linear,
                     cfg.tap_decay_db)
    return ChannelRealization(h_d=h_d, G=G, r=r, geometry=geo)


def cascade_taps(ch: ChannelRealization) -> np.ndarray:
    """Cascaded RIS taps, shape ``(L1 + L2 - 1, K, M, N_t)``.

    Tap ``l`` is ``sum_i diag(r_{i,k}) G_{l-i}``, with ``G`` zero outside
    ``[0, L1)``.
    """
    L1, M, N_t = ch.G.shape
    L2, K, _ = ch.r.shape
    out = np.zeros((L1 + L2 - 1, K, M, N_t), dtype=np.result_type(ch.G, ch.r, complex))
    for i in range(L2):
        out[i:i + L1] += ch.r[i][None, :, :, None] * ch.G[:, None, :, :]
    return out


def to_frequency(ch: ChannelRealization, cfg: ScenarioConfig) -> FrequencyChannel:
    """Apply the unnormalized N-point DFT to the direct and cascaded taps."""
    L = max(ch.h_d.shape[0], ch.G.shape[0] + ch.r.shape[0] - 1)
    if L > cfg.N:
        raise ModelAssumptionError(
            f"channel has {L} taps but only N = {cfg.N} subcarriers; the cyclic prefix "
            "assumption N_CP >= L cannot hold")
    hd_f = np.fft.fft(ch.h_d, n=cfg.N, axis=0)
    hr_f = np.fft.fft(cascade_taps(ch), n=cfg.N, axis=0)
    return FrequencyChannel(hd_f=hd_f, hr_f=hr_f, geometry=ch.geometry)


def draw_frequency_channel(cfg: ScenarioConfig, rng: np.random.Generator) -> FrequencyChannel:
    from .scenario import sample_geometry

    geo = sample_geometry(cfg, rng)
    return to_frequency(sample_taps(cfg, geo, rng), cfg)


def effective_channel(hd_f, hr_f, theta):
    """Combine direct and cascaded channels under RIS phases ``theta``.

    Parameters
    ----------
    hd_f : array (..., N, K, N_t)
    hr_f : array (..., N, K, M, N_t)
    theta : real array (..., M, Q), radians

    Returns
    -------
    array (..., Q, N, K, N_t)
        ``hd_f + phi_q^T hr_f`` with ``phi_q = exp(1j * theta[:, q])``.
        NumPy in, NumPy out; torch tensors keep the autograd graph.
    """
    if hr_f.shape[-2] != theta.shape[-2]:
        raise DimensionError(
            f"theta has {theta.shape[-2]} RIS elements but hr_f has {hr_f.shape[-2]}")
    if tuple(hd_f.shape[-3:]) != (hr_f.shape[-4], hr_f.shape[-3], hr_f.shape[-1]):
        raise DimensionError(f"hd_f {tuple(hd_f.shape)} and hr_f {tuple(hr_f.shape)} disagree")
    if isinstance(theta, torch.Tensor) or isinstance(hd_f, torch.Tensor):
        hd_t = torch.as_tensor(hd_f)
        hr_t = torch.as_tensor(hr_f)
        th = torch.as_tensor(theta, dtype=torch.float64)
        phi = torch.polar(torch.ones_like(th), th).to(hr_t.dtype)
        return hd_t.unsqueeze(-4) + torch.einsum("...mq,...nkmt->...qnkt", phi, hr_t)
    phi = np.exp(1j * np.asarray(theta, dtype=float))
    return np.asarray(hd_f)[..., None, :, :, :] + np.einsum("...mq,...nkmt->...qnkt", phi, hr_f)
