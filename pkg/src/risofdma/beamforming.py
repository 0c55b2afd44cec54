"""Closed-form active beamforming (MRT + water-filling) and achievable rates.

Every function here accepts NumPy arrays or torch tensors with arbitrary
leading batch axes. NumPy inputs give NumPy outputs; tensors keep the
autograd graph so the rate can be differentiated with respect to the RIS
phases and the (soft) allocation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .exceptions import NoSignalError
from .scenario import ScenarioConfig

__all__ = [
    "BeamformingSolution",
    "RateReport",
    "mrt_direction",
    "water_fill",
    "solve_beamforming",
    "compute_rates",
]


def _tensor(x, dtype=None):
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    arr = np.asarray(x)
    if not arr.flags.writeable:
        arr = arr.copy()  # torch refuses read-only buffers (e.g. broadcast views)
    if dtype is None:
        dtype = torch.complex128 if np.iscomplexobj(arr) else torch.float64
    return torch.as_tensor(arr, dtype=dtype)


def _out(x, numpy_out):
    return x.detach().cpu().numpy() if numpy_out else x


@dataclass
class BeamformingSolution:
    """Per-RB beam directions and powers.

    ``directions`` is ``(..., Q, N, N_t)``, ``powers`` and ``serving`` are
    ``(..., Q, N)`` and ``water_levels`` is ``(..., Q)``. ``serving`` holds
    the user index the beam points at (-1 for an unassigned RB).
    """

    directions: np.ndarray | torch.Tensor
    powers: np.ndarray | torch.Tensor
    water_levels: np.ndarray | torch.Tensor
    serving: np.ndarray | torch.Tensor

    @property
    def beamformers(self):
        """``sqrt(p) * direction``, shape ``(..., Q, N, N_t)``."""
        if isinstance(self.powers, torch.Tensor):
            return torch.sqrt(self.powers).unsqueeze(-1) * self.directions
        return np.sqrt(self.powers)[..., None] * self.directions


@dataclass
class RateReport:
    """Achievable rates in bits/s."""

    per_user: np.ndarray | torch.Tensor  # (..., K)
    sum_rate: np.ndarray | torch.Tensor | float  # (...)
    per_rb_rate: np.ndarray | torch.Tensor  # (..., Q, N)


def mrt_direction(h):
    """Unit-norm maximum ratio transmission direction for row channel ``h``.

    Returns ``(w, degenerate)`` where ``w = conj(h) / ||h||`` so that
    ``|h @ w| = ||h||``. Zero channels yield ``w = 0`` and ``degenerate=True``.
    """
    numpy_out = not isinstance(h, torch.Tensor)
    ht = _tensor(h, torch.complex128 if numpy_out else None)
    norm = torch.linalg.vector_norm(ht, dim=-1, keepdim=True)
    degenerate = norm.squeeze(-1) == 0
    safe = torch.where(norm > 0, norm, torch.ones_like(norm))
    w = torch.where(norm > 0, ht.conj() / safe, torch.zeros_like(ht))
    return _out(w, numpy_out), _out(degenerate, numpy_out)


def water_fill(c, p_max):
    """Maximize ``sum log2(1 + c_n p_n)`` subject to ``sum p_n = p_max``.

    Parameters
    ----------
    c : array (..., N)
        Normalized gains (1/mW); zeros mark carriers that must stay silent.
    p_max : float
        Power budget in mW (per row of ``c``).

    Returns
    -------
    powers : array (..., N)
    water_level : array (...)
        The common level ``1/tau`` shared by all active carriers.

    Raises
    ------
    NoSignalError
        If every gain in some row is zero.
    """
    numpy_out = not isinstance(c, torch.Tensor)
    ct = _tensor(c, torch.float64 if numpy_out else None)
    if torch.any(ct < 0):
        raise ValueError("water_fill gains must be nonnegative")
    positive = ct > 0
    if not bool(positive.any(dim=-1).all()):
        raise NoSignalError("all gains are zero; nothing to allocate power to")
    inv = torch.where(positive, 1.0 / torch.where(positive, ct, torch.ones_like(ct)),
                      torch.zeros_like(ct))
    # silent carriers sort last
    key = torch.where(positive, inv, torch.full_like(inv, float("inf")))
    order = torch.argsort(key, dim=-1)
    inv_sorted = torch.gather(inv, -1, order)
    valid_sorted = torch.gather(positive, -1, order)
    csum = torch.cumsum(inv_sorted, dim=-1)
    j = torch.arange(1, ct.shape[-1] + 1, dtype=ct.dtype, device=ct.device)
    levels = (p_max + csum) / j
    active = valid_sorted & (levels > inv_sorted)
    count = active.sum(dim=-1, keepdim=True).clamp(min=1)
    level = torch.gather(levels, -1, count - 1)
    powers = torch.where(positive, torch.clamp(level - inv, min=0.0), torch.zeros_like(ct))
    level = _out(level.squeeze(-1), numpy_out)
    if numpy_out and level.ndim == 0:
        level = float(level)
    return _out(powers, numpy_out), level


def solve_beamforming(h_eff, alloc, cfg: ScenarioConfig, *, p_max=None, noise_power=None):
    """MRT toward each RB's serving user plus per-timeslot water-filling.

    Parameters
    ----------
    h_eff : complex array (..., Q, N, K, N_t)
    alloc : real array (..., N, K, Q)
        One-hot or soft allocation; the serving user of RB ``(n, q)`` is the
        argmax over ``K`` (first index on ties). RBs whose allocation column
        is all zero are left unassigned and receive no power.
    cfg : ScenarioConfig
        Supplies ``P_max`` and the noise power unless overridden.
    """
    numpy_out = not (isinstance(h_eff, torch.Tensor) or isinstance(alloc, torch.Tensor))
    p_max = cfg.p_max_mw if p_max is None else p_max
    noise = cfg.noise_power if noise_power is None else noise_power
    h = _tensor(h_eff)
    a = _tensor(alloc, torch.float64 if not isinstance(alloc, torch.Tensor) else None)
    a_qnk = a.movedim(-1, -3)  # (..., Q, N, K)
    serving = torch.argmax(a_qnk, dim=-1)  # (..., Q, N)
    assigned = a_qnk.sum(dim=-1) > 0
    idx = serving[..., None, None].expand(*serving.shape, 1, h.shape[-1])
    h_serv = torch.gather(h, -2, idx).squeeze(-2)  # (..., Q, N, N_t)
    directions, _ = mrt_direction(h_serv)
    directions = directions * assigned.unsqueeze(-1)
    gains = (h_serv.real ** 2 + h_serv.imag ** 2).sum(-1) / noise
    gains = torch.where(assigned, gains, torch.zeros_like(gains))
    try:
        powers, levels = water_fill(gains, p_max)
    except NoSignalError:
        raise NoSignalError("a timeslot has no assigned RB with a nonzero channel") from None
    serving = torch.where(assigned, serving, torch.full_like(serving, -1))
    return BeamformingSolution(
        directions=_out(directions, numpy_out),
        powers=_out(powers, numpy_out),
        water_levels=_out(levels, numpy_out),
        serving=_out(serving, numpy_out),
    )


def compute_rates(h_eff, alloc, sol: BeamformingSolution, cfg: ScenarioConfig, *,
                  noise_power=None, bandwidth=None, snr: str = "serving") -> RateReport:
    """Per-user achievable rates ``(W/Q) sum_{q,n} alpha log2(1 + SNR)``.

    Parameters
    ----------
    snr : {'serving', 'own'}
        ``'serving'``: SNR of user ``k`` on RB ``(n, q)`` is
        ``p |h_eff . w_bar|^2 / sigma^2`` with the RB's beam.
        ``'own'``: every user is scored with its own matched-filter gain
        ``p ||h_eff||^2 / sigma^2``, as if it were the one served.

    Soft allocations weight every user's log term; one-hot allocations
    reduce to the assigned triples only, where both SNR modes coincide.
    """
    if snr not in ("serving", "own"):
        raise ValueError(f"snr must be 'serving' or 'own', got {snr!r}")
    numpy_out = not any(isinstance(x, torch.Tensor)
                        for x in (h_eff, alloc, sol.directions, sol.powers))
    noise = cfg.noise_power if noise_power is None else noise_power
    W = cfg.W if bandwidth is None else bandwidth
    h = _tensor(h_eff)
    a = _tensor(alloc, torch.float64 if not isinstance(alloc, torch.Tensor) else None)
    d = _tensor(sol.directions)
    p = _tensor(sol.powers, torch.float64 if not isinstance(sol.powers, torch.Tensor) else None)
    Q = h.shape[-4]
    if snr == "own":
        gain = (h.real ** 2 + h.imag ** 2).sum(-1)
    else:
        proj = torch.einsum("...qnkt,...qnt->...qnk", h, d.to(h.dtype))
        gain = proj.real ** 2 + proj.imag ** 2
    spectral = torch.log2(1.0 + p.unsqueeze(-1) * gain / noise)  # (..., Q, N, K)
    weighted = a.movedim(-1, -3) * spectral * (W / Q)
    per_user = weighted.sum(dim=(-3, -2))
    per_rb = weighted.sum(dim=-1)
    return RateReport(
        per_user=_out(per_user, numpy_out),
        sum_rate=_out(per_user.sum(-1), numpy_out),
        per_rb_rate=_out(per_rb, numpy_out),
    )
