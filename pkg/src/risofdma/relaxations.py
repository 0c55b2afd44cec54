"""Differentiable surrogates for the 1-bit phase and one-hot allocation constraints."""
from __future__ import annotations

import math

import numpy as np
import torch

__all__ = [
    "soft_quantize",
    "hard_quantize",
    "sample_gumbel",
    "gumbel_transform",
    "gumbel_softmax",
    "hard_allocation",
]

_U_EPS = 1e-12


def soft_quantize(phi, beta_q: float):
    """Smooth 1-bit quantizer ``pi * sigmoid(beta_q * (phi - pi))``.

    Maps radians in ``[0, 2*pi]`` onto ``[0, pi]`` with a transition of
    width about ``1/beta_q`` around ``pi``.
    """
    if isinstance(phi, torch.Tensor):
        return math.pi * torch.sigmoid(beta_q * (phi - math.pi))
    from scipy.special import expit

    return math.pi * expit(beta_q * (np.asarray(phi, dtype=float) - math.pi))


def hard_quantize(phi):
    """Round phases to ``{0, pi}``: below ``pi`` goes to 0, ``pi`` and above to ``pi``."""
    if isinstance(phi, torch.Tensor):
        return torch.where(phi < math.pi, torch.zeros_like(phi), torch.full_like(phi, math.pi))
    phi = np.asarray(phi, dtype=float)
    return np.where(phi < math.pi, 0.0, math.pi)


def gumbel_transform(u):
    """``-log(-log(u))`` with ``u`` clamped into ``[1e-12, 1 - 1e-12]``."""
    if isinstance(u, torch.Tensor):
        u = u.clamp(_U_EPS, 1.0 - _U_EPS)
        return -torch.log(-torch.log(u))
    u = np.clip(np.asarray(u, dtype=float), _U_EPS, 1.0 - _U_EPS)
    return -np.log(-np.log(u))


def sample_gumbel(shape, rng):
    """Standard Gumbel noise.

    ``rng`` may be a ``numpy.random.Generator`` (NumPy output) or a
    ``torch.Generator`` (float64 tensor output).
    """
    if isinstance(rng, torch.Generator):
        u = torch.rand(shape, generator=rng, dtype=torch.float64, device=rng.device)
    else:
        u = rng.random(shape)
    return gumbel_transform(u)


def gumbel_softmax(logits, tau: float, noise=None, axis: int = -2):
    """Temperature softmax of ``(logits + noise) / tau`` over the user axis.

    ``logits`` is laid out ``(..., N, K, Q)`` so the user axis defaults to
    ``-2``. Pass ``noise=None`` (or zeros) for the deterministic relaxation.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if isinstance(logits, torch.Tensor):
        z = logits if noise is None else logits + torch.as_tensor(noise, dtype=logits.dtype)
        return torch.softmax(z / tau, dim=axis)
    z = np.asarray(logits, dtype=float)
    if noise is not None:
        z = z + noise
    z = z / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def hard_allocation(P, axis: int = -2):
    """One-hot at the argmax user of every ``(n, q)``; ties go to the lowest index."""
    if isinstance(P, torch.Tensor):
        idx = torch.argmax(P, dim=axis, keepdim=True)
        return torch.zeros_like(P).scatter_(axis, idx, 1.0)
    P = np.asarray(P, dtype=float)
    idx = np.expand_dims(np.argmax(P, axis=axis), axis)
    out = np.zeros_like(P)
    np.put_along_axis(out, idx, 1.0, axis=axis)
    return out
