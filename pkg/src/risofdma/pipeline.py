"""Decision type and the phases -> allocation -> beamforming -> rates path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .beamforming import RateReport, compute_rates, solve_beamforming
from .channel import effective_channel
from .scenario import ScenarioConfig

__all__ = ["Decision", "realize", "model_decide"]


@dataclass
class Decision:
    """RIS phases ``(..., M, Q)``, allocation ``(..., N, K, Q)``, beamformers ``(..., N, Q, N_t)``."""

    theta: np.ndarray
    alloc: np.ndarray
    w: np.ndarray

    def __getitem__(self, idx) -> "Decision":
        return Decision(self.theta[idx], self.alloc[idx], self.w[idx])

    def __len__(self):
        return self.theta.shape[0]


def realize(hd, hr, theta, alloc, cfg: ScenarioConfig) -> tuple[Decision, RateReport]:
    """Complete ``(theta, alloc)`` with closed-form beamforming and score it."""
    h_eff = effective_channel(hd, hr, theta)
    sol = solve_beamforming(h_eff, alloc, cfg)
    report = compute_rates(h_eff, alloc, sol, cfg)
    bf = sol.beamformers
    w = bf.swapaxes(-3, -2) if isinstance(bf, np.ndarray) else bf.transpose(-3, -2)
    return Decision(theta, alloc, w), report


def model_decide(model, hd, hr, cfg: ScenarioConfig, mode: str = "hard",
                 generator: torch.Generator | None = None, batch_size: int = 256):
    """Run a :class:`~risofdma.networks.JointModel` in evaluation mode.

    ``hd``/``hr`` are NumPy arrays with a leading realization axis. Returns
    NumPy ``(Decision, RateReport)``.
    """
    was_training = model.training
    model.eval()
    thetas, allocs = [], []
    try:
        with torch.no_grad():
            for start in range(0, hd.shape[0], batch_size):
                hd_t = torch.as_tensor(hd[start:start + batch_size])
                hr_t = torch.as_tensor(hr[start:start + batch_size])
                theta, alloc, _ = model(hd_t, hr_t, mode, generator)
                thetas.append(theta.numpy())
                allocs.append(alloc.numpy())
    finally:
        model.train(was_training)
    theta = np.concatenate(thetas)
    alloc = np.concatenate(allocs)
    return realize(hd, hr, theta, alloc, cfg)
