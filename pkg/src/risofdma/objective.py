"""Unsupervised training loss: negative sum rate, QoS hinge and L2 regularization.

Rates enter the loss in Mbps so that the QoS weight and threshold sit on the
same scale as the rate term.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import torch

from .beamforming import RateReport
from .scenario import ScenarioConfig

__all__ = ["LossBreakdown", "rate_loss", "qos_penalty", "reg_penalty", "batch_loss"]

MBPS = 1e6


@dataclass
class LossBreakdown:
    rate_term: torch.Tensor | float
    qos_term: torch.Tensor | float
    reg_term: torch.Tensor | float
    total: torch.Tensor | float

    def as_floats(self) -> dict[str, float]:
        return {name: float(_detach(getattr(self, name))) for name in
                ("rate_term", "qos_term", "reg_term", "total")}


def _detach(v):
    return v.detach() if isinstance(v, torch.Tensor) else v


def _per_user(report_or_rates):
    return report_or_rates.per_user if isinstance(report_or_rates, RateReport) else report_or_rates


def rate_loss(report) -> torch.Tensor | np.ndarray:
    """Negative sum rate in Mbps (per sample when batched)."""
    return -_per_user(report).sum(-1) / MBPS


def qos_penalty(report, lambda1: float, R_qos: float):
    """``lambda1 * sum_k max(R_qos - R_k, 0)`` with rates and ``R_qos`` in bits/s.

    The returned value is in Mbps units.
    """
    rates = _per_user(report)
    gap = (R_qos - rates) / MBPS
    hinge = torch.clamp(gap, min=0.0) if isinstance(gap, torch.Tensor) else np.maximum(gap, 0.0)
    return lambda1 * hinge.sum(-1)


def reg_penalty(params: Iterable[torch.Tensor], lambda2: float):
    total = None
    for p in params:
        term = (p * p).sum() if isinstance(p, torch.Tensor) else float(np.sum(np.square(p)))
        total = term if total is None else total + term
    if total is None:
        return 0.0
    return lambda2 * total


def batch_loss(reports, params, cfg: ScenarioConfig) -> LossBreakdown:
    """Mini-batch loss: mean per-sample (rate + QoS) terms plus one regularizer.

    ``reports`` is a batched :class:`RateReport` (or a ``(B, K)`` rate array)
    or a list of per-sample reports.
    """
    if isinstance(reports, (list, tuple)):
        if not reports:
            raise ValueError("batch_loss needs at least one sample")
        rates = [_per_user(r) for r in reports]
        per_user = torch.stack(rates) if isinstance(rates[0], torch.Tensor) else np.stack(rates)
    else:
        per_user = _per_user(reports)
        if per_user.ndim == 1:
            per_user = per_user[None]
    if per_user.shape[0] == 0:
        raise ValueError("batch_loss needs at least one sample")
    rate_term = rate_loss(per_user).mean()
    qos_term = qos_penalty(per_user, cfg.lambda1, cfg.R_qos).mean()
    reg_term = reg_penalty(params, cfg.lambda2)
    return LossBreakdown(rate_term, qos_term, reg_term, rate_term + qos_term + reg_term)
