"""Reference schemes and a brute-force oracle for tiny instances.

Baselines reuse the trained networks for whichever half of the decision
they do not randomize, and always finish with the closed-form beamformer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import torch

from .beamforming import RateReport, compute_rates, solve_beamforming
from .channel import FrequencyChannel, effective_channel
from .exceptions import SearchSpaceError
from .pipeline import Decision, model_decide, realize
from .relaxations import hard_allocation
from .scenario import ScenarioConfig

__all__ = [
    "BASELINE_KINDS",
    "run_baseline",
    "greedy_allocation",
    "OracleResult",
    "oracle_search_size",
    "exhaustive_oracle",
    "ORACLE_LIMIT",
]

BASELINE_KINDS = ("random_ris", "random_allocation", "without_ris", "fixed_allocation")
ORACLE_LIMIT = 10 ** 7


def _as_batch(channels):
    """``(hd, hr)`` arrays with a leading realization axis."""
    if isinstance(channels, FrequencyChannel):
        return channels.hd_f[None], channels.hr_f[None]
    from ._validation import check_channel_batch

    return check_channel_batch(channels)


def greedy_allocation(h_eff):
    """Give every RB to the user with the largest channel norm.

    ``h_eff`` is ``(..., Q, N, K, N_t)``; returns a one-hot ``(..., N, K, Q)``.
    For a fixed effective channel this maximizes the water-filled sum rate,
    since each RB's rate is increasing in the served user's gain.
    """
    gains = np.sum(np.abs(np.asarray(h_eff)) ** 2, axis=-1)  # (..., Q, N, K)
    return hard_allocation(np.moveaxis(gains, -3, -1))


def _allocate(model, hd, hr, theta):
    with torch.no_grad():
        was_training = model.training
        model.eval()
        try:
            h_eff = effective_channel(torch.as_tensor(hd), torch.as_tensor(hr), torch.as_tensor(theta))
            return model.allocate(h_eff, "hard").numpy()
        finally:
            model.train(was_training)


def _phases(model, hd, hr):
    with torch.no_grad():
        was_training = model.training
        model.eval()
        try:
            return model.phases(torch.as_tensor(hd), torch.as_tensor(hr), "hard").numpy()
        finally:
            model.train(was_training)


def _require(model, kind):
    if model is None:
        raise ValueError(f"{kind} needs trained parameters for its non-random half")


def run_baseline(kind: str, channels, model, cfg: ScenarioConfig,
                 rng: np.random.Generator | None = None) -> tuple[Decision, RateReport]:
    """Evaluate one reference scheme on a batch of channels.

    Parameters
    ----------
    kind : {'random_ris', 'random_allocation', 'without_ris', 'fixed_allocation'}
    channels : FrequencyChannel, tuple ``(hd_f, hr_f)`` or dataset
    model : JointModel or None
        Trained networks. ``without_ris`` falls back to greedy allocation
        when omitted; the other kinds require it.
    rng : numpy Generator
        Source of the random half for the ``random_*`` kinds.

    Returns
    -------
    (Decision, RateReport), batched along the first axis.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINE_KINDS}")
    hd, hr = _as_batch(channels)
    n, M, Q = hd.shape[0], hr.shape[-2], cfg.Q
    rng = np.random.default_rng() if rng is None else rng

    if kind == "random_ris":
        _require(model, kind)
        theta = rng.integers(0, 2, size=(n, M, Q)) * math.pi
        return realize(hd, hr, theta, _allocate(model, hd, hr, theta), cfg)

    if kind == "random_allocation":
        _require(model, kind)
        theta = _phases(model, hd, hr)
        users = rng.integers(0, cfg.K, size=(n, cfg.N, Q))
        alloc = np.moveaxis(np.eye(cfg.K)[users], -1, -2)  # (n, N, K, Q)
        return realize(hd, hr, theta, alloc, cfg)

    if kind == "without_ris":
        hr0 = hr[..., :0, :]
        if model is not None:
            return model_decide(model, hd, hr0, cfg)
        theta = np.zeros((n, 0, Q))
        alloc = greedy_allocation(effective_channel(hd, hr0, theta))
        return realize(hd, hr0, theta, alloc, cfg)

    # fixed_allocation: one timeslot's decision repeated over the block
    _require(model, kind)
    own = cfg.replace(Q=model.desc.Q)
    dec, _ = model_decide(model, hd, hr, own)
    theta = np.repeat(dec.theta[..., :1], Q, axis=-1)
    alloc = np.repeat(dec.alloc[..., :1], Q, axis=-1)
    return realize(hd, hr, theta, alloc, cfg)


@dataclass
class OracleResult:
    theta: np.ndarray  # (M, Q)
    alloc: np.ndarray  # (N, K, Q)
    report: RateReport
    n_candidates: int
    n_feasible: int

    @property
    def sum_rate(self) -> float:
        return float(self.report.sum_rate)


def oracle_search_size(cfg: ScenarioConfig, M: int | None = None) -> int:
    M = cfg.M if M is None else M
    return 2 ** (M * cfg.Q) * cfg.K ** (cfg.N * cfg.Q)


def _phase_candidates(M: int, Q: int) -> np.ndarray:
    """All ``{0, pi}^(M x Q)`` matrices in lexicographic order of their bits."""
    bits = np.array(list(itertools.product((0, 1), repeat=M * Q)), dtype=float)
    return (bits * math.pi).reshape(-1, M, Q)


def _alloc_candidates(N: int, K: int, Q: int) -> np.ndarray:
    """All one-hot allocations ``(N, K, Q)``, lexicographic in the served-user digits."""
    users = np.array(list(itertools.product(range(K), repeat=N * Q)), dtype=int).reshape(-1, N, Q)
    return np.moveaxis(np.eye(K)[users], -1, -2)


def exhaustive_oracle(channel, cfg: ScenarioConfig, qos_feasible: bool = False,
                      limit: int = ORACLE_LIMIT, chunk: int = 4096) -> OracleResult:
    """Best 1-bit phases and one-hot allocation by full enumeration.

    Every candidate is scored with the closed-form beamformer. Ties keep
    the lexicographically smallest (phase bits, user digits) encoding.

    Parameters
    ----------
    channel : FrequencyChannel or tuple ``(hd_f, hr_f)`` without batch axis
    qos_feasible : bool
        Only consider candidates where every user meets ``cfg.R_qos``.
    limit : int
        Refuse search spaces larger than this.
    """
    if isinstance(channel, FrequencyChannel):
        hd, hr = channel.hd_f, channel.hr_f
    else:
        hd, hr = (np.asarray(a) for a in channel)
    M = hr.shape[-2]
    size = oracle_search_size(cfg, M)
    if size > limit:
        raise SearchSpaceError(
            f"oracle search space 2^(M*Q) * K^(N*Q) = {size} exceeds the limit {limit}")
    thetas = _phase_candidates(M, cfg.Q)
    allocs = _alloc_candidates(cfg.N, cfg.K, cfg.Q)
    A = allocs.shape[0]

    best, best_idx, n_feasible = -np.inf, None, 0
    hd_t, hr_t = torch.as_tensor(hd), torch.as_tensor(hr)
    alloc_t = torch.as_tensor(allocs)
    step = max(1, chunk // A)
    for start in range(0, thetas.shape[0], step):
        th = torch.as_tensor(thetas[start:start + step])  # (t, M, Q)
        h_eff = effective_channel(hd_t, hr_t, th)  # (t, Q, N, K, T)
        h_pairs = h_eff[:, None].expand(-1, A, *h_eff.shape[1:])
        a_pairs = alloc_t[None].expand(th.shape[0], -1, -1, -1, -1)
        sol = solve_beamforming(h_pairs, a_pairs, cfg)
        report = compute_rates(h_pairs, a_pairs, sol, cfg)
        rates = report.sum_rate.reshape(-1).numpy()
        if qos_feasible:
            ok = (report.per_user >= cfg.R_qos).all(-1).reshape(-1).numpy()
            n_feasible += int(ok.sum())
            rates = np.where(ok, rates, -np.inf)
        j = int(np.argmax(rates))  # first maximum, i.e. smallest encoding
        if rates[j] > best:
            best, best_idx = rates[j], start * A + j
    if best_idx is None or not np.isfinite(best):
        raise ValueError("no candidate satisfies the QoS constraint")

    theta, alloc = thetas[best_idx // A], allocs[best_idx % A]
    _, report = realize(hd, hr, theta, alloc, cfg)
    return OracleResult(theta, alloc, report, size, n_feasible if qos_feasible else size)
