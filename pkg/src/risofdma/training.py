"""Phased training schedule, single training steps, and evaluation metrics."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .beamforming import compute_rates, solve_beamforming
from .exceptions import NoSignalError, NonFiniteLossError, ResultParseError
from .networks import JointModel
from .objective import LossBreakdown, batch_loss
from .pipeline import model_decide
from .scenario import ScenarioConfig

__all__ = [
    "TrainSchedule",
    "TrainHistory",
    "EvalMetrics",
    "stage_of",
    "forward_loss",
    "train_step",
    "validation_loss",
    "phased_train",
    "evaluate",
    "metrics_from_rates",
    "smoothed",
]

logger = logging.getLogger(__name__)

WHICH = ("beamnet", "allocationnet", "joint")
METHODS = ("phased", "joint")


def stage_of(i: int, boundaries) -> int:
    """Stage number (1..5) of 1-based iteration ``i``."""
    for stage, bound in enumerate(boundaries[:4], start=1):
        if i <= bound:
            return stage
    return 5


@dataclass(frozen=True)
class TrainSchedule:
    boundaries: tuple[int, int, int, int, int]
    stage_rates: tuple[float, float, float]
    batch: int
    method: str = "phased"

    @classmethod
    def from_config(cls, cfg: ScenarioConfig, method: str = "phased") -> "TrainSchedule":
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        return cls(cfg.boundaries, (cfg.mu1, cfg.mu2, cfg.mu3), cfg.B, method)

    @property
    def total(self) -> int:
        return self.boundaries[-1]

    def stage(self, i: int) -> int:
        return stage_of(i, self.boundaries) if self.method == "phased" else 5

    def which(self, i: int) -> str:
        return {1: "beamnet", 2: "allocationnet", 3: "beamnet", 4: "allocationnet"}.get(
            self.stage(i), "joint")

    def lr(self, i: int) -> float:
        mu1, mu2, mu3 = self.stage_rates
        if self.method == "joint":
            # from-scratch joint training runs at the single-network rate
            return mu1
        return {"beamnet": mu1, "allocationnet": mu2, "joint": mu3}[self.which(i)]


HISTORY_COLUMNS = ("iteration", "stage", "which", "rate_term", "qos_term", "reg_term", "total",
                   "val_loss")


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    boundaries: tuple[int, ...] = ()

    def append(self, **record):
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    @property
    def val_records(self) -> list[dict]:
        return [r for r in self.records if r.get("val_loss") is not None]

    def val_curve(self) -> tuple[np.ndarray, np.ndarray]:
        recs = self.val_records
        return (np.array([r["iteration"] for r in recs]),
                np.array([r["val_loss"] for r in recs], dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for r in self.records:
            row = []
            for col in HISTORY_COLUMNS:
                v = r.get(col)
                row.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source: str = "<history>") -> "TrainHistory":
        lines = text.splitlines()
        if not lines or tuple(lines[0].split(",")) != HISTORY_COLUMNS:
            raise ResultParseError(f"{source}:1: expected header {','.join(HISTORY_COLUMNS)}")
        hist = cls()
        for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
            if len(row) != len(HISTORY_COLUMNS):
                raise ResultParseError(f"{source}:{lineno}: expected {len(HISTORY_COLUMNS)} fields")
            try:
                rec = {
                    "iteration": int(row[0]),
                    "stage": int(row[1]),
                    "which": row[2],
                    "rate_term": float(row[3]),
                    "qos_term": float(row[4]),
                    "reg_term": float(row[5]),
                    "total": float(row[6]),
                    "val_loss": float(row[7]) if row[7] else None,
                }
            except ValueError as exc:
                raise ResultParseError(f"{source}:{lineno}: {exc}") from None
            hist.records.append(rec)
        return hist


@dataclass
class EvalMetrics:
    mean_sum_rate: float  # Mbps
    per_user_rates: np.ndarray  # (n_realizations, K), Mbps
    rate_5pct: float  # Mbps
    qos_satisfaction: float
    inference_latency_ms: float | None = None

    def row(self) -> dict:
        return {
            "mean_sum_rate_mbps": self.mean_sum_rate,
            "rate_5pct_mbps": self.rate_5pct,
            "qos_fraction": self.qos_satisfaction,
            "latency_ms": self.inference_latency_ms,
        }


def smoothed(values, window: int = 50) -> np.ndarray:
    """Trailing moving average (shorter window at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def forward_loss(model: JointModel, hd, hr, cfg: ScenarioConfig, mode: str = "soft",
                 generator: torch.Generator | None = None) -> LossBreakdown:
    """One pipeline pass over a batch, returning the loss with its graph."""
    theta, alloc, h_eff = model(hd, hr, mode, generator)
    sol = solve_beamforming(h_eff, alloc, cfg)
    report = compute_rates(h_eff, alloc, sol, cfg, snr=cfg.soft_snr if mode == "soft" else "serving")
    return batch_loss(report, list(model.parameters()), cfg)


def train_step(model: JointModel, optimizer: torch.optim.Optimizer | None, hd, hr, which: str,
               cfg: ScenarioConfig, generator: torch.Generator | None = None) -> dict[str, float]:
    """Forward, backward and one optimizer update of the ``which`` sub-network.

    The optimizer must only hold the parameters of ``which``; the other
    sub-network has gradients disabled for the step and is left untouched.
    ``optimizer=None`` only evaluates the loss.
    """
    if which not in WHICH:
        raise ValueError(f"which must be one of {WHICH}")
    groups = model.parameter_groups()
    frozen = {"beamnet": groups["allocationnet"], "allocationnet": groups["beamnet"]}.get(which, [])
    for p in model.parameters():
        p.requires_grad_(True)
    for p in frozen:
        p.requires_grad_(False)
    try:
        if optimizer is None:
            # nothing to update (e.g. BeamNet stages without an RIS)
            with torch.no_grad():
                return forward_loss(model, hd, hr, cfg, "soft", generator).as_floats()
        optimizer.zero_grad(set_to_none=True)
        try:
            loss = forward_loss(model, hd, hr, cfg, "soft", generator)
        except NoSignalError:
            # NaN weights make every gain NaN before a loss exists
            bad = [name for name, p in model.named_parameters() if not torch.all(torch.isfinite(p))]
            if not bad:
                raise
            raise NonFiniteLossError(f"non-finite parameters while updating {which}",
                                     snapshot={"which": which, "parameters": bad}) from None
        if not torch.isfinite(loss.total):
            raise NonFiniteLossError(
                f"non-finite loss while updating {which}",
                snapshot={"which": which, **{k: float(v) for k, v in loss.as_floats().items()}},
            )
        loss.total.backward()
        optimizer.step()
    finally:
        for p in frozen:
            p.requires_grad_(True)
    return loss.as_floats()


def validation_loss(model: JointModel, hd, hr, cfg: ScenarioConfig) -> float:
    """Loss of the deployable (hard, noise-free) decisions, batch norm in eval mode."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            loss = forward_loss(model, torch.as_tensor(hd), torch.as_tensor(hr), cfg, "hard")
    finally:
        model.train(was_training)
    return float(loss.total)


def _make_optimizer(model: JointModel, which: str, lr: float):
    groups = model.parameter_groups()
    params = groups["beamnet"] + groups["allocationnet"] if which == "joint" else groups[which]
    if not params:
        return None
    return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8)


def phased_train(model: JointModel, train_set, val_set, cfg: ScenarioConfig, seed: int,
                 method: str = "phased",
                 on_stage_end: Callable[[int, int], None] | None = None,
                 log_every: int = 0) -> TrainHistory:
    """Run the five-stage schedule (or plain joint training) for ``N5`` iterations.

    Parameters
    ----------
    model : JointModel
        Updated in place.
    train_set, val_set : tuple of arrays
        ``(hd_f, hr_f)`` with a leading realization axis.
    seed : int
        Drives mini-batch sampling and the Gumbel noise.
    on_stage_end : callable, optional
        Called as ``on_stage_end(stage, iteration)`` after each stage's last
        iteration, e.g. to write checkpoints.
    """
    hd_tr, hr_tr = (torch.as_tensor(a) for a in train_set)
    hd_va, hr_va = (np.asarray(a) for a in val_set)
    n_train = hd_tr.shape[0]
    if n_train == 0 or hd_va.shape[0] == 0:
        raise ValueError("training and validation sets must be nonempty")
    schedule = TrainSchedule.from_config(cfg, method)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(int(seed))
    history = TrainHistory(boundaries=schedule.boundaries if method == "phased" else ())
    model.train()

    optimizer, current = None, None
    for i in range(1, schedule.total + 1):
        stage, which = schedule.stage(i), schedule.which(i)
        if (stage, which) != current:
            # fresh optimizer state at every stage boundary
            optimizer = _make_optimizer(model, which, schedule.lr(i))
            current = (stage, which)
        idx = torch.as_tensor(rng.integers(0, n_train, size=cfg.B))
        terms = train_step(model, optimizer, hd_tr[idx], hr_tr[idx], which, cfg, gen)
        val = None
        if i % cfg.val_every == 0 or i == schedule.total:
            val = validation_loss(model, hd_va, hr_va, cfg)
        history.append(iteration=i, stage=stage, which=which, val_loss=val, **terms)
        if log_every and i % log_every == 0:
            logger.info("iter %d stage %d %s loss %.4f val %s", i, stage, which, terms["total"], val)
        if on_stage_end is not None and method == "phased" and (
                i in schedule.boundaries):
            on_stage_end(stage, i)
    if on_stage_end is not None and method == "joint":
        on_stage_end(5, schedule.total)
    return history


def metrics_from_rates(per_user_bits: np.ndarray, cfg: ScenarioConfig,
                       latency_ms: float | None = None) -> EvalMetrics:
    """Aggregate ``(n_realizations, K)`` rates in bits/s into :class:`EvalMetrics`."""
    rates = np.asarray(per_user_bits, dtype=float)
    if rates.ndim == 1:
        rates = rates[None]
    mbps = rates / 1e6
    sums = mbps.sum(axis=1)
    # fsum is exact, so the mean does not depend on realization order
    mean_sum = math.fsum(sums.tolist()) / len(sums)
    pooled = np.sort(mbps.ravel())
    p5 = float(np.percentile(pooled, 5, method="inverted_cdf"))
    qos = float(np.count_nonzero(rates >= cfg.R_qos)) / rates.size
    return EvalMetrics(mean_sum, mbps, p5, qos, latency_ms)


def measure_latency(model: JointModel, hd, hr, cfg: ScenarioConfig, repeats: int = 20) -> float:
    """Mean wall-clock milliseconds of one single-realization decision pipeline."""
    n = min(repeats, hd.shape[0])
    model_decide(model, hd[:1], hr[:1], cfg)  # warm-up
    start = time.perf_counter()
    for j in range(n):
        model_decide(model, hd[j:j + 1], hr[j:j + 1], cfg)
    return (time.perf_counter() - start) * 1e3 / n


def evaluate(model: JointModel, hd, hr, cfg: ScenarioConfig, timing: bool = False) -> EvalMetrics:
    """Hard-mode (quantized phases, argmax allocation, no noise) evaluation."""
    _, report = model_decide(model, np.asarray(hd), np.asarray(hr), cfg, "hard")
    latency = measure_latency(model, hd, hr, cfg) if timing else None
    return metrics_from_rates(report.per_user, cfg, latency)
