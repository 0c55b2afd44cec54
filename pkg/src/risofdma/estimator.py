"""Scikit-learn style estimator wrapping the joint BeamNet/AllocationNet model."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channel_batch, check_config, check_random_state
from .exceptions import MissingCheckpointError, ValidationError
from .networks import PHASE_MODES, ArchitectureDescriptor, JointModel
from .pipeline import model_decide
from .scenario import ScenarioConfig, load_config
from .training import METHODS, TrainHistory, evaluate, phased_train

__all__ = ["JointAllocator", "feature_scales", "build_model"]

CHECKPOINT_VERSION = 1


def feature_scales(hd, hr) -> tuple[float, float, float]:
    """RMS magnitudes of the direct, per-element cascaded and effective channels."""
    ds = float(np.sqrt(np.mean(np.abs(hd) ** 2)))
    cs = float(np.sqrt(np.mean(np.abs(hr) ** 2))) if hr.size else 0.0
    M = hr.shape[-2]
    ds = ds if ds > 0 else 1.0
    cs = cs if cs > 0 else 1.0
    return ds, cs, math.sqrt(ds ** 2 + M * cs ** 2)


def build_model(cfg: ScenarioConfig, phase_mode: str, seed: int) -> JointModel:
    """Freshly initialized model; the global torch RNG is left untouched."""
    desc = ArchitectureDescriptor.from_config(cfg, phase_mode)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return JointModel(desc, cfg.beta_q, cfg.tau)


class JointAllocator(BaseEstimator):
    """Learned RIS phases and resource-block allocation for a MISO-OFDMA downlink.

    Parameters
    ----------
    config : ScenarioConfig, dict or YAML text, optional
        Scenario, loss and schedule settings. Defaults to
        ``ScenarioConfig()``.
    method : {'phased', 'joint'}
        Five-stage alternating schedule or joint training from scratch for
        the same number of iterations.
    phase_mode : {'discrete', 'continuous'}
        1-bit phases through the quantizer, or unquantized phases.
    random_state : int
        Seeds weight initialization, mini-batch sampling and Gumbel noise.

    Attributes
    ----------
    model_ : JointModel
    history_ : TrainHistory
    n_iter_ : int
    config_ : ScenarioConfig
    """

    def __init__(self, config=None, method: str = "phased", phase_mode: str = "discrete",
                 random_state: int = 0):
        self.config = config
        self.method = method
        self.phase_mode = phase_mode
        self.random_state = random_state

    def _validate_params(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.phase_mode not in PHASE_MODES:
            raise ValueError(f"phase_mode must be one of {PHASE_MODES}, got {self.phase_mode!r}")
        return check_config(self.config), check_random_state(self.random_state)

    def fit(self, X, y=None, X_val=None, checkpoint_dir=None):
        """Train on a batch of frequency-domain channels.

        Parameters
        ----------
        X : channel batch
            See :func:`risofdma._validation.check_channel_batch`.
        y : ignored
            Training is unsupervised.
        X_val : channel batch, optional
            Validation channels. When omitted the last 2% of ``X`` (at least
            one realization) is held out.
        checkpoint_dir : path, optional
            Write ``stage{s}.pt`` at every stage boundary.
        """
        cfg, seed = self._validate_params()
        hd, hr = check_channel_batch(X, cfg)
        if X_val is None:
            n_val = max(1, int(math.ceil(0.02 * hd.shape[0])))
            if hd.shape[0] <= n_val:
                raise ValueError("need at least two realizations to hold out validation data")
            hd, hr, hd_va, hr_va = hd[:-n_val], hr[:-n_val], hd[-n_val:], hr[-n_val:]
        else:
            hd_va, hr_va = check_channel_batch(X_val, cfg)

        self.__dict__.pop("history_", None)
        self.config_ = cfg
        self.model_ = build_model(cfg, self.phase_mode, seed)
        self.model_.set_scales(*feature_scales(hd, hr))
        self.stage_ = 0

        def on_stage_end(stage, iteration):
            self.stage_ = stage
            if checkpoint_dir is not None:
                self.save(Path(checkpoint_dir) / f"stage{stage}.pt")

        self.history_ = phased_train(self.model_, (hd, hr), (hd_va, hr_va), cfg, seed,
                                     method=self.method, on_stage_end=on_stage_end)
        self.stage_ = 5
        self.n_iter_ = cfg.N5
        return self

    def predict(self, X):
        """Hard-mode decisions ``(theta, alloc, w)`` for every realization."""
        check_is_fitted(self, "model_")
        hd, hr = check_channel_batch(X, self.config_)
        return model_decide(self.model_, hd, hr, self.config_)[0]

    def predict_rates(self, X) -> np.ndarray:
        """Per-user rates in bits/s, shape ``(n, K)``."""
        check_is_fitted(self, "model_")
        hd, hr = check_channel_batch(X, self.config_)
        return model_decide(self.model_, hd, hr, self.config_)[1].per_user

    def evaluate(self, X, timing: bool = False):
        check_is_fitted(self, "model_")
        hd, hr = check_channel_batch(X, self.config_)
        return evaluate(self.model_, hd, hr, self.config_, timing=timing)

    def score(self, X, y=None) -> float:
        """Mean sum rate in Mbps of the hard decisions."""
        return self.evaluate(X).mean_sum_rate

    # persistence

    def save(self, path) -> Path:
        check_is_fitted(self, "model_")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "version": CHECKPOINT_VERSION,
            "descriptor": self.model_.desc.to_dict(),
            "state_dict": self.model_.state_dict(),
            "config": self.config_.to_dict(),
            "config_hash": self.config_.config_hash(),
            "params": self.get_params(deep=False) | {"config": None},
            "stage": getattr(self, "stage_", 5),
            "history": self.history_.to_csv() if hasattr(self, "history_") else None,
        }
        tmp = path.with_name(path.name + ".tmp")
        torch.save(payload, tmp)
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path) -> "JointAllocator":
        path = Path(path)
        if not path.exists():
            raise MissingCheckpointError(f"no checkpoint at {path}")
        payload = torch.load(path, map_location="cpu", weights_only=False)
        cfg = load_config(payload["config"])
        if cfg.config_hash() != payload["config_hash"]:
            raise ValidationError(f"checkpoint {path} config hash mismatch")
        params = dict(payload["params"], config=cfg)
        est = cls(**params)
        desc = ArchitectureDescriptor(**payload["descriptor"])
        model = JointModel(desc, cfg.beta_q, cfg.tau)
        model.load_state_dict(payload["state_dict"])
        est.config_, est.model_, est.stage_ = cfg, model, payload["stage"]
        est.n_iter_ = cfg.boundaries[payload["stage"] - 1] if payload["stage"] else 0
        if payload.get("history"):
            est.history_ = TrainHistory.from_csv(payload["history"], str(path))
            est.history_.boundaries = cfg.boundaries if est.method == "phased" else ()
        return est
