"""Input checks shared by the estimator, baselines and harness."""
from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from .channel import FrequencyChannel
from .exceptions import DimensionError
from .scenario import ScenarioConfig

__all__ = ["check_channel_batch", "check_config", "check_random_state"]


def check_channel_batch(X, cfg: ScenarioConfig | None = None, *, allow_empty: bool = False):
    """Normalize a batch of frequency channels to ``(hd_f, hr_f)`` arrays.

    Accepts a :class:`FrequencyChannel`, a sequence of them, a tuple
    ``(hd_f, hr_f)`` of batched arrays, a mapping with ``hd_f``/``hr_f``
    keys, or any object exposing ``hd_f`` and ``hr_f`` attributes (such as
    a stored dataset).

    Returns complex128 arrays of shape ``(n, N, K, N_t)`` and
    ``(n, N, K, M, N_t)``.
    """
    if isinstance(X, FrequencyChannel):
        hd, hr = X.hd_f[None], X.hr_f[None]
    elif isinstance(X, Mapping):
        try:
            hd, hr = X["hd_f"], X["hr_f"]
        except KeyError as exc:
            raise TypeError(f"channel mapping is missing {exc.args[0]!r}") from None
    elif isinstance(X, tuple) and len(X) == 2 and not isinstance(X[0], FrequencyChannel):
        hd, hr = X
    elif hasattr(X, "hd_f") and hasattr(X, "hr_f"):
        hd, hr = X.hd_f, X.hr_f
    elif isinstance(X, Sequence):
        if len(X) == 0:
            raise ValueError("empty channel batch")
        if not all(isinstance(c, FrequencyChannel) for c in X):
            raise TypeError("sequence elements must be FrequencyChannel instances")
        hd = np.stack([c.hd_f for c in X])
        hr = np.stack([c.hr_f for c in X])
    else:
        raise TypeError(f"cannot interpret {type(X).__name__} as a channel batch")

    hd = np.asarray(hd, dtype=np.complex128)
    hr = np.asarray(hr, dtype=np.complex128)
    if hd.ndim != 4 or hr.ndim != 5:
        raise DimensionError(
            f"expected hd_f (n, N, K, N_t) and hr_f (n, N, K, M, N_t), got {hd.shape} and {hr.shape}")
    if hr.shape[:3] != hd.shape[:3] or hr.shape[-1] != hd.shape[-1]:
        raise DimensionError(f"inconsistent channel shapes {hd.shape} and {hr.shape}")
    if hd.shape[0] == 0 and not allow_empty:
        raise ValueError("empty channel batch")
    if not (np.all(np.isfinite(hd)) and np.all(np.isfinite(hr))):
        raise ValueError("channels contain NaN or inf")
    if cfg is not None:
        want = (cfg.N, cfg.K, cfg.N_t)
        got = (hd.shape[1], hd.shape[2], hd.shape[3])
        if got != want:
            raise DimensionError(f"channels have (N, K, N_t) = {got}, config expects {want}")
        if hr.shape[3] not in (cfg.M, 0):
            raise DimensionError(f"channels have M = {hr.shape[3]}, config expects {cfg.M}")
    return hd, hr


def check_config(config) -> ScenarioConfig:
    from .scenario import load_config

    if config is None:
        return ScenarioConfig()
    if isinstance(config, ScenarioConfig):
        return config
    if isinstance(config, (Mapping, str)):
        return load_config(config)
    raise TypeError(f"config must be a ScenarioConfig, mapping or YAML text, got {type(config).__name__}")


def check_random_state(seed) -> int:
    """Integer seed for the training run; ``None`` means 0."""
    if seed is None:
        return 0
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError("random_state must be an int")
    if seed < 0:
        raise ValueError("random_state must be nonnegative")
    return int(seed)
