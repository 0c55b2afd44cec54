"""Scenario configuration, user geometry and large-scale path gains.

All dB/dBm quantities are kept as given in the configuration; the linear
equivalents used by the simulator are exposed as properties of
:class:`ScenarioConfig`.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

from .exceptions import ConfigError, ValidationError

__all__ = [
    "ScenarioConfig",
    "Geometry",
    "load_config",
    "dump_config",
    "desk_scale_config",
    "sample_geometry",
    "path_gain",
    "anchor_positions",
]

ANNULUS_CENTERS = ("ris", "origin")
SOFT_SNR_MODES = ("own", "serving")


@dataclass(frozen=True)
class ScenarioConfig:
    """System, channel, geometry and training hyperparameters for one drop.

    Defaults reproduce the reference three-user setting. Units: ``W`` in Hz,
    ``noise_psd`` in dBm/Hz, ``P_max`` in dBm, ``R_qos`` in bits/s, Rician
    factors and ``beta0`` in dB, distances in metres.
    """

    # system dimensions
    N_t: int = 4
    K: int = 3
    M: int = 64
    N: int = 16
    Q: int = 6
    L0: int = 4
    L1: int = 2
    L2: int = 3
    # radio
    W: float = 180e3
    noise_psd: float = -174.0
    P_max: float = 10.0
    R_qos: float = 2e6
    k_BR: float = 2.0
    k_RU: float = 4.0
    beta0: float = -30.0
    d0: float = 1.0
    xi0: float = 3.8
    xi1: float = 2.2
    xi2: float = 2.4
    tap_decay_db: float = 0.0
    # geometry
    D1: float = 130.0
    D2: float = 150.0
    R_inner: float = 10.0
    D3: float = 3.0
    annulus_center: str = "ris"
    # relaxation / loss
    lambda1: float = 5.0
    lambda2: float = 5e-5
    tau: float = 0.5
    beta_q: float = 100.0
    soft_snr: str = "own"
    # training schedule
    mu1: float = 1e-3
    mu2: float = 1e-3
    mu3: float = 5e-4
    N1: int = 2500
    N2: int = 5000
    N3: int = 7000
    N4: int = 9000
    N5: int = 15000
    B: int = 32
    val_every: int = 100
    # architecture descriptor
    conv_channels: int = 32
    deep_channels: int = 64
    fc_width: int = 512
    se_reduction: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("N_t", "K", "N", "Q", "L0", "L1", "L2", "B", "val_every",
                     "conv_channels", "deep_channels", "fc_width", "se_reduction"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        # M = 0 is the no-RIS system
        if self.M < 0:
            raise ValidationError(f"M must be >= 0, got {self.M}")
        if self.L > self.N:
            raise ValidationError(
                f"max(L0, L1+L2-1) = {self.L} exceeds the subcarrier count N = {self.N}")
        for name in ("W", "R_qos", "tau", "beta_q", "d0"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive, got {getattr(self, name)}")
        for name in ("lambda1", "lambda2", "mu1", "mu2", "mu3", "R_inner", "D3"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not np.isfinite(self.P_max):
            raise ValidationError("P_max must be finite")
        bounds = self.boundaries
        if any(b <= a for a, b in zip(bounds, bounds[1:])) or bounds[0] < 1:
            raise ValidationError(f"stage boundaries must satisfy 1 <= N1 < ... < N5, got {bounds}")
        if self.annulus_center not in ANNULUS_CENTERS:
            raise ValidationError(f"annulus_center must be one of {ANNULUS_CENTERS}")
        if self.soft_snr not in SOFT_SNR_MODES:
            raise ValidationError(f"soft_snr must be one of {SOFT_SNR_MODES}")
        if self.R_inner + self.D3 <= 0:
            raise ValidationError("outer user radius must be positive")

    # --- derived quantities -------------------------------------------------
    @property
    def L(self) -> int:
        return max(self.L0, self.L1 + self.L2 - 1)

    @property
    def boundaries(self) -> tuple[int, int, int, int, int]:
        return (self.N1, self.N2, self.N3, self.N4, self.N5)

    @property
    def p_max_mw(self) -> float:
        return 10.0 ** (self.P_max / 10.0)

    @property
    def noise_power(self) -> float:
        """Noise power per subcarrier in mW."""
        return 10.0 ** (self.noise_psd / 10.0) * self.W

    @property
    def beta0_linear(self) -> float:
        return 10.0 ** (self.beta0 / 10.0)

    @property
    def k_br_linear(self) -> float:
        return 10.0 ** (self.k_BR / 10.0)

    @property
    def k_ru_linear(self) -> float:
        return 10.0 ** (self.k_RU / 10.0)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Short content hash of the resolved configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def channel_hash(self) -> str:
        """Hash of only the keys that shape the channel arrays.

        Datasets are tagged with this so that changing, say, a learning
        rate does not orphan an existing dataset.
        """
        keys = ("N_t", "K", "M", "N")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}


def _coerce(name: str, value: Any) -> Any:
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: cannot interpret {value!r} as {kind}") from None


def load_config(text: str | Mapping[str, Any] | None = None, strict: bool = False) -> ScenarioConfig:
    """Parse a flat key/value YAML (or JSON) document into a validated config.

    Parameters
    ----------
    text : str or mapping, optional
        Document text, or an already-parsed mapping. Empty means all defaults.
    strict : bool
        Require every key to be present (used when re-reading a resolved
        config written next to run artifacts).
    """
    if text is None:
        doc: Any = {}
    elif isinstance(text, Mapping):
        doc = dict(text)
    else:
        doc = yaml.safe_load(text) or {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a flat mapping")
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {', '.join(unknown)}")
    if strict:
        for name in _FIELDS:
            if name not in doc:
                raise ConfigError(f"missing configuration key: {name}")
    values = {}
    for name, value in doc.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{name}: nested values are not allowed in a flat config")
        values[name] = _coerce(name, value)
    return ScenarioConfig(**values)


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize every key of ``cfg`` (the fully resolved form)."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def desk_scale_config(**overrides) -> ScenarioConfig:
    """The scaled-down profile used for laptop-sized training runs.

    The QoS threshold keeps the default's ratio to the per-user share of
    subcarriers (2 Mbps at 16 subcarriers over 3 users becomes 0.75 Mbps at
    4 over 2), so the constraint binds for some users and not others.
    """
    base = dict(M=8, N=4, K=2, Q=2, N1=50, N2=100, N3=140, N4=180, N5=300, val_every=2,
                R_qos=0.75e6)
    base.update(overrides)
    return ScenarioConfig(**base)


def anchor_positions(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """BS and RIS coordinates."""
    return np.array([cfg.D1, 0.0]), np.array([0.0, cfg.D2])


@dataclass(frozen=True)
class Geometry:
    user_positions: np.ndarray  # (K, 2)
    d_direct: np.ndarray  # (K,)
    d_br: float
    d_ru: np.ndarray  # (K,)
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.user_positions - self.center, axis=1)


def sample_geometry(cfg: ScenarioConfig, rng: np.random.Generator) -> Geometry:
    """Drop ``cfg.K`` users uniformly over a quarter annulus.

    The BS sits at ``(D1, 0)`` and the RIS at ``(0, D2)``. The annulus is
    centred on the RIS (default) or on the origin, and the quarter used is
    the one facing the other anchor, so users lie between the two.
    """
    bs, ris = anchor_positions(cfg)
    if cfg.annulus_center == "ris":
        center = ris
        angle_lo = -np.pi / 2  # quadrant x >= 0, y <= D2
    else:
        center = np.zeros(2)
        angle_lo = 0.0  # first quadrant
    r_in, r_out = cfg.R_inner, cfg.R_inner + cfg.D3
    u = rng.random(cfg.K)
    ang = angle_lo + (np.pi / 2) * rng.random(cfg.K)
    if cfg.D3 == 0:
        radius = np.full(cfg.K, r_in)
    else:
        radius = np.sqrt(r_in ** 2 + u * (r_out ** 2 - r_in ** 2))
    pos = center + radius[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    d_direct = np.linalg.norm(pos - bs, axis=1)
    d_ru = np.linalg.norm(pos - ris, axis=1)
    d_br = float(np.linalg.norm(bs - ris))
    if np.any(d_direct <= 0) or np.any(d_ru <= 0):
        raise ValidationError("a user landed on the BS or the RIS; adjust the geometry")
    return Geometry(pos, d_direct, d_br, d_ru, center)


def path_gain(d, xi: float, cfg: ScenarioConfig):
    """Large-scale power gain ``beta0 * (d / d0) ** -xi`` (linear).

    Works elementwise on arrays. Raises ``ValidationError`` for ``d <= 0``.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValidationError("path_gain requires strictly positive distances")
    out = cfg.beta0_linear * (d_arr / cfg.d0) ** (-xi)
    return float(out) if out.ndim == 0 else out
