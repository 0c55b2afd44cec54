"""Parameter sweeps over trained checkpoints and reference schemes.

A sweep evaluates every requested scheme at every axis value on one shared
set of channel realizations per value, and writes

* ``metrics.csv``: one row per (scheme, value), fixed column order,
  floats written with ``repr`` so the table parses back exactly;
* ``result.json``: the same rows plus the config, seed, dataset hashes and
  checkpoints used;
* ``config.yaml``: the resolved base config.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..baselines import BASELINE_KINDS, exhaustive_oracle, run_baseline
from ..exceptions import DimensionError, MissingCheckpointError, ResultParseError
from ..pipeline import model_decide
from ..scenario import ScenarioConfig, dump_config
from ..training import EvalMetrics, metrics_from_rates
from .dataset import Dataset, atomic_write_bytes, sample_dataset

__all__ = [
    "SWEEP_AXES",
    "LEARNED_SCHEMES",
    "SCHEMES",
    "METRIC_COLUMNS",
    "MetricRow",
    "ExperimentResult",
    "OracleCache",
    "axis_config",
    "parse_axis_value",
    "parse_metrics_csv",
    "run_experiment",
    "training_command",
]

logger = logging.getLogger(__name__)

SWEEP_AXES = ("P_max", "M", "rician", "taps", "geometry", "lambda1")
# axes whose values change the channel statistics, so each value gets its own draw
_CHANNEL_AXES = ("rician", "taps", "geometry")
LEARNED_SCHEMES = ("discrete", "continuous")
SCHEMES = LEARNED_SCHEMES + BASELINE_KINDS + ("oracle",)
METRIC_COLUMNS = ("scheme", "axis", "mean_sum_rate_mbps", "rate_5pct_mbps", "qos_fraction",
                  "latency_ms")


def parse_axis_value(axis: str, value):
    """Canonical form of a sweep value: ``int`` for ``M``, ``str`` for taps, else ``float``."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    if axis == "M":
        v = float(value)
        if not v.is_integer():
            raise ValueError(f"M must be an integer, got {value!r}")
        return int(v)
    if axis == "taps":
        parts = str(value).split("/")
        if len(parts) not in (1, 3) or not all(p.strip().isdigit() for p in parts):
            raise ValueError(f"taps value must be 'L0' or 'L0/L1/L2', got {value!r}")
        return "/".join(p.strip() for p in parts)
    return float(value)


def axis_config(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """``cfg`` with the sweep axis set to ``value``."""
    value = parse_axis_value(axis, value)
    if axis == "P_max":
        return cfg.replace(P_max=value)
    if axis == "M":
        return cfg.replace(M=value)
    if axis == "rician":
        return cfg.replace(k_BR=value, k_RU=value)
    if axis == "taps":
        taps = [int(p) for p in value.split("/")]
        if len(taps) == 1:
            return cfg.replace(L0=taps[0])
        return cfg.replace(L0=taps[0], L1=taps[1], L2=taps[2])
    if axis == "geometry":
        return cfg.replace(R_inner=value)
    return cfg.replace(lambda1=value)


@dataclass(frozen=True)
class MetricRow:
    scheme: str
    axis: float | int | str
    mean_sum_rate_mbps: float
    rate_5pct_mbps: float
    qos_fraction: float
    latency_ms: float | None = None

    @classmethod
    def from_metrics(cls, scheme: str, value, m: EvalMetrics) -> "MetricRow":
        return cls(scheme, value, float(m.mean_sum_rate), float(m.rate_5pct),
                   float(m.qos_satisfaction), m.inference_latency_ms)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_metrics_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in METRIC_COLUMNS])
    return buf.getvalue()


def parse_metrics_csv(text: str, axis: str, source: str = "metrics.csv") -> list[MetricRow]:
    """Inverse of the metric table writer; errors carry ``source:line``."""
    lines = text.splitlines()
    if not lines or tuple(next(csv.reader(lines[:1]))) != METRIC_COLUMNS:
        raise ResultParseError(f"{source}:1: expected header {','.join(METRIC_COLUMNS)}")
    rows = []
    for lineno, fields in enumerate(csv.reader(lines[1:]), start=2):
        if not fields:
            continue
        if len(fields) != len(METRIC_COLUMNS):
            raise ResultParseError(
                f"{source}:{lineno}: expected {len(METRIC_COLUMNS)} fields, got {len(fields)}")
        try:
            rows.append(MetricRow(
                scheme=fields[0],
                axis=parse_axis_value(axis, fields[1]),
                mean_sum_rate_mbps=float(fields[2]),
                rate_5pct_mbps=float(fields[3]),
                qos_fraction=float(fields[4]),
                latency_ms=float(fields[5]) if fields[5] else None,
            ))
        except ValueError as exc:
            raise ResultParseError(f"{source}:{lineno}: {exc}") from None
    return rows


@dataclass
class ExperimentResult:
    axis: str
    values: list
    schemes: list[str]
    rows: list[MetricRow]
    config: dict
    seed: int
    dataset_hashes: dict[str, str] = field(default_factory=dict)
    checkpoints: dict[str, str] = field(default_factory=dict)
    n_eval: int = 0

    def to_csv(self) -> str:
        return _write_metrics_csv(self.rows)

    def to_json(self) -> str:
        payload = asdict(self)
        payload["rows"] = [asdict(r) for r in self.rows]
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, source: str = "result.json") -> "ExperimentResult":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ResultParseError(f"{source}:{exc.lineno}: {exc.msg}") from None
        try:
            axis = payload["axis"]
            rows = [MetricRow(**dict(r, axis=parse_axis_value(axis, r["axis"])))
                    for r in payload["rows"]]
            return cls(axis=axis,
                       values=[parse_axis_value(axis, v) for v in payload["values"]],
                       schemes=list(payload["schemes"]), rows=rows, config=payload["config"],
                       seed=payload["seed"], dataset_hashes=payload.get("dataset_hashes", {}),
                       checkpoints=payload.get("checkpoints", {}), n_eval=payload.get("n_eval", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ResultParseError(f"{source}:1: malformed result: {exc!r}") from None

    def series(self, scheme: str) -> tuple[list, np.ndarray]:
        """Axis values and mean sum rates of one scheme, in sweep order."""
        by_value = {r.axis: r.mean_sum_rate_mbps for r in self.rows if r.scheme == scheme}
        xs = [v for v in self.values if v in by_value]
        return xs, np.array([by_value[v] for v in xs])

    def row(self, scheme: str, value) -> MetricRow:
        for r in self.rows:
            if r.scheme == scheme and r.axis == value:
                return r
        raise KeyError((scheme, value))

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        atomic_write_bytes(out_dir / "metrics.csv", self.to_csv().encode())
        atomic_write_bytes(out_dir / "result.json", self.to_json().encode())
        from ..scenario import load_config

        atomic_write_bytes(out_dir / "config.yaml", dump_config(load_config(self.config)).encode())
        return out_dir


class OracleCache:
    """On-disk oracle results keyed by (config hash, realization id)."""

    def __init__(self, root):
        self.root = Path(root)

    def _path(self, cfg_hash: str, realization_id: str) -> Path:
        return self.root / cfg_hash / f"{realization_id}.json"

    def get(self, cfg_hash: str, realization_id: str):
        path = self._path(cfg_hash, realization_id)
        if not path.exists():
            return None
        return np.array(json.loads(path.read_text())["per_user"])

    def put(self, cfg_hash: str, realization_id: str, per_user, theta, alloc):
        payload = {"per_user": [float(x) for x in np.ravel(per_user)],
                   "theta": np.asarray(theta).tolist(), "alloc": np.asarray(alloc).tolist()}
        atomic_write_bytes(self._path(cfg_hash, realization_id),
                           json.dumps(payload, sort_keys=True).encode())


def training_command(cfg_path: str, scheme: str) -> str:
    extra = {"continuous": " --phase-mode continuous",
             "fixed_allocation": " --set Q=1",
             "without_ris": " --set M=0"}.get(scheme, "")
    return f"risofdma train --config {cfg_path}{extra} --out <run-dir>"


def _resolve_checkpoint(checkpoints: Mapping[str, str], key: str, value, cfg_path: str):
    template = checkpoints.get(key)
    if template is None:
        return None
    path = Path(str(template).replace("{value}", str(value)))
    if not path.exists():
        raise MissingCheckpointError(
            f"checkpoint for {key!r} at axis value {value!r} not found: {path}. "
            f"Train it with: {training_command(cfg_path, key)}")
    return path


def _load_model(path):
    from ..estimator import JointAllocator

    return JointAllocator.load(path).model_


def _check_dims(model, cfg: ScenarioConfig, key: str, path, own_Q: bool = False):
    d = model.desc
    want = (cfg.N_t, cfg.K, cfg.N, cfg.M, d.Q if own_Q else cfg.Q)
    got = (d.N_t, d.K, d.N, d.M, d.Q)
    if key == "without_ris":
        want, got = want[:3] + (want[4],), got[:3] + (got[4],)
    if got != want:
        raise DimensionError(
            f"checkpoint {path} for {key!r} was built for (N_t, K, N, M, Q) = {got} but the "
            f"sweep point needs {want}; use a '{{value}}' checkpoint template for this axis")


def _scheme_rng(seed: int, scheme: str) -> np.random.Generator:
    # same draws at every sweep point (common random numbers), so curves
    # differ only through the axis
    return np.random.default_rng([int(seed), zlib.crc32(scheme.encode())])


def _eval_sets(cfg: ScenarioConfig, axis: str, values, n_eval: int, seed: int,
               eval_set: Dataset | None) -> dict:
    if axis in _CHANNEL_AXES:
        if eval_set is not None:
            n_eval, seed = len(eval_set), eval_set.seed
        return {v: sample_dataset(axis_config(cfg, axis, v), n_eval, seed, "test") for v in values}
    if axis == "M":
        top = max(values)
        base = eval_set if eval_set is not None and eval_set.config.M >= top else (
            sample_dataset(cfg.replace(M=top), n_eval if eval_set is None else len(eval_set),
                           seed if eval_set is None else eval_set.seed, "test"))
        return {v: base.with_ris_elements(v) for v in values}
    base = eval_set if eval_set is not None else sample_dataset(cfg, n_eval, seed, "test")
    return {v: base for v in values}


def _evaluate_scheme(scheme, value, ds: Dataset, cfg, checkpoints, cfg_path, seed,
                     models, oracle_cache, timing):
    hd, hr = ds.hd_f, ds.hr_f
    latency = None

    def model_for(key, own_Q=False):
        path = _resolve_checkpoint(checkpoints, key, value, cfg_path)
        if path is None:
            return None, None
        if path not in models:
            models[path] = _load_model(path)
        _check_dims(models[path], cfg, key, path, own_Q)
        return models[path], path

    start = time.perf_counter()
    if scheme in LEARNED_SCHEMES:
        model, path = model_for(scheme)
        if model is None:
            raise MissingCheckpointError(
                f"no checkpoint given for {scheme!r}. Train it with: "
                f"{training_command(cfg_path, scheme)}")
        per_user = model_decide(model, hd, hr, cfg)[1].per_user
        if timing:
            from ..training import measure_latency

            latency = measure_latency(model, hd, hr, cfg)
    elif scheme == "oracle":
        per_user = []
        cfg_hash = cfg.config_hash()
        ds_id = ds.content_hash()[:12]
        for i in range(len(ds)):
            rid = f"{ds_id}-{i}"
            cached = oracle_cache.get(cfg_hash, rid) if oracle_cache else None
            if cached is None:
                res = exhaustive_oracle((hd[i], hr[i]), cfg)
                cached = np.asarray(res.report.per_user)
                if oracle_cache:
                    oracle_cache.put(cfg_hash, rid, cached, res.theta, res.alloc)
            per_user.append(cached)
        per_user = np.stack(per_user)
    else:
        key = {"random_ris": "discrete", "random_allocation": "discrete"}.get(scheme, scheme)
        model, _ = model_for(key, own_Q=scheme == "fixed_allocation")
        if model is None and scheme == "fixed_allocation":
            model, _ = model_for("discrete")
        if model is None and scheme != "without_ris":
            raise MissingCheckpointError(
                f"{scheme!r} reuses the trained 'discrete' checkpoint, which was not given. "
                f"Train it with: {training_command(cfg_path, 'discrete')}")
        per_user = run_baseline(scheme, (hd, hr), model, cfg, _scheme_rng(seed, scheme))[1].per_user
    if timing and latency is None:
        latency = (time.perf_counter() - start) * 1e3 / len(ds)
    return metrics_from_rates(np.asarray(per_user), cfg, latency)


def run_experiment(cfg: ScenarioConfig, axis: str, values: Sequence, schemes: Sequence[str],
                   checkpoints: Mapping[str, str] | None = None, *, n_eval: int = 200,
                   seed: int = 0, eval_set: Dataset | None = None, out_dir=None,
                   oracle_cache: OracleCache | None = None, timing: bool = False,
                   config_path: str = "<config.yaml>") -> ExperimentResult:
    """Evaluate ``schemes`` at each value of ``axis``.

    Parameters
    ----------
    checkpoints : mapping
        Scheme name (``discrete``, ``continuous``, ``without_ris``,
        ``fixed_allocation``) to checkpoint path. A ``{value}`` placeholder
        selects one checkpoint per axis value; without it one checkpoint
        trained at the reference setting is reused across the sweep.
    eval_set : Dataset, optional
        Shared evaluation channels. Axes that change channel statistics
        redraw with the same seed and size at every value.
    timing : bool
        Record per-realization wall-clock latency. Off by default because
        timings are not reproducible.
    """
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    schemes = list(schemes)
    if not schemes:
        raise ValueError("at least one scheme is required")
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
    values = [parse_axis_value(axis, v) for v in values]
    if not values:
        raise ValueError("at least one axis value is required")
    checkpoints = dict(checkpoints or {})

    sets = _eval_sets(cfg, axis, values, n_eval, seed, eval_set)
    models: dict = {}
    rows = []
    for value in values:
        ds = sets[value]
        point_cfg = axis_config(cfg, axis, value)
        for scheme in schemes:
            logger.info("evaluating %s at %s=%s", scheme, axis, value)
            metrics = _evaluate_scheme(scheme, value, ds, point_cfg, checkpoints,
                                       config_path, seed, models, oracle_cache, timing)
            rows.append(MetricRow.from_metrics(scheme, value, metrics))

    result = ExperimentResult(
        axis=axis, values=values, schemes=schemes, rows=rows, config=cfg.to_dict(), seed=int(seed),
        dataset_hashes={str(v): sets[v].content_hash() for v in values},
        checkpoints={k: str(p) for k, p in checkpoints.items()},
        n_eval=len(next(iter(sets.values()))),
    )
    if out_dir is not None:
        result.write(out_dir)
    return result
