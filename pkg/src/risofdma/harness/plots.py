"""Figures for sweep results and training histories (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..exceptions import ResultParseError  # noqa: E402
from ..training import TrainHistory, smoothed  # noqa: E402
from .experiments import ExperimentResult  # noqa: E402

__all__ = ["plot_sweep", "plot_histories", "emit_plots", "AXIS_LABELS"]

AXIS_LABELS = {
    "P_max": "Transmit power $P_{max}$ (dBm)",
    "M": "RIS elements $M$",
    "rician": "Rician factor (dB)",
    "taps": "Delay taps $L_0/L_1/L_2$",
    "geometry": "Inner user radius $R$ (m)",
    "lambda1": r"QoS penalty weight $\lambda_1$",
}
# fixed style per scheme so figures look the same run to run
_STYLE = {
    "discrete": ("C0", "o", "-"),
    "continuous": ("C1", "s", "-"),
    "random_ris": ("C2", "^", "--"),
    "random_allocation": ("C3", "v", "--"),
    "without_ris": ("C4", "x", ":"),
    "fixed_allocation": ("C5", "d", "-."),
    "oracle": ("k", "*", "-"),
}
_RC = {"figure.figsize": (6.0, 4.2), "font.size": 10, "axes.grid": True, "savefig.dpi": 120,
       "svg.hashsalt": "risofdma", "path.simplify": False}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {".png": {"Software": None}, ".svg": {"Date": None},
            ".pdf": {"CreationDate": None}}.get(path.suffix, {})
    fig.savefig(path, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_sweep(result: ExperimentResult, path, schemes: Sequence[str] | None = None) -> Path:
    """Mean sum rate against the sweep axis, one curve per scheme."""
    schemes = list(result.schemes if schemes is None else schemes)
    if not schemes:
        raise ValueError("no schemes to plot")
    categorical = result.axis == "taps"
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for scheme in schemes:
            xs, ys = result.series(scheme)
            if not xs:
                raise ValueError(f"result has no rows for scheme {scheme!r}")
            color, marker, ls = _STYLE.get(scheme, ("C7", ".", "-"))
            xpos = [result.values.index(x) for x in xs] if categorical else xs
            ax.plot(xpos, ys, color=color, marker=marker, linestyle=ls, label=scheme)
        if categorical:
            ax.set_xticks(range(len(result.values)), [str(v) for v in result.values])
        ax.set_xlabel(AXIS_LABELS.get(result.axis, result.axis))
        ax.set_ylabel("Sum rate (Mbps)")
        ax.legend()
        return _save(fig, path)


def plot_histories(histories: Mapping[str, TrainHistory], path, window: int = 50) -> Path:
    """Smoothed validation loss per variant, with stage boundaries marked."""
    if not histories:
        raise ValueError("no training histories to plot")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        marked = set()
        for i, (label, hist) in enumerate(histories.items()):
            it, val = hist.val_curve()
            if len(it) == 0:
                it, val = hist.column("iteration"), hist.column("total")
            ax.plot(it, smoothed(val, window), color=f"C{i}", label=label)
            for b in hist.boundaries[:4]:
                if b not in marked:
                    ax.axvline(b, color="0.6", linestyle=":", linewidth=1)
                    marked.add(b)
        ax.set_xlabel("Iteration")
        ax.set_ylabel("Validation loss (smoothed)")
        ax.legend()
        return _save(fig, path)


def _read_history(path: Path) -> TrainHistory:
    hist = TrainHistory.from_csv(path.read_text(), str(path))
    stages = hist.column("stage")
    its = hist.column("iteration")
    # boundaries are the last iteration of each of stages 1-4
    hist.boundaries = tuple(int(its[stages == s].max()) for s in range(1, 5) if np.any(stages == s))
    return hist


def emit_plots(inputs: Sequence, out_dir, fmt: str = "png") -> list[Path]:
    """Render every input file.

    ``result.json`` files become sweep figures; training-history CSV files
    (``history.csv``) are drawn together in one loss-curve figure.
    """
    if not inputs:
        raise ValueError("no input files")
    out_dir = Path(out_dir)
    outputs, histories = [], {}
    for raw in inputs:
        path = Path(raw)
        if not path.exists():
            raise FileNotFoundError(path)
        text = path.read_text()
        if path.suffix == ".json":
            result = ExperimentResult.from_json(text, str(path))
            stem = path.parent.name or path.stem
            outputs.append(plot_sweep(result, out_dir / f"sweep_{result.axis}_{stem}.{fmt}"))
        elif path.suffix == ".csv" and text.startswith("iteration,"):
            histories[str(path.parent.name or path.stem)] = _read_history(path)
        else:
            raise ResultParseError(f"{path}:1: unrecognized result file")
    if histories:
        outputs.append(plot_histories(histories, out_dir / f"loss_curves.{fmt}"))
    return outputs
