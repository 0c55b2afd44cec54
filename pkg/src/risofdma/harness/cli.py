"""Command-line entry point: ``risofdma <subcommand> ...``.

Relative ``--out`` directories are placed under ``$RISOFDMA_OUTPUT_ROOT``
(default ``./runs``). Every output directory receives the resolved
``config.yaml`` and a ``run.json`` with the seed and dataset hashes.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from ..exceptions import RISOFDMAError
from ..scenario import ScenarioConfig, desk_scale_config, dump_config, load_config
from .dataset import atomic_write_bytes, generate_dataset, git_blob_sha1, load_dataset
from .experiments import SCHEMES, SWEEP_AXES, OracleCache, run_experiment

__all__ = ["main", "build_parser", "output_root", "resolve_config"]

OUTPUT_ROOT_ENV = "RISOFDMA_OUTPUT_ROOT"
PROFILES = ("paper", "desk")
DEFAULT_SIZES = {"paper": {"train": 4900, "val": 100, "test": 100},
                 "desk": {"train": 490, "val": 10, "test": 200}}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _out_dir(arg: str) -> Path:
    p = Path(arg)
    return p if p.is_absolute() else output_root() / p


def resolve_config(path: str | None, profile: str = "paper", overrides=()) -> ScenarioConfig:
    """Profile defaults, then the YAML file, then ``--set`` overrides."""
    base = (desk_scale_config() if profile == "desk" else ScenarioConfig()).to_dict()
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(loaded, dict):
            raise RISOFDMAError(f"{path}: expected a mapping of config keys")
        base.update(loaded)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise RISOFDMAError(f"--set expects KEY=VALUE, got {item!r}")
        base[key.strip()] = yaml.safe_load(value)
    return load_config(base)


def _write_run_files(out: Path, cfg: ScenarioConfig, seed: int, datasets: dict[str, str],
                     **extra) -> None:
    atomic_write_bytes(out / "config.yaml", dump_config(cfg).encode())
    info = {"seed": int(seed), "config_hash": cfg.config_hash(), "datasets": datasets, **extra}
    atomic_write_bytes(out / "run.json", (json.dumps(info, indent=2, sort_keys=True) + "\n").encode())


def _file_hash(path: Path) -> str:
    return git_blob_sha1(Path(path).read_bytes())


def _parse_sizes(items) -> dict[str, int]:
    sizes = {}
    for item in items:
        name, sep, n = item.partition("=")
        if not sep:
            raise RISOFDMAError(f"--sizes expects SPLIT=N, got {item!r}")
        try:
            sizes[name] = int(n)
        except ValueError:
            raise RISOFDMAError(f"split size must be an integer, got {item!r}") from None
    return sizes


def _parse_checkpoints(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        scheme, sep, path = item.partition("=")
        if not sep:
            raise RISOFDMAError(f"--checkpoint expects SCHEME=PATH, got {item!r}")
        out[scheme] = path
    return out


# subcommands


def cmd_generate_data(args, cfg):
    out = _out_dir(args.out)
    sizes = _parse_sizes(args.sizes) if args.sizes else DEFAULT_SIZES[args.profile]
    paths = generate_dataset(cfg, sizes, args.seed, out, force=args.force)
    hashes = {split: _file_hash(p) for split, p in paths.items()}
    _write_run_files(out, cfg, args.seed, hashes, sizes=sizes)
    for split, p in paths.items():
        print(f"{split}: {sizes[split]} realizations -> {p} ({hashes[split][:12]})")


def cmd_train(args, cfg):
    from ..estimator import JointAllocator

    data = Path(args.data)
    train, val = load_dataset(data / "train.bin", cfg), load_dataset(data / "val.bin", cfg)
    out = _out_dir(args.out)
    if (out / "model.pt").exists() and not args.force:
        raise RISOFDMAError(f"{out / 'model.pt'} exists; pass --force to overwrite")
    est = JointAllocator(cfg, method=args.method, phase_mode=args.phase_mode, random_state=args.seed)
    est.fit(train, X_val=val, checkpoint_dir=out)
    est.save(out / "model.pt")
    atomic_write_bytes(out / "history.csv", est.history_.to_csv().encode())
    _write_run_files(out, cfg, args.seed,
                     {"train": _file_hash(data / "train.bin"), "val": _file_hash(data / "val.bin")},
                     method=args.method, phase_mode=args.phase_mode)
    it, val_loss = est.history_.val_curve()
    print(f"trained {est.n_iter_} iterations; final validation loss {val_loss[-1]:.6g}")
    print(f"checkpoint -> {out / 'model.pt'}")


def _experiment(args, cfg, axis, values, schemes, checkpoints, oracle_cache=None):
    out = _out_dir(args.out)
    eval_set = load_dataset(args.data) if getattr(args, "data", None) else None
    if eval_set is not None:
        seed = eval_set.seed
    else:
        seed = args.seed
    result = run_experiment(cfg, axis, values, schemes, checkpoints, n_eval=args.n_eval,
                            seed=seed, eval_set=eval_set, out_dir=out, timing=args.timing,
                            oracle_cache=oracle_cache, config_path=args.config or "<config.yaml>")
    _write_run_files(out, cfg, seed, result.dataset_hashes, axis=axis, schemes=list(schemes),
                     checkpoints=result.checkpoints)
    sys.stdout.write(result.to_csv())
    return result


def cmd_evaluate(args, cfg):
    from ..estimator import JointAllocator

    est = JointAllocator.load(args.checkpoint)
    cfg = est.config_.replace(P_max=cfg.P_max) if args.keep_checkpoint_config else cfg
    _experiment(args, cfg, "P_max", [cfg.P_max], [est.phase_mode],
                {est.phase_mode: args.checkpoint})


def cmd_baseline(args, cfg):
    checkpoints = {"discrete": args.checkpoint} if args.checkpoint else {}
    if args.aux_checkpoint:
        checkpoints[args.kind] = args.aux_checkpoint
    _experiment(args, cfg, "P_max", [cfg.P_max], [args.kind], checkpoints)


def cmd_oracle(args, cfg):
    cache = OracleCache(_out_dir(args.cache)) if args.cache else None
    _experiment(args, cfg, "P_max", [cfg.P_max], ["oracle"], {}, oracle_cache=cache)


def cmd_sweep(args, cfg):
    cache = OracleCache(_out_dir(args.cache)) if args.cache else None
    _experiment(args, cfg, args.axis, args.values, args.schemes,
                _parse_checkpoints(args.checkpoint), oracle_cache=cache)


def cmd_plot(args, cfg):
    from .plots import emit_plots

    for path in emit_plots(args.inputs, _out_dir(args.out), fmt=args.format):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risofdma",
        description="Learned RIS phases and resource-block allocation for MISO-OFDMA: "
                    "data generation, training, evaluation, baselines and sweeps.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, out=True):
        p.add_argument("--config", help="YAML file of config keys (unknown keys are rejected)")
        p.add_argument("--profile", choices=PROFILES, default="desk",
                       help="defaults the config file is applied on top of (default: desk)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; repeatable")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
        if out:
            p.add_argument("--out", required=True,
                           help=f"output directory; relative paths go under ${OUTPUT_ROOT_ENV}")

    def eval_opts(p):
        p.add_argument("--data", help="evaluation dataset container (e.g. test.bin)")
        p.add_argument("--n-eval", type=int, default=200,
                       help="realizations to draw when --data is not given (default: 200)")
        p.add_argument("--timing", action="store_true",
                       help="record inference latency (not reproducible bit for bit)")

    p = sub.add_parser("generate-data", help="draw train/val/test channel datasets")
    common(p)
    p.add_argument("--sizes", nargs="+", metavar="SPLIT=N",
                   help="split sizes (default: 490/10/200 for desk, 4900/100/100 for paper)")
    p.add_argument("--force", action="store_true", help="overwrite existing files")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train BeamNet and AllocationNet")
    common(p)
    p.add_argument("--data", required=True, help="directory holding train.bin and val.bin")
    p.add_argument("--method", choices=("phased", "joint"), default="phased")
    p.add_argument("--phase-mode", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--force", action="store_true", help="overwrite an existing model.pt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="hard-mode metrics of a trained checkpoint")
    common(p)
    eval_opts(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--keep-checkpoint-config", action="store_true",
                   help="evaluate under the checkpoint's own config instead of --config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="evaluate one reference scheme")
    common(p)
    eval_opts(p)
    p.add_argument("--kind", required=True,
                   choices=("random_ris", "random_allocation", "without_ris", "fixed_allocation"))
    p.add_argument("--checkpoint", help="trained discrete checkpoint supplying the non-random half")
    p.add_argument("--aux-checkpoint",
                   help="scheme-specific model (M=0 for without_ris, Q=1 for fixed_allocation)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("oracle", help="exhaustive search on tiny instances")
    common(p)
    eval_opts(p)
    p.add_argument("--cache", help="oracle cache directory")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="evaluate schemes along one axis")
    common(p)
    eval_opts(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, nargs="+",
                   help="axis values; taps accept L0 or L0/L1/L2")
    p.add_argument("--schemes", required=True, nargs="+", choices=SCHEMES)
    p.add_argument("--checkpoint", action="append", metavar="SCHEME=PATH",
                   help="checkpoint per scheme; '{value}' in PATH selects one per axis value")
    p.add_argument("--cache", help="oracle cache directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render figures from result.json / history.csv files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("png", "svg", "pdf"), default="png")
    p.set_defaults(func=cmd_plot, config=None, profile="desk", set=[])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.config, args.profile, args.set)
        args.func(args, cfg)
    except (RISOFDMAError, FileExistsError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
