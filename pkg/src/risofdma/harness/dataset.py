"""Channel datasets and their single-file binary container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"RISODATA"
    8       4     uint32 format version (1)
    12      4     uint32 header length H in bytes
    16      H     UTF-8 JSON header, keys sorted, no whitespace
    16+H    pad   zero bytes up to the next multiple of 8
    ...           arrays back to back, C order, in header["arrays"] order

Each entry of ``header["arrays"]`` records ``name``, ``dtype`` (``<c16`` or
``<f8``), ``shape`` and the byte ``offset`` relative to the start of the
array section. The header also carries the split name, seed, realization
count, the full scenario config and its hash. Nothing time-dependent is
written, so the same seed gives byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from ..channel import draw_frequency_channel
from ..exceptions import ResultParseError, ValidationError
from ..scenario import ScenarioConfig, load_config

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "Dataset",
    "sample_dataset",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
    "git_blob_sha1",
    "atomic_write_bytes",
]

MAGIC = b"RISODATA"
FORMAT_VERSION = 1
_ARRAYS = (
    ("hd_f", "<c16"),
    ("hr_f", "<c16"),
    ("user_positions", "<f8"),
    ("d_direct", "<f8"),
    ("d_br", "<f8"),
    ("d_ru", "<f8"),
)


def git_blob_sha1(data: bytes) -> str:
    """Content hash as ``git hash-object`` computes it for a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def atomic_write_bytes(path, data: bytes) -> Path:
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


@dataclass
class Dataset:
    """A split of channel realizations with their drop geometry."""

    split: str
    config: ScenarioConfig
    seed: int
    hd_f: np.ndarray  # (n, N, K, N_t)
    hr_f: np.ndarray  # (n, N, K, M, N_t)
    user_positions: np.ndarray  # (n, K, 2)
    d_direct: np.ndarray  # (n, K)
    d_br: np.ndarray  # (n,)
    d_ru: np.ndarray  # (n, K)

    def __post_init__(self):
        cfg = self.config
        n = self.hd_f.shape[0]
        want = {
            "hd_f": (n, cfg.N, cfg.K, cfg.N_t),
            "hr_f": (n, cfg.N, cfg.K, cfg.M, cfg.N_t),
            "user_positions": (n, cfg.K, 2),
            "d_direct": (n, cfg.K),
            "d_br": (n,),
            "d_ru": (n, cfg.K),
        }
        for name, shape in want.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise ValidationError(f"{self.split}: {name} has shape {got}, config implies {shape}")

    def __len__(self) -> int:
        return self.hd_f.shape[0]

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def header(self) -> dict:
        return {
            "split": self.split,
            "seed": int(self.seed),
            "n": len(self),
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
        }

    def to_bytes(self) -> bytes:
        arrays, offset = [], 0
        for name, dtype in _ARRAYS:
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arrays.append((name, dtype, arr))
        entries = []
        for name, dtype, arr in arrays:
            entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
        header = json.dumps(dict(self.header(), arrays=entries), sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
        prefix = MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header
        prefix += b"\0" * (-len(prefix) % 8)
        return prefix + b"".join(arr.tobytes() for _, _, arr in arrays)

    def content_hash(self) -> str:
        return git_blob_sha1(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "<bytes>") -> "Dataset":
        if data[:8] != MAGIC:
            raise ResultParseError(f"{source}: not a dataset container (bad magic)")
        if len(data) < 16:
            raise ResultParseError(f"{source}: truncated header")
        version, hlen = struct.unpack("<II", data[8:16])
        if version != FORMAT_VERSION:
            raise ResultParseError(f"{source}: unsupported format version {version}")
        try:
            header = json.loads(data[16:16 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ResultParseError(f"{source}: malformed header: {exc}") from None
        base = 16 + hlen + (-(16 + hlen) % 8)
        fields = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            start = base + entry["offset"]
            count = int(np.prod(shape, dtype=np.int64))
            stop = start + count * dtype.itemsize
            if stop > len(data):
                raise ResultParseError(f"{source}: array {entry['name']} runs past end of file")
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=start).reshape(shape)
            fields[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        cfg = load_config(header["config"])
        if cfg.config_hash() != header["config_hash"]:
            raise ValidationError(f"{source}: embedded config does not match its hash")
        return cls(split=header["split"], config=cfg, seed=header["seed"], **fields)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.split, self.config, self.seed, self.hd_f[idx], self.hr_f[idx],
                       self.user_positions[idx], self.d_direct[idx], self.d_br[idx], self.d_ru[idx])

    def with_ris_elements(self, M: int) -> "Dataset":
        """Keep the first ``M`` RIS elements (a smaller array of the same geometry)."""
        if not 0 <= M <= self.config.M:
            raise ValueError(f"cannot take {M} of {self.config.M} RIS elements")
        cfg = self.config.replace(M=M)
        return Dataset(self.split, cfg, self.seed, self.hd_f, self.hr_f[..., :M, :].copy(),
                       self.user_positions, self.d_direct, self.d_br, self.d_ru)


def _split_seed(seed: int, split: str) -> np.random.SeedSequence:
    # keyed by name so adding a split does not change the others
    return np.random.SeedSequence([int(seed), zlib.crc32(split.encode("utf-8"))])


def sample_dataset(cfg: ScenarioConfig, n: int, seed: int, split: str = "test") -> Dataset:
    """Draw ``n`` independent realizations (one child seed per realization)."""
    if n < 1:
        raise ValueError(f"split {split!r} must contain at least one realization")
    children = _split_seed(seed, split).spawn(n)
    chans = [draw_frequency_channel(cfg, np.random.default_rng(s)) for s in children]
    geos = [c.geometry for c in chans]
    return Dataset(
        split=split,
        config=cfg,
        seed=int(seed),
        hd_f=np.stack([c.hd_f for c in chans]),
        hr_f=np.stack([c.hr_f for c in chans]),
        user_positions=np.stack([g.user_positions for g in geos]),
        d_direct=np.stack([g.d_direct for g in geos]),
        d_br=np.array([float(g.d_br) for g in geos]),
        d_ru=np.stack([g.d_ru for g in geos]),
    )


def save_dataset(ds: Dataset, path, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True (--force) to overwrite")
    return atomic_write_bytes(path, ds.to_bytes())


def load_dataset(path, cfg: ScenarioConfig | None = None) -> Dataset:
    """Read a container; with ``cfg`` given, require matching channel dimensions."""
    path = Path(path)
    ds = Dataset.from_bytes(path.read_bytes(), str(path))
    if cfg is not None and ds.config.channel_hash() != cfg.channel_hash():
        raise ValidationError(
            f"{path}: dataset dimensions (N_t, K, M, N) = "
            f"{(ds.config.N_t, ds.config.K, ds.config.M, ds.config.N)} do not match the config "
            f"{(cfg.N_t, cfg.K, cfg.M, cfg.N)}")
    return ds


def generate_dataset(cfg: ScenarioConfig, sizes: Mapping[str, int], seed: int, out_dir,
                     force: bool = False) -> dict[str, Path]:
    """Write one ``<split>.bin`` per entry of ``sizes``.

    All sizes are checked and existing files refused before anything is
    written.
    """
    out_dir = Path(out_dir)
    for split, n in sizes.items():
        if int(n) < 1:
            raise ValueError(f"split {split!r} must contain at least one realization, got {n}")
        if (out_dir / f"{split}.bin").exists() and not force:
            raise FileExistsError(f"{out_dir / f'{split}.bin'} exists; pass --force to overwrite")
    paths = {}
    for split, n in sizes.items():
        ds = sample_dataset(cfg, int(n), seed, split)
        paths[split] = save_dataset(ds, out_dir / f"{split}.bin", force=True)
    return paths
