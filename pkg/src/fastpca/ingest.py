"""Loaders for MNIST (IDX), CIFAR-10 binary batches and plain CSV, plus sharding."""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .spectra import covariance_shards, even_partition

IDX_UBYTE_RANK3 = 0x00000803
CIFAR_RECORD = 1 + 3 * 32 * 32
LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RawDataset:
    name: str
    samples: np.ndarray = field(repr=False)  # d x N, values in [0, 1] for images

    def __post_init__(self):
        if self.samples.ndim != 2 or 0 in self.samples.shape:
            raise ValidationError(f"dataset {self.name!r} is empty")
        if not np.all(np.isfinite(self.samples)):
            raise ValidationError(f"dataset {self.name!r} has non-finite entries")

    @property
    def d(self) -> int:
        return self.samples.shape[0]

    @property
    def N(self) -> int:
        return self.samples.shape[1]


def load_idx(images_path) -> RawDataset:
    """Read an unsigned-byte rank-3 IDX file (e.g. MNIST images) into a d x N matrix."""
    path = Path(images_path)
    raw = path.read_bytes()
    if len(raw) < 4:
        raise FormatError(f"{path.name}: file too short for an IDX header", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != IDX_UBYTE_RANK3:
        raise FormatError(f"{path.name}: bad IDX magic 0x{magic:08x}, expected 0x{IDX_UBYTE_RANK3:08x}", offset=0)
    if len(raw) < 16:
        raise FormatError(f"{path.name}: truncated IDX dimension header", offset=len(raw))
    n, rows, cols = struct.unpack(">III", raw[4:16])
    need = 16 + n * rows * cols
    if len(raw) < need:
        raise FormatError(f"{path.name}: payload truncated, expected {need} bytes, got {len(raw)}", offset=len(raw))
    if len(raw) > need:
        raise FormatError(f"{path.name}: {len(raw) - need} trailing bytes after payload", offset=need)
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows * cols)
    return RawDataset(name=path.name, samples=pixels.T.astype(np.float64) / 255.0)


def load_cifar_bin(batch_paths) -> RawDataset:
    """Read CIFAR-10 binary batches, converting each image to 32x32 grayscale.

    Each record is a label byte followed by 1024 red, 1024 green and 1024
    blue bytes.  Labels are discarded.
    """
    if isinstance(batch_paths, (str, Path)):
        batch_paths = [batch_paths]
    blocks = []
    for p in batch_paths:
        p = Path(p)
        raw = p.read_bytes()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD:
            whole = (len(raw) // CIFAR_RECORD) * CIFAR_RECORD
            raise FormatError(f"{p.name}: length {len(raw)} is not a multiple of {CIFAR_RECORD}", offset=whole)
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        rgb = rec[:, 1:].reshape(-1, 3, 1024).astype(np.float64)
        gray = LUMA[0] * rgb[:, 0] + LUMA[1] * rgb[:, 1] + LUMA[2] * rgb[:, 2]
        blocks.append(gray / 255.0)
    if not blocks:
        raise ValidationError("no CIFAR batch files given")
    name = ",".join(Path(p).name for p in batch_paths)
    return RawDataset(name=name, samples=np.concatenate(blocks, axis=0).T)


def load_csv(path, delimiter=",") -> RawDataset:
    """One sample per row, numeric columns only; a non-numeric first row is a header."""
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(v) for v in first.strip().split(delimiter)]
    except ValueError:
        skip = 1
    try:
        data = np.loadtxt(path, delimiter=delimiter, skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path.name}: {exc}") from exc
    return RawDataset(name=path.name, samples=data.T.astype(np.float64))


def load_dataset(spec) -> RawDataset:
    """Dispatch on the file name: ``*.csv`` -> CSV, ``*idx3*`` / ``*.idx`` -> IDX, else CIFAR."""
    paths = [Path(p) for p in ([spec] if isinstance(spec, (str, Path)) else spec)]
    first = paths[0].name.lower()
    if first.endswith(".csv"):
        return load_csv(paths[0])
    if "idx" in first or first.endswith("ubyte"):
        return load_idx(paths[0])
    return load_cifar_bin(paths)


def shard(dataset: RawDataset, M, strategy="uniform", seed=0, normalization="mean") -> list:
    """Split a dataset over ``M`` nodes after removing the global mean.

    ``uniform`` shuffles the columns with ``seed`` before cutting M
    near-equal contiguous blocks; ``contiguous`` cuts in file order.
    """
    N = dataset.N
    if M < 1 or M > N:
        raise ValidationError(f"cannot shard {N} samples over {M} nodes")
    if strategy == "uniform":
        order = np.random.default_rng(seed).permutation(N)
    elif strategy == "contiguous":
        order = np.arange(N)
    else:
        raise ValidationError(f"unknown sharding strategy {strategy!r}")
    parts = [order[a:b] for a, b in even_partition(N, M)]
    return covariance_shards(dataset.samples, parts, normalization=normalization)
