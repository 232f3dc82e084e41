"""MNIST ingestion, preprocessing and pattern corruption."""

from __future__ import annotations

import csv
import enum
import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .patterns import Pattern, PatternKind, PatternSet
from .seeding import make_rng

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

CROP_SIDE = 24
CONTINUOUS_LIMIT = 0.95
BINARY_THRESHOLD = 0.5
# Keys cubic convolution constant (Catmull-Rom).
CUBIC_A = -0.5


class DataError(Exception):
    """Base class for dataset problems."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


@dataclass(frozen=True)
class ImageGrid:
    pixels: np.ndarray
    label: int | None = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        if pixels.ndim != 2:
            raise ValueError("image must be 2-D")
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("pixels must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)


class Source(str, enum.Enum):
    MNIST = "mnist"
    RANDOM = "random"


@dataclass
class DatasetSpec:
    source: Source = Source.MNIST
    path: str | None = None
    pattern_kind: PatternKind = PatternKind.BINARY
    target_side: int = 8
    count: int = 10
    per_digit: bool = False
    seed: int = 0

    @property
    def dim(self) -> int:
        return self.target_side * self.target_side


# ---------------------------------------------------------------- IDX files


def _open(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path: str | os.PathLike, expected_magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file into an array shaped by its header."""
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: missing IDX header")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic {magic}, expected {expected_magic}")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header truncated")
    shape = struct.unpack(f">{ndim}i", raw[4:header])
    expected = int(np.prod(shape))
    body = raw[header:]
    if len(body) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes of data, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=expected).reshape(shape)


def write_idx(path: str | os.PathLike, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.uint8)
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">i", magic))
        fh.write(struct.pack(f">{array.ndim}i", *array.shape))
        fh.write(array.tobytes())


def _find(directory: Path, stems: list[str]) -> Path:
    for stem in stems:
        for suffix in ("", ".gz"):
            candidate = directory / (stem + suffix)
            if candidate.exists():
                return candidate
    raise FileNotFoundError(f"none of {stems} found in {directory}")


def load_mnist(path: str | os.PathLike, split: str = "train") -> list[ImageGrid]:
    """Load an MNIST split from a directory of IDX files.

    ``path`` may also be an explicit ``(images, labels)`` pair of files.
    """
    if isinstance(path, (tuple, list)):
        images_path, labels_path = (Path(p) for p in path)
    else:
        directory = Path(path)
        prefix = "train" if split == "train" else "t10k"
        images_path = _find(directory, [f"{prefix}-images-idx3-ubyte", f"{prefix}-images.idx3-ubyte"])
        labels_path = _find(directory, [f"{prefix}-labels-idx1-ubyte", f"{prefix}-labels.idx1-ubyte"])
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.ndim != 3:
        raise DataError(f"{images_path}: expected 3 dimensions, got {images.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    scaled = images.astype(float) / 255.0
    return [ImageGrid(scaled[i], int(labels[i])) for i in range(images.shape[0])]


# ---------------------------------------------------------------- resampling


def _cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1.0
    far = (x > 1.0) & (x < 2.0)
    out[near] = ((a + 2.0) * x[near] - (a + 3.0)) * x[near] ** 2 + 1.0
    out[far] = ((a * x[far] - 5.0 * a) * x[far] + 8.0 * a) * x[far] - 4.0 * a
    return out


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) bicubic resampling operator.

    On downsampling the kernel is stretched by the scale factor so every
    input pixel contributes (area-aware bicubic). Out-of-range taps clamp to
    the edge pixel.
    """
    scale = n_in / n_out
    support = max(scale, 1.0)
    radius = 2.0 * support
    op = np.zeros((n_out, n_in))
    for j in range(n_out):
        centre = (j + 0.5) * scale
        lo = int(np.floor(centre - radius))
        hi = int(np.ceil(centre + radius))
        taps = np.arange(lo, hi + 1)
        weights = _cubic((taps + 0.5 - centre) / support)
        weights /= weights.sum()
        np.add.at(op[j], np.clip(taps, 0, n_in - 1), weights)
    return op


def bicubic_resize(pixels: np.ndarray, side: int) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=float)
    rows = _resample_matrix(pixels.shape[0], side)
    cols = _resample_matrix(pixels.shape[1], side)
    return rows @ pixels @ cols.T


def center_crop(pixels: np.ndarray, side: int) -> np.ndarray:
    h, w = pixels.shape
    if h < side or w < side:
        raise ValueError(f"image {h}x{w} is smaller than the {side}x{side} crop")
    top = (h - side) // 2
    left = (w - side) // 2
    return pixels[top : top + side, left : left + side]


def preprocess(img: ImageGrid, target_side: int = 8, kind: PatternKind = PatternKind.BINARY) -> Pattern:
    """Crop to 24x24, bicubic-resize, then binarize or rescale."""
    small = bicubic_resize(center_crop(img.pixels, CROP_SIDE), target_side)
    small = np.clip(small, 0.0, 1.0)
    if PatternKind(kind) is PatternKind.BINARY:
        values = np.where(small >= BINARY_THRESHOLD, 1.0, -1.0)
    else:
        values = CONTINUOUS_LIMIT * (2.0 * small - 1.0)
    return Pattern(values.ravel(), kind)


def preprocess_all(images: list[ImageGrid], target_side: int, kind: PatternKind) -> PatternSet:
    """Vectorised ``preprocess`` over a whole dataset, labels attached."""
    if not images:
        return PatternSet.empty(target_side * target_side, kind)
    stack = np.stack([center_crop(img.pixels, CROP_SIDE) for img in images])
    rows = _resample_matrix(CROP_SIDE, target_side)
    small = np.clip(np.einsum("ij,njk,lk->nil", rows, stack, rows), 0.0, 1.0)
    if PatternKind(kind) is PatternKind.BINARY:
        values = np.where(small >= BINARY_THRESHOLD, 1.0, -1.0)
    else:
        values = CONTINUOUS_LIMIT * (2.0 * small - 1.0)
    labels = np.array([-1 if img.label is None else img.label for img in images])
    return PatternSet(values.reshape(len(images), -1), kind, labels)


# ---------------------------------------------------------------- generation and corruption


def gen_random_patterns(count: int, n: int, kind: PatternKind, seed: int) -> PatternSet:
    if count < 0 or n <= 0:
        raise ValueError("count must be >= 0 and N > 0")
    rng = make_rng(seed)
    if PatternKind(kind) is PatternKind.BINARY:
        values = rng.choice(np.array([-1.0, 1.0]), size=(count, n))
    else:
        values = rng.uniform(-CONTINUOUS_LIMIT, CONTINUOUS_LIMIT, size=(count, n))
    return PatternSet(values.reshape(count, n), kind)


def _as_values(p) -> tuple[np.ndarray, PatternKind]:
    if isinstance(p, (Pattern, PatternSet)):
        return p.values, p.kind
    raise TypeError("expected a Pattern or PatternSet")


def corrupt_flip(p: Pattern | PatternSet, flip_prob: float, seed: int):
    """Negate each element independently with probability ``flip_prob``."""
    values, kind = _as_values(p)
    if kind is not PatternKind.BINARY:
        raise ValueError("flip corruption needs binary patterns")
    if not 0.0 <= flip_prob <= 1.0:
        raise ValueError("flip_prob must lie in [0, 1]")
    flips = make_rng(seed).random(values.shape) < flip_prob
    out = np.where(flips, -values, values)
    return type(p)(out, kind) if isinstance(p, Pattern) else PatternSet(out, kind, p.labels)


def corrupt_gaussian(p: Pattern | PatternSet, sigma: float, seed: int, clip: float | None = 1.0):
    """Add N(0, sigma^2) noise per element and clamp to [-clip, clip] (None: no clamp).

    The returned values may touch +/-1 exactly, so the result is a raw array
    rather than a ``Pattern`` (whose continuous kind excludes the endpoints).
    """
    values, kind = _as_values(p)
    if kind is not PatternKind.CONTINUOUS:
        raise ValueError("gaussian corruption needs continuous patterns")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    noise = make_rng(seed).normal(0.0, sigma, size=values.shape) if sigma > 0 else 0.0
    out = values + noise
    return out if clip is None else np.clip(out, -clip, clip)


def select_patterns(dataset: PatternSet, count: int, per_digit: bool, seed: int) -> PatternSet:
    """Pick ``count`` patterns uniformly, or one random exemplar per digit.

    With ``per_digit`` and ``count >= 10`` every digit 0-9 appears once; a
    smaller count draws that many distinct digits.
    """
    rng = make_rng(seed)
    if per_digit:
        if dataset.labels is None:
            raise InsufficientDataError("per-digit selection needs labels")
        digits = range(10) if count >= 10 else np.sort(rng.choice(10, size=count, replace=False))
        chosen = []
        for digit in digits:
            pool = np.flatnonzero(dataset.labels == digit)
            if pool.size == 0:
                raise InsufficientDataError(f"no exemplar for digit {digit}")
            chosen.append(int(rng.choice(pool)))
        return dataset.subset(chosen)
    if count > dataset.count:
        raise InsufficientDataError(f"asked for {count} patterns, dataset has {dataset.count}")
    return dataset.subset(np.sort(rng.choice(dataset.count, size=count, replace=False)))


def distinct(dataset: PatternSet) -> PatternSet:
    """Drop exact duplicate rows, keeping first occurrences in order."""
    _, first = np.unique(dataset.values, axis=0, return_index=True)
    return dataset.subset(np.sort(first))


# ---------------------------------------------------------------- CSV round trip


def save_patterns_csv(patterns: PatternSet, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern_id", "element_index", "value"])
        for m, row in enumerate(patterns.values):
            for i, v in enumerate(row):
                writer.writerow([m, i, repr(float(v))])


def load_patterns_csv(path: str | os.PathLike, kind: PatternKind | None = None) -> PatternSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: no pattern rows")
    m = 1 + max(int(r["pattern_id"]) for r in rows)
    n = 1 + max(int(r["element_index"]) for r in rows)
    values = np.full((m, n), np.nan)
    for r in rows:
        values[int(r["pattern_id"]), int(r["element_index"])] = float(r["value"])
    if np.isnan(values).any():
        raise DataError(f"{path}: missing entries")
    if kind is None:
        kind = PatternKind.BINARY if np.all(np.abs(values) == 1.0) else PatternKind.CONTINUOUS
    return PatternSet(values, kind)


# ---------------------------------------------------------------- bundled subset

REPO_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_MNIST_DIR = Path(os.environ.get("MEMASSOC_MNIST_DIR", REPO_ROOT / "data" / "mnist"))


def resolve_dataset_dir(path: str | os.PathLike) -> Path:
    """Relative paths are tried against the working directory, then the checkout.

    The default ``data/mnist`` also honours ``MEMASSOC_MNIST_DIR``.
    """
    path = Path(path)
    if path.is_absolute() or path.exists():
        return path
    if path == Path("data/mnist"):
        return DEFAULT_MNIST_DIR
    return REPO_ROOT / path


def export_bundled_mnist(dest: str | os.PathLike = DEFAULT_MNIST_DIR) -> Path:
    """Write the 5000-image MNIST subset shipped with ``mlxtend`` as IDX files.

    Offline stand-in for the full training split (500 images per digit).
    Existing files are left alone.
    """
    dest = Path(dest)
    images_path = dest / "train-images-idx3-ubyte"
    labels_path = dest / "train-labels-idx1-ubyte"
    if images_path.exists() and labels_path.exists():
        return dest
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    dest.mkdir(parents=True, exist_ok=True)
    write_idx(images_path, x.reshape(-1, 28, 28).astype(np.uint8))
    write_idx(labels_path, y.astype(np.uint8))
    return dest
