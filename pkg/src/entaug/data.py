"""Dataset ingestion, normalization, baseline crop/flip, and subsetting.

Supported sources:
  - ``mnist``: IDX files (big-endian headers) in the standard four-file layout
  - ``cifar10``: the binary batch format (1 label byte + 3072 planar pixel bytes)
  - ``synth``: a deterministic 10-class glyph dataset, materialized as IDX
    files on first use and then read back through the mnist loader, so desk
    runs exercise the production parsing path
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from . import transforms
from .errors import IngestError, InvalidInputError
from .image import Image

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"
CIFAR_RECORD_BYTES = 1 + 3 * 32 * 32

DATASET_NAMES = ("mnist", "cifar10", "synth")

SYNTH_TRAIN_SIZE = 12000
SYNTH_TEST_SIZE = 2000
SYNTH_SEED = 20240501
# test-split glyphs are rotated up to this many degrees; the train split is
# not, so learned rotation invariance has to come from augmentation
SYNTH_TEST_ROTATION = 15.0
SYNTH_GENERATOR_VERSION = 3


@dataclass
class Dataset:
    """An immutable split: packed uint8 images plus integer labels."""

    images: np.ndarray  # (n, h, w, c) uint8
    labels: np.ndarray  # (n,) int64
    k: int
    split: str
    mean: np.ndarray  # per-channel mean of pixel/255 over the source train split
    std: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.dtype != np.uint8:
            raise InvalidInputError(f"images must be (n,h,w,c) uint8, got {self.images.shape} {self.images.dtype}")
        if len(self.images) != len(self.labels):
            raise InvalidInputError("images and labels length mismatch")
        if len(self.labels) and int(self.labels.max()) >= self.k:
            raise InvalidInputError("label out of range for k")

    def __len__(self) -> int:
        return len(self.images)

    def image(self, i: int) -> Image:
        return Image(self.images[i])


def compute_mean_std(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population std of pixel values scaled by 1/255."""
    scaled = images.astype(np.float64) / 255.0
    mean = scaled.mean(axis=(0, 1, 2))
    std = scaled.std(axis=(0, 1, 2))
    return mean, std


def _read_exact(path: Path, expect_at_least: int) -> bytes:
    if not path.is_file():
        raise IngestError(f"missing dataset file: {path}")
    blob = path.read_bytes()
    if len(blob) < expect_at_least:
        raise IngestError(f"{path}: truncated at byte {len(blob)}, expected at least {expect_at_least}")
    return blob


def read_idx_images(path) -> np.ndarray:
    path = Path(path)
    blob = _read_exact(path, 16)
    magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IngestError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    need = 16 + n * rows * cols
    if len(blob) != need:
        raise IngestError(f"{path}: has {len(blob)} bytes, header implies {need} (offset {min(len(blob), need)})")
    return np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(n, rows, cols, 1).copy()


def read_idx_labels(path) -> np.ndarray:
    path = Path(path)
    blob = _read_exact(path, 8)
    magic, n = struct.unpack(">II", blob[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IngestError(f"{path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(blob) != 8 + n:
        raise IngestError(f"{path}: has {len(blob)} bytes, header implies {8 + n} (offset {min(len(blob), 8 + n)})")
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def write_idx_images(path, images: np.ndarray) -> None:
    n, rows, cols = images.shape[0], images.shape[1], images.shape[2]
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols)
    Path(path).write_bytes(header + images[..., 0].astype(np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    header = struct.pack(">II", IDX_LABELS_MAGIC, len(labels))
    Path(path).write_bytes(header + np.asarray(labels, dtype=np.uint8).tobytes())


def load_mnist(directory) -> tuple[Dataset, Dataset]:
    """Load the four-file IDX layout; k = 10, 28x28 single-channel."""
    directory = Path(directory)
    train_images = read_idx_images(directory / MNIST_FILES["train_images"])
    train_labels = read_idx_labels(directory / MNIST_FILES["train_labels"])
    test_images = read_idx_images(directory / MNIST_FILES["test_images"])
    test_labels = read_idx_labels(directory / MNIST_FILES["test_labels"])
    if len(train_images) != len(train_labels):
        raise IngestError(f"{directory}: train image/label counts differ")
    if len(test_images) != len(test_labels):
        raise IngestError(f"{directory}: test image/label counts differ")
    mean, std = compute_mean_std(train_images)
    train = Dataset(train_images, train_labels, 10, "train", mean, std)
    test = Dataset(test_images, test_labels, 10, "test", mean, std)
    return train, test


def _parse_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    blob = _read_exact(path, CIFAR_RECORD_BYTES)
    if len(blob) % CIFAR_RECORD_BYTES:
        offset = (len(blob) // CIFAR_RECORD_BYTES) * CIFAR_RECORD_BYTES
        raise IngestError(f"{path}: {len(blob)} bytes is not a whole number of records (offset {offset})")
    raw = np.frombuffer(blob, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    # channel-planar: 1024 red, 1024 green, 1024 blue bytes, each row-major
    images = raw[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).copy()
    return images, labels


def serialize_cifar_records(images: np.ndarray, labels: np.ndarray) -> bytes:
    """Inverse of the batch parser: label byte then planar channel bytes."""
    planar = images.transpose(0, 3, 1, 2).reshape(len(images), -1)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], planar], axis=1)
    return records.tobytes()


def load_cifar10(directory) -> tuple[Dataset, Dataset]:
    directory = Path(directory)
    image_parts, label_parts = [], []
    for name in CIFAR_TRAIN_FILES:
        imgs, labels = _parse_cifar_file(directory / name)
        image_parts.append(imgs)
        label_parts.append(labels)
    train_images = np.concatenate(image_parts)
    train_labels = np.concatenate(label_parts)
    test_images, test_labels = _parse_cifar_file(directory / CIFAR_TEST_FILE)
    mean, std = compute_mean_std(train_images)
    train = Dataset(train_images, train_labels, 10, "train", mean, std)
    test = Dataset(test_images, test_labels, 10, "test", mean, std)
    return train, test


def normalize(pixels: np.ndarray, mean: np.ndarray, std: np.ndarray, dtype=np.float64) -> np.ndarray:
    """(v/255 - mean)/std per channel; accepts (h,w,c) or (n,h,w,c) uint8."""
    std = np.asarray(std)
    if np.any(std <= 0):
        raise InvalidInputError(f"std must be positive, got {std}")
    dtype = np.dtype(dtype)
    return (pixels.astype(dtype) / dtype.type(255.0) - mean.astype(dtype)) / std.astype(dtype)


def crop_flip(img: Image, offset_row: int, offset_col: int, flip: bool, pad: int = 4) -> Image:
    """Zero-pad by ``pad`` on each side, crop at the given offset, optionally mirror."""
    h, w, c = img.pixels.shape
    if not (0 <= offset_row <= 2 * pad and 0 <= offset_col <= 2 * pad):
        raise InvalidInputError(f"crop offset ({offset_row},{offset_col}) outside [0,{2*pad}]")
    padded = np.zeros((h + 2 * pad, w + 2 * pad, c), dtype=np.uint8)
    padded[pad : pad + h, pad : pad + w] = img.pixels
    out = padded[offset_row : offset_row + h, offset_col : offset_col + w]
    if flip:
        out = out[:, ::-1]
    return Image(out.copy())


def baseline_augment(img: Image, rng: np.random.Generator, pad: int = 4) -> Image:
    """Random crop of the zero-padded image plus a fair horizontal-flip coin.

    Draw order: row offset, column offset, flip.
    """
    offset_row = int(rng.integers(0, 2 * pad + 1))
    offset_col = int(rng.integers(0, 2 * pad + 1))
    flip = bool(rng.random() < 0.5)
    return crop_flip(img, offset_row, offset_col, flip, pad)


def subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Class-stratified deterministic sample of n items.

    Each class contributes n // k items; the first n % k classes (by
    class index) contribute one extra.
    """
    if n > len(ds):
        raise InvalidInputError(f"subset size {n} exceeds dataset size {len(ds)}")
    if n < 1:
        raise InvalidInputError("subset size must be >= 1")
    base, extra = divmod(n, ds.k)
    chosen = []
    for c in range(ds.k):
        quota = base + (1 if c < extra else 0)
        members = np.flatnonzero(ds.labels == c)
        if quota > len(members):
            raise InvalidInputError(f"class {c} has {len(members)} samples, need {quota} for stratified subset")
        order = rng_mod.stream(seed, rng_mod.STREAM_SUBSET, c).permutation(len(members))
        chosen.append(members[order[:quota]])
    idx = np.sort(np.concatenate(chosen))
    return Dataset(ds.images[idx].copy(), ds.labels[idx].copy(), ds.k, ds.split, ds.mean, ds.std)


# --- synthetic glyph dataset -------------------------------------------------

_STAMP = 16  # glyph stamp edge length


def _glyph_masks() -> list[np.ndarray]:
    """Ten 16x16 boolean glyphs, each stable under horizontal mirroring."""
    n = _STAMP
    ys, xs = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    cy = cx = (n - 1) / 2.0
    r = np.hypot(ys - cy, xs - cx)
    masks = [
        r <= 6,                                     # filled disk
        (r >= 4.0) & (r <= 6.5),                    # ring
        ((ys >= 2) & (ys <= 4)) | ((ys >= 11) & (ys <= 13)),   # two horizontal bars
        ((xs >= 2) & (xs <= 4)) | ((xs >= 11) & (xs <= 13)),   # two vertical bars
        (np.abs(ys - cy) <= 1.5) | (np.abs(xs - cx) <= 1.5),   # plus
        (np.abs(ys - xs) <= 1.5) | (np.abs(ys + xs - (n - 1)) <= 1.5),  # X
        ((ys // 4 + xs // 4) % 2 == 0),             # checkerboard
        (np.maximum(np.abs(ys - cy), np.abs(xs - cx)) >= 4.5)
        & (np.maximum(np.abs(ys - cy), np.abs(xs - cx)) <= 7),  # square frame
        (ys >= 2) & (np.abs(xs - cx) <= (ys - 2) * 0.55) & (ys <= 13),  # triangle
        (np.hypot(ys - 4, xs - 4) <= 2.2)
        | (np.hypot(ys - 4, xs - 11) <= 2.2)
        | (np.hypot(ys - 11, xs - cx) <= 2.2),      # three dots
    ]
    return [m.astype(bool) for m in masks]


def generate_synth(n_train: int, n_test: int, seed: int, size: int = 28) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic 10-class glyph images.

    Each sample stamps its class glyph at a random scale and position,
    with randomized stroke intensity and heavy pixel noise.  Test-split
    glyphs are additionally rotated (up to SYNTH_TEST_ROTATION degrees)
    while train-split glyphs are axis-aligned, so the test distribution
    carries nuisance variation that only augmentation can cover.
    """
    glyphs = _glyph_masks()
    rng = rng_mod.stream(seed, rng_mod.STREAM_SYNTH)

    def make(count: int, max_rotation: float):
        labels = np.tile(np.arange(10), count // 10 + 1)[:count].astype(np.int64)
        images = np.zeros((count, size, size, 1), dtype=np.uint8)
        for i in range(count):
            canvas = np.zeros((size, size), dtype=np.float64)
            side = int(rng.integers(11, 22))
            scale_idx = (np.arange(side) * _STAMP) // side
            stamp = glyphs[labels[i]][np.ix_(scale_idx, scale_idx)]
            margin = size - side
            top = int(rng.integers(0, margin + 1))
            left = int(rng.integers(0, margin + 1))
            intensity = float(rng.uniform(110, 230))
            canvas[top : top + side, left : left + side] = stamp * intensity
            if max_rotation:
                angle = float(rng.uniform(-max_rotation, max_rotation))
                glyph_u8 = np.clip(canvas, 0, 255).astype(np.uint8)[:, :, None]
                canvas = transforms.rotate(Image(glyph_u8), angle, fill=0).pixels[:, :, 0].astype(np.float64)
            canvas += rng.normal(0.0, 28.0, size=canvas.shape)
            images[i, :, :, 0] = np.clip(canvas, 0, 255).astype(np.uint8)
        return images, labels

    train_images, train_labels = make(n_train, 0.0)
    test_images, test_labels = make(n_test, SYNTH_TEST_ROTATION)
    return train_images, train_labels, test_images, test_labels


def ensure_synth(directory) -> Path:
    """Materialize the synthetic dataset as IDX files; returns its directory.

    A version marker guards against stale files from an older generator.
    """
    directory = Path(directory) / "synth"
    marker = directory / "GENERATOR_VERSION"
    paths = {key: directory / name for key, name in MNIST_FILES.items()}
    current = marker.is_file() and marker.read_text().strip() == str(SYNTH_GENERATOR_VERSION)
    if not current or not all(p.is_file() for p in paths.values()):
        directory.mkdir(parents=True, exist_ok=True)
        tr_x, tr_y, te_x, te_y = generate_synth(SYNTH_TRAIN_SIZE, SYNTH_TEST_SIZE, SYNTH_SEED)
        write_idx_images(paths["train_images"], tr_x)
        write_idx_labels(paths["train_labels"], tr_y)
        write_idx_images(paths["test_images"], te_x)
        write_idx_labels(paths["test_labels"], te_y)
        marker.write_text(f"{SYNTH_GENERATOR_VERSION}\n")
    return directory


def resolve_data_dir(data_dir=None) -> Path:
    """Explicit argument, else $ENTAUG_DATA_DIR, else ./data."""
    if data_dir:
        return Path(data_dir)
    env = os.environ.get("ENTAUG_DATA_DIR")
    return Path(env) if env else Path("data")


def get_dataset(name: str, data_dir=None) -> tuple[Dataset, Dataset]:
    root = resolve_data_dir(data_dir)
    if name == "mnist":
        return load_mnist(root / "mnist")
    if name == "cifar10":
        return load_cifar10(root / "cifar10")
    if name == "synth":
        return load_mnist(ensure_synth(root))
    raise InvalidInputError(f"unknown dataset {name!r}; expected one of {DATASET_NAMES}")
