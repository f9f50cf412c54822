"""MNIST IDX file parsing and the train/test digit containers."""

import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

# canonical filenames, so a real MNIST directory drops in unchanged
TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class IdxFormatError(ValueError):
    """Bad magic number, shape, or field value in an IDX file."""


class IdxLengthError(IdxFormatError):
    """Payload shorter than the header promises."""


@dataclass(frozen=True)
class DigitSet:
    """Digit images as (n, 784) floats in [0, 1] plus labels and a split tag.

    The split tag is load-bearing: feature learning refuses anything but
    "train", scene evaluation anything but "test".
    """

    images: np.ndarray
    labels: np.ndarray
    split: str

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        if self.images.ndim != 2 or self.images.shape[1] != 784:
            raise ValueError(f"images must be (n, 784), got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ValueError("labels length does not match images")

    def __len__(self):
        return len(self.images)


def _read_be32(buf, offset):
    return struct.unpack_from(">I", buf, offset)[0]


def load_idx_images(path) -> np.ndarray:
    """Parse an IDX image file into an (n, 784) float array scaled to [0, 1].

    Big-endian header: magic 0x00000803, count, rows, cols, then raw bytes
    row-major per image.
    """
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 16:
        raise IdxLengthError(f"{path}: header truncated ({len(buf)} bytes)")
    magic = _read_be32(buf, 0)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad image magic 0x{magic:08x}")
    count = _read_be32(buf, 4)
    rows = _read_be32(buf, 8)
    cols = _read_be32(buf, 12)
    if (rows, cols) != (28, 28):
        raise IdxFormatError(f"{path}: expected 28x28 images, got {rows}x{cols}")
    expected = 16 + count * rows * cols
    if len(buf) < expected:
        raise IdxLengthError(
            f"{path}: payload truncated ({len(buf)} bytes, header promises {expected})"
        )
    raw = np.frombuffer(buf, dtype=np.uint8, count=count * 784, offset=16)
    return raw.reshape(count, 784).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """Parse an IDX label file into an int array; every label must be 0..9."""
    with open(path, "rb") as f:
        buf = f.read()
    if len(buf) < 8:
        raise IdxLengthError(f"{path}: header truncated ({len(buf)} bytes)")
    magic = _read_be32(buf, 0)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad label magic 0x{magic:08x}")
    count = _read_be32(buf, 4)
    if len(buf) < 8 + count:
        raise IdxLengthError(
            f"{path}: payload truncated ({len(buf)} bytes, header promises {8 + count})"
        )
    labels = np.frombuffer(buf, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if count and labels.max() > 9:
        raise IdxFormatError(f"{path}: label byte {labels.max()} out of range 0..9")
    return labels


def write_idx_images(path, images: np.ndarray):
    """Write (n, 784) images (floats in [0,1] or uint8) as a canonical IDX file."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.round(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)
    n = images.shape[0]
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGE_MAGIC, n, 28, 28))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise ValueError("labels must be in 0..9")
    with open(path, "wb") as f:
        f.write(struct.pack(">II", LABEL_MAGIC, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def load_digit_set(images_path, labels_path, split: str) -> DigitSet:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"image/label count mismatch: {len(images)} vs {len(labels)}"
        )
    return DigitSet(images=images, labels=labels, split=split)


def load_split_dir(data_dir, split: str) -> DigitSet:
    """Load one split from a directory holding canonically named IDX files."""
    import os

    if split == "train":
        return load_digit_set(
            os.path.join(data_dir, TRAIN_IMAGES),
            os.path.join(data_dir, TRAIN_LABELS),
            "train",
        )
    return load_digit_set(
        os.path.join(data_dir, TEST_IMAGES),
        os.path.join(data_dir, TEST_LABELS),
        "test",
    )
