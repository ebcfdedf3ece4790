"""Datasets and delimited output.

Grayscale image sets arrive as IDX files (the MNIST container format)
and are lifted to complex tensors in one of two ways: a zero imaginary
part, or a 2-D DFT whose real/imaginary planes become the two parts.
A seeded synthetic generator produces complex Gaussian class blobs for
tests and demos. CSV helpers here are shared by every report emitter
so all tabular output follows one convention: optional
``# generated:`` timestamp line, optional ``# key: value`` comments,
then an RFC-4180 header row and data rows.
"""

from __future__ import annotations

import csv
import gzip
import os
import struct
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError, FormatError
from .tensor import ComplexTensor, read_tensor, write_tensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

LIFT_ZERO_IMAG = "zero-imag"
LIFT_DFT = "dft"


@dataclass(frozen=True)
class Dataset:
    """Stacked complex inputs with integer class labels."""

    images: ComplexTensor
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        if isinstance(self.images, (list, tuple)):
            parts = list(self.images)
            object.__setattr__(self, "images", ComplexTensor(
                np.stack([t.real for t in parts]), np.stack([t.imag for t in parts])))
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if self.classes < 2:
            raise ConfigError("a labelled dataset needs at least 2 classes")
        if labels.ndim != 1 or labels.shape[0] != self.images.shape[0]:
            raise ConfigError(f"label count {labels.shape} != sample count {self.images.shape[0]}")
        if labels.size == 0:
            raise ConfigError("dataset is empty")
        if labels.min() < 0 or labels.max() >= self.classes:
            raise ConfigError(f"labels must lie in [0, {self.classes})")

    def __len__(self):
        return int(self.labels.shape[0])

    @property
    def feature_shape(self) -> tuple:
        return self.images.shape[1:]

    def take(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(ComplexTensor(self.images.real[indices], self.images.imag[indices]),
                       self.labels[indices], self.classes)


# --- IDX ingestion --------------------------------------------------------


def _read_binary(path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        rest = fh.read()
    blob = head + rest
    if head == b"\x1f\x8b":  # gzipped variant of the same payload
        try:
            blob = gzip.decompress(blob)
        except OSError as exc:
            raise FormatError(f"{path}: bad gzip stream: {exc}") from None
    return blob


def _parse_idx(blob, path, magic, ndim):
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise FormatError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{1 + ndim}I", blob[:header])
    if fields[0] != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{fields[0]:08x}, expected 0x{magic:08x}")
    dims = fields[1:]
    count = int(np.prod(dims))
    if len(blob) != header + count:
        raise FormatError(f"{path}: payload is {len(blob) - header} bytes, expected {count}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    """(N, H, W) uint8 pixels from an IDX image file (plain or gzipped)."""
    return _parse_idx(_read_binary(path), path, IDX_IMAGES_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    """(N,) uint8 labels from an IDX label file (plain or gzipped)."""
    return _parse_idx(_read_binary(path), path, IDX_LABELS_MAGIC, 1)


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise FormatError(f"IDX image array must be (N,H,W), got {images.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise FormatError(f"IDX label array must be flat, got {labels.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def lift_images(pixels, mode) -> ComplexTensor:
    """Normalized (N,1,H,W) complex planes from (N,H,W) uint8 pixels."""
    px = np.asarray(pixels, dtype=np.float64)[:, None, :, :] / 255.0
    if mode == LIFT_ZERO_IMAG:
        return ComplexTensor(px, np.zeros_like(px))
    if mode == LIFT_DFT:
        spectrum = np.fft.fft2(px, axes=(-2, -1))
        return ComplexTensor(np.ascontiguousarray(spectrum.real),
                             np.ascontiguousarray(spectrum.imag))
    raise ConfigError(f"unknown lift mode {mode!r}, expected {LIFT_ZERO_IMAG!r} or {LIFT_DFT!r}")


def load_mnist_complex(images_path, labels_path, mode=LIFT_ZERO_IMAG) -> Dataset:
    """Digit images as a 10-class complex dataset."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    return Dataset(lift_images(images, mode), labels.astype(np.int64), 10)


# --- synthetic data -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 3
    samples_per_class: int = 50
    feature_shape: tuple = (8,)
    class_separation: float = 3.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feature_shape", tuple(int(s) for s in self.feature_shape))
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")
        if self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be >= 1")
        if not self.feature_shape or min(self.feature_shape) < 1:
            raise ConfigError(f"feature extents must be >= 1, got {self.feature_shape}")
        if self.class_separation <= 0:
            raise ConfigError("class_separation must be positive")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Gaussian blobs around class centroids with distinct magnitude and phase.

    Class k's centroid lives at radius separation*(1 + k/K) and phase
    2*pi*k/K, swept across features, so classes differ in both parts.
    Unit-variance complex noise is added per sample; deterministic per seed.
    """
    rng = np.random.default_rng(spec.seed)
    k, m = spec.classes, spec.samples_per_class
    features = int(np.prod(spec.feature_shape))
    offsets = 2.0 * np.pi * np.arange(features) / features
    real = np.empty((k * m, features))
    imag = np.empty((k * m, features))
    labels = np.repeat(np.arange(k), m)
    for c in range(k):
        radius = spec.class_separation * (1.0 + c / k)
        phase = 2.0 * np.pi * c / k + offsets
        centroid_r = radius * np.cos(phase)
        centroid_i = radius * np.sin(phase)
        rows = slice(c * m, (c + 1) * m)
        real[rows] = centroid_r + rng.normal(size=(m, features))
        imag[rows] = centroid_i + rng.normal(size=(m, features))
    shape = (k * m,) + spec.feature_shape
    return Dataset(ComplexTensor(real.reshape(shape), imag.reshape(shape)),
                   labels, spec.classes)


# --- delimited reports ----------------------------------------------------


def write_csv(path, columns, rows, timestamp=True, comments=()):
    """One CSV report: optional '# generated:' line, comments, header, rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if timestamp:
            stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
            fh.write(f"# generated: {stamp}\n")
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    """Inverse of write_csv: (columns, rows, comments); values stay strings."""
    comments = []
    with open(path, encoding="utf-8", newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    table = [row for row in reader if row]
    if not table:
        raise FormatError(f"{path}: no header row")
    return table[0], table[1:], comments


# --- dataset persistence --------------------------------------------------


def save_dataset(directory, dataset: Dataset, timestamp=True):
    """Persist as images.bcvt plus labels.csv (classes recorded as a comment)."""
    os.makedirs(directory, exist_ok=True)
    write_tensor(os.path.join(directory, "images.bcvt"), dataset.images)
    rows = [(i, int(label)) for i, label in enumerate(dataset.labels)]
    write_csv(os.path.join(directory, "labels.csv"), ("index", "label"), rows,
              timestamp=timestamp, comments=(f"classes: {dataset.classes}",))


def load_dataset(directory) -> Dataset:
    images = read_tensor(os.path.join(directory, "images.bcvt"))
    columns, rows, comments = read_csv(os.path.join(directory, "labels.csv"))
    if list(columns) != ["index", "label"]:
        raise FormatError(f"unexpected label columns {columns}")
    classes = None
    for comment in comments:
        if comment.startswith("classes:"):
            classes = int(comment.split(":", 1)[1])
    if classes is None:
        raise FormatError("labels.csv does not record the class count")
    labels = np.empty(len(rows), dtype=np.int64)
    for index, label in rows:
        labels[int(index)] = int(label)
    return Dataset(images, labels, classes)
