"""Dense complex-valued tensors stored as paired real arrays.

A ComplexTensor keeps its real and imaginary parts as two separate
float arrays of identical shape (row-major layout). All operations are
pure: they never mutate their inputs and return freshly allocated
tensors, so values are safe to share between threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ShapeError

CONTAINER_MAGIC = b"BCVT"
CONTAINER_VERSION = 1


@dataclass(frozen=True)
class ComplexTensor:
    """Paired real/imaginary dense arrays with a shared shape."""

    real: np.ndarray
    imag: np.ndarray
    shape: tuple = field(init=False)

    def __post_init__(self):
        real = np.asarray(self.real)
        if real.dtype not in (np.float32, np.float64):
            real = real.astype(np.float64)
        imag = np.asarray(self.imag, dtype=real.dtype)
        if real.shape != imag.shape:
            raise ShapeError(f"real/imag shape mismatch: {real.shape} vs {imag.shape}")
        if real.size == 0:
            raise ShapeError("empty tensors are not allowed")
        if not (np.all(np.isfinite(real)) and np.all(np.isfinite(imag))):
            raise ValueError("tensor elements must be finite")
        # freeze views so the caller's own array keeps its writeability
        real = np.ascontiguousarray(real).view()
        imag = np.ascontiguousarray(imag).view()
        real.flags.writeable = False
        imag.flags.writeable = False
        object.__setattr__(self, "real", real)
        object.__setattr__(self, "imag", imag)
        object.__setattr__(self, "shape", tuple(real.shape))

    @property
    def size(self) -> int:
        return self.real.size

    @property
    def dtype(self):
        return self.real.dtype

    def reshape(self, shape) -> "ComplexTensor":
        return ComplexTensor(self.real.reshape(shape), self.imag.reshape(shape))

    def astype(self, dtype) -> "ComplexTensor":
        return ComplexTensor(self.real.astype(dtype), self.imag.astype(dtype))

    def to_complex(self) -> np.ndarray:
        """View as a numpy complex array (copies)."""
        return self.real + 1j * self.imag

    @staticmethod
    def from_complex(z) -> "ComplexTensor":
        z = np.asarray(z, dtype=np.complex128)
        return ComplexTensor(z.real.copy(), z.imag.copy())

    def __repr__(self):
        return f"ComplexTensor(shape={self.shape}, dtype={self.dtype})"


def czeros(shape, dtype=np.float64) -> ComplexTensor:
    """All-zero tensor. Every extent must be >= 1."""
    shape = tuple(int(s) for s in (shape if hasattr(shape, "__iter__") else (shape,)))
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeError(f"extents must all be >= 1, got {shape}")
    return ComplexTensor(np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype))


def _check_same_shape(a: ComplexTensor, b: ComplexTensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def cmul(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """Elementwise complex product: (ac - bd) + (ad + bc)i."""
    _check_same_shape(a, b, "cmul")
    return ComplexTensor(
        a.real * b.real - a.imag * b.imag,
        a.real * b.imag + a.imag * b.real,
    )


def cadd(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """Elementwise complex sum."""
    _check_same_shape(a, b, "cadd")
    return ComplexTensor(a.real + b.real, a.imag + b.imag)


def csub(a: ComplexTensor, b: ComplexTensor) -> ComplexTensor:
    """Elementwise complex difference."""
    _check_same_shape(a, b, "csub")
    return ComplexTensor(a.real - b.real, a.imag - b.imag)


def scale(a: ComplexTensor, s: float) -> ComplexTensor:
    """Scale both parts by a real factor."""
    return ComplexTensor(a.real * s, a.imag * s)


def magnitude(a: ComplexTensor) -> np.ndarray:
    """Elementwise modulus sqrt(re^2 + im^2); real array of same shape."""
    return np.hypot(a.real, a.imag)


def allclose(a: ComplexTensor, b: ComplexTensor, rtol=1e-9, atol=0.0) -> bool:
    return (
        a.shape == b.shape
        and np.allclose(a.real, b.real, rtol=rtol, atol=atol)
        and np.allclose(a.imag, b.imag, rtol=rtol, atol=atol)
    )


# --- binary container -------------------------------------------------
#
# Layout: magic "BCVT" | version u8 | rank u8 | extents as LE u32 |
# all real elements | all imag elements, LE float64, row-major.


def tensor_to_bytes(t: ComplexTensor) -> bytes:
    rank = len(t.shape)
    if rank > 255:
        raise FormatError(f"rank {rank} exceeds container limit")
    header = CONTAINER_MAGIC + struct.pack("<BB", CONTAINER_VERSION, rank)
    header += struct.pack(f"<{rank}I", *t.shape)
    body = t.real.astype("<f8").tobytes() + t.imag.astype("<f8").tobytes()
    return header + body


def tensor_from_bytes(buf: bytes) -> ComplexTensor:
    if len(buf) < 6:
        raise FormatError("container truncated: missing header")
    if buf[:4] != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {CONTAINER_MAGIC!r}")
    version, rank = struct.unpack_from("<BB", buf, 4)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    offset = 6
    if len(buf) < offset + 4 * rank:
        raise FormatError("container truncated: missing extents")
    shape = struct.unpack_from(f"<{rank}I", buf, offset)
    offset += 4 * rank
    if rank == 0 or any(s < 1 for s in shape):
        raise FormatError(f"invalid extents {shape}")
    count = int(np.prod(shape))
    need = offset + 2 * count * 8
    if len(buf) < need:
        raise FormatError(f"container truncated: expected {need} bytes, got {len(buf)}")
    real = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape)
    imag = np.frombuffer(buf, dtype="<f8", count=count, offset=offset + count * 8).reshape(shape)
    return ComplexTensor(real.copy(), imag.copy())


def write_tensor(path, t: ComplexTensor):
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def read_tensor(path) -> ComplexTensor:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
