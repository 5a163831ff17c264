"""
Shared array conventions, parameter containers, validation and errors.

Spectrograms are plain ``complex128`` numpy arrays. A single-channel
spectrogram has shape ``(n_freq, n_frames)``; a multichannel one is stacked
along a leading channel axis, ``(n_chan, n_freq, n_frames)``. Demixing
matrices are stored as ``(n_freq, n_src, n_chan)`` so that
``Y[:, f, :] = W[f] @ X[:, f, :]``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CONDITION_BOUND = 1e8
SPEC_MAGIC = b"GMDPSPEC"


class GMDPError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(GMDPError, ValueError):
    pass


class NonFiniteEntry(GMDPError, ValueError):
    pass


class InvalidExponent(GMDPError, ValueError):
    pass


class SingularDemixing(GMDPError, np.linalg.LinAlgError):
    pass


class SingularCovariance(GMDPError, np.linalg.LinAlgError):
    pass


class ConfigError(GMDPError, ValueError):
    pass


@dataclass(frozen=True)
class MixedNormParams:
    """Exponents of the mixed norm and the controls of the IRLS solver.

    ``floor`` is relative to the RMS of the microphone spectrogram being
    fitted. The defaults stop after 100 iterations or once the relative
    change of the scaling vector drops to 1%.
    """

    p: float = 1.0
    q: float = 2.0
    max_iters: int = 100
    rel_tol: float = 0.01
    floor: float = 1e-10

    def __post_init__(self):
        check_exponents(self.p, self.q)
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ConfigError("rel_tol must be positive")
        if not self.floor > 0:
            raise ConfigError("floor must be positive")


def check_exponents(p, q):
    if not (np.isfinite(p) and np.isfinite(q)) or not (0 < p <= q <= 2):
        raise InvalidExponent(f"need 0 < p <= q <= 2, got p={p}, q={q}")


def as_spectrogram(a, name="spectrogram"):
    """Coerce to a finite 2D ``complex128`` array."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2D array, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntry(f"{name} has NaN or Inf entries")
    return a


def as_tensor(a, name="tensor spectrogram"):
    """Coerce to a finite 3D ``complex128`` array (channels, freq, frames)."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or min(a.shape) < 1:
        raise ShapeMismatch(f"{name} must be (n_chan, n_freq, n_frames), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntry(f"{name} has NaN or Inf entries")
    return a


def validate_compatible(a, b):
    """Raise unless ``a`` and ``b`` are finite spectrograms of equal shape."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    for name, s in (("first", a), ("second", b)):
        if not np.all(np.isfinite(s)):
            raise NonFiniteEntry(f"{name} spectrogram has NaN or Inf entries")


def demixing_condition(W):
    """Per-frequency 2-norm condition numbers of a demixing set."""
    W = np.asarray(W)
    if W.ndim != 3 or W.shape[1] != W.shape[2]:
        raise ShapeMismatch(f"demixing set must be (n_freq, K, K), got {W.shape}")
    if not np.all(np.isfinite(W)):
        raise NonFiniteEntry("demixing set has NaN or Inf entries")
    return np.linalg.cond(W)


def check_demixing(W, bound=CONDITION_BOUND):
    """Raise :class:`SingularDemixing` if any ``W[f]`` exceeds ``bound``."""
    cond = demixing_condition(W)
    bad = np.flatnonzero(~(cond <= bound))
    if bad.size:
        raise SingularDemixing(
            f"{bad.size} demixing matrices exceed condition number {bound:g} "
            f"(first at bin {bad[0]}, cond={cond[bad[0]]:.3g})"
        )
    return cond


def save_spectrogram(path, S):
    """Write a spectrogram to the binary container.

    Layout: 8 magic bytes, ``n_freq`` and ``n_frames`` as little-endian
    uint64, then the entries in row-major order as interleaved little-endian
    float64 (real, imag) pairs.
    """
    S = as_spectrogram(S)
    payload = np.ascontiguousarray(S).astype("<c16", copy=False).tobytes()
    with open(path, "wb") as f:
        f.write(SPEC_MAGIC)
        f.write(struct.pack("<QQ", *S.shape))
        f.write(payload)


def load_spectrogram(path):
    data = Path(path).read_bytes()
    if data[:8] != SPEC_MAGIC:
        raise ValueError(f"{path}: not a spectrogram container")
    n_freq, n_frames = struct.unpack("<QQ", data[8:24])
    expected = 24 + 16 * n_freq * n_frames
    if len(data) != expected:
        raise ShapeMismatch(f"{path}: expected {expected} bytes, found {len(data)}")
    S = np.frombuffer(data, dtype="<c16", offset=24).reshape(n_freq, n_frames)
    return S.astype(np.complex128)
