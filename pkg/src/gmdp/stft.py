"""
Multichannel STFT with perfect reconstruction, plus WAV input/output.

The signal is zero-padded with ``window_length - hop`` samples in front and
enough samples at the back that every input sample is covered by the same
number of frames. Synthesis is weighted overlap-add normalized by the
(constant) overlap-added product of the analysis and synthesis windows, so
the round trip is exact up to rounding over the whole input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .core import ConfigError, NonFiniteEntry, ShapeMismatch, as_tensor

WINDOWS = ("sqrt_hann", "hann", "rect")


class SignalTooShort(ValueError):
    pass


def make_window(name, length):
    """Periodic analysis window of the given ``length``."""
    n = np.arange(length)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / length)
    if name == "sqrt_hann":
        return np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / length))
    if name == "rect":
        return np.ones(length)
    raise ConfigError(f"unknown window {name!r}, choose from {WINDOWS}")


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 2048
    hop: int = 512
    window: str = "sqrt_hann"
    sample_rate: int = 16000

    def __post_init__(self):
        L, hop = self.window_length, self.hop
        if L < 2 or L % 2:
            raise ConfigError("window_length must be even and at least 2")
        if hop < 1 or L % hop:
            raise ConfigError(f"hop {hop} must divide window_length {L}")
        olap = overlap_sum(self.analysis_window, self.synthesis_window, hop)
        if np.ptp(olap) > 1e-10 * np.max(olap) or np.min(olap) <= 0:
            raise ConfigError(
                f"window {self.window!r} with hop {hop} does not overlap-add "
                "to a constant"
            )

    @property
    def analysis_window(self):
        return make_window(self.window, self.window_length)

    @property
    def synthesis_window(self):
        return make_window(self.window, self.window_length)

    @property
    def n_freq(self):
        return self.window_length // 2 + 1

    @property
    def front_pad(self):
        return self.window_length - self.hop

    def n_frames(self, n_samples):
        return (self.front_pad + n_samples - 1) // self.hop + 1

    def ola_gain(self):
        """Constant value of the overlap-added window product."""
        olap = overlap_sum(self.analysis_window, self.synthesis_window, self.hop)
        return float(np.mean(olap))


def overlap_sum(w_a, w_s, hop):
    prod = w_a * w_s
    return prod.reshape(-1, hop).sum(axis=0)


def _as_signal(signal):
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ShapeMismatch(f"signal must be (n_chan, n_samples), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteEntry("signal has NaN or Inf samples")
    return x


def forward(signal, cfg=StftConfig()):
    """
    Forward STFT of a real multichannel signal.

    Parameters
    ----------
    signal: array_like (n_chan, n_samples) or (n_samples,)
    cfg: StftConfig

    Returns
    -------
    ndarray (n_chan, n_freq, n_frames), complex128
    """
    x = _as_signal(signal)
    n_chan, n_samples = x.shape
    L, hop = cfg.window_length, cfg.hop
    if n_samples < L:
        raise SignalTooShort(f"need at least {L} samples, got {n_samples}")

    n_frames = cfg.n_frames(n_samples)
    padded = np.zeros((n_chan, (n_frames - 1) * hop + L))
    padded[:, cfg.front_pad : cfg.front_pad + n_samples] = x

    frames = np.lib.stride_tricks.sliding_window_view(padded, L, axis=-1)[:, ::hop]
    spec = np.fft.rfft(frames * cfg.analysis_window, axis=-1)
    return np.ascontiguousarray(spec.transpose(0, 2, 1))


def inverse(spec, cfg=StftConfig(), out_length=None):
    """
    Inverse STFT by weighted overlap-add.

    Parameters
    ----------
    spec: array_like (n_chan, n_freq, n_frames)
    cfg: StftConfig
        Must match the configuration used for analysis.
    out_length: int, optional
        Number of samples to return. Defaults to everything the frames cover
        after the front padding.

    Returns
    -------
    ndarray (n_chan, out_length)
    """
    S = as_tensor(spec)
    n_chan, n_freq, n_frames = S.shape
    L, hop = cfg.window_length, cfg.hop
    if n_freq != cfg.n_freq:
        raise ShapeMismatch(f"expected {cfg.n_freq} frequency bins, got {n_freq}")

    covered = (n_frames - 1) * hop + L - cfg.front_pad
    if out_length is None:
        out_length = covered
    if out_length > covered:
        raise ShapeMismatch(f"out_length {out_length} exceeds covered length {covered}")

    frames = np.fft.irfft(S.transpose(0, 2, 1), n=L, axis=-1) * cfg.synthesis_window
    out = np.zeros((n_chan, (n_frames - 1) * hop + L))
    for n in range(n_frames):
        out[:, n * hop : n * hop + L] += frames[:, n]
    out /= cfg.ola_gain()
    return out[:, cfg.front_pad : cfg.front_pad + out_length]


def read_wav(path):
    """Read a WAV file as float64 ``(n_chan, n_samples)`` plus sample rate.

    Integer PCM is scaled to [-1, 1).
    """
    fs, data = wavfile.read(path)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return np.ascontiguousarray(data.T), fs


def write_wav(path, signal, sample_rate, fmt="float32"):
    """Write ``(n_chan, n_samples)`` or mono samples as float32 or pcm16."""
    x = _as_signal(signal)
    if fmt == "float32":
        data = x.T.astype(np.float32)
    elif fmt == "pcm16":
        data = np.clip(np.round(x.T * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ConfigError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(path, int(sample_rate), data)
