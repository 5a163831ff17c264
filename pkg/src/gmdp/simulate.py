"""
Seeded synthetic convolutive mixtures with ground-truth source images.

Room acoustics are replaced by short random FIR filters: a direct-path tap
on the matching microphone plus Gaussian taps under an exponential envelope.
Filters are kept well below the STFT window length so that convolution is
close to a per-bin multiplication in the STFT domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .core import ConfigError, ShapeMismatch

# independent random streams derived from one seed
_FILTERS, _NOISE, _SOURCES = 0, 1, 2


@dataclass(frozen=True)
class MixConfig:
    """Parameters of one synthetic scenario.

    ``tap_std`` is the standard deviation of the random taps before the
    ``decay ** t`` envelope. ``noise_snr`` is in dB relative to each
    microphone's noiseless power; ``None`` disables the noise.
    """

    K: int = 2
    M: Optional[int] = None
    filter_length: int = 256
    decay: float = 0.98
    direct_gain: float = 1.0
    tap_std: float = 0.2
    noise_snr: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.M is None:
            object.__setattr__(self, "M", self.K)
        if self.K < 1 or self.M < 1:
            raise ConfigError("K and M must be at least 1")
        if self.filter_length < 1:
            raise ConfigError("filter_length must be at least 1")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if self.tap_std < 0:
            raise ConfigError("tap_std must be non-negative")

    def rng(self, stream):
        return np.random.default_rng([self.seed, stream])


def make_filters(cfg):
    """
    Random room-like FIR filters.

    Returns
    -------
    ndarray (M, K, filter_length)
        ``h[m, k]`` is the filter from source ``k`` to microphone ``m``.
    """
    t = np.arange(cfg.filter_length)
    h = cfg.rng(_FILTERS).standard_normal((cfg.M, cfg.K, cfg.filter_length))
    h *= cfg.tap_std * cfg.decay**t
    for k in range(min(cfg.K, cfg.M)):
        h[k, k, 0] += cfg.direct_gain
    return h


def transfer_functions(filters, n_fft):
    """One-sided frequency responses, shape (M, K, n_fft // 2 + 1)."""
    return np.fft.rfft(filters, n=n_fft, axis=-1)


def mix(sources, cfg, filters=None):
    """
    Convolve sources with the mixing filters.

    Parameters
    ----------
    sources: array_like (K, n_samples)
    cfg: MixConfig
    filters: array_like (M, K, L), optional
        Overrides :func:`make_filters`.

    Returns
    -------
    mixtures: ndarray (M, n_samples)
    images: ndarray (K, M, n_samples)
        ``images[k, m]`` is source ``k`` as recorded at microphone ``m``.
    """
    s = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    h = make_filters(cfg) if filters is None else np.asarray(filters, dtype=np.float64)
    if h.ndim != 3 or h.shape[1] != s.shape[0]:
        raise ShapeMismatch(f"filters {h.shape} incompatible with {s.shape[0]} sources")
    n = s.shape[1]

    images = fftconvolve(s[None, :, :], h, axes=-1)[..., :n]  # (M, K, n)
    images = np.ascontiguousarray(images.transpose(1, 0, 2))
    mixtures = images.sum(axis=0)

    if cfg.noise_snr is not None:
        power = np.mean(mixtures**2, axis=1, keepdims=True)
        noise = cfg.rng(_NOISE).standard_normal(mixtures.shape)
        mixtures = mixtures + noise * np.sqrt(power * 10 ** (-cfg.noise_snr / 10))
    return mixtures, images


def synthetic_sources(K, n_samples, fs=16000, seed=0):
    """
    Speech-like test signals, sparse in time and frequency.

    Each source is a train of bursts separated by pauses. A burst is either
    voiced (harmonics of a gliding pitch under a random spectral envelope)
    or unvoiced (coloured noise), with a Laplace-distributed level. Every
    output is normalized to unit RMS.
    """
    rng = np.random.default_rng([seed, _SOURCES])
    out = np.zeros((K, n_samples))
    t_max = n_samples / fs
    for k in range(K):
        t0 = rng.uniform(0.0, 0.2)
        while t0 < t_max:
            dur = rng.uniform(0.08, 0.35)
            i0 = int(t0 * fs)
            i1 = min(n_samples, i0 + int(dur * fs))
            if i1 - i0 > 16:
                seg = _burst(rng, i1 - i0, fs)
                out[k, i0:i1] += abs(rng.laplace(1.0, 0.5)) * seg
            t0 += dur + rng.exponential(0.12)
        rms = np.sqrt(np.mean(out[k] ** 2))
        if rms > 0:
            out[k] /= rms
    return out


def _burst(rng, n, fs):
    t = np.arange(n) / fs
    env = np.sin(np.pi * np.arange(n) / n) ** 2
    if rng.random() < 0.75:
        f0 = rng.uniform(90, 260) * (1 + rng.uniform(-0.15, 0.15) * t / t[-1])
        phase = 2 * np.pi * np.cumsum(f0) / fs
        formants = rng.uniform(300, 3500, size=3)
        sig = np.zeros(n)
        for h in range(1, int(fs / 2 / f0.max())):
            fh = h * f0.mean()
            gain = sum(np.exp(-0.5 * ((fh - fc) / 150.0) ** 2) for fc in formants)
            sig += (gain + 0.02) / h * np.cos(h * phase + rng.uniform(0, 2 * np.pi))
    else:
        sig = fftconvolve(rng.standard_normal(n), rng.standard_normal(8), mode="same")
    return env * sig / max(np.sqrt(np.mean(sig**2)), 1e-12)


def make_scenario(cfg, n_samples, fs=16000, sources=None):
    """Sources, mixtures and images of one seeded scenario.

    Synthetic sources are drawn when ``sources`` is omitted.
    """
    if sources is None:
        sources = synthetic_sources(cfg.K, n_samples, fs, cfg.seed)
    sources = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    if sources.shape[0] != cfg.K:
        raise ShapeMismatch(f"expected {cfg.K} sources, got {sources.shape[0]}")
    mixtures, images = mix(sources, cfg)
    return sources, mixtures, images
