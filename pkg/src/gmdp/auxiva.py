"""
Determined independent vector analysis with auxiliary-function updates.

The source model is the spherical Laplace distribution, so the contrast of
source ``k`` in frame ``n`` is the norm of that frame across all frequency
bins. Demixing filters are updated by iterative projection. No scale
correction is applied here; see :mod:`gmdp.scaling`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ShapeMismatch, SingularCovariance, as_tensor

COV_RCOND = 1e-12


@dataclass(frozen=True)
class AuxIvaConfig:
    n_iters: int = 50
    weight_floor: float = 1e-10

    def __post_init__(self):
        if self.n_iters < 1:
            raise ConfigError("n_iters must be at least 1")
        if not self.weight_floor > 0:
            raise ConfigError("weight_floor must be positive")


def demix_apply(W, X):
    """
    Apply per-frequency demixing matrices, ``y_fn = W_f x_fn``.

    Parameters
    ----------
    W: array_like (n_freq, n_src, n_chan)
    X: array_like (n_chan, n_freq, n_frames)

    Returns
    -------
    ndarray (n_src, n_freq, n_frames)
    """
    W = np.asarray(W, dtype=np.complex128)
    X = as_tensor(X, "mixture")
    if W.ndim != 3 or W.shape[0] != X.shape[1] or W.shape[2] != X.shape[0]:
        raise ShapeMismatch(f"demixing {W.shape} incompatible with mixture {X.shape}")
    return np.einsum("fkm,mfn->kfn", W, X)


def source_norms(Y, floor=0.0):
    """Cross-frequency l2 norm of every source frame, shape (n_src, n_frames)."""
    return np.maximum(np.linalg.norm(Y, axis=1), floor)


def contrast(W, X, floor=1e-10):
    """Laplace IVA negative log-likelihood per frame, up to a constant.

    ``mean_n sum_k r_kn - 2 sum_f log|det W_f|``; the factor 2 is the
    Jacobian of a complex linear map.
    """
    Y = demix_apply(W, X)
    r = source_norms(Y, floor)
    _, logdet = np.linalg.slogdet(W)
    return float(np.sum(np.mean(r, axis=1)) - 2 * np.sum(logdet))


def separate(X, cfg=AuxIvaConfig(), W0=None, callback=None):
    """
    Separate a determined mixture with AuxIVA (iterative projection).

    Parameters
    ----------
    X: array_like (n_chan, n_freq, n_frames)
        STFT of the microphone signals.
    cfg: AuxIvaConfig
    W0: array_like (n_freq, n_chan, n_chan), optional
        Initial demixing matrices, identity by default.
    callback: callable, optional
        Called as ``callback(epoch, W)`` after every full sweep over sources.

    Returns
    -------
    W: ndarray (n_freq, n_src, n_chan)
    Y: ndarray (n_src, n_freq, n_frames)
    """
    X = as_tensor(X, "mixture")
    n_chan, n_freq, n_frames = X.shape
    if n_chan < 2:
        raise ShapeMismatch("need at least two channels for separation")

    if W0 is None:
        W = np.tile(np.eye(n_chan, dtype=np.complex128), (n_freq, 1, 1))
    else:
        W = np.array(W0, dtype=np.complex128)
        if W.shape != (n_freq, n_chan, n_chan):
            raise ShapeMismatch(f"W0 must be {(n_freq, n_chan, n_chan)}, got {W.shape}")

    Xf = X.transpose(1, 0, 2)  # (n_freq, n_chan, n_frames)
    eye = np.eye(n_chan)

    for epoch in range(cfg.n_iters):
        Y = demix_apply(W, X)
        weights = 1.0 / (2.0 * source_norms(Y, cfg.weight_floor))

        for k in range(n_chan):
            # weighted covariance of the mixture, (n_freq, n_chan, n_chan)
            V = (Xf * weights[k]) @ Xf.conj().transpose(0, 2, 1) / n_frames
            ok = _regular_bins(V, k)

            rhs = np.broadcast_to(eye[:, k, None], (int(ok.sum()), n_chan, 1))
            w = np.linalg.solve(W[ok] @ V[ok], rhs)[..., 0]
            denom = np.einsum("fi,fij,fj->f", w.conj(), V[ok], w).real
            W[ok, k, :] = (w / np.sqrt(denom)[:, None]).conj()

        if callback is not None:
            callback(epoch, W)

    return W, demix_apply(W, X)


def _regular_bins(V, k):
    """Mask of bins whose covariance can be inverted.

    Bins where fewer sources than channels are active are skipped (the
    filter keeps its value); if no bin is regular the input is degenerate.
    """
    ev = np.linalg.eigvalsh(V)
    ok = ev[:, 0] > COV_RCOND * ev[:, -1]
    if not np.any(ok):
        raise SingularCovariance(
            f"weighted covariance of source {k} is singular at every frequency "
            "(all-zero or linearly dependent input channels?)"
        )
    return ok
