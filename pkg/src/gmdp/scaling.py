"""
Source image estimation for the output of determined BSS.

Three estimators of the per-frequency scale of a separated source at a
microphone are provided:

* projection back, through the columns of the inverse demixing matrices;
* minimal distortion (least squares against the microphone spectrogram);
* generalized minimal distortion, which replaces the squared error with the
  ``p``-th power of the mixed ``l_{p,q}`` norm of the residual spectrogram
  and minimizes it by majorization-minimization, i.e. iteratively
  reweighted least squares.

Shapes follow :mod:`gmdp.core`: ``X`` is ``(n_mics, n_freq, n_frames)``,
``Y`` is ``(n_src, n_freq, n_frames)`` and scaling coefficients are
``(n_mics, n_src, n_freq)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CONDITION_BOUND,
    InvalidExponent,
    MixedNormParams,
    ShapeMismatch,
    as_spectrogram,
    as_tensor,
    check_demixing,
    check_exponents,
)

METHODS = ("pb", "mdp", "gmdp")


@dataclass
class ScalingResult:
    """Source images and the coefficients that produced them.

    ``images`` has shape ``(n_src, n_mics, n_freq, n_frames)`` and
    ``coefficients`` has shape ``(n_mics, n_src, n_freq)``. ``iterations``
    is ``(n_mics, n_src)``; ``objective_trace[m][k]`` lists the objective at
    the initial point and after every accepted update (GMDP only).
    """

    images: np.ndarray
    coefficients: np.ndarray
    iterations: np.ndarray
    objective_trace: list = field(default_factory=list)
    mics: tuple = ()


def mixed_norm(E, p, q):
    """Mixed norm ``(sum_n (sum_f |e_fn|^q)^(p/q))^(1/p)`` of ``E[f, n]``."""
    if not (p > 0 and q > 0):
        raise InvalidExponent(f"exponents must be positive, got p={p}, q={q}")
    A = np.abs(as_spectrogram(E, "residual"))
    scale = A.max()
    if scale == 0:
        return 0.0
    # normalize first so that small exponents do not underflow
    A = A / scale
    frames = np.sum(A**q, axis=0) ** (p / q)
    return float(scale * np.sum(frames) ** (1.0 / p))


def mixed_norm_objective(E, p, q):
    """``mixed_norm(E, p, q) ** p``, the quantity minimized by GMDP."""
    A = np.abs(E)
    return float(np.sum(np.sum(A**q, axis=0) ** (p / q)))


def irls_weights(E, p, q, floor=0.0):
    """
    Weights of the quadratic majorizer of ``||E||_{p,q}^p`` at ``E``.

    ``w_fn = p / (2 * (sum_f' |e_f'n|^q)^(1 - p/q) * |e_fn|^(2 - q))``, with
    every magnitude floored at ``floor`` (absolute). With these weights
    ``sum w_fn |e'_fn|^2 + const`` upper-bounds the objective at any ``E'``
    and touches it at ``E`` (when no magnitude is floored).
    """
    A = np.maximum(np.abs(E), floor)
    frame = np.sum(A**q, axis=0, keepdims=True)
    return p / (2.0 * frame ** (1.0 - p / q) * A ** (2.0 - q))


def apply_scaling(Z, Y):
    """
    Source images ``images[k, m, f, n] = Z[m, k, f] * Y[k, f, n]``.

    Parameters
    ----------
    Z: array_like (n_mics, n_src, n_freq)
    Y: array_like (n_src, n_freq, n_frames)

    Returns
    -------
    ScalingResult with unit iteration counts.
    """
    Y = as_tensor(Y, "separated sources")
    Z = np.asarray(Z, dtype=np.complex128)
    if Z.ndim != 3 or Z.shape[1:] != Y.shape[:2]:
        raise ShapeMismatch(f"coefficients {Z.shape} incompatible with sources {Y.shape}")
    images = Z.transpose(1, 0, 2)[:, :, :, None] * Y[:, None, :, :]
    n_mics, n_src = Z.shape[:2]
    return ScalingResult(
        images=images,
        coefficients=Z,
        iterations=np.ones((n_mics, n_src), dtype=int),
        mics=tuple(range(n_mics)),
    )


def projection_back(W, Y, mics=None, bound=CONDITION_BOUND):
    """
    Projection back: the image of source ``k`` at mic ``m`` is
    ``(W_f^{-1})_{mk} y_kfn``.

    Parameters
    ----------
    W: array_like (n_freq, n_src, n_mics)
        Square demixing matrices.
    Y: array_like (n_src, n_freq, n_frames)
    mics: sequence of int, optional
        Microphones for which to compute images (all by default).
    bound: float
        Largest tolerated condition number of a demixing matrix.
    """
    Y = as_tensor(Y, "separated sources")
    W = np.asarray(W, dtype=np.complex128)
    check_demixing(W, bound)
    if W.shape[:2] != (Y.shape[1], Y.shape[0]):
        raise ShapeMismatch(f"demixing {W.shape} incompatible with sources {Y.shape}")
    A = np.linalg.inv(W)  # (n_freq, n_mics, n_src)
    mics = _mic_list(mics, A.shape[1])
    Z = A[:, mics, :].transpose(1, 2, 0)
    res = apply_scaling(Z, Y)
    res.mics = tuple(mics)
    return res


def mdp_coefficients(x, y):
    """
    Least-squares scale of ``y`` onto ``x`` for every frequency bin.

    ``z_f = sum_n x_fn conj(y_fn) / sum_n |y_fn|^2``, and ``z_f = 0`` where
    ``y`` is identically zero.
    """
    num = np.sum(x * np.conj(y), axis=-1)
    den = np.sum(np.abs(y) ** 2, axis=-1)
    z = np.zeros(num.shape, dtype=np.complex128)
    np.divide(num, den, out=z, where=den > 0)
    return z


def mdp(X, Y, k=None, mics=None):
    """
    Minimal distortion principle coefficients.

    Parameters
    ----------
    X: array_like (n_mics, n_freq, n_frames)
    Y: array_like (n_src, n_freq, n_frames)
    k: int, optional
        Only this source (all sources when omitted).
    mics: sequence of int, optional

    Returns
    -------
    ndarray (len(mics), n_freq) when ``k`` is given, else
    (len(mics), n_src, n_freq).
    """
    X, Y = _check_pair(X, Y)
    mics = _mic_list(mics, X.shape[0])
    srcs = range(Y.shape[0]) if k is None else [k]
    Z = np.stack(
        [np.stack([mdp_coefficients(X[m], Y[s]) for s in srcs]) for m in mics]
    )
    return Z[:, 0] if k is not None else Z


def gmdp_single(x, y, params=MixedNormParams(), z0=None):
    """
    Minimize ``||x - diag(z) y||_{p,q}^p`` over ``z`` by MM / IRLS.

    Parameters
    ----------
    x, y: array_like (n_freq, n_frames)
        Microphone spectrogram and separated source.
    params: MixedNormParams
    z0: array_like (n_freq,), optional
        Starting point, the least-squares solution by default.

    Returns
    -------
    z: ndarray (n_freq,)
    n_iter: int
        Number of accepted updates.
    trace: list of float
        Objective at the starting point and after every accepted update.
    """
    x = as_spectrogram(x, "microphone spectrogram")
    y = as_spectrogram(y, "separated source")
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    p, q = params.p, params.q
    check_exponents(p, q)

    # work in units of the RMS of x, the floor is relative to it
    rms = np.sqrt(np.mean(np.abs(x) ** 2))
    if rms == 0:
        rms = 1.0
    xs = x / rms
    y_pow = np.abs(y) ** 2
    active = np.any(y_pow > 0, axis=1)

    z = mdp_coefficients(xs, y) if z0 is None else np.asarray(z0, dtype=np.complex128) / rms
    z = np.where(active, z, 0.0)

    def objective(z):
        return mixed_norm_objective(xs - z[:, None] * y, p, q)

    obj = objective(z)
    trace = [obj]
    n_iter = 0
    xy = xs * np.conj(y)
    for _ in range(params.max_iters):
        w = irls_weights(xs - z[:, None] * y, p, q, params.floor)
        num = np.sum(w * xy, axis=1)
        den = np.sum(w * y_pow, axis=1)
        z_new = np.zeros_like(z)
        np.divide(num, den, out=z_new, where=active)

        obj_new = objective(z_new)
        # floored weights may not majorize exactly; never accept an ascent
        if obj_new > obj * (1.0 + 1e-12):
            break

        prev_norm = np.linalg.norm(z[active])
        step = np.linalg.norm(z_new[active] - z[active])
        z, obj = z_new, obj_new
        trace.append(obj)
        n_iter += 1

        if prev_norm > 0:
            if step <= params.rel_tol * prev_norm:
                break
        elif np.linalg.norm(z[active]) <= params.floor:
            break

    scale_p = rms**p
    return z * rms, n_iter, [t * scale_p for t in trace]


def gmdp(X, Y, k=None, params=MixedNormParams(), mics=None):
    """
    Generalized minimal distortion coefficients.

    Every (mic, source) problem is solved independently, starting from the
    least-squares (MDP) solution.

    Parameters
    ----------
    X: array_like (n_mics, n_freq, n_frames)
    Y: array_like (n_src, n_freq, n_frames)
    k: int, optional
        Only this source (all sources when omitted).
    params: MixedNormParams
    mics: sequence of int, optional

    Returns
    -------
    Z: ndarray (len(mics), n_src, n_freq), or (len(mics), n_freq) for one ``k``
    iterations: ndarray of int with the leading shape of ``Z``
    traces: nested lists ``traces[i][j]`` of objective values
    """
    X, Y = _check_pair(X, Y)
    mics = _mic_list(mics, X.shape[0])
    srcs = list(range(Y.shape[0])) if k is None else [k]

    Z = np.zeros((len(mics), len(srcs), X.shape[1]), dtype=np.complex128)
    iters = np.zeros((len(mics), len(srcs)), dtype=int)
    traces = []
    for i, m in enumerate(mics):
        row = []
        for j, s in enumerate(srcs):
            Z[i, j], iters[i, j], tr = gmdp_single(X[m], Y[s], params)
            row.append(tr)
        traces.append(row)

    if k is not None:
        return Z[:, 0], iters[:, 0], [row[0] for row in traces]
    return Z, iters, traces


def estimate_images(X, Y, method="mdp", W=None, params=None, mics=None):
    """
    Source images of every separated source with the chosen method.

    Parameters
    ----------
    X: array_like (n_mics, n_freq, n_frames)
        Mixture spectrograms (unused by projection back).
    Y: array_like (n_src, n_freq, n_frames)
    method: {'pb', 'mdp', 'gmdp'}
    W: array_like (n_freq, n_src, n_mics), optional
        Demixing matrices, required for projection back.
    params: MixedNormParams, optional
        GMDP parameters.
    mics: sequence of int, optional
        Microphones at which images are wanted (all by default).

    Returns
    -------
    ScalingResult
        ``images[k, i]`` is the image at microphone ``mics[i]``.
    """
    if method == "pb":
        if W is None:
            raise ValueError("projection back needs the demixing matrices")
        return projection_back(W, Y, mics)
    if method == "mdp":
        res = apply_scaling(mdp(X, Y, mics=mics), Y)
    elif method == "gmdp":
        Z, iters, traces = gmdp(X, Y, params=params or MixedNormParams(), mics=mics)
        res = apply_scaling(Z, Y)
        res.iterations = iters
        res.objective_trace = traces
    else:
        raise ValueError(f"unknown method {method!r}, choose from {METHODS}")
    res.mics = tuple(_mic_list(mics, np.shape(X)[0]))
    return res


def _check_pair(X, Y):
    X = as_tensor(X, "mixture")
    Y = as_tensor(Y, "separated sources")
    if X.shape[1:] != Y.shape[1:]:
        raise ShapeMismatch(f"mixture {X.shape} and sources {Y.shape} differ in (F, N)")
    return X, Y


def _mic_list(mics, n_mics):
    if mics is None:
        return list(range(n_mics))
    mics = [int(m) for m in np.atleast_1d(mics)]
    for m in mics:
        if not 0 <= m < n_mics:
            raise IndexError(f"microphone {m} out of range for {n_mics} mics")
    return mics
