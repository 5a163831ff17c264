"""
Scale-invariant SDR and SIR with permutation alignment.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import GMDPError, ShapeMismatch

CAP_DB = 300.0


class ZeroReference(GMDPError, ValueError):
    pass


class DegenerateSpan(GMDPError, ValueError):
    pass


@dataclass
class EvalReport:
    """Metrics of ``K`` estimates aligned to ``K`` references.

    ``permutation[i]`` is the reference matched to estimate ``i``; the
    per-source arrays are in estimate order.
    """

    si_sdr: np.ndarray
    si_sir: np.ndarray
    permutation: tuple

    @property
    def mean_si_sdr(self):
        return float(np.mean(self.si_sdr))

    @property
    def mean_si_sir(self):
        return float(np.mean(self.si_sir))


def _ratio_db(num, den):
    if den <= 0 or num >= den * 10 ** (CAP_DB / 10):
        return CAP_DB
    if num <= 0:
        return -CAP_DB
    return float(10 * np.log10(num / den))


def _as_pair(estimate, reference):
    est = np.asarray(estimate, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if est.shape != ref.shape or est.ndim != 1:
        raise ShapeMismatch(f"estimate {est.shape} and reference {ref.shape} must be equal 1D")
    return est, ref


def si_sdr(estimate, reference):
    """
    Scale-invariant signal-to-distortion ratio in dB.

    The estimate is projected on the reference, ``alpha = <est, ref> /
    ||ref||^2``, and the ratio of ``||alpha ref||^2`` to the residual energy
    is returned, capped at +300 dB.
    """
    est, ref = _as_pair(estimate, reference)
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ZeroReference("reference signal is all zeros")
    target = (est @ ref) / ref_energy * ref
    residual = est - target
    return _ratio_db(target @ target, residual @ residual)


def si_sir(estimate, target_reference, interference_references):
    """
    Scale-invariant signal-to-interference ratio in dB.

    The target component is the projection of the estimate on the target
    reference. The interference component is the projection of the
    remaining residual on the span of all references, i.e. the part of the
    residual explained by the interferers once the target direction is
    removed.
    """
    est, ref = _as_pair(estimate, target_reference)
    interf = np.atleast_2d(np.asarray(interference_references, dtype=np.float64))
    if interf.shape[1] != est.shape[0]:
        raise ShapeMismatch("interference references must match the estimate length")
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ZeroReference("target reference is all zeros")
    e_target = (est @ ref) / ref_energy * ref
    residual = est - e_target

    if interf.shape[0] == 0:
        return _ratio_db(e_target @ e_target, 0.0)
    refs = np.vstack([ref, interf])
    G = refs @ refs.T
    if np.linalg.matrix_rank(G, tol=1e-12 * np.trace(G)) < refs.shape[0]:
        raise DegenerateSpan("references are linearly dependent")
    coef = np.linalg.solve(G, refs @ residual)
    e_interf = coef @ refs
    return _ratio_db(e_target @ e_target, e_interf @ e_interf)


def evaluate(estimates, references):
    """
    SI-SDR and SI-SIR of every estimate after resolving the permutation.

    The assignment maximizes the mean SI-SDR, searched exhaustively for up to
    four sources and by linear assignment beyond (the mean is separable, so
    both give the optimum).

    Parameters
    ----------
    estimates: array_like (K, n_samples)
    references: array_like (K, n_samples)

    Returns
    -------
    EvalReport
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    ref = np.atleast_2d(np.asarray(references, dtype=np.float64))
    if est.shape != ref.shape:
        raise ShapeMismatch(f"estimates {est.shape} and references {ref.shape} differ")
    K = est.shape[0]

    sdr = np.array([[si_sdr(est[i], ref[j]) for j in range(K)] for i in range(K)])
    if K <= 4:
        perm = max(
            itertools.permutations(range(K)),
            key=lambda pm: sum(sdr[i, pm[i]] for i in range(K)),
        )
    else:
        _, cols = linear_sum_assignment(-sdr)
        perm = tuple(int(c) for c in cols)

    sir = np.array(
        [
            si_sir(est[i], ref[perm[i]], np.delete(ref, perm[i], axis=0))
            for i in range(K)
        ]
    )
    return EvalReport(
        si_sdr=np.array([sdr[i, perm[i]] for i in range(K)]),
        si_sir=sir,
        permutation=tuple(int(j) for j in perm),
    )
