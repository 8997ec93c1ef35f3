"""Matrix norms used by the complexity measures and generalization bounds.

Matrices are plain 2-D ``numpy`` arrays of float64. A layer map from width
``m_{l-1}`` to width ``m_l`` is stored as an ``m_l x m_{l-1}`` array.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

POWER_MAX_ITER = 10_000
POWER_RTOL = 1e-12


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix has non-finite entries")
    return a


def spectral_norm(m, seed: int = 0) -> float:
    """Largest singular value via power iteration on ``G^T G``.

    Iterates until successive Rayleigh quotients agree to ``POWER_RTOL``
    (relative). If that does not happen within ``POWER_MAX_ITER`` steps the
    value is taken from a LAPACK SVD instead.
    """
    a, scale = _scaled(m)
    if scale == 0.0:
        return 0.0
    gram = a.T @ a
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam_old = float(v @ gram @ v)
    for _ in range(POWER_MAX_ITER):
        w = gram @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector fell in the null space; restart from a fresh draw
            v = rng.standard_normal(gram.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        lam = float(v @ gram @ v)
        if abs(lam - lam_old) <= POWER_RTOL * abs(lam):
            return scale * float(np.sqrt(max(lam, 0.0)))
        lam_old = lam
    logger.warning("power iteration did not converge on %s matrix; using SVD", a.shape)
    return scale * float(np.linalg.svd(a, compute_uv=False)[0])


def _scaled(m) -> tuple[np.ndarray, float]:
    """The matrix divided by its largest magnitude, so squares neither underflow nor overflow."""
    a = as_matrix(m)
    scale = float(np.max(np.abs(a)))
    return (a / scale if scale > 0 else a), scale


def frobenius_norm(m) -> float:
    a, scale = _scaled(m)
    return scale * float(np.sqrt(np.sum(a * a)))


def norm_2_1(m) -> float:
    """Sum over columns of each column's Euclidean norm."""
    a, scale = _scaled(m)
    return scale * float(np.sum(np.sqrt(np.sum(a * a, axis=0))))


def norm_1_inf(m) -> float:
    """Max over rows of the row's absolute sum (incoming weights of a neuron)."""
    a = as_matrix(m)
    return float(np.max(np.sum(np.abs(a), axis=1)))


def norm_ratio(m) -> float:
    """``norm_2_1 / spectral_norm``; 1 for the zero matrix (limit convention)."""
    s = spectral_norm(m)
    if s == 0.0:
        return 1.0
    return norm_2_1(m) / s


def path_norm(weights) -> float:
    """Sum over all input-to-output index paths of products of |weights|.

    ``weights`` is the ordered list ``[W^1, ..., W^L]`` (or anything with a
    ``weights`` attribute holding it). Evaluated as the entrywise-absolute
    matrix chain ``|W^L| ... |W^1|`` summed.
    """
    ws = getattr(weights, "weights", weights)
    chain = np.abs(as_matrix(ws[0]))
    for w in ws[1:]:
        chain = np.abs(as_matrix(w)) @ chain
    return float(chain.sum())
