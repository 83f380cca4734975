"""Generalized end-to-end (softmax) speaker-verification loss.

Embeddings are laid out speaker-major: row ``j * M + i`` is utterance ``i`` of
speaker ``j``. The similarity of an utterance to its own speaker uses the
centroid computed without that utterance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

MIN_SCALE = 1e-6


class DegenerateBatchError(ValueError):
    pass


@dataclass
class SimilarityScale:
    w: float = 10.0
    b: float = -5.0

    def clamp(self) -> None:
        self.w = max(float(self.w), MIN_SCALE)


@dataclass
class SimilarityCache:
    e: np.ndarray  # (N, M, D) raw embeddings
    e_norm: np.ndarray  # (N, M)
    e_hat: np.ndarray
    m_full: np.ndarray  # (N, D) speaker means
    m_full_norm: np.ndarray  # (N,)
    m_loo: np.ndarray  # (N, M, D) leave-one-out means
    m_loo_norm: np.ndarray  # (N, M)
    cos: np.ndarray  # (N*M, N)
    scale: SimilarityScale


def _split(embeddings: np.ndarray, n_speakers: int) -> np.ndarray:
    e = np.asarray(embeddings, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] % n_speakers:
        raise ValueError(f"cannot split {e.shape} embeddings into {n_speakers} speakers")
    m = e.shape[0] // n_speakers
    if n_speakers < 2 or m < 2:
        raise ValueError("GE2E needs at least 2 speakers with at least 2 utterances each")
    return e.reshape(n_speakers, m, e.shape[1])


def similarity_forward(
    embeddings: np.ndarray, n_speakers: int, scale: SimilarityScale
) -> tuple[np.ndarray, SimilarityCache]:
    """Scaled cosine similarity of every utterance to every speaker centroid.

    Returns ``S`` of shape ``(N*M, N)`` and a cache for :func:`ge2e_backward`.
    """
    e = _split(embeddings, n_speakers)
    N, M, D = e.shape
    e_norm = np.linalg.norm(e, axis=2)
    if np.any(e_norm == 0):
        raise DegenerateBatchError("zero-norm embedding in batch")
    e_hat = e / e_norm[..., None]

    m_full = e.mean(axis=1)
    m_loo = (e.sum(axis=1, keepdims=True) - e) / (M - 1)
    m_full_norm = np.linalg.norm(m_full, axis=1)
    m_loo_norm = np.linalg.norm(m_loo, axis=2)
    if np.any(m_full_norm < 1e-12) or np.any(m_loo_norm < 1e-12):
        raise DegenerateBatchError("zero-norm speaker centroid")
    c_full = m_full / m_full_norm[:, None]
    c_loo = m_loo / m_loo_norm[..., None]

    cos = np.einsum("jid,kd->jik", e_hat, c_full)
    own = np.einsum("jid,jid->ji", e_hat, c_loo)
    cos[np.arange(N), :, np.arange(N)] = own
    cos = cos.reshape(N * M, N)
    S = scale.w * cos + scale.b
    return S, SimilarityCache(e, e_norm, e_hat, m_full, m_full_norm, m_loo, m_loo_norm, cos, scale)


def similarity_matrix(embeddings: np.ndarray, n_speakers: int, scale: SimilarityScale) -> np.ndarray:
    return similarity_forward(embeddings, n_speakers, scale)[0]


def ge2e_softmax_loss(S: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum over rows of ``-S[row, own] + logsumexp(S[row, :])`` and ``dL/dS``."""
    S = np.asarray(S, dtype=np.float64)
    NM, N = S.shape
    if NM % N:
        raise ValueError(f"similarity matrix shape {S.shape} is not (N*M, N)")
    own = np.repeat(np.arange(N), NM // N)
    rows = np.arange(NM)
    loss = float(np.sum(logsumexp(S, axis=1) - S[rows, own]))
    grad = softmax(S, axis=1)
    grad[rows, own] -= 1.0
    return loss, grad


def _cos_grad(u_hat: np.ndarray, v_hat: np.ndarray, cos: np.ndarray, u_norm: np.ndarray) -> np.ndarray:
    # d cos(u, v) / d u
    return (v_hat - cos[..., None] * u_hat) / u_norm[..., None]


def ge2e_backward(
    cache: SimilarityCache, dS: np.ndarray
) -> tuple[np.ndarray, float, float]:
    """Chain ``dL/dS`` back to embeddings, scale ``w`` and offset ``b``."""
    N, M, D = cache.e.shape
    dS = np.asarray(dS, dtype=np.float64)
    dw = float(np.sum(dS * cache.cos))
    db = float(np.sum(dS))
    dcos = (cache.scale.w * dS).reshape(N, M, N)
    cos = cache.cos.reshape(N, M, N)

    c_full = cache.m_full / cache.m_full_norm[:, None]
    c_loo = cache.m_loo / cache.m_loo_norm[..., None]
    own_mask = np.eye(N, dtype=bool)[:, None, :]  # [j, ., k] true when k == j
    dcos_other = np.where(own_mask, 0.0, dcos)
    dcos_own = dcos[np.arange(N), :, np.arange(N)]  # (N, M)
    cos_own = cos[np.arange(N), :, np.arange(N)]

    # direct path through the utterance's own normalized embedding
    de = np.einsum("jik,kd->jid", dcos_other, c_full)
    de -= np.einsum("jik,jik->ji", dcos_other, cos)[..., None] * cache.e_hat
    de += dcos_own[..., None] * (c_loo - cos_own[..., None] * cache.e_hat)
    de /= cache.e_norm[..., None]

    # full centroids, used for other speakers' rows
    g_cent = np.einsum("jik,jid->kd", dcos_other, cache.e_hat)
    g_cent -= np.einsum("jik,jik->k", dcos_other, cos)[:, None] * c_full
    g_cent /= cache.m_full_norm[:, None]
    de += g_cent[:, None, :] / M

    # leave-one-out centroids reach every other utterance of the same speaker
    g_loo = dcos_own[..., None] * (cache.e_hat - cos_own[..., None] * c_loo)
    g_loo /= cache.m_loo_norm[..., None]
    de += (g_loo.sum(axis=1, keepdims=True) - g_loo) / (M - 1)

    return de.reshape(N * M, D), dw, db


def ge2e_loss_and_grads(
    embeddings: np.ndarray, n_speakers: int, scale: SimilarityScale
) -> tuple[float, np.ndarray, float, float]:
    S, cache = similarity_forward(embeddings, n_speakers, scale)
    loss, dS = ge2e_softmax_loss(S)
    de, dw, db = ge2e_backward(cache, dS)
    return loss, de, dw, db
