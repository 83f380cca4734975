"""Embedding-space analytics: PCA, nearest neighbors, fictitious speakers."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np


@dataclass
class PcaModel:
    mean: np.ndarray  # (D,)
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,) eigenvalues of the population covariance
    explained_variance_ratio: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean


def fit_pca(embeddings: np.ndarray, k: int = 2) -> PcaModel:
    """Exact PCA by eigendecomposition of the (1/n) covariance.

    Each component is signed so its largest-magnitude coordinate is positive.
    """
    X = np.asarray(embeddings, dtype=np.float64)
    n, d = X.shape
    if n < k + 1:
        raise ValueError(f"PCA with k={k} needs at least {k + 1} samples, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / n
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    tol = max(vals[0], 1e-300) * max(n, d) * np.finfo(float).eps
    rank = int(np.sum(vals > tol))
    if k > rank:
        raise ValueError(f"k={k} exceeds the rank {rank} of the centered data")
    comps = vecs[:, :k].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = vals.sum()
    return PcaModel(mean, comps, vals[:k], vals[:k] / total if total > 0 else np.zeros(k))


@dataclass(frozen=True)
class NeighborResult:
    query_id: str
    neighbor_id: str
    cosine: float


def nearest_neighbor(
    query: np.ndarray, reference: Sequence[Tuple[str, np.ndarray]], query_id: str = "", tie_tol: float = 1e-12
) -> NeighborResult:
    """Linear scan for the highest cosine; near-ties go to the lowest id."""
    if not reference:
        raise ValueError("reference set is empty")
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    R = np.stack([np.asarray(v, dtype=np.float64) for _, v in reference])
    cos = (R @ q) / np.linalg.norm(R, axis=1)
    best = cos.max()
    tied = [reference[k][0] for k in np.flatnonzero(cos >= best - tie_tol)]
    winner = min(tied)
    idx = next(k for k, (rid, _) in enumerate(reference) if rid == winner)
    return NeighborResult(query_id, winner, float(np.clip(cos[idx], -1.0, 1.0)))


def sample_fictitious(d: int, n: int, seed: int) -> np.ndarray:
    """``n`` points uniform on the unit sphere in ``R^d`` (normalized Gaussians)."""
    if d < 2:
        raise ValueError("hypersphere sampling needs d >= 2")
    g = np.random.default_rng(seed).standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def fictitious_report(
    fictitious: np.ndarray,
    reference_sets: Dict[str, Sequence[Tuple[str, np.ndarray]]],
) -> Dict[str, dict]:
    """Nearest-neighbor cosine of each fictitious embedding against each reference set."""
    F = np.asarray(fictitious, dtype=np.float64)
    out = {}
    for name, ref in reference_sets.items():
        if not ref:
            raise ValueError(f"reference set {name!r} is empty")
        if np.asarray(ref[0][1]).shape[-1] != F.shape[1]:
            raise ValueError(f"reference set {name!r} has a different dimension")
        hits = [nearest_neighbor(f, ref, query_id=f"fict{k:03d}") for k, f in enumerate(F)]
        out[name] = {
            "mean_nn_cosine": float(np.mean([h.cosine for h in hits])),
            "neighbors": [(h.query_id, h.neighbor_id, h.cosine) for h in hits],
        }
    return out


def mean_pairwise_abs_cos(X: np.ndarray) -> float:
    X = np.asarray(X, dtype=np.float64)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    G = np.abs(X @ X.T)
    n = len(X)
    return float((G.sum() - np.trace(G)) / (n * (n - 1)))


def export_projection_csv(
    path, rows: Sequence[Tuple[str, str, str]], embeddings: np.ndarray, pca: PcaModel
) -> None:
    """Write ``utterance_id,speaker_id,kind,pc1,pc2`` for plotting."""
    Z = pca.transform(embeddings)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", "speaker_id", "kind", "pc1", "pc2"])
        for (utt, spk, kind), z in zip(rows, Z):
            if kind not in ("real", "synthetic", "fictitious"):
                raise ValueError(f"unknown embedding kind {kind!r}")
            w.writerow([utt, spk, kind, f"{z[0]:.9g}", f"{z[1]:.9g}" if len(z) > 1 else "0"])
