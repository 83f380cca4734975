"""
Embedding space: PCA and fictitious speakers
============================================

Fictitious speakers are points drawn uniformly on the unit hypersphere.
In 64 dimensions two such points are nearly orthogonal.
"""

import numpy as np

from dvector.embedding_space import fictitious_report, fit_pca, mean_pairwise_abs_cos, sample_fictitious

F = sample_fictitious(64, 1000, seed=0)
print(f"mean |cos| between fictitious speakers {mean_pairwise_abs_cos(F):.4f}")
print(f"norm of their mean {np.linalg.norm(F.mean(axis=0)):.4f}")

# stand-in "real" speakers: tight clusters around a few directions
rng = np.random.default_rng(3)
centers = sample_fictitious(64, 5, seed=4)
real = []
for k, c in enumerate(centers):
    pts = c + 0.15 * rng.normal(size=(10, 64))
    real += [(f"spk{k}/{j}", p / np.linalg.norm(p)) for j, p in enumerate(pts)]

rep = fictitious_report(F[:10], {"real": real})
print(f"fictitious-to-nearest-real mean cosine {rep['real']['mean_nn_cosine']:.3f}")

pca = fit_pca(np.stack([v for _, v in real]), k=2)
print("explained variance ratio", np.round(pca.explained_variance_ratio, 3))
Z = pca.transform(np.stack([v for _, v in real]))
for k in range(5):
    print(f"spk{k} centre in the PCA plane", np.round(Z[10 * k : 10 * k + 10].mean(axis=0), 3))
