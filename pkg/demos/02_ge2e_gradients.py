"""
The GE2E loss and its gradients
===============================

Each utterance is scored against every speaker centroid; its own centroid
leaves the utterance out. The loss is a softmax over those scores.
"""

import numpy as np

from dvector.ge2e import SimilarityScale, ge2e_loss_and_grads, similarity_matrix
from dvector.nn_core import AdamState, adam_step, finite_diff_check

rng = np.random.default_rng(1)
N, M, D = 3, 4, 8
e = rng.normal(size=(N * M, D))
scale = SimilarityScale()

S = similarity_matrix(e, N, scale)
print("similarity matrix, rows = utterances, columns = speakers")
print(np.round(S, 2))

loss, de, dw, db = ge2e_loss_and_grads(e, N, scale)
w = np.array([scale.w])


def f():
    return ge2e_loss_and_grads(e, N, SimilarityScale(w[0], scale.b))[0]


report = finite_diff_check(f, {"e": e, "w": w}, {"e": de, "w": np.array([dw])}, eps=1e-6)
print(f"loss {loss:.4f}, finite-difference max rel error {report.max_rel_error:.2e}")
# the softmax is shift invariant, so the offset never receives gradient
print("d loss / d offset =", db)

# a few Adam steps pull utterances toward their own centroids
params, opt = {"e": e}, AdamState()
for step in range(200):
    loss, de, _, _ = ge2e_loss_and_grads(e, N, scale)
    adam_step(params, {"e": de}, opt, lr=0.05)
    if step % 50 == 0:
        print(f"step {step:3d} loss {loss:.4f}")
