"""
Train a small speaker encoder and measure verification EER
==========================================================

A seeded synthetic corpus (16 voices x 30 utterances) is split by speaker.
The encoder is trained with the GE2E loss on 12 voices and scored on the 4
it never saw. Pass the number of training steps as the first argument
(default 300; the acceptance run uses 2000).
"""

import sys
import tempfile
import time

import numpy as np

from dvector.corpus import encoder_features, generate_synthetic_corpus, index_segments, split_by_speaker
from dvector.encoder import embed_utterance, embedding_stability_sweep, train_encoder
from dvector.verification import compute_eer, cosine_separation, enroll, score_trials

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
root = tempfile.mkdtemp(prefix="dvector_demo_")
t0 = time.perf_counter()
manifest = split_by_speaker(generate_synthetic_corpus(16, 30, 7, root), (0.75, 0.0, 0.25), seed=0)
print("held-out voices:", manifest.subset("test").speakers())

model, curve = train_encoder(index_segments(manifest.subset("train")), steps=steps, seed=0)
print(f"trained {steps} steps in {time.perf_counter() - t0:.0f} s; loss {curve[0]:.3f} -> {np.mean(curve[-20:]):.3f}")

test = manifest.subset("test")
feats, embs = {}, {}
for spk, entries in sorted(test.by_speaker().items()):
    entries = sorted(entries, key=lambda e: e.utterance_id)
    feats[spk] = [encoder_features(test.load(e)).frames for e in entries]
    embs[spk] = [embed_utterance(model, f) for f in feats[spk]]

# enroll on the first half of each voice, test on the second half
half = {s: len(v) // 2 for s, v in embs.items()}
enrolled = enroll({s: v[: half[s]] for s, v in embs.items()})
tests = [(f"{s}/{k}", s, e) for s, v in embs.items() for k, e in enumerate(v[half[s] :])]
res = compute_eer(score_trials(tests, enrolled))
labels = [s for s, v in embs.items() for _ in v]
within, between = cosine_separation(labels, np.stack([e for v in embs.values() for e in v]))
print(f"held-out EER {res.eer:.3f}; within {within:.3f} between {between:.3f}")

# longer crops give steadier embeddings
utts = [(s, f) for s, fs in feats.items() for f in fs if len(f) >= 320]
for row in embedding_stability_sweep(model, utts, [0.8, 1.6, 2.4, 3.2]):
    print(f"  crop {row['duration_s']:.1f} s  mean cos {row['mean_cos']:.3f} +- {row['std_err']:.3f}")
