"""
Speaker transfer through a conditioned decoder
==============================================

A small recurrent decoder turns token sequences into 80-band mels, with the
speaker embedding appended to every input step. It is trained on 8 voices.
Then it is asked to speak as 8 voices it never saw, and the output is checked
with the frozen encoder.

Eight voices are a sparse sample of the embedding space, so every training
utterance is also used under a handful of random formant warps, each paired
with the encoder's embedding of the warped audio. The corpus is the same toy
corpus the encoder in demo 03 is trained on (seed 7), since the encoder only
separates voices of that kind reliably. Arguments: encoder checkpoint,
decoder steps (default 2000), number of warps per utterance (default 8).
"""

import sys
import tempfile

import numpy as np

from dvector.corpus import generate_synthetic_corpus
from dvector.encoder import EncoderModel
from dvector.transfer import run_transfer_demo
from dvector.verification import discrimination_eval

if len(sys.argv) < 2:
    sys.exit("usage: 05_transfer.py ENCODER.dvf [STEPS]  (train one with `dvector train-encoder`)")
encoder = EncoderModel.load(sys.argv[1])
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 2000
n_warps = int(sys.argv[3]) if len(sys.argv) > 3 else 8

corpus = generate_synthetic_corpus(16, 30, 7, tempfile.mkdtemp(prefix="dvector_tts_"))
res = run_transfer_demo(corpus, encoder, n_train_speakers=8, steps=steps, seed=0, n_warps=n_warps)
print(f"decoder loss {np.mean(res.curve[:10]):.3f} -> {np.mean(res.curve[-50:]):.3f}")
print("decoder voices:", res.train_speakers)

for spk in res.held_out_speakers:
    r = res.report[spk]
    print(f"  {spk}: cosine to target {r['cosine']:.3f}, nearest {r['nearest']}")
print(f"match rate {res.match_rate:.2f}")

sim = res.similarity
print(f"synthetic-synthetic {np.mean([v['to_synthetic'] for v in sim.values()]):.3f}  "
      f"synthetic-real {np.mean([v['to_real'] for v in sim.values()]):.3f}")

real = {s: [v for _, v in res.real[s]] for s in res.held_out_speakers}
syn = {s: [v for _, v in res.synthetic[s]] for s in res.held_out_speakers}
print(f"real-vs-synthetic EER {discrimination_eval(real, syn).eer:.3f}")
