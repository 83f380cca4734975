"""Decoder properties that need the trained toy encoder."""
import itertools

import numpy as np

from dvector.corpus import encoder_features, generate_synthetic_corpus
from dvector.dsp import TARGET_PROFILE, compute_features
from dvector.transfer import ConditionedDecoderConfig, DecoderExample, reencode, synthesize, train_decoder


def test_plain_training_reaches_thirty_percent_of_initial_loss(toy_pipeline, tmp_path):
    manifest = generate_synthetic_corpus(8, 20, 5, tmp_path)
    examples = []
    for entry in manifest.entries:
        w = manifest.load(entry)
        examples.append(DecoderExample(entry.utterance_id, entry.speaker_id, entry.tokens,
                                       compute_features(w, TARGET_PROFILE).frames, encoder_features(w).frames))
    before = toy_pipeline.encoder.digest()
    curve = []
    train_decoder(examples, toy_pipeline.encoder, ConditionedDecoderConfig(), steps=2000, seed=0, curve=curve)
    assert toy_pipeline.encoder.digest() == before
    assert np.mean(curve[-50:]) < 0.3 * curve[0]


def test_trained_decoder_depends_on_the_embedding(transfer_pipeline):
    res = transfer_pipeline.result
    a, b = res.held_out_speakers[:2]
    tokens = res.phrases[0]
    mel_a = synthesize(res.decoder, tokens, res.report[a]["conditioning"]).mel
    mel_b = synthesize(res.decoder, tokens, res.report[b]["conditioning"]).mel
    assert np.mean(np.abs(mel_a - mel_b)) > 0


def test_swapping_embeddings_swaps_the_nearest_speaker(toy_pipeline, transfer_pipeline):
    res = transfer_pipeline.result
    ids = res.held_out_speakers
    cond = np.stack([res.report[s]["conditioning"] for s in ids])
    # each speaker's own phrase, rendered with the other speaker's embedding
    own = {s: tuple(res.phrases[k % len(res.phrases)]) for k, s in enumerate(ids)}

    def follows(tokens, spk, other):
        v = reencode(res.decoder, toy_pipeline.encoder, tokens, cond[ids.index(spk)])
        return v @ cond[ids.index(spk)] > v @ cond[ids.index(other)]

    pairs = list(itertools.combinations(ids, 2))
    hits = sum(follows(own[a], b, a) and follows(own[b], a, b) for a, b in pairs)
    assert hits / len(pairs) >= 0.8, f"{hits}/{len(pairs)} swaps followed the embedding"
