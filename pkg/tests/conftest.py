import time
from dataclasses import dataclass

import numpy as np
import pytest

from dvector.corpus import draw_voices, synthesize_voice


@pytest.fixture(scope="session")
def voice_waveform():
    rng = np.random.default_rng(21)
    voice = draw_voices(2, rng)[0]
    return synthesize_voice(voice, rng.integers(0, 12, 14), rng)


def _run_cli(argv):
    from dvector.cli import main

    code = main([str(a) for a in argv])
    assert code == 0, f"dvector {' '.join(map(str, argv))} exited {code}"


def run_cli_pipeline(root):
    """Every subcommand once, on tiny settings, chained like the full pipeline."""
    d = {name: root / name for name in (
        "gen-corpus", "train-encoder", "embed", "eval-eer", "transfer-demo",
        "discriminate", "fictitious", "pca", "denoise")}
    corpus = d["gen-corpus"]
    _run_cli(["gen-corpus", "--out", corpus, "--seed", 3, "--n-speakers", 6, "--utts-per-speaker", 5,
              "--min-seconds", 2.0, "--max-seconds", 2.4])
    _run_cli(["train-encoder", "--out", d["train-encoder"], "--seed", 1, "--corpus", corpus, "--steps", 2,
              "--batch-speakers", 2, "--batch-utts", 2])
    encoder = d["train-encoder"] / "encoder.dvf"
    _run_cli(["embed", "--out", d["embed"], "--corpus", corpus, "--encoder", encoder])
    _run_cli(["eval-eer", "--out", d["eval-eer"], "--embeddings", d["embed"] / "embeddings.dve"])
    _run_cli(["transfer-demo", "--out", d["transfer-demo"], "--seed", 2, "--corpus", corpus,
              "--encoder", encoder, "--steps", 2, "--n-train-speakers", 4, "--n-phrases", 2,
              "--phrase-tokens", 16, "--n-reference", 1, "--n-warps", 1, "--wav", "true"])
    td = d["transfer-demo"]
    _run_cli(["discriminate", "--out", d["discriminate"], "--real", td / "real.dve",
              "--synthetic", td / "synthetic.dve"])
    _run_cli(["fictitious", "--out", d["fictitious"], "--seed", 4, "--d", 64, "--n", 10,
              "--reference", f"real={d['embed'] / 'embeddings.dve'}"])
    _run_cli(["pca", "--out", d["pca"], "--real", d["embed"] / "embeddings.dve",
              "--synthetic", td / "synthetic.dve", "--fictitious", d["fictitious"] / "fictitious.dve"])
    first_wav = sorted(corpus.rglob("*.wav"))[0]
    _run_cli(["denoise", "--out", d["denoise"], "--input", first_wav])
    return d


@pytest.fixture(scope="session")
def cli_pipeline(tmp_path_factory):
    """The tiny pipeline run twice in separate directories."""
    return (run_cli_pipeline(tmp_path_factory.mktemp("run_a")),
            run_cli_pipeline(tmp_path_factory.mktemp("run_b")))


# ---------------------------------------------------------------- acceptance pipelines

TOY_CORPUS_SEED = 7
TOY_SPLIT_SEED = 0
TOY_TRAIN_SEED = 0
TOY_STEPS = 2000

TRANSFER_SEED = 0

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one verdict per criterion; printed at the end of the run."""

    def record(criterion, passed, detail=""):
        prev = ACCEPTANCE.get(criterion)
        ok = bool(passed) and (prev is None or prev[0])
        ACCEPTANCE[criterion] = (ok, detail if prev is None else f"{prev[1]}; {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda c: int(c[1:].split()[0])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}  {detail}")


@dataclass
class ToyPipeline:
    manifest: object
    encoder: object
    curve: list
    held_out: dict  # speaker -> [(utterance_id, encoder frames)]
    embeddings: dict  # speaker -> [(utterance_id, embedding)]
    eer: float
    within: float
    between: float
    wall_time_s: float


def _toy_pipeline(root):
    from dvector.corpus import encoder_features, generate_synthetic_corpus, index_segments, split_by_speaker
    from dvector.encoder import SMALL_PROFILE, embed_utterance, train_encoder
    from dvector.verification import compute_eer, cosine_separation, enroll, score_trials

    start = time.perf_counter()
    manifest = generate_synthetic_corpus(16, 30, TOY_CORPUS_SEED, root)
    manifest = split_by_speaker(manifest, (0.75, 0.0, 0.25), seed=TOY_SPLIT_SEED)
    encoder, curve = train_encoder(index_segments(manifest.subset("train")), SMALL_PROFILE,
                                   steps=TOY_STEPS, seed=TOY_TRAIN_SEED)
    test = manifest.subset("test")
    held_out, embeddings = {}, {}
    for spk, entries in sorted(test.by_speaker().items()):
        entries = sorted(entries, key=lambda e: e.utterance_id)
        held_out[spk] = [(e.utterance_id, encoder_features(test.load(e)).frames) for e in entries]
        embeddings[spk] = [(u, embed_utterance(encoder, f)) for u, f in held_out[spk]]
    groups, tests = {}, []
    for spk, items in embeddings.items():
        k = len(items) // 2
        groups[spk] = [v for _, v in items[:k]]
        tests += [(u, spk, v) for u, v in items[k:]]
    eer = compute_eer(score_trials(tests, enroll(groups))).eer
    labels = [spk for spk, items in embeddings.items() for _ in items]
    within, between = cosine_separation(labels, np.stack([v for items in embeddings.values() for _, v in items]))
    wall = time.perf_counter() - start
    return ToyPipeline(manifest, encoder, curve, held_out, embeddings, eer, within, between, wall)


@pytest.fixture(scope="session")
def toy_pipeline(tmp_path_factory):
    """Synthetic 16 x 30 corpus, small-profile encoder trained 2000 steps, held-out scores."""
    return _toy_pipeline(tmp_path_factory.mktemp("toy_corpus"))


@dataclass
class TransferPipeline:
    result: object
    encoder_digest_before: str
    encoder_digest_after: str
    wall_time_s: float


@pytest.fixture(scope="session")
def transfer_pipeline(toy_pipeline):
    """Decoder trained on 8 voices of the toy corpus, measured on the other 8."""
    from dvector.transfer import run_transfer_demo

    encoder = toy_pipeline.encoder
    before = encoder.digest()
    start = time.perf_counter()
    result = run_transfer_demo(toy_pipeline.manifest, encoder, n_train_speakers=8, seed=TRANSFER_SEED)
    wall = time.perf_counter() - start
    return TransferPipeline(result, before, encoder.digest(), wall)
