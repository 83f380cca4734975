"""Command-line entry point: ``dvector <subcommand> --out DIR [options]``.

Every subcommand resolves its parameters from built-in defaults, then an
optional flat ``key=value`` config file, then ``--set key=value`` overrides,
then explicit flags. Each run writes its artifacts plus ``run.json``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 missing input.
Errors are reported as one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

EXIT_RUNTIME, EXIT_CONFIG, EXIT_MISSING = 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind, self.message = code, kind, message


def config_error(msg: str) -> CliError:
    return CliError(EXIT_CONFIG, "config", msg)


def missing_input(msg: str) -> CliError:
    return CliError(EXIT_MISSING, "missing_input", msg)


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable
    default: object = None
    help: str = ""
    input_path: bool = False  # must exist before the run
    required: bool = False


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v) -> Tuple[float, ...]:
    if isinstance(v, tuple):
        return v
    return tuple(float(x) for x in str(v).split(","))


@dataclass(frozen=True)
class Command:
    name: str
    run: Callable[[dict, Path], List[str]]
    params: Tuple[Param, ...]
    stochastic: bool
    help: str
    artifacts: Tuple[str, ...] = ()  # fixed names checked by the overwrite rule


# ---------------------------------------------------------------- helpers


def read_config_file(path: Path) -> Dict[str, str]:
    if not path.exists():
        raise missing_input(f"config file {path} does not exist")
    out = {}
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise config_error(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def git_describe() -> str:
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def speaker_of(embedding_id: str) -> str:
    return embedding_id.split("/", 1)[0]


def group_by_speaker(items: Sequence[Tuple[str, np.ndarray]]) -> Dict[str, List[Tuple[str, np.ndarray]]]:
    out: Dict[str, List[Tuple[str, np.ndarray]]] = {}
    for ident, vec in items:
        out.setdefault(speaker_of(ident), []).append((ident, vec))
    return out


def _load_embeddings(path: Path):
    from .persistence import load_embeddings

    items = load_embeddings(path)
    if not items:
        raise config_error(f"{path} holds no embeddings")
    return items


@contextlib.contextmanager
def thread_limit(n: Optional[int]):
    if n is None:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=n):
        yield


# ---------------------------------------------------------------- subcommands


def cmd_gen_corpus(cfg: dict, out: Path) -> List[str]:
    from .corpus import generate_synthetic_corpus, split_by_speaker

    manifest = generate_synthetic_corpus(
        cfg["n_speakers"], cfg["utts_per_speaker"], cfg["seed"], out,
        min_seconds=cfg["min_seconds"], max_seconds=cfg["max_seconds"], prefix=cfg["prefix"],
    )
    split_seed = cfg["split_seed"] if cfg["split_seed"] is not None else cfg["seed"]
    manifest = split_by_speaker(manifest, cfg["split"], seed=split_seed)
    manifest.write()
    return ["manifest.csv", "voices.csv"] + [e.path for e in manifest.entries]


def cmd_train_encoder(cfg: dict, out: Path) -> List[str]:
    from .corpus import CorpusManifest, TrainBatchSpec, index_segments
    from .encoder import PAPER_PROFILE, SMALL_PROFILE, train_encoder

    manifest = CorpusManifest.read(cfg["corpus"])
    part = manifest.subset(cfg["split"]) if cfg["split"] else manifest
    if not part.entries:
        raise config_error(f"split {cfg['split']!r} of {cfg['corpus']} is empty")
    profiles = {"small": SMALL_PROFILE, "paper": PAPER_PROFILE}
    if cfg["profile"] not in profiles:
        raise config_error(f"profile must be one of {sorted(profiles)}")
    config = replace(profiles[cfg["profile"]], lr=cfg["lr"])
    spec = TrainBatchSpec(cfg["batch_speakers"], cfg["batch_utts"], seed=0)
    model, curve = train_encoder(index_segments(part), config, spec, steps=cfg["steps"], seed=cfg["seed"])
    model.save(out / "encoder.dvf")
    _write_curve(out / "loss_curve.csv", curve)
    return ["encoder.dvf", "loss_curve.csv"]


def _write_curve(path: Path, curve: Sequence[float]) -> None:
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for k, v in enumerate(curve, 1):
            fh.write(f"{k},{v!r}\n")


def cmd_embed(cfg: dict, out: Path) -> List[str]:
    from .corpus import CorpusManifest, encoder_features
    from .encoder import EncoderModel, embed_utterance
    from .persistence import store_embeddings

    manifest = CorpusManifest.read(cfg["corpus"])
    if cfg["split"]:
        manifest = manifest.subset(cfg["split"])
    if not manifest.entries:
        raise config_error("no utterances selected")
    model = EncoderModel.load(cfg["encoder"])
    items = []
    for e in manifest.entries:
        w = manifest.load(e)
        if cfg["denoise"]:
            w = _denoise_waveform(w)
        items.append((f"{e.speaker_id}/{e.utterance_id}", embed_utterance(model, encoder_features(w))))
    store_embeddings(out / "embeddings.dve", items)
    return ["embeddings.dve"]


def _denoise_waveform(w):
    from .audio_io import Waveform
    from .dsp import ENCODER_PROFILE, LinearSpectrogram, istft, spectral_subtract, stft_complex

    cfg = ENCODER_PROFILE.stft
    spec = stft_complex(w.samples, cfg, w.sample_rate_hz)
    mag = np.abs(spec)
    clean = spectral_subtract(LinearSpectrogram(mag, cfg, w.sample_rate_hz))
    gain = np.sqrt(clean.energy / np.maximum(mag**2, 1e-300))
    y = istft(spec * gain, cfg, w.sample_rate_hz)
    n = len(w.samples)
    y = np.concatenate([y, np.zeros(max(0, n - len(y)))])[:n]
    return Waveform(y, w.sample_rate_hz)


def cmd_eval_eer(cfg: dict, out: Path) -> List[str]:
    from .verification import compute_eer, enroll, score_trials

    groups = group_by_speaker(_load_embeddings(cfg["embeddings"]))
    enroll_groups, tests = {}, []
    for spk, items in groups.items():
        items = sorted(items, key=lambda t: t[0])
        k = cfg["n_enroll"] or len(items) // 2
        if not 1 <= k < len(items):
            raise config_error(f"speaker {spk!r} has {len(items)} embeddings; cannot enroll {k}")
        enroll_groups[spk] = [v for _, v in items[:k]]
        tests += [(ident, spk, v) for ident, v in items[k:]]
    trials = score_trials(tests, enroll(enroll_groups))
    res = compute_eer(trials)
    res.to_json(out / "eer.json")
    res.det_to_csv(out / "det.csv")
    trials.to_csv(out / "trials.csv")
    return ["eer.json", "det.csv", "trials.csv"]


def cmd_discriminate(cfg: dict, out: Path) -> List[str]:
    from .verification import compute_eer, discrimination_eval, similarity_report

    real = {s: [v for _, v in sorted(items, key=lambda t: t[0])]
            for s, items in group_by_speaker(_load_embeddings(cfg["real"])).items()}
    syn = {s: [v for _, v in sorted(items, key=lambda t: t[0])]
           for s, items in group_by_speaker(_load_embeddings(cfg["synthetic"])).items()}
    if set(real) != set(syn):
        raise config_error("real and synthetic embeddings cover different speakers")
    res = discrimination_eval(real, syn, own_speaker_only=cfg["own_speaker_only"])
    res.to_json(out / "discrimination.json")
    res.det_to_csv(out / "det.csv")
    write_json(out / "similarity.json", similarity_report(real, syn))
    return ["discrimination.json", "det.csv", "similarity.json"]


def cmd_pca(cfg: dict, out: Path) -> List[str]:
    from .embedding_space import export_projection_csv, fit_pca

    rows, vecs = [], []
    for kind in ("real", "synthetic", "fictitious"):
        if cfg[kind] is None:
            continue
        for ident, v in _load_embeddings(cfg[kind]):
            rows.append((ident, speaker_of(ident) if kind != "fictitious" else "", kind))
            vecs.append(v)
    if not vecs:
        raise config_error("pca needs at least one of --real, --synthetic, --fictitious")
    X = np.stack(vecs)
    try:
        pca = fit_pca(X, cfg["k"])
    except ValueError as exc:
        raise config_error(str(exc)) from None
    export_projection_csv(out / "projection.csv", rows, X, pca)
    write_json(out / "pca.json", {"k": cfg["k"], "explained_variance_ratio": pca.explained_variance_ratio.tolist(),
                                  "n": len(X)})
    return ["projection.csv", "pca.json"]


def cmd_fictitious(cfg: dict, out: Path) -> List[str]:
    from .embedding_space import fictitious_report, mean_pairwise_abs_cos, sample_fictitious
    from .persistence import save_matrix_csv, store_embeddings

    try:
        F = sample_fictitious(cfg["d"], cfg["n"], cfg["seed"])
    except ValueError as exc:
        raise config_error(str(exc)) from None
    save_matrix_csv(out / "fictitious.csv", F, header=[f"e{k}" for k in range(cfg["d"])])
    store_embeddings(out / "fictitious.dve", [(f"fict{k:04d}", f) for k, f in enumerate(F)])
    stats = {
        "d": cfg["d"],
        "n": cfg["n"],
        "mean_vector_norm": float(np.linalg.norm(F.mean(axis=0))),
        "mean_pairwise_abs_cos": mean_pairwise_abs_cos(F) if len(F) > 1 else None,
    }
    refs = {}
    for spec in cfg["reference"] or []:
        name, _, path = spec.partition("=")
        if not path:
            raise config_error(f"reference must be name=path, got {spec!r}")
        if not Path(path).exists():
            raise missing_input(f"reference embeddings {path} do not exist")
        refs[name] = _load_embeddings(Path(path))
    if refs:
        try:
            rep = fictitious_report(F, refs)
        except ValueError as exc:
            raise config_error(str(exc)) from None
        stats["mean_nn_cosine"] = {name: r["mean_nn_cosine"] for name, r in rep.items()}
    write_json(out / "fictitious.json", stats)
    return ["fictitious.csv", "fictitious.dve", "fictitious.json"]


def cmd_transfer_demo(cfg: dict, out: Path) -> List[str]:
    from .corpus import CorpusManifest
    from .dsp import TARGET_PROFILE, MelSpectrogram, griffin_lim
    from .audio_io import write_wav
    from .encoder import EncoderModel
    from .persistence import save_matrix_csv, store_embeddings
    from .transfer import run_transfer_demo

    manifest = CorpusManifest.read(cfg["corpus"])
    encoder = EncoderModel.load(cfg["encoder"])
    before = encoder.digest()
    try:
        res = run_transfer_demo(
            manifest, encoder, n_train_speakers=cfg["n_train_speakers"], steps=cfg["steps"], seed=cfg["seed"],
            n_phrases=cfg["n_phrases"], phrase_tokens=cfg["phrase_tokens"], n_reference=cfg["n_reference"],
            bridge=cfg["bridge"], n_warps=cfg["n_warps"],
        )
    except ValueError as exc:
        raise config_error(str(exc)) from None
    if encoder.digest() != before:
        raise CliError(EXIT_RUNTIME, "runtime", "encoder parameters changed during decoder training")
    res.decoder.save(out / "decoder.dvf")
    _write_curve(out / "loss_curve.csv", res.curve)
    store_embeddings(out / "synthetic.dve", [it for s in res.held_out_speakers for it in res.synthetic[s]])
    store_embeddings(out / "real.dve", [(f"{s}/{u}", v) for s in res.held_out_speakers for u, v in res.real[s]])
    summary = {
        "match_rate": res.match_rate,
        "train_speakers": res.train_speakers,
        "held_out_speakers": res.held_out_speakers,
        "phrases": [list(p) for p in res.phrases],
        "per_speaker": {s: {"cosine": r["cosine"], "nearest": r["nearest"], "match": r["match"]}
                        for s, r in res.report.items()},
        "similarity": res.similarity,
        "final_loss": float(np.mean(res.curve[-50:])) if res.curve else None,
        "initial_loss": float(np.mean(res.curve[:10])) if res.curve else None,
    }
    write_json(out / "transfer.json", summary)
    first = res.held_out_speakers[0]
    mel = res.decoder.synthesize(res.phrases[0], res.report[first]["conditioning"]).mel
    save_matrix_csv(out / "sample_mel.csv", mel, header=[f"m{k}" for k in range(mel.shape[1])])
    written = ["decoder.dvf", "loss_curve.csv", "synthetic.dve", "real.dve", "transfer.json", "sample_mel.csv"]
    if cfg["wav"]:
        w = griffin_lim(MelSpectrogram(mel, TARGET_PROFILE.stft, TARGET_PROFILE.mel, TARGET_PROFILE.sample_rate))
        write_wav(w, out / "sample.wav")
        written.append("sample.wav")
    return written


def cmd_denoise(cfg: dict, out: Path) -> List[str]:
    from .audio_io import read_wav, write_wav
    from .dsp import ENCODER_PROFILE, stft_magnitude

    w = read_wav(cfg["input"])
    clean = _denoise_waveform(w)
    write_wav(clean, out / "denoised.wav")
    e_in = float(np.sum(stft_magnitude(w, ENCODER_PROFILE.stft).energy))
    e_out = float(np.sum(stft_magnitude(clean, ENCODER_PROFILE.stft).energy))
    write_json(out / "denoise.json", {"input_energy": e_in, "output_energy": e_out,
                                      "energy_ratio": e_out / e_in if e_in > 0 else None})
    return ["denoised.wav", "denoise.json"]


COMMON = (
    Param("seed", int, None, "random seed (required for stochastic subcommands)"),
)

COMMANDS: Dict[str, Command] = {
    c.name: c
    for c in [
        Command("gen-corpus", cmd_gen_corpus, (
            Param("n_speakers", int, 16, "number of synthetic speakers"),
            Param("utts_per_speaker", int, 30, "utterances per speaker"),
            Param("min_seconds", float, 2.0, "shortest utterance"),
            Param("max_seconds", float, 4.0, "longest utterance"),
            Param("prefix", str, "spk", "speaker id prefix"),
            Param("split", _floats, (0.75, 0.0, 0.25), "train,val,test speaker fractions"),
            Param("split_seed", int, None, "seed of the speaker split (defaults to --seed)"),
        ), True, "write a seeded synthetic multispeaker corpus",
            ("manifest.csv", "voices.csv")),
        Command("train-encoder", cmd_train_encoder, (
            Param("corpus", Path, None, "corpus directory", input_path=True, required=True),
            Param("split", str, "train", "manifest split to train on ('' for all)"),
            Param("steps", int, 2000, "training steps"),
            Param("profile", str, "small", "small or paper"),
            Param("lr", float, 1e-3, "Adam learning rate"),
            Param("batch_speakers", int, 8, "speakers per batch"),
            Param("batch_utts", int, 4, "segments per speaker per batch"),
        ), True, "train the speaker encoder with the GE2E loss",
            ("encoder.dvf", "loss_curve.csv")),
        Command("embed", cmd_embed, (
            Param("corpus", Path, None, "corpus directory", input_path=True, required=True),
            Param("encoder", Path, None, "encoder checkpoint", input_path=True, required=True),
            Param("split", str, "", "manifest split to embed ('' for all)"),
            Param("denoise", _bool, False, "apply spectral subtraction first"),
        ), False, "embed utterances with a trained encoder",
            ("embeddings.dve",)),
        Command("eval-eer", cmd_eval_eer, (
            Param("embeddings", Path, None, "embedding file", input_path=True, required=True),
            Param("n_enroll", int, 0, "enrollment utterances per speaker (0: half)"),
        ), False, "speaker-verification EER from embeddings",
            ("eer.json", "det.csv", "trials.csv")),
        Command("discriminate", cmd_discriminate, (
            Param("real", Path, None, "real-speech embeddings", input_path=True, required=True),
            Param("synthetic", Path, None, "synthetic-speech embeddings", input_path=True, required=True),
            Param("own_speaker_only", _bool, False, "score only against each speaker's own pair"),
        ), False, "real-vs-synthetic discrimination EER and similarity table",
            ("discrimination.json", "det.csv", "similarity.json")),
        Command("pca", cmd_pca, (
            Param("real", Path, None, "real embeddings", input_path=True),
            Param("synthetic", Path, None, "synthetic embeddings", input_path=True),
            Param("fictitious", Path, None, "fictitious embeddings", input_path=True),
            Param("k", int, 2, "number of components"),
        ), False, "PCA projection of embeddings to CSV",
            ("projection.csv", "pca.json")),
        Command("fictitious", cmd_fictitious, (
            Param("d", int, 64, "embedding dimension"),
            Param("n", int, 10, "number of samples"),
            Param("reference", lambda v: v if isinstance(v, list) else [s for s in str(v).split(",") if s],
                  None, "comma-separated name=path reference embedding files"),
        ), True, "sample fictitious speakers on the unit hypersphere",
            ("fictitious.csv", "fictitious.dve", "fictitious.json")),
        Command("transfer-demo", cmd_transfer_demo, (
            Param("corpus", Path, None, "corpus directory", input_path=True, required=True),
            Param("encoder", Path, None, "frozen encoder checkpoint", input_path=True, required=True),
            Param("n_train_speakers", int, 8, "speakers used to train the decoder"),
            Param("steps", int, 2000, "decoder training steps"),
            Param("n_phrases", int, 4, "phrases synthesized per held-out speaker"),
            Param("phrase_tokens", int, 16, "tokens per phrase"),
            Param("n_reference", int, 5, "reference utterances per held-out speaker"),
            Param("bridge", str, "spectral", "re-encoding bridge: spectral or pairs"),
            Param("n_warps", int, 8, "formant-warped copies of each training utterance"),
            Param("wav", _bool, False, "also write a Griffin-Lim sample.wav"),
        ), True, "train the conditioned decoder and measure speaker transfer",
            ("decoder.dvf", "loss_curve.csv", "synthetic.dve", "real.dve", "transfer.json",
            "sample_mel.csv", "sample.wav")),
        Command("denoise", cmd_denoise, (
            Param("input", Path, None, "input WAV", input_path=True, required=True),
        ), False, "spectral-subtraction denoising of a WAV file",
            ("denoised.wav", "denoise.json")),
    ]
}


# ---------------------------------------------------------------- driver


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise config_error(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvector", description="Speaker-embedding toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, help=cmd.help, description=cmd.help)
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument("--config", type=Path, help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
        p.add_argument("--force", action="store_true", help="overwrite existing artifacts")
        p.add_argument("--threads", type=int, help="cap numeric library threads (env DVF_THREADS)")
        for prm in COMMON + cmd.params:
            p.add_argument("--" + prm.name.replace("_", "-"), dest=prm.name, default=None, help=prm.help)
    return parser


def resolve_config(cmd: Command, args: argparse.Namespace) -> dict:
    params = {p.name: p for p in COMMON + cmd.params}
    raw: Dict[str, object] = {name: p.default for name, p in params.items()}
    layers: List[Dict[str, str]] = []
    if args.config is not None:
        layers.append(read_config_file(args.config))
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise config_error(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip().replace("-", "_")] = v.strip()
    layers.append(overrides)
    layers.append({k: getattr(args, k) for k in params if getattr(args, k) is not None})
    for layer in layers:
        for key, value in layer.items():
            if key not in params:
                raise config_error(f"unknown parameter {key!r} for {cmd.name}")
            raw[key] = value
    cfg = {}
    for name, p in params.items():
        value = raw[name]
        if value is None or (isinstance(value, str) and value == "" and p.type is not str):
            cfg[name] = None
            continue
        try:
            cfg[name] = p.type(value)
        except (TypeError, ValueError) as exc:
            raise config_error(f"bad value for {name}: {exc}") from None
    if cmd.stochastic and cfg["seed"] is None:
        raise config_error(f"{cmd.name} is stochastic and needs --seed")
    for name, p in params.items():
        if cfg[name] is None:
            if p.required:
                raise config_error(f"--{name.replace('_', '-')} is required")
        elif p.input_path and not Path(cfg[name]).exists():
            raise missing_input(f"{name}: {cfg[name]} does not exist")
    return cfg


def _existing_artifacts(cmd: Command, out: Path) -> List[str]:
    return [name for name in cmd.artifacts + ("run.json",) if (out / name).exists()]


def _jsonable(cfg: dict) -> dict:
    out = {}
    for k, v in cfg.items():
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise config_error("no subcommand given; see --help")
    cmd = COMMANDS[args.command]
    cfg = resolve_config(cmd, args)
    threads = args.threads
    if threads is None and os.environ.get("DVF_THREADS"):
        try:
            threads = int(os.environ["DVF_THREADS"])
        except ValueError:
            raise config_error("DVF_THREADS must be an integer") from None
    if threads is not None and threads < 1:
        raise config_error("--threads must be >= 1")
    out: Path = args.out
    existing = _existing_artifacts(cmd, out)
    if existing and not args.force:
        raise config_error(f"{out} already holds {existing[0]!r}; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    with thread_limit(threads):
        artifacts = cmd.run(cfg, out)
    record = {
        "subcommand": cmd.name,
        "config": _jsonable(cfg),
        "seed": cfg["seed"],
        "git_describe": git_describe(),
        "wall_time_s": time.perf_counter() - start,
        "threads": threads,
        "artifacts": {name: sha256_file(out / name) for name in artifacts},
    }
    write_json(out / "run.json", record)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return run(argv)
    except CliError as exc:
        code, kind, msg = exc.code, exc.kind, exc.message
    except FileNotFoundError as exc:
        code, kind, msg = EXIT_MISSING, "missing_input", str(exc)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        code, kind, msg = EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}"
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": msg}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
