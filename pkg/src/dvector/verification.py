"""Speaker-verification scoring: enrollment, trials, EER/DET, real-vs-synthetic."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

SYNTHETIC_SUFFIX = "#synthetic"


class DegenerateTrialsError(ValueError):
    pass


@dataclass
class EnrolledSpeaker:
    speaker_id: str
    centroid: np.ndarray
    n_enroll: int


@dataclass(frozen=True)
class Trial:
    test_id: str
    claimed_id: str
    is_target: bool
    score: float


@dataclass
class TrialSet:
    trials: List[Trial] = field(default_factory=list)

    def scores(self) -> Tuple[np.ndarray, np.ndarray]:
        tgt = np.array([t.score for t in self.trials if t.is_target], dtype=np.float64)
        non = np.array([t.score for t in self.trials if not t.is_target], dtype=np.float64)
        return tgt, non

    def __len__(self) -> int:
        return len(self.trials)

    @classmethod
    def from_scores(cls, targets: Sequence[float], nontargets: Sequence[float]) -> "TrialSet":
        trials = [Trial(f"t{k}", "x", True, float(s)) for k, s in enumerate(targets)]
        trials += [Trial(f"n{k}", "x", False, float(s)) for k, s in enumerate(nontargets)]
        return cls(trials)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["test_id", "claimed_id", "is_target", "score"])
            for t in self.trials:
                w.writerow([t.test_id, t.claimed_id, int(t.is_target), repr(t.score)])


@dataclass
class EerResult:
    eer: float
    threshold_at_eer: float
    det_points: List[Tuple[float, float, float]]
    n_target: int
    n_nontarget: int

    def summary(self) -> dict:
        return {
            "eer": self.eer,
            "threshold": self.threshold_at_eer,
            "n_target": self.n_target,
            "n_nontarget": self.n_nontarget,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def det_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "far", "frr"])
            for th, far, frr in self.det_points:
                w.writerow([repr(th), repr(far), repr(frr)])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def enroll(groups: Mapping[str, Sequence[np.ndarray]]) -> List[EnrolledSpeaker]:
    """Renormalized mean embedding per speaker."""
    out = []
    for spk, embs in groups.items():
        if len(embs) == 0:
            raise ValueError(f"speaker {spk!r} has no enrollment embeddings")
        mean = np.mean(np.asarray(embs, dtype=np.float64), axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-9:
            raise ValueError(f"enrollment embeddings of {spk!r} average to zero")
        out.append(EnrolledSpeaker(spk, mean / norm, len(embs)))
    return out


def score_trials(
    tests: Sequence[Tuple[str, str, np.ndarray]], enrolled: Sequence[EnrolledSpeaker]
) -> TrialSet:
    """Cosine score of every ``(test_id, speaker_id, embedding)`` against every centroid."""
    if not tests or not enrolled:
        raise ValueError("need at least one test utterance and one enrolled speaker")
    E = np.stack([_unit(np.asarray(e, dtype=np.float64)) for _, _, e in tests])
    C = np.stack([s.centroid for s in enrolled])
    S = E @ C.T
    trials = [
        Trial(test_id, spk.speaker_id, label == spk.speaker_id, float(S[i, k]))
        for i, (test_id, label, _) in enumerate(tests)
        for k, spk in enumerate(enrolled)
    ]
    return TrialSet(trials)


def det_curve(targets: np.ndarray, nontargets: np.ndarray) -> np.ndarray:
    """``(threshold, FAR, FRR)`` rows at every distinct score; accepts are ``score >= threshold``."""
    thresholds = np.unique(np.concatenate([targets, nontargets]))
    tgt = np.sort(targets)
    non = np.sort(nontargets)
    frr = np.searchsorted(tgt, thresholds, side="left") / len(tgt)
    far = (len(non) - np.searchsorted(non, thresholds, side="left")) / len(non)
    return np.column_stack([thresholds, far, frr])


def compute_eer(trials: TrialSet) -> EerResult:
    """EER by linear interpolation where FAR - FRR changes sign along the sweep."""
    tgt, non = trials.scores()
    if len(tgt) == 0 or len(non) == 0:
        raise DegenerateTrialsError("EER needs at least one target and one non-target trial")
    det = det_curve(tgt, non)
    th, far, frr = det[:, 0], det[:, 1], det[:, 2]
    diff = far - frr
    # diff starts at FAR=1, FRR=0 and never increases along the sweep
    k = int(np.argmax(diff <= 0))
    if diff[k] == 0 or k == 0:
        eer, thr = float(far[k]), float(th[k])
    else:
        a = diff[k - 1] / (diff[k - 1] - diff[k])
        eer = float(far[k - 1] + a * (far[k] - far[k - 1]))
        thr = float(th[k - 1] + a * (th[k] - th[k - 1]))
    points = [(float(t), float(a), float(r)) for t, a, r in det]
    return EerResult(eer, thr, points, len(tgt), len(non))


def eer_from_scores(targets: Sequence[float], nontargets: Sequence[float]) -> float:
    return compute_eer(TrialSet.from_scores(targets, nontargets)).eer


def _split_half(embs: Sequence[np.ndarray]) -> Tuple[list, list]:
    if len(embs) < 2:
        raise ValueError("each group needs at least 2 embeddings to split into enrollment and test")
    k = len(embs) // 2
    return list(embs[:k]), list(embs[k:])


def discrimination_eval(
    real: Mapping[str, Sequence[np.ndarray]],
    synthetic: Mapping[str, Sequence[np.ndarray]],
    own_speaker_only: bool = False,
) -> EerResult:
    """EER of telling real from synthetic versions of the same voices.

    Each speaker's real and synthetic embeddings are split in half: the first
    half enrolls the voices ``spk`` and ``spk#synthetic``, the second half is
    scored against every enrolled voice. ``own_speaker_only`` keeps only the
    trials against a test utterance's own real/synthetic pair.
    """
    if set(real) != set(synthetic):
        raise ValueError("real and synthetic sets must cover the same speakers")
    enroll_groups, tests = {}, []
    for spk in real:
        r_en, r_te = _split_half(real[spk])
        s_en, s_te = _split_half(synthetic[spk])
        enroll_groups[spk] = r_en
        enroll_groups[spk + SYNTHETIC_SUFFIX] = s_en
        tests += [(f"{spk}/real{k}", spk, e) for k, e in enumerate(r_te)]
        tests += [(f"{spk}/syn{k}", spk + SYNTHETIC_SUFFIX, e) for k, e in enumerate(s_te)]
    trials = score_trials(tests, enroll(enroll_groups))
    if own_speaker_only:
        base = lambda s: s.split("/", 1)[0].removesuffix(SYNTHETIC_SUFFIX)
        trials = TrialSet(
            [t for t in trials.trials if base(t.test_id) == t.claimed_id.removesuffix(SYNTHETIC_SUFFIX)]
        )
    return compute_eer(trials)


def similarity_report(
    real: Mapping[str, Sequence[np.ndarray]], synthetic: Mapping[str, Sequence[np.ndarray]]
) -> Dict[str, Dict[str, float]]:
    """Per speaker: mean cosine of synthetic utterances to the real and synthetic centroids."""
    out = {}
    for spk, syn in synthetic.items():
        if len(syn) == 0 or len(real.get(spk, ())) == 0:
            raise ValueError(f"speaker {spk!r} needs real and synthetic embeddings")
        S = np.stack([_unit(np.asarray(e, dtype=np.float64)) for e in syn])
        c_real = _unit(np.mean(np.asarray(real[spk], dtype=np.float64), axis=0))
        c_syn = _unit(S.mean(axis=0))
        out[spk] = {"to_real": float(np.mean(S @ c_real)), "to_synthetic": float(np.mean(S @ c_syn))}
    return out


def cosine_separation(labels: Sequence[str], embeddings: np.ndarray) -> Tuple[float, float]:
    """Mean within-speaker and between-speaker pairwise cosine (distinct pairs)."""
    E = np.asarray(embeddings, dtype=np.float64)
    E = E / np.linalg.norm(E, axis=1, keepdims=True)
    G = E @ E.T
    lab = np.asarray(labels)
    same = lab[:, None] == lab[None, :]
    iu = np.triu(np.ones_like(same), k=1).astype(bool)
    return float(G[same & iu].mean()), float(G[~same & iu].mean())
