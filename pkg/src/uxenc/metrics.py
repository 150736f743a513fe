"""Scoring: word error rate, frame-level diarization error rate, frame accuracy.

DER protocol (fixed here since upstream conventions vary): frame-level, no
collar, overlap counted per speaker.  The speaker mapping is the permutation
minimizing total error; per frame with ``n_ref`` reference speakers,
``n_pred`` predicted speakers and ``n_correct`` matches under the mapping,

* miss        += max(0, n_ref - n_pred)
* false alarm += max(0, n_pred - n_ref)
* confusion   += min(n_ref, n_pred) - n_correct

and DER = (miss + fa + confusion) / total reference speaker-frames.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DataError


def wer(hyp_words, ref_words):
    """Word error rate: Levenshtein distance over words divided by reference length."""
    if isinstance(hyp_words, str):
        hyp_words = hyp_words.split()
    if isinstance(ref_words, str):
        ref_words = ref_words.split()
    if not ref_words:
        raise DataError("reference transcript is empty")
    vocab = {}
    def ids(words):
        return np.array([vocab.setdefault(w, len(vocab)) for w in words],
                        dtype=np.int64)
    hyp_ids = ids(hyp_words)
    ref_ids = ids(ref_words)
    return kernels.levenshtein(hyp_ids, ref_ids) / len(ref_words)


@dataclass
class DerBreakdown:
    miss: int
    false_alarm: int
    confusion: int
    total_speech_frames: int

    @property
    def der(self):
        if self.total_speech_frames == 0:
            return 0.0
        return (self.miss + self.false_alarm + self.confusion) / self.total_speech_frames


def der_frames(pred_activity, ref_activity):
    """Frame-level DER with exhaustive speaker mapping (S <= 3)."""
    pred = np.asarray(pred_activity).astype(bool)
    ref = np.asarray(ref_activity).astype(bool)
    if pred.shape != ref.shape:
        raise DataError(f"pred shape {pred.shape} != ref shape {ref.shape}")
    n_spk = pred.shape[1]
    if n_spk > 3:
        raise ConfigurationError([f"exhaustive mapping limited to S <= 3, got {n_spk}"])

    n_ref = ref.sum(axis=1)
    n_pred = pred.sum(axis=1)
    miss_t = np.maximum(0, n_ref - n_pred)
    fa_t = np.maximum(0, n_pred - n_ref)
    bound_t = np.minimum(n_ref, n_pred)

    best = None
    for perm in itertools.permutations(range(n_spk)):
        correct_t = (ref & pred[:, perm]).sum(axis=1)
        conf_t = bound_t - correct_t
        breakdown = DerBreakdown(
            miss=int(miss_t.sum()),
            false_alarm=int(fa_t.sum()),
            confusion=int(conf_t.sum()),
            total_speech_frames=int(n_ref.sum()),
        )
        total_err = breakdown.miss + breakdown.false_alarm + breakdown.confusion
        if best is None or total_err < best[0]:
            best = (total_err, breakdown)
    return best[1]


def frame_accuracy(pred_binary, ref_binary):
    """Fraction of matching entries under the best column permutation."""
    pred = np.asarray(pred_binary).astype(bool)
    ref = np.asarray(ref_binary).astype(bool)
    if pred.shape != ref.shape:
        raise DataError(f"pred shape {pred.shape} != ref shape {ref.shape}")
    n_spk = pred.shape[1]
    best = 0.0
    for perm in itertools.permutations(range(n_spk)):
        best = max(best, float((pred[:, perm] == ref).mean()))
    return best


def corpus_wer(pairs):
    """Aggregate WER over (hyp_words, ref_words) pairs: total edits / total ref words."""
    total_edits = 0
    total_ref = 0
    for hyp, ref in pairs:
        hyp = hyp.split() if isinstance(hyp, str) else list(hyp)
        ref = ref.split() if isinstance(ref, str) else list(ref)
        if not ref:
            raise DataError("reference transcript is empty")
        total_edits += int(round(wer(hyp, ref) * len(ref)))
        total_ref += len(ref)
    return total_edits / total_ref


def corpus_der(pairs):
    """Aggregate DER over (pred, ref) activity pairs: summed error components."""
    miss = fa = conf = total = 0
    for pred, ref in pairs:
        b = der_frames(pred, ref)
        miss += b.miss
        fa += b.false_alarm
        conf += b.confusion
        total += b.total_speech_frames
    return DerBreakdown(miss=miss, false_alarm=fa, confusion=conf,
                        total_speech_frames=total)
