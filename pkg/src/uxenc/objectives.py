"""Training losses: bi-label contrastive masked prediction, PIT-BCE for
diarization, and CTC for character recognition.

The contrastive loss sums, over masked frames, the cross-entropy of
cosine-similarity logits against the frame's pseudo-label; the secondary
speaker contributes only on masked frames where it is actually present, and
the total is exactly the primary plus the secondary term.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import diffkernel as dk
from . import kernels
from .diffkernel.tape import Tensor, _as_tensor
from .encoder import prediction_logits
from .errors import ConfigurationError, DataError, InfeasibleError

BCE_EPS = 1e-7


@dataclass
class PretrainLossReport:
    loss_total: float
    loss_pri: float
    loss_sec: float
    masked_count: int
    secondary_masked_count: int

    def mean_loss(self):
        """Per-masked-frame average, the stable quantity for learning rates."""
        denom = self.masked_count + self.secondary_masked_count
        return self.loss_total / denom if denom else 0.0


def _cross_entropy_sum(logits, label_ids):
    """Sum of ``-log softmax(logits)[i, label_i]`` over rows."""
    lp = dk.log_softmax(logits, axis=1)
    onehot = np.zeros(lp.shape, dtype=lp.dtype)
    onehot[np.arange(len(label_ids)), label_ids] = 1.0
    return dk.mul(dk.reduce_sum(dk.mul(lp, onehot)), -1.0)


def infonce_bilabel(stack, proj, label_emb, labels, mask, logit_scale):
    """Bi-label contrastive loss over masked frames.

    Returns ``(loss, report)`` where ``loss`` is the tape scalar
    ``loss_pri + loss_sec`` and the report carries the detached values and
    masked-frame counts.
    """
    t_frames = stack.o_pri.shape[0]
    if labels.primary.shape[0] != t_frames:
        raise DataError(
            f"label length {labels.primary.shape[0]} != frame count {t_frames}")
    frames = mask.frames
    if frames.size and labels.primary[frames].min() < 0:
        raise DataError("masked frame without a primary pseudo-label")

    zero = dk.tensor(np.zeros((), dtype=stack.o_pri.dtype))
    if frames.size:
        o_pri = dk.take(stack.o_pri, frames, axis=0)
        logits_pri = prediction_logits(o_pri, proj, label_emb, logit_scale)
        loss_pri = _cross_entropy_sum(logits_pri, labels.primary[frames])
    else:
        loss_pri = zero

    sec_frames = frames[labels.valid_secondary[frames]] if frames.size else frames
    if sec_frames.size:
        o_sec = dk.take(stack.o_sec, sec_frames, axis=0)
        logits_sec = prediction_logits(o_sec, proj, label_emb, logit_scale)
        loss_sec = _cross_entropy_sum(logits_sec, labels.secondary[sec_frames])
    else:
        loss_sec = zero

    loss = dk.add(loss_pri, loss_sec)
    report = PretrainLossReport(
        loss_total=float(loss.data),
        loss_pri=float(loss_pri.data),
        loss_sec=float(loss_sec.data),
        masked_count=int(frames.size),
        secondary_masked_count=int(sec_frames.size),
    )
    return loss, report


def pit_bce(pred, target):
    """Permutation-invariant binary cross-entropy.

    ``pred [T, S]`` are post-sigmoid probabilities, ``target [T, S]`` binary.
    Returns ``(loss, best_permutation)`` where the loss is the minimum mean
    BCE over column permutations of the predictions; ties pick the
    lexicographically smallest permutation.
    """
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise DataError(f"pred shape {pred.shape} != target shape {target.shape}")
    n_spk = pred.shape[1]
    if n_spk > 3:
        raise ConfigurationError([f"permutation search limited to S <= 3, got {n_spk}"])
    if np.any(pred.data < 0.0) or np.any(pred.data > 1.0):
        raise DataError("pit_bce expects probabilities in (0, 1); apply sigmoid first")

    p_clamped = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    best_perm = None
    best_val = np.inf
    for perm in itertools.permutations(range(n_spk)):
        cols = list(perm)
        val = -(target * np.log(p_clamped[:, cols])
                + (1.0 - target) * np.log(1.0 - p_clamped[:, cols])).mean()
        if val < best_val:
            best_val = val
            best_perm = perm

    cols = np.array(best_perm)
    p_sel = dk.clip(dk.getitem(pred, (slice(None), cols)), BCE_EPS, 1.0 - BCE_EPS)
    pos = dk.mul(dk.log(p_sel), target)
    neg = dk.mul(dk.log(dk.sub(1.0, p_sel)), 1.0 - target)
    loss = dk.mul(dk.mean(dk.add(pos, neg)), -1.0)
    return loss, best_perm


def ctc_min_frames(targets):
    """Smallest number of frames that can emit ``targets``."""
    targets = list(targets)
    repeats = sum(1 for a, b in zip(targets, targets[1:]) if a == b)
    return len(targets) + repeats


def ctc_loss(log_probs, targets, blank=0):
    """CTC negative log-likelihood (log-space forward algorithm).

    ``log_probs [T, V]`` with the blank at index ``blank``; ``targets`` are
    non-blank ids.  Differentiable: the backward pass uses the standard
    forward-backward posterior.
    """
    lp = _as_tensor(log_probs)
    targets = np.asarray(list(targets), dtype=np.int64)
    t_frames, vocab = lp.shape
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise DataError(f"target ids outside vocabulary of {vocab}")
    if blank != 0:
        raise ConfigurationError(["blank must be index 0"])
    if np.any(targets == blank):
        raise DataError("targets must not contain the blank id")
    if ctc_min_frames(targets) > t_frames:
        raise InfeasibleError(
            f"target of {targets.size} labels needs >= {ctc_min_frames(targets)} "
            f"frames, got {t_frames}")

    ext = np.zeros(2 * targets.size + 1, dtype=np.int64)
    ext[1::2] = targets
    grad64, nll = kernels.ctc_grad(lp.data.astype(np.float64), ext)
    grad = grad64.astype(lp.dtype)

    def backward(g):
        return (g * grad,)

    return Tensor(np.asarray(nll, dtype=lp.dtype), parents=(lp,), backward_fn=backward)


def ctc_greedy_decode(log_probs, blank=0):
    """Per-frame argmax, collapse repeats, drop blanks."""
    frames = np.asarray(log_probs).argmax(axis=1)
    out = []
    prev = blank
    for f in frames:
        if f != blank and f != prev:
            out.append(int(f))
        prev = f
    return out
