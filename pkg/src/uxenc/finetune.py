"""Weighted-sum fine-tuning over a frozen encoder.

Layer outputs ``[C, T, D]`` from every Transformer block are combined with
learned convex weights, either per layer after channel averaging (strategy A)
or with one weight per (layer, channel) slice (strategy B).  Nonnegativity
and sum-to-one come from a softmax over unconstrained logits.  Only the
weight logits and the downstream head train; encoder parameters are never
touched, and per-example layer stacks are precomputed once.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffkernel as dk
from . import mixsim, objectives
from .errors import ConfigurationError, DataError, DivergenceError
from .metrics import frame_accuracy
from .seeding import substream

ASR_CHARS = "abcdefghijklmnopqrstuvwxyz' "
BLANK_ID = 0


def asr_vocab_size():
    return len(ASR_CHARS) + 1


def text_to_ids(text):
    """Characters to CTC target ids (1-based; 0 is the blank)."""
    ids = []
    for ch in text.lower():
        if ch in ASR_CHARS:
            ids.append(ASR_CHARS.index(ch) + 1)
    return ids


def ids_to_text(ids):
    return "".join(ASR_CHARS[i - 1] for i in ids if 1 <= i <= len(ASR_CHARS))


@dataclass
class HeadConfig:
    kind: str                   # "asr" | "diar"
    hidden: int = 64
    layers: int = 1
    n_speakers: int = 2
    vocab_size: int = field(default_factory=asr_vocab_size)

    def validate(self):
        bad = []
        if self.kind not in ("asr", "diar"):
            bad.append(f"head kind {self.kind!r} must be 'asr' or 'diar'")
        if self.hidden < 1:
            bad.append(f"hidden={self.hidden} must be >= 1")
        if self.layers < 1:
            bad.append(f"layers={self.layers} must be >= 1")
        if self.kind == "diar" and not (1 <= self.n_speakers <= 3):
            bad.append(f"n_speakers={self.n_speakers} outside [1, 3]")
        if bad:
            raise ConfigurationError(bad)
        return self


@dataclass
class LayerWeights:
    logits: dk.Parameter
    strategy: str               # "A" | "B"
    n_layers: int
    n_channels: int

    @classmethod
    def init(cls, n_layers, n_channels, strategy="A", dtype=np.float32):
        if strategy not in ("A", "B"):
            raise ConfigurationError([f"strategy {strategy!r} must be 'A' or 'B'"])
        size = n_layers if strategy == "A" else n_layers * n_channels
        logits = dk.Parameter(np.zeros(size, dtype=dtype), "layer_weights.logits")
        return cls(logits=logits, strategy=strategy, n_layers=n_layers,
                   n_channels=n_channels)

    def probabilities(self):
        return dk.softmax(self.logits, axis=0)


def weighted_sum(stack_layers, weights):
    """Combine per-layer ``[C, T, D]`` outputs into ``[T, D]``.

    Strategy A averages channels first and learns one weight per layer;
    strategy B learns one weight per (layer, channel) slice.  With strategy-B
    weights tied as ``w[i, c] = v[i] / C`` the two coincide exactly.
    """
    layers = stack_layers.layers if hasattr(stack_layers, "layers") else stack_layers
    if len(layers) != weights.n_layers:
        raise DataError(f"{len(layers)} layers vs weights for {weights.n_layers}")
    probs = weights.probabilities()
    if weights.strategy == "A":
        means = dk.stack([dk.mean(layer, axis=0) for layer in layers], axis=0)
        w = dk.reshape(probs, (weights.n_layers, 1, 1))
        return dk.reduce_sum(dk.mul(means, w), axis=0)
    c = layers[0].shape[0]
    if c != weights.n_channels:
        raise DataError(f"stack has {c} channels, weights expect {weights.n_channels}")
    stacked = dk.stack(layers, axis=0)                      # [M, C, T, D]
    w = dk.reshape(probs, (weights.n_layers, c, 1, 1))
    return dk.reduce_sum(dk.mul(stacked, w), axis=(0, 1))


def _init_w(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dtype)


class _LstmDirection:
    def __init__(self, prefix, d_in, hidden, rng, dtype):
        self.hidden = hidden
        self.w_x = dk.Parameter(_init_w(rng, (d_in, 4 * hidden), d_in, dtype), f"{prefix}.w_x")
        self.w_h = dk.Parameter(_init_w(rng, (hidden, 4 * hidden), hidden, dtype), f"{prefix}.w_h")
        self.b = dk.Parameter(np.zeros(4 * hidden, dtype=dtype), f"{prefix}.b")

    def params(self):
        return [self.w_x, self.w_h, self.b]

    def run(self, feats, reverse=False):
        """``[T, D]`` -> list of T hidden states ``[1, H]``."""
        t_frames = feats.shape[0]
        order = range(t_frames - 1, -1, -1) if reverse else range(t_frames)
        h = dk.tensor(np.zeros((1, self.hidden), dtype=feats.dtype))
        c = dk.tensor(np.zeros((1, self.hidden), dtype=feats.dtype))
        outs = [None] * t_frames
        for t in order:
            x_t = dk.reshape(dk.getitem(feats, t), (1, -1))
            h, c = dk.lstm_cell(x_t, h, c, self.w_x, self.w_h, self.b)
            outs[t] = h
        return outs


class DiarHead:
    """Single-direction LSTM stack plus a linear layer to speaker activity logits."""

    def __init__(self, cfg, d_in, seed=0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        rng = substream(seed, "init", 2)
        self.cells = []
        for i in range(cfg.layers):
            self.cells.append(_LstmDirection(f"diar.lstm{i}", d_in if i == 0 else cfg.hidden,
                                             cfg.hidden, rng, dtype))
        self.out_w = dk.Parameter(_init_w(rng, (cfg.hidden, cfg.n_speakers), cfg.hidden, dtype),
                                  "diar.out_w")
        self.out_b = dk.Parameter(np.zeros(cfg.n_speakers, dtype=dtype), "diar.out_b")

    def parameters(self):
        ps = [self.out_w, self.out_b]
        for cell in self.cells:
            ps.extend(cell.params())
        return ps

    def forward(self, feats):
        """``[T, D]`` -> activity logits ``[T, S]``."""
        h = feats
        for cell in self.cells:
            h = dk.concat(cell.run(h), axis=0)
        return dk.linear(h, self.out_w, self.out_b)


class AsrHead:
    """Bidirectional LSTM stack plus linear + log-softmax over characters."""

    def __init__(self, cfg, d_in, seed=0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        rng = substream(seed, "init", 3)
        self.fwd = []
        self.bwd = []
        for i in range(cfg.layers):
            width = d_in if i == 0 else 2 * cfg.hidden
            self.fwd.append(_LstmDirection(f"asr.fwd{i}", width, cfg.hidden, rng, dtype))
            self.bwd.append(_LstmDirection(f"asr.bwd{i}", width, cfg.hidden, rng, dtype))
        self.out_w = dk.Parameter(_init_w(rng, (2 * cfg.hidden, cfg.vocab_size),
                                          2 * cfg.hidden, dtype), "asr.out_w")
        self.out_b = dk.Parameter(np.zeros(cfg.vocab_size, dtype=dtype), "asr.out_b")

    def parameters(self):
        ps = [self.out_w, self.out_b]
        for cell in self.fwd + self.bwd:
            ps.extend(cell.params())
        return ps

    def forward(self, feats):
        """``[T, D]`` -> log-probabilities ``[T, V]``."""
        h = feats
        for f_cell, b_cell in zip(self.fwd, self.bwd):
            f_out = dk.concat(f_cell.run(h), axis=0)
            b_out = dk.concat(b_cell.run(h, reverse=True), axis=0)
            h = dk.concat([f_out, b_out], axis=1)
        return dk.log_softmax(dk.linear(h, self.out_w, self.out_b), axis=1)


@dataclass
class FinetuneHyper:
    steps: int = 300
    lr: float = 1e-3
    eval_every: int = 50
    strategy: str = "B"
    seed: int = 0
    freeze_encoder: bool = True
    betas: tuple = (0.9, 0.999)


@dataclass
class FinetuneResult:
    weights: LayerWeights
    head: object
    history: list               # (step, split, metric)
    best_metric: float
    best_step: int
    best_state: dict


def _encode_dataset(encoder, examples):
    """Frozen-encoder feature extraction: detached layer stacks per example."""
    stacks = []
    for ex in examples:
        stack = encoder.encode(ex.wave)
        stacks.append([layer.detach() for layer in stack.layers])
    return stacks


def diar_targets_for(example, encoder_cfg):
    t_frames = encoder_cfg.frame_count(example.n_samples)
    return mixsim.diarization_targets(example, n_frames=t_frames)


def pad_speakers(target, n_speakers):
    t_frames, s = target.shape
    if s >= n_speakers:
        return target[:, :n_speakers]
    return np.concatenate(
        [target, np.zeros((t_frames, n_speakers - s), dtype=target.dtype)], axis=1)


def finetune_loop(train_examples, dev_examples, encoder, head_cfg, hyper,
                  history_path=None):
    """Train layer weights plus a downstream head on a frozen encoder.

    Model selection: diarization keeps the step with the highest dev frame
    accuracy; recognition keeps the lowest dev CTC loss.  Returns the
    best-on-dev artifacts; training curves go to ``history_path`` as CSV rows
    ``step,split,metric`` when given.
    """
    head_cfg.validate()
    if not train_examples or not dev_examples:
        raise DataError("need nonempty train and dev example lists")
    cfg = encoder.cfg
    dtype = encoder.dtype

    train_stacks = _encode_dataset(encoder, train_examples)
    dev_stacks = _encode_dataset(encoder, dev_examples)
    n_channels = train_stacks[0][0].shape[0]

    weights = LayerWeights.init(cfg.n_layers, n_channels, hyper.strategy, dtype)
    if head_cfg.kind == "diar":
        head = DiarHead(head_cfg, cfg.model_dim, seed=hyper.seed, dtype=dtype)
        train_targets = [pad_speakers(diar_targets_for(ex, cfg), head_cfg.n_speakers)
                         for ex in train_examples]
        dev_targets = [pad_speakers(diar_targets_for(ex, cfg), head_cfg.n_speakers)
                       for ex in dev_examples]
    else:
        head = AsrHead(head_cfg, cfg.model_dim, seed=hyper.seed, dtype=dtype)
        train_targets = [text_to_ids(ex.primary().transcript) for ex in train_examples]
        dev_targets = [text_to_ids(ex.primary().transcript) for ex in dev_examples]
        for i, ids in enumerate(train_targets + dev_targets):
            if not ids:
                raise DataError(f"example {i} has an empty transcript")

    params = head.parameters() + [weights.logits]
    state = dk.AdamState()
    shuffle = substream(hyper.seed, "shuffle")
    history = []

    def log(step, split, metric):
        history.append((step, split, metric))
        if history_path is not None:
            with open(history_path, "a") as fh:
                fh.write(f"{step},{split},{metric!r}\n")

    def eval_dev():
        total = 0.0
        for stack, target in zip(dev_stacks, dev_targets):
            feats = weighted_sum(stack, weights)
            if head_cfg.kind == "diar":
                probs = dk.sigmoid(head.forward(feats)).data
                total += frame_accuracy(probs > 0.5, target)
            else:
                total += float(objectives.ctc_loss(head.forward(feats), target).data)
        return total / len(dev_stacks)

    better = (lambda a, b: a > b) if head_cfg.kind == "diar" else (lambda a, b: a < b)
    best_metric = eval_dev()
    best_step = 0
    best_state = {p.name: p.data.copy() for p in params}
    log(0, "dev", best_metric)

    for step in range(1, hyper.steps + 1):
        idx = int(shuffle.integers(0, len(train_stacks)))
        feats = weighted_sum(train_stacks[idx], weights)
        if head_cfg.kind == "diar":
            probs = dk.sigmoid(head.forward(feats))
            loss, _ = objectives.pit_bce(probs, train_targets[idx])
        else:
            loss = objectives.ctc_loss(head.forward(feats), train_targets[idx])
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise DivergenceError(f"training loss became {loss_val} at step {step}")
        loss.backward()
        dk.adam_step(params, state, hyper.lr, betas=hyper.betas)
        dk.zero_grads(params)
        log(step, "train", loss_val)

        if step % hyper.eval_every == 0 or step == hyper.steps:
            metric = eval_dev()
            log(step, "dev", metric)
            if better(metric, best_metric):
                best_metric = metric
                best_step = step
                best_state = {p.name: p.data.copy() for p in params}

    for p in params:
        p.data = best_state[p.name].copy()
    return FinetuneResult(weights=weights, head=head, history=history,
                          best_metric=best_metric, best_step=best_step,
                          best_state=best_state)
