"""Multi-channel masked-prediction encoder.

Pipeline: a 7-layer CNN downsamples each channel by 320 with shared weights,
a single learned mask embedding replaces the same masked frames in every
channel, and an interleaved stack of cross-channel / cross-frame Transformer
blocks processes the result.  Cross-channel attention queries one channel at
one frame against keys/values from all channels within a 1-frame context;
cross-frame attention is a per-channel Transformer with shared weights and a
clipped learned relative-position bias.  The final layer is averaged over
channels and two linear heads produce the primary/secondary representations
used by the contrastive pretraining loss.

Every block output is recorded (shape ``[C, T, D]``) for weighted-sum
fine-tuning.  Channels carry no positional identity anywhere, which makes the
pooled output invariant to input channel permutations up to float round-off.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import diffkernel as dk
from .errors import ConfigurationError, DataError
from .seeding import substream

DEFAULT_CONV_SPEC = (
    (10, 5, 32), (3, 2, 32), (3, 2, 32), (3, 2, 32), (3, 2, 32), (2, 2, 32), (2, 2, 32),
)

_NEG_ATTN = -1e9


@dataclass
class EncoderConfig:
    conv_spec: tuple = DEFAULT_CONV_SPEC
    model_dim: int = 64
    n_heads: int = 2
    n_cross_channel: int = 2
    n_cross_frame: int = 2
    ffn_dim: int = 256
    mask_span: int = 10
    mask_prob: float = 0.08
    logit_scale: float = 0.1
    n_clusters: int = 32
    proj_dim: int = 32
    rel_pos_window: int = 16
    channel_first: bool = True

    @classmethod
    def paper_scale(cls):
        return cls(
            conv_spec=tuple((k, s, 512) for (k, s, _) in DEFAULT_CONV_SPEC),
            model_dim=768, n_heads=12, n_cross_channel=6, n_cross_frame=6,
            ffn_dim=3072, n_clusters=500, proj_dim=256,
        )

    def validate(self):
        bad = []
        stride = self.total_stride()
        if stride != 320:
            bad.append(f"conv strides multiply to {stride}, expected 320")
        if len(self.conv_spec) != 7:
            bad.append(f"conv_spec has {len(self.conv_spec)} layers, expected 7")
        if self.model_dim % self.n_heads != 0:
            bad.append(f"model_dim {self.model_dim} not divisible by {self.n_heads} heads")
        if self.logit_scale <= 0:
            bad.append(f"logit_scale {self.logit_scale} must be positive")
        if self.n_clusters < 2:
            bad.append(f"n_clusters {self.n_clusters} must be >= 2")
        if not (0.0 <= self.mask_prob <= 1.0):
            bad.append(f"mask_prob {self.mask_prob} outside [0, 1]")
        if self.mask_span < 1:
            bad.append(f"mask_span {self.mask_span} must be >= 1")
        if bad:
            raise ConfigurationError(bad)
        return self

    def total_stride(self):
        out = 1
        for _, s, _ in self.conv_spec:
            out *= s
        return out

    def receptive_field(self):
        rf = 1
        stride = 1
        for k, s, _ in self.conv_spec:
            rf += (k - 1) * stride
            stride *= s
        return rf

    def frame_count(self, n_samples):
        t = n_samples
        for k, s, _ in self.conv_spec:
            if t < k:
                raise DataError(
                    f"input of {n_samples} samples is shorter than the "
                    f"receptive field ({self.receptive_field()})")
            t = (t - k) // s + 1
        return t

    @property
    def n_layers(self):
        return self.n_cross_channel + self.n_cross_frame

    def layer_types(self):
        """Interleaved block order, alternating starting with cross-channel
        (or cross-frame when ``channel_first`` is off); surplus blocks of the
        larger count trail at the end."""
        first, second = ("cc", "cf") if self.channel_first else ("cf", "cc")
        counts = {"cc": self.n_cross_channel, "cf": self.n_cross_frame}
        order = []
        while counts[first] > 0 or counts[second] > 0:
            for kind in (first, second):
                if counts[kind] > 0:
                    order.append(kind)
                    counts[kind] -= 1
        return tuple(order)

    def to_dict(self):
        d = {f"conv{i}": f"{k},{s},{c}" for i, (k, s, c) in enumerate(self.conv_spec)}
        for key in ("model_dim", "n_heads", "n_cross_channel", "n_cross_frame",
                    "ffn_dim", "mask_span", "n_clusters", "proj_dim",
                    "rel_pos_window"):
            d[key] = str(getattr(self, key))
        d["mask_prob"] = repr(self.mask_prob)
        d["logit_scale"] = repr(self.logit_scale)
        d["channel_first"] = "1" if self.channel_first else "0"
        return d

    @classmethod
    def from_dict(cls, d):
        conv = tuple(
            tuple(int(v) for v in d[f"conv{i}"].split(",")) for i in range(7))
        return cls(
            conv_spec=conv,
            model_dim=int(d["model_dim"]), n_heads=int(d["n_heads"]),
            n_cross_channel=int(d["n_cross_channel"]),
            n_cross_frame=int(d["n_cross_frame"]), ffn_dim=int(d["ffn_dim"]),
            mask_span=int(d["mask_span"]), mask_prob=float(d["mask_prob"]),
            logit_scale=float(d["logit_scale"]), n_clusters=int(d["n_clusters"]),
            proj_dim=int(d["proj_dim"]), rel_pos_window=int(d["rel_pos_window"]),
            channel_first=d["channel_first"] == "1",
        )


@dataclass
class MaskSpec:
    frames: np.ndarray          # sorted unique masked frame indices
    spans: list = field(default_factory=list)

    @property
    def count(self):
        return int(self.frames.shape[0])


@dataclass
class LayerStack:
    layers: list                # n_layers tensors of shape [C, T, D]
    pooled: object              # [T, D]
    o_pri: object               # [T, D]
    o_sec: object               # [T, D]

    @property
    def n_layers(self):
        return len(self.layers)


def sample_mask(n_frames, cfg, rng):
    """Every frame starts a span of ``mask_span`` frames with prob ``mask_prob``."""
    if n_frames < 1:
        raise DataError("cannot mask an empty sequence")
    starts = np.flatnonzero(rng.random(n_frames) < cfg.mask_prob)
    masked = np.zeros(n_frames, dtype=bool)
    spans = []
    for s in starts:
        end = min(n_frames, s + cfg.mask_span)
        masked[s:end] = True
        spans.append((int(s), int(end - s)))
    return MaskSpec(frames=np.flatnonzero(masked), spans=spans)


def apply_mask(feats, mask, mask_embedding):
    """Replace masked frames with the learned embedding in every channel."""
    if mask.count == 0:
        return feats
    n_frames = feats.shape[1]
    sel = np.zeros((n_frames, 1), dtype=feats.dtype)
    sel[mask.frames] = 1.0
    keep = dk.mul(feats, 1.0 - sel)
    fill = dk.mul(dk.reshape(mask_embedding, (1, -1)), sel)  # [T, D]
    return dk.add(keep, fill)


def _init_weight(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dtype)


class Encoder:
    """Parameter container plus forward passes; single-threaded per instance."""

    def __init__(self, cfg, seed=0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = dtype
        self._params = {}
        rng = substream(seed, "init")
        d = cfg.model_dim

        in_ch = 1
        for i, (k, s, out_ch) in enumerate(cfg.conv_spec):
            self._add(f"conv{i}.w", _init_weight(rng, (out_ch, in_ch, k), in_ch * k, dtype))
            self._add(f"conv{i}.b", np.zeros(out_ch, dtype=dtype))
            in_ch = out_ch
        self._add("post_proj.w", _init_weight(rng, (in_ch, d), in_ch, dtype))
        self._add("post_proj.b", np.zeros(d, dtype=dtype))
        self._add("post_ln.g", np.ones(d, dtype=dtype))
        self._add("post_ln.b", np.zeros(d, dtype=dtype))
        self._add("mask_emb", (0.1 * rng.standard_normal(d)).astype(dtype))

        for i, kind in enumerate(cfg.layer_types()):
            p = f"block{i}"
            for lnname in ("ln1", "ln2"):
                self._add(f"{p}.{lnname}.g", np.ones(d, dtype=dtype))
                self._add(f"{p}.{lnname}.b", np.zeros(d, dtype=dtype))
            for proj in ("wq", "wk", "wv", "wo"):
                self._add(f"{p}.{proj}", _init_weight(rng, (d, d), d, dtype))
                self._add(f"{p}.{proj}b", np.zeros(d, dtype=dtype))
            self._add(f"{p}.ffn.w1", _init_weight(rng, (d, cfg.ffn_dim), d, dtype))
            self._add(f"{p}.ffn.b1", np.zeros(cfg.ffn_dim, dtype=dtype))
            self._add(f"{p}.ffn.w2", _init_weight(rng, (cfg.ffn_dim, d), cfg.ffn_dim, dtype))
            self._add(f"{p}.ffn.b2", np.zeros(d, dtype=dtype))
            if kind == "cf":
                self._add(f"{p}.rel_bias",
                          np.zeros((cfg.n_heads, 2 * cfg.rel_pos_window + 1), dtype=dtype))

        self._add("head_pri.w", _init_weight(rng, (d, d), d, dtype))
        self._add("head_pri.b", np.zeros(d, dtype=dtype))
        self._add("head_sec.w", _init_weight(rng, (d, d), d, dtype))
        self._add("head_sec.b", np.zeros(d, dtype=dtype))

    # -- parameter plumbing --------------------------------------------------
    def _add(self, name, array):
        self._params[name] = dk.Parameter(array, name)

    def p(self, name):
        return self._params[name]

    def parameters(self):
        return list(self._params.values())

    def state_dict(self):
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state):
        for name, p in self._params.items():
            if name not in state:
                raise DataError(f"checkpoint is missing tensor {name!r}")
            if tuple(state[name].shape) != tuple(p.data.shape):
                raise DataError(
                    f"tensor {name!r} has shape {state[name].shape}, expected {p.data.shape}")
            p.data = state[name].astype(self.dtype)

    # -- forward -------------------------------------------------------------
    def cnn_downsample(self, wave):
        """Shared-weight per-channel CNN: ``[C, N]`` -> ``[C, T, D]``.

        Channels ride the batch axis of the convolution, so permuting input
        channels permutes the output identically.
        """
        wave = np.asarray(wave, dtype=self.dtype)
        if wave.ndim == 1:
            wave = wave[None, :]
        h = dk.tensor(wave[:, None, :])           # [C, 1, N]
        for i in range(len(self.cfg.conv_spec)):
            stride = self.cfg.conv_spec[i][1]
            h = dk.gelu(dk.conv1d(h, self.p(f"conv{i}.w"), self.p(f"conv{i}.b"),
                                  stride=stride))
        feats = dk.transpose(h, (0, 2, 1))        # [C, T, conv_ch]
        feats = dk.linear(feats, self.p("post_proj.w"), self.p("post_proj.b"))
        return dk.layer_norm(feats, self.p("post_ln.g"), self.p("post_ln.b"))

    def cross_channel_layer(self, x, index, context_radius=1):
        """Attention across channels with ``context_radius`` frames of key context."""
        p = f"block{index}"
        c, t, d = x.shape
        heads = self.cfg.n_heads
        dh = d // heads
        y = dk.layer_norm(x, self.p(f"{p}.ln1.g"), self.p(f"{p}.ln1.b"))
        q = dk.linear(y, self.p(f"{p}.wq"), self.p(f"{p}.wqb"))
        k = dk.linear(y, self.p(f"{p}.wk"), self.p(f"{p}.wkb"))
        v = dk.linear(y, self.p(f"{p}.wv"), self.p(f"{p}.wvb"))

        offsets = np.arange(-context_radius, context_radius + 1)
        n_ctx = offsets.shape[0]
        pos = np.arange(t)[:, None] + offsets[None, :]          # [T, n_ctx]
        valid = (pos >= 0) & (pos < t)
        idx = np.clip(pos, 0, t - 1)

        def gather(z):
            znb = dk.take(z, idx, axis=1)                       # [C, T, n_ctx, D]
            znb = dk.transpose(znb, (1, 2, 0, 3))               # [T, n_ctx, C, D]
            znb = dk.reshape(znb, (t, n_ctx * c, heads, dh))
            return dk.transpose(znb, (0, 2, 1, 3))              # [T, H, n_ctx*C, dh]

        k_nb = gather(k)
        v_nb = gather(v)
        qh = dk.transpose(q, (1, 0, 2))                         # [T, C, D]
        qh = dk.reshape(qh, (t, c, heads, dh))
        qh = dk.transpose(qh, (0, 2, 1, 3))                     # [T, H, C, dh]

        bias = np.where(valid, 0.0, _NEG_ATTN).astype(x.dtype)  # [T, n_ctx]
        bias = np.repeat(bias, c, axis=1)[:, None, None, :]     # [T, 1, 1, n_ctx*C]

        attn = dk.scaled_dot_attention(qh, k_nb, v_nb, bias=dk.tensor(bias))
        attn = dk.transpose(attn, (0, 2, 1, 3))                 # [T, C, H, dh]
        attn = dk.reshape(attn, (t, c, d))
        attn = dk.transpose(attn, (1, 0, 2))                    # [C, T, D]
        h = dk.add(x, dk.linear(attn, self.p(f"{p}.wo"), self.p(f"{p}.wob")))
        return self._ffn_block(h, p)

    def cross_frame_layer(self, x, index, frame_mask=None):
        """Per-channel full self-attention over frames with shared weights and
        a clipped relative-position bias; ``frame_mask`` marks valid frames."""
        p = f"block{index}"
        c, t, d = x.shape
        heads = self.cfg.n_heads
        dh = d // heads
        w = self.cfg.rel_pos_window
        y = dk.layer_norm(x, self.p(f"{p}.ln1.g"), self.p(f"{p}.ln1.b"))

        def split_heads(z):
            z = dk.reshape(z, (c, t, heads, dh))
            return dk.transpose(z, (0, 2, 1, 3))                # [C, H, T, dh]

        q = split_heads(dk.linear(y, self.p(f"{p}.wq"), self.p(f"{p}.wqb")))
        k = split_heads(dk.linear(y, self.p(f"{p}.wk"), self.p(f"{p}.wkb")))
        v = split_heads(dk.linear(y, self.p(f"{p}.wv"), self.p(f"{p}.wvb")))

        dist = np.arange(t)[None, :] - np.arange(t)[:, None]
        dist = np.clip(dist, -w, w) + w                         # [T, T]
        bias = dk.take(self.p(f"{p}.rel_bias"), dist, axis=1)   # [H, T, T]
        if frame_mask is not None:
            key_bias = np.where(np.asarray(frame_mask, dtype=bool), 0.0,
                                _NEG_ATTN).astype(x.dtype)
            bias = dk.add(bias, dk.tensor(key_bias[None, None, :]))

        attn = dk.scaled_dot_attention(q, k, v, bias=bias)      # [C, H, T, dh]
        attn = dk.transpose(attn, (0, 2, 1, 3))
        attn = dk.reshape(attn, (c, t, d))
        h = dk.add(x, dk.linear(attn, self.p(f"{p}.wo"), self.p(f"{p}.wob")))
        return self._ffn_block(h, p)

    def _ffn_block(self, h, prefix):
        y = dk.layer_norm(h, self.p(f"{prefix}.ln2.g"), self.p(f"{prefix}.ln2.b"))
        z = dk.linear(y, self.p(f"{prefix}.ffn.w1"), self.p(f"{prefix}.ffn.b1"))
        z = dk.linear(dk.gelu(z), self.p(f"{prefix}.ffn.w2"), self.p(f"{prefix}.ffn.b2"))
        return dk.add(h, z)

    def encode(self, wave, mask=None):
        """Full forward pass; returns the :class:`LayerStack` with every block
        output, the channel-averaged final layer, and the two head outputs."""
        feats = self.cnn_downsample(wave)
        if mask is not None:
            feats = apply_mask(feats, mask, self.p("mask_emb"))
        hidden = feats
        outputs = []
        for i, kind in enumerate(self.cfg.layer_types()):
            if kind == "cc":
                hidden = self.cross_channel_layer(hidden, i)
            else:
                hidden = self.cross_frame_layer(hidden, i)
            outputs.append(hidden)
        pooled = dk.mean(hidden, axis=0)
        o_pri = dk.linear(pooled, self.p("head_pri.w"), self.p("head_pri.b"))
        o_sec = dk.linear(pooled, self.p("head_sec.w"), self.p("head_sec.b"))
        return LayerStack(layers=outputs, pooled=pooled, o_pri=o_pri, o_sec=o_sec)


def prediction_logits(o, proj, embeddings, logit_scale):
    """Cosine-similarity logits against the codebook: ``cos(o W, e_k) / gamma``.

    ``o [T, D]``, ``proj [D, P]``, ``embeddings [K, P]`` -> ``[T, K]``.
    """
    projected = dk.matmul(o, proj)                  # [T, P]
    t_frames = projected.shape[0]
    a = dk.reshape(projected, (t_frames, 1, projected.shape[1]))
    cos = dk.cosine_similarity(a, embeddings, axis=-1)  # [T, K]
    return dk.mul(cos, 1.0 / logit_scale)


class PretrainModel:
    """Encoder plus the shared label projection and codebook embeddings."""

    def __init__(self, cfg, seed=0, dtype=np.float32):
        self.encoder = Encoder(cfg, seed=seed, dtype=dtype)
        rng = substream(seed, "init", 1)
        self.proj = dk.Parameter(
            _init_weight(rng, (cfg.model_dim, cfg.proj_dim), cfg.model_dim, dtype),
            "pretrain.proj")
        self.label_emb = dk.Parameter(
            _init_weight(rng, (cfg.n_clusters, cfg.proj_dim), cfg.proj_dim, dtype),
            "pretrain.label_emb")

    @property
    def cfg(self):
        return self.encoder.cfg

    def parameters(self):
        return self.encoder.parameters() + [self.proj, self.label_emb]

    def state_dict(self):
        state = self.encoder.state_dict()
        state["pretrain.proj"] = self.proj.data.copy()
        state["pretrain.label_emb"] = self.label_emb.data.copy()
        return state

    def load_state_dict(self, state):
        self.encoder.load_state_dict(
            {k: v for k, v in state.items() if not k.startswith("pretrain.")})
        self.proj.data = state["pretrain.proj"].astype(self.encoder.dtype)
        self.label_emb.data = state["pretrain.label_emb"].astype(self.encoder.dtype)
