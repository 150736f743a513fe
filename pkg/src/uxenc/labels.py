"""Frame-level pseudo-labels: MFCC features clustered with K-means.

The clustering teacher runs on the *clean* sources, never on the mixture, so
label sequences depend only on the source content and the codebook.  Frames
use a 400-sample window and 320-sample hop, matching the encoder's
downsampling exactly.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import kernels
from .errors import ConfigurationError, DataError, DegenerateSignalError

N_MFCC = 13
N_MELS = 26
N_FFT = 512
WIN_LENGTH = 400
HOP_LENGTH = 320
FEATURE_DIM = 3 * N_MFCC

FEATURE_SPEC = f"mfcc{N_MFCC}_mel{N_MELS}_fft{N_FFT}_win{WIN_LENGTH}_hop{HOP_LENGTH}_d2"

_LOG_FLOOR = 1e-10


@dataclass
class PseudoLabels:
    primary: np.ndarray          # [T] cluster ids
    secondary: np.ndarray        # [T] cluster ids, -1 where absent
    valid_secondary: np.ndarray  # [T] bool

    @property
    def n_frames(self):
        return self.primary.shape[0]


@dataclass
class Codebook:
    centroids: np.ndarray  # [K, D]
    feature_spec: str = FEATURE_SPEC
    inertia: float = 0.0
    history: list = None   # inertia after each Lloyd update

    @property
    def n_clusters(self):
        return self.centroids.shape[0]


def frame_count(n_samples, win_length=WIN_LENGTH, hop=HOP_LENGTH):
    if n_samples < win_length:
        return 0
    return 1 + (n_samples - win_length) // hop


def _mel(f):
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def _mel_filterbank(sample_rate):
    edges = _mel_inv(np.linspace(_mel(0.0), _mel(sample_rate / 2.0), N_MELS + 2))
    bins = np.floor((N_FFT + 1) * edges / sample_rate).astype(int)
    fbank = np.zeros((N_MELS, N_FFT // 2 + 1))
    for m in range(N_MELS):
        lo, mid, hi = bins[m], bins[m + 1], bins[m + 2]
        for k in range(lo, mid):
            if mid > lo:
                fbank[m, k] = (k - lo) / (mid - lo)
        for k in range(mid, hi):
            if hi > mid:
                fbank[m, k] = (hi - k) / (hi - mid)
    return fbank


_FBANK_CACHE = {}


def _delta(feats, width=2):
    denom = 2.0 * sum(n * n for n in range(1, width + 1))
    padded = np.concatenate([feats[:1].repeat(width, axis=0), feats,
                             feats[-1:].repeat(width, axis=0)], axis=0)
    out = np.zeros_like(feats)
    for n in range(1, width + 1):
        out += n * (padded[width + n:width + n + feats.shape[0]]
                    - padded[width - n:width - n + feats.shape[0]])
    return out / denom


def frame_features(wave, sample_rate=16000):
    """13 MFCCs plus deltas and delta-deltas, ``[T, 39]``.

    Window 400 samples, hop 320, so T equals the encoder's frame count for
    the same signal.
    """
    wave = np.asarray(wave, dtype=np.float64)
    if wave.ndim != 1:
        raise DataError(f"frame_features expects mono input, got shape {wave.shape}")
    n = wave.shape[0]
    if n < WIN_LENGTH:
        raise DegenerateSignalError(
            f"signal of {n} samples is shorter than one window ({WIN_LENGTH})")
    t_frames = frame_count(n)
    starts = np.arange(t_frames) * HOP_LENGTH
    frames = wave[starts[:, None] + np.arange(WIN_LENGTH)[None, :]]
    window = np.hamming(WIN_LENGTH)
    spectrum = np.fft.rfft(frames * window, n=N_FFT, axis=1)
    power = np.abs(spectrum) ** 2
    if sample_rate not in _FBANK_CACHE:
        _FBANK_CACHE[sample_rate] = _mel_filterbank(sample_rate)
    mel_energy = power @ _FBANK_CACHE[sample_rate].T
    log_mel = np.log(np.maximum(mel_energy, _LOG_FLOOR))
    mfcc = scipy.fft.dct(log_mel, type=2, axis=1, norm="ortho")[:, :N_MFCC]
    d1 = _delta(mfcc)
    d2 = _delta(d1)
    return np.concatenate([mfcc, d1, d2], axis=1)


def kmeans_fit(features, n_clusters, iters=50, rng=None):
    """Lloyd's algorithm from a K-means++ initialization.

    The D^2-weighted init draws over a canonical (lexicographically sorted)
    row order, so the fitted centroid set does not depend on how the input
    rows were arranged.  Empty clusters are repaired by moving the centroid
    onto the point farthest from its currently assigned centroid.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n_clusters < 2:
        raise ConfigurationError([f"n_clusters={n_clusters} must be >= 2"])
    if n_clusters > n:
        raise DataError(f"n_clusters={n_clusters} exceeds {n} feature rows")
    if rng is None:
        rng = np.random.default_rng(0)

    centroids = _kmeans_pp_init(features, n_clusters, rng)
    labels = None
    inertia = np.inf
    history = []
    for _ in range(iters):
        new_labels, dists = kernels.kmeans_assign(features, centroids)
        for k in range(n_clusters):
            members = new_labels == k
            if members.any():
                centroids[k] = features[members].mean(axis=0)
            else:
                centroids[k] = features[int(np.argmax(dists))]
        labels, dists = kernels.kmeans_assign(features, centroids)
        inertia = float(dists.sum())
        history.append(inertia)
        if np.array_equal(labels, new_labels):
            break
    return Codebook(centroids=centroids, inertia=inertia, history=history)


def _kmeans_pp_init(features, n_clusters, rng):
    # canonical row order makes the init a function of the point set
    order = np.lexsort(features.T[::-1])
    pts = features[order]
    n = pts.shape[0]
    centroids = np.empty((n_clusters, pts.shape[1]))
    centroids[0] = pts[int(rng.integers(0, n))]
    d2 = ((pts - centroids[0]) ** 2).sum(axis=1)
    for k in range(1, n_clusters):
        total = d2.sum()
        if total <= 0:
            centroids[k] = pts[int(rng.integers(0, n))]
            continue
        probs = d2 / total
        idx = int(rng.choice(n, p=probs))
        centroids[k] = pts[idx]
        d2 = np.minimum(d2, ((pts - centroids[k]) ** 2).sum(axis=1))
    return centroids


def assign(features, codebook):
    """Nearest-centroid labels (squared Euclidean; ties go to the lowest index)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[1] != codebook.centroids.shape[1]:
        raise DataError(
            f"feature dim {features.shape[1]} != codebook dim {codebook.centroids.shape[1]}")
    labels, _ = kernels.kmeans_assign(features, codebook.centroids)
    return labels


def bilabel_targets(example, codebook):
    """Per-frame cluster ids for the primary and (where present) secondary speaker.

    Labels come from the clean, unscaled sources; the secondary is aligned by
    its placement offset and valid only on frames whose analysis window lies
    fully inside its active interval.
    """
    primary = example.primary()
    if primary.clean is None:
        raise DataError("example does not retain clean sources")
    if primary.clean.shape[0] != example.n_samples or primary.offset != 0:
        raise DataError("bilabel targets require a full-length primary source")
    t_frames = frame_count(example.n_samples)
    primary_labels = assign(frame_features(primary.clean), codebook)

    secondary_labels = np.full(t_frames, -1, dtype=np.int64)
    valid = np.zeros(t_frames, dtype=bool)
    sec = next((s for s in example.sources if s.kind == "secondary"), None)
    if sec is not None:
        if sec.clean is None:
            raise DataError("example does not retain clean sources")
        placed = np.zeros(example.n_samples)
        start, end = sec.active
        placed[start:start + sec.clean.shape[0]] = sec.clean
        sec_all = assign(frame_features(placed), codebook)
        starts = np.arange(t_frames) * HOP_LENGTH
        inside = (starts >= start) & (starts + WIN_LENGTH <= end)
        secondary_labels[inside] = sec_all[inside]
        valid = inside
    return PseudoLabels(primary=primary_labels, secondary=secondary_labels,
                        valid_secondary=valid)


# ---------------------------------------------------------------------------
# Label caches: text header + raw little-endian int32 frames
# ---------------------------------------------------------------------------

def save_label_cache(path, pseudo):
    header = f"uxlabels 1 frames={pseudo.n_frames} rows=2 dtype=int32\n"
    body = np.stack([pseudo.primary, pseudo.secondary]).astype("<i4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(body)


def load_label_cache(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if header[:2] != ["uxlabels", "1"]:
            raise DataError(f"{path}: not a label cache")
        fields = dict(kv.split("=") for kv in header[2:])
        frames = int(fields["frames"])
        data = np.frombuffer(fh.read(), dtype="<i4").reshape(2, frames)
    primary = data[0].astype(np.int64)
    secondary = data[1].astype(np.int64)
    return PseudoLabels(primary=primary, secondary=secondary,
                        valid_secondary=secondary >= 0)
