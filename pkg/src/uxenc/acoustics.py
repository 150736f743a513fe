"""Room geometry sampling and image-source impulse response simulation.

Shoebox rooms with a single uniform absorption coefficient derived from the
sampled RT60 via Sabine's formula.  Impulse responses are built by mirroring
the source across the walls up to a maximum reflection order; each image
contributes an attenuated impulse ``g**order / (4 pi d)`` placed at its
fractional sample delay ``d / c * fs`` with an 81-tap Hann-windowed sinc.

All functions are pure: identical inputs give bit-identical taps.
"""

import math
import pathlib
from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import kernels
from .audio import SAMPLE_RATE, as_multichannel
from .errors import ConfigurationError, DataError, GeometryError

SPEED_OF_SOUND = 343.0

# windowed-sinc fractional-delay interpolator: 2*40+1 = 81 taps
SINC_HALF_WIDTH = 40

DEFAULT_MAX_ORDER = 17

# sampling ranges for pretraining geometry
ROOM_RANGES_DEFAULT = {
    "length_m": (3.0, 8.0),
    "width_m": (3.0, 8.0),
    "height_m": (2.5, 4.0),
    "rt60_s": (0.05, 0.8),
}

ARRAY_RADIUS_RANGE_DEFAULT = (0.05, 0.15)

_WALL_MARGIN = 1e-3


@dataclass(frozen=True)
class RoomSpec:
    length_m: float
    width_m: float
    height_m: float
    rt60_s: float
    absorption: float

    @property
    def dims(self):
        return np.array([self.length_m, self.width_m, self.height_m])

    @property
    def volume(self):
        return self.length_m * self.width_m * self.height_m

    @property
    def surface_area(self):
        l, w, h = self.length_m, self.width_m, self.height_m
        return 2.0 * (l * w + l * h + w * h)

    def contains(self, point, margin=0.0):
        p = np.asarray(point)
        return bool(np.all(p >= margin) and np.all(p <= self.dims - margin))


@dataclass(frozen=True)
class MicArray:
    """Microphone positions (meters) plus the array center they were sampled around."""

    positions: np.ndarray  # [C, 3]
    center: np.ndarray     # [3]

    @property
    def n_channels(self):
        return self.positions.shape[0]

    def translated(self, new_center):
        new_center = np.asarray(new_center, dtype=float)
        shift = new_center - self.center
        return MicArray(positions=self.positions + shift, center=new_center)


@dataclass(frozen=True)
class Rir:
    taps: np.ndarray  # [C, L]
    sample_rate: int
    room: RoomSpec
    array: MicArray
    source: np.ndarray  # [3]

    @property
    def n_channels(self):
        return self.taps.shape[0]


def sabine_absorption(length_m, width_m, height_m, rt60_s):
    """Uniform absorption from RT60: ``0.161 V / (rt60 * S)``, clipped to (0, 1].

    Short RT60 in a large room can push Sabine's alpha past 1; we clip so the
    reflection gain stays real and the sampled RT60 is kept as metadata.
    """
    volume = length_m * width_m * height_m
    surface = 2.0 * (length_m * width_m + length_m * height_m + width_m * height_m)
    alpha = 0.161 * volume / (rt60_s * surface)
    return min(alpha, 1.0)


def sample_room(rng, ranges=None):
    """Draw a room with uniform dimensions and RT60 over the given ranges."""
    ranges = dict(ROOM_RANGES_DEFAULT if ranges is None else ranges)
    bad = [
        f"{key}: invalid range {lohi}"
        for key, lohi in ranges.items()
        if not (0 < lohi[0] <= lohi[1])
    ]
    if bad:
        raise ConfigurationError(bad)
    length = rng.uniform(*ranges["length_m"])
    width = rng.uniform(*ranges["width_m"])
    height = rng.uniform(*ranges["height_m"])
    rt60 = rng.uniform(*ranges["rt60_s"])
    absorption = sabine_absorption(length, width, height, rt60)
    return RoomSpec(length, width, height, rt60, absorption)


def sample_array(rng, room, n_channels, r_min=0.05, r_max=0.15):
    """Random array: center uniform in the room (with r_max margin), mics in a
    ball of radius r_max around it, the farthest mic at distance in [r_min, r_max]."""
    if n_channels < 1:
        raise ConfigurationError([f"n_channels must be >= 1, got {n_channels}"])
    if not (0 <= r_min <= r_max):
        raise ConfigurationError([f"invalid radius range [{r_min}, {r_max}]"])
    margin = r_max + _WALL_MARGIN
    if np.any(room.dims <= 2 * margin):
        raise GeometryError(
            f"room {room.dims} cannot contain an array of radius {r_max}"
        )
    center = np.array([rng.uniform(margin, d - margin) for d in room.dims])
    r_far = rng.uniform(r_min, r_max)
    if n_channels == 1 or r_far == 0.0:
        radii = np.full(n_channels, r_far)
    else:
        u = rng.random(n_channels)
        radii = u * (r_far / u.max())
    directions = rng.normal(size=(n_channels, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    positions = center + radii[:, None] * directions
    return MicArray(positions=positions, center=center)


def sample_source_position(rng, room, margin=0.1):
    """Uniform source position with a wall margin."""
    if np.any(room.dims <= 2 * margin):
        raise GeometryError(f"room {room.dims} too small for source margin {margin}")
    return np.array([rng.uniform(margin, d - margin) for d in room.dims])


def enumerate_images(room, source, max_order):
    """All image sources with total reflection count <= max_order.

    Along each axis with walls at 0 and L the images sit at ``2mL + s``
    (``2|m|`` reflections) and ``2mL - s`` (``|2m - 1|`` reflections); the
    order of a 3-D image is the sum over axes.

    Returns ``(positions [M, 3], orders [M])`` in a deterministic order.
    """
    axes = []
    for axis in range(3):
        s = source[axis]
        L = room.dims[axis]
        entries = []
        m_span = max_order // 2 + 1
        for m in range(-m_span, m_span + 1):
            for q in (0, 1):
                count = abs(2 * m) if q == 0 else abs(2 * m - 1)
                if count > max_order:
                    continue
                coord = 2 * m * L + (s if q == 0 else -s)
                entries.append((coord, count))
        axes.append(entries)
    positions = []
    orders = []
    for cx, ox in axes[0]:
        for cy, oy in axes[1]:
            if ox + oy > max_order:
                continue
            for cz, oz in axes[2]:
                order = ox + oy + oz
                if order > max_order:
                    continue
                positions.append((cx, cy, cz))
                orders.append(order)
    return np.array(positions), np.array(orders)


def simulate_rir(room, array, source, max_order=DEFAULT_MAX_ORDER, fs=SAMPLE_RATE):
    """Image-source RIR for every microphone in the array.

    Amplitudes follow ``g**order / (4 pi d)`` with reflection gain
    ``g = sqrt(1 - absorption)``; arrivals are placed at ``d / c * fs`` with
    the windowed-sinc interpolator.
    """
    source = np.asarray(source, dtype=float)
    if max_order < 0:
        raise ConfigurationError([f"max_order must be >= 0, got {max_order}"])
    if not room.contains(source):
        raise GeometryError(f"source {source} outside room {room.dims}")
    for mic in array.positions:
        if not room.contains(mic):
            raise GeometryError(f"mic {mic} outside room {room.dims}")
        if np.linalg.norm(source - mic) < 1e-3:
            raise GeometryError("source coincides with a microphone (< 1 mm)")

    positions, orders = enumerate_images(room, source, max_order)
    g = math.sqrt(max(0.0, 1.0 - room.absorption))
    gains = g ** orders.astype(float)

    n_ch = array.n_channels
    diffs = positions[None, :, :] - array.positions[:, None, :]   # [C, M, 3]
    dists = np.sqrt((diffs ** 2).sum(axis=2))                     # [C, M]
    delays = dists / SPEED_OF_SOUND * fs
    amps = gains[None, :] / (4.0 * math.pi * dists)

    length = int(math.ceil(delays.max())) + SINC_HALF_WIDTH + 2
    taps = np.zeros((n_ch, length))
    for c in range(n_ch):
        kernels.place_taps(taps[c], delays[c], amps[c], SINC_HALF_WIDTH)
    return Rir(taps=taps, sample_rate=fs, room=room, array=array, source=source)


def first_arrival_index(rir):
    """Per-channel index of the first tap reaching half the channel peak.

    The windowed sinc spreads tiny precursor energy ahead of each arrival, so
    the literal first nonzero tap is not meaningful; the half-peak onset
    tracks the direct-path delay to within a sample.
    """
    mags = np.abs(rir.taps)
    peaks = mags.max(axis=1)
    return np.array([int(np.argmax(mags[c] >= 0.5 * peaks[c])) for c in range(rir.n_channels)])


def convolve(wave, rir):
    """Convolve a mono source with every RIR channel, truncated to the input length.

    A ``[C, N]`` input must match the RIR channel count and is filtered
    channel-by-channel.
    """
    wave = np.asarray(wave, dtype=float)
    if wave.ndim == 1:
        n = wave.shape[0]
        out = scipy.signal.fftconvolve(wave[None, :], rir.taps, axes=1)
        return out[:, :n]
    wave = as_multichannel(wave)
    if wave.shape[0] != rir.n_channels:
        raise DataError(
            f"channel mismatch: wave has {wave.shape[0]}, rir has {rir.n_channels}"
        )
    n = wave.shape[1]
    out = np.stack(
        [scipy.signal.fftconvolve(wave[c], rir.taps[c])[:n] for c in range(wave.shape[0])]
    )
    return out


# ---------------------------------------------------------------------------
# RIR banks on disk: rir_{C}ch_{index}.wav + one-line sidecar metadata
# ---------------------------------------------------------------------------

def _fmt_vec(v):
    return ",".join(repr(float(x)) for x in np.asarray(v).ravel())


def _parse_vec(s):
    return np.array([float(x) for x in s.split(",")])


def rir_filename(n_channels, index):
    return f"rir_{n_channels}ch_{index:05d}.wav"


def save_rir(directory, rir, index, entry, source_slot):
    """Write one RIR as float32 WAV plus its sidecar line; returns the wav path."""
    from .audio import write_wav

    path = pathlib.Path(directory) / rir_filename(rir.n_channels, index)
    write_wav(path, rir.taps, rir.sample_rate)
    mics = ";".join(_fmt_vec(p) for p in rir.array.positions)
    line = (
        f"room={_fmt_vec(rir.room.dims)} rt60={rir.room.rt60_s!r} "
        f"absorption={rir.room.absorption!r} entry={entry} source_slot={source_slot} "
        f"center={_fmt_vec(rir.array.center)} source={_fmt_vec(rir.source)} mics={mics}"
    )
    path.with_suffix(".txt").write_text(line + "\n")
    return path


def load_rir(wav_path):
    """Load one RIR and its geometry; returns ``(rir, entry, source_slot)``."""
    from .audio import read_wav

    wav_path = pathlib.Path(wav_path)
    fs, taps = read_wav(wav_path)
    taps = as_multichannel(taps).astype(np.float64)
    fields = {}
    for token in wav_path.with_suffix(".txt").read_text().strip().split(" "):
        key, _, value = token.partition("=")
        fields[key] = value
    dims = _parse_vec(fields["room"])
    room = RoomSpec(dims[0], dims[1], dims[2], float(fields["rt60"]), float(fields["absorption"]))
    mics = np.stack([_parse_vec(p) for p in fields["mics"].split(";")])
    array = MicArray(positions=mics, center=_parse_vec(fields["center"]))
    rir = Rir(taps=taps, sample_rate=fs, room=room, array=array, source=_parse_vec(fields["source"]))
    return rir, int(fields["entry"]), int(fields["source_slot"])


def load_rir_bank(directory):
    """Group a directory of RIR files into ``{n_channels: [entry, ...]}`` where
    each entry is the list of source-slot RIRs sharing one room and array."""
    directory = pathlib.Path(directory)
    bank = {}
    for wav_path in sorted(directory.glob("rir_*ch_*.wav")):
        rir, entry, slot = load_rir(wav_path)
        per_c = bank.setdefault(rir.n_channels, {})
        per_c.setdefault(entry, {})[slot] = rir
    out = {}
    for n_ch, entries in bank.items():
        out[n_ch] = [
            [slots[s] for s in sorted(slots)] for _, slots in sorted(entries.items())
        ]
    if not out:
        raise DataError(f"no RIR files found under {directory}")
    return out


def generate_rir_bank(directory, seed, channel_counts, entries_per_count,
                      sources_per_entry=3, max_order=DEFAULT_MAX_ORDER,
                      room_ranges=None, radius_range=ARRAY_RADIUS_RANGE_DEFAULT,
                      fs=SAMPLE_RATE):
    """Simulate and persist a bank; per-entry RNG is keyed by (seed, C, entry)."""
    from .seeding import substream

    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for n_ch in channel_counts:
        for entry in range(entries_per_count):
            rng = substream(seed, "geom", n_ch, entry)
            room = sample_room(rng, room_ranges)
            array = sample_array(rng, room, n_ch, *radius_range)
            for slot in range(sources_per_entry):
                src = sample_source_position(rng, room)
                while min(np.linalg.norm(src - p) for p in array.positions) < 0.05:
                    src = sample_source_position(rng, room)
                rir = simulate_rir(room, array, src, max_order=max_order, fs=fs)
                index = entry * sources_per_entry + slot
                written.append(save_rir(directory, rir, index, entry, slot))
    return written
