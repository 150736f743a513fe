"""Multi-channel multi-talker mixture simulation.

Two entry points:

* :func:`simulate_pretrain_batch` - on-the-fly batch simulation for
  pretraining: one channel count per batch, optional secondary speaker and
  noise per example, dB-exact energy bookkeeping, random length-ratio crops
  and placement offsets.
* :func:`simulate_eval_utt` - fine-tuning/dev/test simulation: fresh room and
  7-mic circular-plus-center array per utterance, exact SIR/SNR scaling, the
  secondary speaker starting at a random offset inside the primary.

Every mixture carries full provenance (per-source gains, offsets, activity
intervals, speaker ids, transcripts) so targets can be re-derived and ratios
re-measured from the stored pieces.  Mixing is exactly linear: the stored
scaled components sum to the mixture sample by sample.

RNG discipline: ``simulate_pretrain_batch`` draws the batch channel count
from the passed generator, then gives every example its own child stream
(``rng.spawn``), so examples can be simulated in parallel without changing
the result.  Per example the consumption order is fixed: secondary coin,
noise coin, secondary pick/ratio/length, noise pick/crop/ratio/length, RIR
entry pick, then per interference crop start and placement offset.
"""

import json
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np

from . import acoustics
from .audio import SAMPLE_RATE, read_wav, write_wav
from .errors import ConfigurationError, DataError, DegenerateSignalError

FRAME_HOP = 320  # 20 ms at 16 kHz, the encoder's frame step

EVAL_ARRAY_RADIUS = 0.0425


@dataclass(frozen=True)
class CleanUtterance:
    wave: np.ndarray  # mono [N]
    speaker_id: str
    transcript: str = ""

    def __len__(self):
        return self.wave.shape[0]


@dataclass
class PretrainSimConfig:
    p_interference: float = 0.5
    p_noise: float = 0.5
    c_min: int = 2
    c_max: int = 4
    l_min: float = 0.1
    l_max: float = 0.5
    sir_range_db: tuple = (-6.0, 6.0)
    snr_range_db: tuple = (-5.0, 20.0)
    batch_size: int = 8
    n_samples: int = 32000

    def validate(self):
        bad = []
        if not (0.0 <= self.p_interference <= 1.0):
            bad.append(f"p_interference={self.p_interference} outside [0, 1]")
        if not (0.0 <= self.p_noise <= 1.0):
            bad.append(f"p_noise={self.p_noise} outside [0, 1]")
        if not (1 <= self.c_min <= self.c_max):
            bad.append(f"channel range [{self.c_min}, {self.c_max}] invalid")
        if not (0.0 < self.l_min <= self.l_max <= 1.0):
            bad.append(f"length-ratio range [{self.l_min}, {self.l_max}] invalid")
        if self.sir_range_db[0] > self.sir_range_db[1]:
            bad.append(f"sir_range_db {self.sir_range_db} not ordered")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            bad.append(f"snr_range_db {self.snr_range_db} not ordered")
        if self.batch_size < 1:
            bad.append(f"batch_size={self.batch_size} < 1")
        if self.n_samples < 1:
            bad.append(f"n_samples={self.n_samples} < 1")
        if bad:
            raise ConfigurationError(bad)


@dataclass
class EvalSimConfig:
    rt60_range: tuple = (0.05, 0.8)
    sir_range_db: tuple = (-6.0, 6.0)
    snr_range_db: tuple = (-5.0, 20.0)
    count: int = 100
    room_ranges: dict | None = None
    array_radius: float = EVAL_ARRAY_RADIUS
    n_perimeter: int = 6
    center_mic: bool = True
    max_order: int = acoustics.DEFAULT_MAX_ORDER

    @classmethod
    def for_asr(cls, **kw):
        return cls(rt60_range=(0.1, 0.6), sir_range_db=(5.0, 20.0),
                   snr_range_db=(5.0, 20.0), **kw)

    @classmethod
    def for_diarization(cls, **kw):
        return cls(rt60_range=(0.05, 0.8), sir_range_db=(-6.0, 6.0),
                   snr_range_db=(-5.0, 20.0), **kw)

    def validate(self):
        bad = []
        for name in ("rt60_range", "sir_range_db", "snr_range_db"):
            lo, hi = getattr(self, name)
            if lo > hi:
                bad.append(f"{name} ({lo}, {hi}) not ordered")
        if self.rt60_range[0] <= 0:
            bad.append(f"rt60_range minimum must be positive")
        if self.array_radius <= 0:
            bad.append(f"array_radius={self.array_radius} must be positive")
        if bad:
            raise ConfigurationError(bad)

    def room_ranges_full(self):
        ranges = dict(acoustics.ROOM_RANGES_DEFAULT if self.room_ranges is None
                      else self.room_ranges)
        ranges["rt60_s"] = tuple(self.rt60_range)
        return ranges


@dataclass
class SourceComponent:
    kind: str                      # primary | secondary | noise
    speaker_id: str
    gain_db: float
    offset: int
    active: tuple                  # (start, end) half-open, samples
    transcript: str = ""
    crop_start: int = 0
    energy_prescale_db: float = 0.0
    target_ratio_db: float = 0.0
    measured_ratio_db: float = 0.0
    component: np.ndarray | None = None    # scaled, placed, [C, N]
    scaled_full: np.ndarray | None = None  # scaled, pre-crop (pretrain only)
    clean: np.ndarray | None = None        # cropped clean mono, pre-reverb/scale

    def to_record(self):
        return {
            "kind": self.kind,
            "speaker_id": self.speaker_id,
            "gain_db": float(self.gain_db),
            "offset": int(self.offset),
            "active": [int(self.active[0]), int(self.active[1])],
            "transcript": self.transcript,
            "crop_start": int(self.crop_start),
            "energy_prescale_db": float(self.energy_prescale_db),
            "target_ratio_db": float(self.target_ratio_db),
            "measured_ratio_db": float(self.measured_ratio_db),
        }


@dataclass
class MixtureExample:
    wave: np.ndarray               # [C, N]
    sources: list
    sample_rate: int = SAMPLE_RATE
    geometry: dict = field(default_factory=dict)

    @property
    def n_channels(self):
        return self.wave.shape[0]

    @property
    def n_samples(self):
        return self.wave.shape[1]

    def primary(self):
        return next(s for s in self.sources if s.kind == "primary")

    def resum(self):
        """Sum of the stored scaled components, in construction order."""
        total = np.zeros_like(self.wave)
        for src in self.sources:
            total = total + src.component
        return total


def energy_db(wave):
    """Mean power over all channels and samples, in dB: ``10 log10(mean(x^2))``."""
    wave = np.asarray(wave, dtype=float)
    power = float(np.mean(wave ** 2))
    if power == 0.0:
        raise DegenerateSignalError("all-zero signal has no finite energy")
    return 10.0 * math.log10(power)


def ratio_gain_db(source_energy_db, primary_energy_db, ratio_db):
    """Gain (dB) that makes primary-to-source energy ratio exactly ``ratio_db``."""
    return -ratio_db + primary_energy_db - source_energy_db


def rescale_to_ratio(source, primary_energy_db, ratio_db):
    """Scale ``source`` so that ``primary_energy_db - energy_db(scaled) == ratio_db``."""
    gain = ratio_gain_db(energy_db(source), primary_energy_db, ratio_db)
    return np.asarray(source, dtype=float) * 10.0 ** (gain / 20.0)


def circular_array(radius, n_perimeter=6, center=True):
    """Planar array: ``n_perimeter`` mics at equal angles plus an optional center mic.

    Positions are relative to the array center at the origin; translate into a
    room with :meth:`MicArray.translated`.
    """
    if radius <= 0:
        raise ConfigurationError([f"radius={radius} must be positive"])
    angles = 2.0 * np.pi * np.arange(n_perimeter) / n_perimeter
    pts = np.stack([radius * np.cos(angles), radius * np.sin(angles),
                    np.zeros(n_perimeter)], axis=1)
    if center:
        pts = np.concatenate([pts, np.zeros((1, 3))], axis=0)
    return acoustics.MicArray(positions=pts, center=np.zeros(3))


def _repeat_crop(wave, length, rng):
    """Tile ``wave`` if shorter than ``length``, random-crop if longer."""
    n = wave.shape[0]
    if n == length:
        return wave.copy()
    if n < length:
        reps = int(math.ceil(length / n))
        return np.tile(wave, reps)[:length]
    start = int(rng.integers(0, n - length + 1))
    return wave[start:start + length]


def _place(seg, total, offset):
    """Zero-pad a ``[C, n]`` segment into a ``[C, total]`` buffer at ``offset``."""
    out = np.zeros((seg.shape[0], total))
    out[:, offset:offset + seg.shape[1]] = seg
    return out


def simulate_pretrain_batch(clean_batch, noises, rir_bank, cfg, rng):
    """Simulate one pretraining batch of multi-channel multi-talker mixtures.

    ``clean_batch`` is a list of :class:`CleanUtterance`, all of length
    ``cfg.n_samples``.  ``noises`` is a list of mono arrays.  ``rir_bank``
    maps channel count to entries of per-source-slot RIRs (slot 0 primary,
    1 secondary, 2 noise) as returned by :func:`uxenc.acoustics.load_rir_bank`.
    """
    cfg.validate()
    t_len = cfg.n_samples
    for u in clean_batch:
        if len(u) != t_len:
            raise DataError(
                f"clean utterance length {len(u)} != configured {t_len}")
    if cfg.p_noise > 0 and not noises:
        raise ConfigurationError(["p_noise > 0 but the noise set is empty"])
    for c in range(cfg.c_min, cfg.c_max + 1):
        if c not in rir_bank or not rir_bank[c]:
            raise ConfigurationError([f"rir bank has no entries for C={c}"])

    n_ch = int(rng.integers(cfg.c_min, cfg.c_max + 1))
    children = rng.spawn(len(clean_batch))
    examples = []
    for i, utt in enumerate(clean_batch):
        child = children[i]
        x = child.random()
        y = child.random()
        add_secondary = x < cfg.p_interference and len(clean_batch) > 1
        add_noise = y < cfg.p_noise and len(noises) > 0

        plan = [("primary", utt, 0.0, 1.0, 0)]
        if add_secondary:
            j = int(child.integers(0, len(clean_batch) - 1))
            if j >= i:
                j += 1
            ratio = float(child.uniform(*cfg.sir_range_db))
            l_ratio = float(child.uniform(cfg.l_min, cfg.l_max))
            plan.append(("secondary", clean_batch[j], ratio, l_ratio, 1))
        if add_noise:
            k = int(child.integers(0, len(noises)))
            noise_wave = _repeat_crop(np.asarray(noises[k], dtype=float), t_len, child)
            ratio = float(child.uniform(*cfg.snr_range_db))
            l_ratio = float(child.uniform(cfg.l_min, cfg.l_max))
            plan.append(("noise", CleanUtterance(noise_wave, f"noise{k}"), ratio, l_ratio, 2))

        entries = rir_bank[n_ch]
        entry = entries[int(child.integers(0, len(entries)))]

        reverbed = [acoustics.convolve(src.wave, entry[slot])
                    for (_, src, _, _, slot) in plan]
        e_primary = energy_db(reverbed[0])

        sources = []
        mixture = np.zeros((n_ch, t_len))
        for (kind, src, ratio, l_ratio, _), rev in zip(plan, reverbed):
            e_pre = energy_db(rev)
            gain = ratio_gain_db(e_pre, e_primary, ratio)
            scaled = rev * 10.0 ** (gain / 20.0)
            seg_len = t_len if kind == "primary" else max(1, int(round(t_len * l_ratio)))
            if kind == "primary":
                crop_start = 0
                offset = 0
            else:
                crop_start = int(child.integers(0, t_len - seg_len + 1))
                offset = int(child.integers(0, t_len - seg_len + 1))
            placed = _place(scaled[:, crop_start:crop_start + seg_len], t_len, offset)
            mixture = mixture + placed
            sources.append(SourceComponent(
                kind=kind,
                speaker_id=src.speaker_id,
                gain_db=gain,
                offset=offset,
                active=(offset, offset + seg_len),
                transcript=src.transcript,
                crop_start=crop_start,
                energy_prescale_db=e_pre,
                target_ratio_db=ratio,
                measured_ratio_db=e_primary - energy_db(scaled),
                component=placed,
                scaled_full=scaled,
                clean=src.wave[crop_start:crop_start + seg_len].copy(),
            ))
        examples.append(MixtureExample(wave=mixture, sources=sources,
                                       geometry={"n_channels": n_ch}))
    return examples


def sample_eval_params(cfg, rng):
    """Draw the per-utterance randomness for Algorithm-2-style simulation.

    Returns ``(room, sir_db, snr_db)``; geometry placement draws follow in
    :func:`simulate_eval_utt` in a fixed order.
    """
    room = acoustics.sample_room(rng, cfg.room_ranges_full())
    sir = float(rng.uniform(*cfg.sir_range_db))
    snr = float(rng.uniform(*cfg.snr_range_db))
    return room, sir, snr


def simulate_eval_utt(u1, u2, noise, cfg, rng):
    """One fine-tuning/dev/test mixture: u1 at time 0, u2 at a random start in
    [0, len(u1)), noise repeated over the whole mixture, exact SIR/SNR scaling.

    SIR and SNR are measured on the reverberated signals over each source's
    own active support.
    """
    cfg.validate()
    if u1.speaker_id == u2.speaker_id:
        raise DataError("primary and secondary must be distinct speakers")
    noise = np.asarray(noise, dtype=float)
    if noise.size == 0:
        raise DataError("empty noise signal")

    room, sir_db, snr_db = sample_eval_params(cfg, rng)
    margin = cfg.array_radius + 0.05
    center = np.array([rng.uniform(margin, d - margin) for d in room.dims])
    array = circular_array(cfg.array_radius, cfg.n_perimeter, cfg.center_mic).translated(center)

    positions = []
    for _ in range(3):
        pos = acoustics.sample_source_position(rng, room)
        while min(np.linalg.norm(pos - p) for p in array.positions) < 0.05:
            pos = acoustics.sample_source_position(rng, room)
        positions.append(pos)
    rirs = [acoustics.simulate_rir(room, array, pos, max_order=cfg.max_order)
            for pos in positions]

    len1 = len(u1)
    len2 = len(u2)
    start2 = int(rng.integers(0, len1))
    total = max(len1, start2 + len2)
    noise_tiled = _repeat_crop(noise, total, rng)

    rev1 = acoustics.convolve(u1.wave, rirs[0])
    rev2 = acoustics.convolve(u2.wave, rirs[1])
    rev_n = acoustics.convolve(noise_tiled, rirs[2])

    e1 = energy_db(rev1)
    gain2 = ratio_gain_db(energy_db(rev2), e1, sir_db)
    gain_n = ratio_gain_db(energy_db(rev_n), e1, snr_db)
    scaled2 = rev2 * 10.0 ** (gain2 / 20.0)
    scaled_n = rev_n * 10.0 ** (gain_n / 20.0)

    comp1 = _place(rev1, total, 0)
    comp2 = _place(scaled2, total, start2)
    comp_n = _place(scaled_n, total, 0)
    mixture = comp1 + comp2 + comp_n

    sources = [
        SourceComponent(
            kind="primary", speaker_id=u1.speaker_id, gain_db=0.0, offset=0,
            active=(0, len1), transcript=u1.transcript,
            energy_prescale_db=e1, target_ratio_db=0.0, measured_ratio_db=0.0,
            component=comp1, clean=u1.wave.copy(),
        ),
        SourceComponent(
            kind="secondary", speaker_id=u2.speaker_id, gain_db=gain2, offset=start2,
            active=(start2, start2 + len2), transcript=u2.transcript,
            energy_prescale_db=energy_db(rev2), target_ratio_db=sir_db,
            measured_ratio_db=e1 - energy_db(scaled2),
            component=comp2, clean=u2.wave.copy(),
        ),
        SourceComponent(
            kind="noise", speaker_id="noise", gain_db=gain_n, offset=0,
            active=(0, total),
            energy_prescale_db=energy_db(rev_n), target_ratio_db=snr_db,
            measured_ratio_db=e1 - energy_db(scaled_n),
            component=comp_n,
        ),
    ]
    geometry = {
        "room": [float(d) for d in room.dims],
        "rt60_s": room.rt60_s,
        "absorption": room.absorption,
        "array_center": [float(v) for v in center],
        "source_positions": [[float(v) for v in p] for p in positions],
        "n_channels": array.n_channels,
    }
    return MixtureExample(wave=mixture, sources=sources, geometry=geometry)


def diarization_targets(example, frame_hop=FRAME_HOP, n_frames=None):
    """Frame-level speaker activity ``[T_frames, S]`` from placement intervals.

    Frame ``t`` covers samples ``[t*hop, (t+1)*hop)``; a speaker is active in
    every frame overlapping its active interval.  Noise sources are not
    speakers.  Pass ``n_frames`` to align with an encoder's frame count.
    """
    speakers = [s for s in example.sources if s.kind != "noise"]
    if n_frames is None:
        n_frames = int(math.ceil(example.n_samples / frame_hop))
    activity = np.zeros((n_frames, len(speakers)), dtype=np.int8)
    for col, src in enumerate(speakers):
        start, end = src.active
        first = max(0, start // frame_hop)
        for t in range(first, n_frames):
            if t * frame_hop >= end:
                break
            if (t + 1) * frame_hop > start:
                activity[t, col] = 1
    return activity


# ---------------------------------------------------------------------------
# Manifests and on-disk datasets
# ---------------------------------------------------------------------------

def read_manifest(path):
    """Tab-separated manifest: ``path<TAB>speaker_id<TAB>transcript`` per line
    (transcript optional).  Paths are resolved relative to the manifest."""
    path = pathlib.Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise DataError(f"{path}:{lineno}: expected 'path<TAB>speaker_id[<TAB>transcript]'")
        wav = pathlib.Path(parts[0])
        if not wav.is_absolute():
            wav = path.parent / wav
        records.append({
            "path": wav,
            "speaker_id": parts[1],
            "transcript": parts[2] if len(parts) > 2 else "",
        })
    if not records:
        raise DataError(f"manifest {path} is empty")
    return records


def load_clean_utterance(record, n_samples=None, rng=None):
    """Load a manifest record as mono float64, optionally crop/tile to length."""
    fs, wave = read_wav(record["path"])
    if fs != SAMPLE_RATE:
        raise DataError(f"{record['path']}: sample rate {fs} != {SAMPLE_RATE}")
    if wave.ndim == 2:
        wave = wave[0]
    wave = wave.astype(np.float64)
    if n_samples is not None:
        wave = _repeat_crop(wave, n_samples, rng if rng is not None else np.random.default_rng(0))
    return CleanUtterance(wave=wave, speaker_id=record["speaker_id"],
                          transcript=record["transcript"])


def example_stem(index):
    return f"mix_{index:06d}"


def write_example(directory, stem, example, task=""):
    """Persist a mixture as float32 WAV plus a JSON sidecar with provenance."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_wav(directory / f"{stem}.wav", example.wave, example.sample_rate)
    record = {
        "task": task,
        "sample_rate": int(example.sample_rate),
        "n_channels": int(example.n_channels),
        "n_samples": int(example.n_samples),
        "geometry": example.geometry,
        "sources": [s.to_record() for s in example.sources],
    }
    text = json.dumps(record, sort_keys=True, indent=2)
    (directory / f"{stem}.json").write_text(text + "\n")


def read_example(directory, stem):
    """Load a persisted mixture; component waves are not reconstructed."""
    directory = pathlib.Path(directory)
    fs, wave = read_wav(directory / f"{stem}.wav")
    record = json.loads((directory / f"{stem}.json").read_text())
    sources = [
        SourceComponent(
            kind=r["kind"], speaker_id=r["speaker_id"], gain_db=r["gain_db"],
            offset=r["offset"], active=tuple(r["active"]), transcript=r["transcript"],
            crop_start=r["crop_start"], energy_prescale_db=r["energy_prescale_db"],
            target_ratio_db=r["target_ratio_db"], measured_ratio_db=r["measured_ratio_db"],
        )
        for r in record["sources"]
    ]
    wave = wave if wave.ndim == 2 else wave[None, :]
    return MixtureExample(wave=wave.astype(np.float64), sources=sources,
                          sample_rate=fs, geometry=record.get("geometry", {}))


def list_dataset(directory):
    """Sorted stems of all examples under a dataset directory."""
    directory = pathlib.Path(directory)
    stems = sorted(p.stem for p in directory.glob("mix_*.json"))
    if not stems:
        raise DataError(f"no examples found under {directory}")
    return stems
