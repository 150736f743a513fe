"""Tiny synthetic speech-like corpus for demos and the test pipeline.

No real speech ships with this package; instead we synthesize "speakers" as
harmonic sources with speaker-specific pitch and a small shared inventory of
"phones" (formant envelopes), each mapped to a character.  Utterances are
random phone sequences grouped into words, so transcripts support CTC
training and WER scoring, k-means over MFCCs finds the phone structure, and
two-speaker mixtures carry real diarization structure.
"""

import math
import pathlib
from dataclasses import dataclass

import numpy as np

from .audio import SAMPLE_RATE, write_wav

# phone inventory: character -> two formant-ish resonance centers (Hz)
PHONES = {
    "a": (700, 1200),
    "e": (500, 1900),
    "i": (300, 2300),
    "o": (450, 850),
    "u": (350, 650),
    "s": (1800, 3200),
    "m": (250, 1100),
    "k": (1300, 2600),
}
PHONE_LIST = sorted(PHONES)


@dataclass
class ToySpeaker:
    speaker_id: str
    f0: float
    formant_shift: float
    brightness: float


def make_speakers(n_speakers, rng):
    speakers = []
    for i in range(n_speakers):
        speakers.append(ToySpeaker(
            speaker_id=f"spk{i:02d}",
            f0=float(rng.uniform(90.0, 220.0)),
            formant_shift=float(rng.uniform(0.85, 1.2)),
            brightness=float(rng.uniform(0.6, 1.4)),
        ))
    return speakers


def _phone_wave(speaker, phone, n, rng):
    """Harmonic stack shaped by the phone's resonances, with a soft envelope."""
    f1, f2 = PHONES[phone]
    f1 *= speaker.formant_shift
    f2 *= speaker.formant_shift
    t = np.arange(n) / SAMPLE_RATE
    jitter = 1.0 + 0.02 * math.sin(2 * math.pi * 3.0 * rng.random())
    f0 = speaker.f0 * jitter
    wave = np.zeros(n)
    n_harm = int((SAMPLE_RATE / 2 - 200) // f0)
    h = np.arange(1, min(n_harm, 40) + 1)
    freqs = h * f0
    amp = (np.exp(-0.5 * ((freqs - f1) / 150.0) ** 2)
           + 0.7 * np.exp(-0.5 * ((freqs - f2) / 200.0) ** 2)
           + 0.05 * speaker.brightness)
    amp /= h ** 0.5
    phases = rng.uniform(0, 2 * np.pi, size=h.shape[0])
    wave = (amp[None, :] * np.sin(2 * np.pi * freqs[None, :] * t[:, None]
                                  + phases[None, :])).sum(axis=1)
    ramp = min(160, n // 4)
    env = np.ones(n)
    env[:ramp] = np.linspace(0, 1, ramp)
    env[-ramp:] = np.linspace(1, 0, ramp)
    return wave * env


def synth_utterance(speaker, n_samples, rng, phones_per_word=(2, 4)):
    """Random phone sequence filling ``n_samples``; returns (wave, transcript)."""
    wave = np.zeros(n_samples)
    cursor = 0
    words = []
    current = []
    word_len = int(rng.integers(phones_per_word[0], phones_per_word[1] + 1))
    while cursor < n_samples - 400:
        phone = PHONE_LIST[int(rng.integers(0, len(PHONE_LIST)))]
        dur = int(rng.integers(1200, 2400))
        dur = min(dur, n_samples - cursor)
        wave[cursor:cursor + dur] = _phone_wave(speaker, phone, dur, rng)
        cursor += dur
        current.append(phone)
        if len(current) >= word_len:
            words.append("".join(current))
            current = []
            word_len = int(rng.integers(phones_per_word[0], phones_per_word[1] + 1))
    if current:
        words.append("".join(current))
    peak = np.abs(wave).max()
    if peak > 0:
        wave = 0.3 * wave / peak
    return wave, " ".join(words)


def synth_noise(n_samples, rng):
    """Colored noise plus a slowly amplitude-modulated tone."""
    white = rng.standard_normal(n_samples + 1)
    colored = np.cumsum(white)[:n_samples]
    colored -= colored.mean()
    colored /= max(np.abs(colored).max(), 1e-9)
    t = np.arange(n_samples) / SAMPLE_RATE
    tone_freq = float(rng.uniform(300, 2000))
    am = 0.5 * (1 + np.sin(2 * np.pi * float(rng.uniform(0.5, 3.0)) * t))
    tone = am * np.sin(2 * np.pi * tone_freq * t)
    mix = 0.7 * colored + 0.3 * tone
    return 0.2 * mix / np.abs(mix).max()


def write_toy_corpus(directory, n_speakers=4, utts_per_speaker=6, n_samples=16000,
                     n_noises=4, seed=0, length_range=None):
    """Synthesize a corpus and its manifests.

    Returns ``(clean_manifest_path, noise_manifest_path)``; manifest lines are
    ``path<TAB>speaker_id<TAB>transcript``.  With ``length_range=(lo, hi)``
    utterance lengths vary uniformly instead of being fixed at ``n_samples``.
    """
    directory = pathlib.Path(directory)
    (directory / "clean").mkdir(parents=True, exist_ok=True)
    (directory / "noise").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    speakers = make_speakers(n_speakers, rng)

    clean_lines = []
    for spk in speakers:
        for u in range(utts_per_speaker):
            length = (n_samples if length_range is None
                      else int(rng.integers(length_range[0], length_range[1] + 1)))
            wave, transcript = synth_utterance(spk, length, rng)
            name = f"clean/{spk.speaker_id}_{u:03d}.wav"
            write_wav(directory / name, wave)
            clean_lines.append(f"{name}\t{spk.speaker_id}\t{transcript}")
    noise_lines = []
    for k in range(n_noises):
        wave = synth_noise(n_samples * 2, rng)
        name = f"noise/noise_{k:03d}.wav"
        write_wav(directory / name, wave)
        noise_lines.append(f"{name}\tnoise")

    clean_manifest = directory / "clean.tsv"
    noise_manifest = directory / "noise.tsv"
    clean_manifest.write_text("\n".join(clean_lines) + "\n")
    noise_manifest.write_text("\n".join(noise_lines) + "\n")
    return clean_manifest, noise_manifest
