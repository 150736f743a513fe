"""Multi-channel waveform helpers and 32-bit float WAV I/O.

Waveform convention throughout the package: mono signals are 1-D arrays of
shape ``[N]``, multi-channel signals are ``[C, N]``.  Files are RIFF WAV,
32-bit float PCM, written and read bit-exactly.
"""

import numpy as np
import scipy.io.wavfile

from .errors import DataError

SAMPLE_RATE = 16000


def as_multichannel(wave):
    """View a mono or multi-channel wave as ``[C, N]``."""
    wave = np.asarray(wave)
    if wave.ndim == 1:
        return wave[None, :]
    if wave.ndim == 2:
        return wave
    raise DataError(f"expected 1-D or 2-D waveform, got shape {wave.shape}")


def write_wav(path, wave, sample_rate=SAMPLE_RATE):
    """Write ``[N]`` or ``[C, N]`` float data as 32-bit float WAV."""
    wave = np.asarray(wave)
    data = wave.astype(np.float32)
    if data.ndim == 2:
        data = data.T.copy()  # scipy expects [N, C]
    scipy.io.wavfile.write(str(path), int(sample_rate), data)


def read_wav(path):
    """Read a float WAV; returns ``(sample_rate, wave)`` with wave ``[N]`` or ``[C, N]``."""
    sample_rate, data = scipy.io.wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float32) / 2147483648.0
    elif data.dtype != np.float32 and data.dtype != np.float64:
        raise DataError(f"unsupported WAV sample format {data.dtype} in {path}")
    if data.ndim == 2:
        data = data.T
    return sample_rate, data
