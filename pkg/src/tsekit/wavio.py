"""WAV reading and writing (PCM 16-bit and IEEE float 32-bit, little-endian RIFF)."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import SAMPLE_RATE, Waveform

FORMATS = ('pcm16', 'float32')


def read_wav(path: str | Path, expected_rate: int | None = SAMPLE_RATE) -> Waveform:
    """Read a WAV file into a float Waveform with samples nominally in [-1, 1].

    Files at a rate other than ``expected_rate`` are rejected; nothing is
    resampled. Pass ``expected_rate=None`` to accept any rate.
    """
    rate, data = wavfile.read(str(path))
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f'{path}: sample rate {rate} Hz, expected {expected_rate} Hz')
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValueError(f'{path}: unsupported sample format {data.dtype}')
    samples = samples.T if samples.ndim == 2 else samples[None]
    return Waveform(samples, rate)


def write_wav(path: str | Path, wave: Waveform, fmt: str = 'float32') -> Path:
    """Write a Waveform; ``fmt`` is ``'float32'`` or ``'pcm16'`` (clipped)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'float32':
        data = wave.samples.T.astype('<f4')
    elif fmt == 'pcm16':
        scaled = np.round(np.clip(wave.samples, -1.0, 32767 / 32768) * 32768.0)
        data = scaled.T.astype('<i2')
    else:
        raise ValueError(f'unknown WAV format {fmt!r}; choose from {FORMATS}')
    if wave.channels == 1:
        data = data[:, 0]
    wavfile.write(str(path), wave.sample_rate, np.ascontiguousarray(data))
    return path


def wav_duration(path: str | Path) -> float:
    """Duration in seconds, read without decoding the whole file."""
    rate, data = wavfile.read(str(path), mmap=True)
    return data.shape[0] / rate
