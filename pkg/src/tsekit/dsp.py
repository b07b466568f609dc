"""Signal primitives: waveforms, STFT/iSTFT, log-power spectra, FBANK, SI-SNR.

Array layout conventions used across the package:

    waveform samples   (channels, samples)        float64
    spectrogram bins   (channels, frames, freqs)  complex128

All containers are frozen dataclasses holding read-only arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000
LOG_FLOOR = 1e-10
SI_SNR_CAP = 60.0


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Waveform:
    """Multichannel audio, shape ``(channels, samples)``."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError(f'expected (channels, samples) array, got shape {samples.shape}')
        if int(self.sample_rate) <= 0:
            raise ValueError(f'sample_rate must be positive, got {self.sample_rate}')
        object.__setattr__(self, 'samples', _readonly(samples))
        object.__setattr__(self, 'sample_rate', int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    def channel(self, index: int) -> 'Waveform':
        return Waveform(self.samples[index], self.sample_rate)

    def crop(self, start: int, stop: int) -> 'Waveform':
        return Waveform(self.samples[:, start:stop], self.sample_rate)


def hann(size: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / size)


def sqrt_hann(size: int) -> np.ndarray:
    return np.sqrt(hann(size))


def rectangular(size: int) -> np.ndarray:
    return np.ones(size)


WINDOWS = {
    'hann': hann,
    'sqrt_hann': sqrt_hann,
    'rect': rectangular,
}


@dataclass(frozen=True)
class StftConfig:
    """STFT parameters.

    With ``center=True`` the signal is padded by ``fft_size // 2`` zeros on
    both sides so that frame ``f`` is centred on sample ``f * hop``. With
    ``center=False`` frame ``f`` starts at sample ``f * hop``. In both cases
    the tail is zero-padded up to a whole number of frames.

    Only centred framing reconstructs the first and last ``fft_size - hop``
    samples exactly; without it they sit under the tapered window edge.
    """

    fft_size: int = 512
    hop: int = 256
    window: str = 'hann'
    center: bool = True

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f'fft_size must be a power of two, got {self.fft_size}')
        if not 0 < self.hop <= self.fft_size:
            raise ValueError(f'hop must be in (0, fft_size], got {self.hop}')
        if self.window not in WINDOWS:
            raise ValueError(f'unknown window {self.window!r}; choose from {sorted(WINDOWS)}')
        if not self.is_cola():
            raise ValueError(
                f'window {self.window!r} with hop {self.hop} violates constant overlap-add'
            )

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_array(self) -> np.ndarray:
        return WINDOWS[self.window](self.fft_size)

    def is_cola(self, rtol: float = 1e-10) -> bool:
        """Check constant overlap-add of the window (or of its square, for WOLA pairs)."""
        if self.fft_size % self.hop:
            return False
        window = self.window_array()
        for w in (window, window ** 2):
            overlap = w.reshape(-1, self.hop).sum(axis=0)
            if np.ptp(overlap) <= rtol * np.max(np.abs(overlap)):
                return True
        return False

    def frame_count(self, length: int) -> int:
        if self.center:
            return 1 + -(-length // self.hop)
        return 1 + -(-(max(length - self.fft_size, 0)) // self.hop)

    def frame_center(self, frame: int | np.ndarray) -> int | np.ndarray:
        """Sample index at the centre of a frame, in unpadded coordinates."""
        if self.center:
            return frame * self.hop
        return frame * self.hop + self.fft_size // 2

    def to_dict(self) -> dict:
        return {'fft_size': self.fft_size, 'hop': self.hop,
                'window': self.window, 'center': self.center}


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT bins of shape ``(channels, frames, freq_bins)``."""

    bins: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.complex128)
        if bins.ndim == 2:
            bins = bins[None]
        if bins.ndim != 3:
            raise ValueError(f'expected (channels, frames, freqs) array, got shape {bins.shape}')
        if bins.shape[-1] != self.config.freq_bins:
            raise ValueError(
                f'{bins.shape[-1]} frequency bins inconsistent with fft_size {self.config.fft_size}'
            )
        object.__setattr__(self, 'bins', _readonly(bins))

    @property
    def channels(self) -> int:
        return self.bins.shape[0]

    @property
    def frame_count(self) -> int:
        return self.bins.shape[1]

    @property
    def freq_bins(self) -> int:
        return self.bins.shape[2]

    def channel(self, index: int) -> 'ComplexSpectrogram':
        return ComplexSpectrogram(self.bins[index], self.config, self.sample_rate)


def _padding(length: int, cfg: StftConfig) -> tuple[int, int]:
    left = cfg.fft_size // 2 if cfg.center else 0
    frames = cfg.frame_count(length)
    total = (frames - 1) * cfg.hop + cfg.fft_size
    return left, total - length - left


def stft(wave: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform of every channel.

    Bin ``k`` of frame ``f`` is ``sum_n w[n] x[f*hop + n] exp(-2j pi k n / N)``
    over the padded signal (see :class:`StftConfig`). One-sided Parseval:
    ``|X_0|^2 + 2 sum_{0<k<N/2} |X_k|^2 + |X_{N/2}|^2 = N * sum_n (w x)^2``.
    """
    if wave.length < cfg.fft_size:
        raise ValueError(
            f'signal of {wave.length} samples is shorter than one frame ({cfg.fft_size})'
        )
    left, right = _padding(wave.length, cfg)
    padded = np.pad(wave.samples, ((0, 0), (left, right)))
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.fft_size, axis=-1)
    frames = frames[:, ::cfg.hop] * cfg.window_array()
    return ComplexSpectrogram(np.fft.rfft(frames, axis=-1), cfg, wave.sample_rate)


def istft(spec: ComplexSpectrogram, cfg: StftConfig | None = None,
          length: int | None = None) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    Frames are windowed again and normalised by the summed squared window,
    which reconstructs any signal exactly when the bins are unmodified.
    """
    if cfg is None:
        cfg = spec.config
    elif cfg != spec.config:
        raise ValueError(f'config {cfg} does not match spectrogram config {spec.config}')
    window = cfg.window_array()
    channels, frames, _ = spec.bins.shape
    total = (frames - 1) * cfg.hop + cfg.fft_size
    left = cfg.fft_size // 2 if cfg.center else 0
    if length is None:
        length = total - cfg.fft_size if cfg.center else total
    if length > total - left:
        raise ValueError(f'requested length {length} exceeds the {total - left} samples covered')

    chunks = np.fft.irfft(spec.bins, n=cfg.fft_size, axis=-1) * window
    out = np.zeros((channels, total))
    norm = np.zeros(total)
    for f in range(frames):
        start = f * cfg.hop
        out[:, start:start + cfg.fft_size] += chunks[:, f]
        norm[start:start + cfg.fft_size] += window ** 2
    covered = norm > 1e-8 * np.max(norm)
    out[:, covered] /= norm[covered]
    out[:, ~covered] = 0.0
    return Waveform(out[:, left:left + length], spec.sample_rate)


def lps(spec: ComplexSpectrogram, floor: float = LOG_FLOOR) -> np.ndarray:
    """Log-power spectrum ``ln(|X|^2 + floor)``, shape ``(frames, freqs)``."""
    if spec.channels != 1:
        raise ValueError(f'lps expects a single channel, got {spec.channels}')
    return np.log(np.abs(spec.bins[0]) ** 2 + floor)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int = SAMPLE_RATE,
                   f_low: float = 0.0, f_high: float | None = None) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape ``(n_mels, fft_size//2 + 1)``.

    Triangles are linear in mel with unit peak (no area normalisation), so
    adjacent filters sum to one between the first and last centre.
    """
    if f_high is None:
        f_high = sample_rate / 2
    if not 0 <= f_low < f_high <= sample_rate / 2:
        raise ValueError(
            f'band edges must satisfy 0 <= f_low < f_high <= {sample_rate / 2}, '
            f'got {f_low}, {f_high}'
        )
    if n_mels < 1:
        raise ValueError(f'n_mels must be positive, got {n_mels}')
    edges = np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_mels + 2)
    bin_mel = hz_to_mel(np.arange(fft_size // 2 + 1) * sample_rate / fft_size)
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_mel - lower) / (centre - lower)
    falling = (upper - bin_mel) / (upper - centre)
    return np.maximum(0.0, np.minimum(rising, falling))


def fbank(spec: ComplexSpectrogram, n_mels: int = 80, f_low: float = 0.0,
          f_high: float = 8000.0, floor: float = LOG_FLOOR) -> np.ndarray:
    """Log mel filterbank energies of ``|X|^2``, shape ``(frames, n_mels)``."""
    if spec.channels != 1:
        raise ValueError(f'fbank expects a single channel, got {spec.channels}')
    weights = mel_filterbank(n_mels, spec.config.fft_size, spec.sample_rate, f_low, f_high)
    return np.log(np.abs(spec.bins[0]) ** 2 @ weights.T + floor)


def si_snr(estimate: Waveform | np.ndarray, reference: Waveform | np.ndarray,
           cap: float = SI_SNR_CAP) -> float:
    """Scale-invariant SNR in dB, capped at ``cap``.

    Both signals are made zero-mean; the estimate is projected onto the
    reference and the projection power is compared with the residual power.
    An all-zero estimate scores ``-inf``.
    """
    est = _mono(estimate)
    ref = _mono(reference)
    if est.shape != ref.shape:
        raise ValueError(f'length mismatch: {est.shape[0]} vs {ref.shape[0]}')
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ValueError('reference has no energy after mean removal')
    projection = (est @ ref) / ref_energy * ref
    residual = est - projection
    signal_power = projection @ projection
    noise_power = residual @ residual
    if signal_power == 0:
        return float('-inf')
    if noise_power == 0:
        return cap
    return float(min(cap, 10 * np.log10(signal_power / noise_power)))


def _mono(x) -> np.ndarray:
    if isinstance(x, Waveform):
        if x.channels != 1:
            raise ValueError(f'expected a single channel, got {x.channels}')
        return x.samples[0]
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2 and x.shape[0] == 1:
        x = x[0]
    if x.ndim != 1:
        raise ValueError(f'expected a single channel, got shape {x.shape}')
    return x
