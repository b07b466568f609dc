"""Mask-based spatial covariance estimation, MVDR and delay-and-sum beamforming."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram, Waveform, _readonly

DIAGONAL_LOADING = 1e-6


@dataclass(frozen=True)
class SpatialCovariance:
    """Per-frequency channel covariance, ``matrices`` shape ``(freqs, channels, channels)``."""

    matrices: np.ndarray
    mask_weight_sum: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=np.complex128)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError(f'expected (freqs, channels, channels), got shape {m.shape}')
        object.__setattr__(self, 'matrices', _readonly(m))
        object.__setattr__(self, 'mask_weight_sum',
                           _readonly(np.array(self.mask_weight_sum, dtype=np.float64)))

    @property
    def channels(self) -> int:
        return self.matrices.shape[-1]

    def check_psd(self, tol: float = 1e-9) -> None:
        """Raise if the matrices are not Hermitian positive semidefinite within ``tol``."""
        m = self.matrices
        scale = np.maximum(np.abs(np.trace(m, axis1=1, axis2=2)), 1.0)
        asym = np.max(np.abs(m - m.conj().transpose(0, 2, 1)), axis=(1, 2))
        if np.any(asym > tol * scale):
            raise ValueError(f'covariance not Hermitian (max deviation {asym.max():.3g})')
        eig = np.linalg.eigvalsh(m)
        if np.any(eig[:, 0] < -tol * scale):
            raise ValueError(f'covariance not positive semidefinite (min eigenvalue {eig.min():.3g})')


def estimate_scm(spec: ComplexSpectrogram, mask) -> SpatialCovariance:
    """Mask-weighted covariance ``sum_t m y y^H / sum_t m`` for every frequency.

    Args:
        spec: multichannel spectrogram ``(channels, frames, freqs)``.
        mask: weights ``(frames, freqs)``; a :class:`~tsekit.masks.Mask` or array.
    """
    weights = np.asarray(getattr(mask, 'values', mask), dtype=np.float64)
    if weights.shape != spec.bins.shape[1:]:
        raise ValueError(f'mask shape {weights.shape} does not match {spec.bins.shape[1:]}')
    if not np.any(weights):
        raise ValueError('mask is identically zero')
    y = spec.bins
    total = weights.sum(axis=0)
    scm = np.einsum('tf,ctf,dtf->fcd', weights, y, y.conj())
    scm /= np.maximum(total, np.finfo(float).tiny)[:, None, None]
    scm = 0.5 * (scm + scm.conj().transpose(0, 2, 1))
    return SpatialCovariance(scm, total)


def _load(matrices: np.ndarray, loading: float) -> np.ndarray:
    channels = matrices.shape[-1]
    trace = np.trace(matrices, axis1=-2, axis2=-1).real
    eye = np.eye(channels)
    return matrices + (loading * trace / channels)[..., None, None] * eye


def mvdr_weights(target_scm: SpatialCovariance, noise_scm: SpatialCovariance,
                 ref_channel: int = 0, loading: float = DIAGONAL_LOADING) -> np.ndarray:
    """Souden MVDR weights ``w = Phi_n^-1 Phi_s e_ref / tr(Phi_n^-1 Phi_s)``.

    The noise covariance is diagonally loaded by ``loading * trace / channels``
    before inversion. Returns an array of shape ``(freqs, channels)``; the
    beamformer output is ``w^H y``.
    """
    if target_scm.matrices.shape != noise_scm.matrices.shape:
        raise ValueError('target and noise covariances differ in shape')
    if not 0 <= ref_channel < target_scm.channels:
        raise ValueError(f'reference channel {ref_channel} out of range')
    target_scm.check_psd()
    noise_scm.check_psd()
    noise = _load(noise_scm.matrices, loading)
    numerator = np.linalg.solve(noise, target_scm.matrices)
    trace = np.trace(numerator, axis1=-2, axis2=-1)
    small = np.abs(trace) < 1e-12 * np.maximum(np.abs(np.trace(noise, axis1=-2, axis2=-1)), 1e-300)
    weights = numerator[..., ref_channel] / np.where(small, 1.0, trace)[:, None]
    # no target energy at this frequency: fall back to the reference channel
    weights[small] = np.eye(target_scm.channels)[ref_channel]
    return weights


def apply_beamformer(weights: np.ndarray, spec: ComplexSpectrogram) -> ComplexSpectrogram:
    """Single-channel output ``w(f)^H y(t, f)``."""
    out = np.einsum('fc,ctf->tf', weights.conj(), spec.bins)
    return ComplexSpectrogram(out, spec.config, spec.sample_rate)


def delay_and_sum(mixture: Waveform, delays) -> Waveform:
    """Average of channels after delaying channel ``c`` by ``delays[c]`` samples.

    Delayed-in samples are zero; negative delays advance the channel.
    """
    delays = np.asarray(delays, dtype=int)
    if delays.shape != (mixture.channels,):
        raise ValueError(f'need one delay per channel ({mixture.channels}), got {delays.shape}')
    n = mixture.length
    if np.any(np.abs(delays) >= n):
        raise ValueError(f'delays must be smaller than the signal length ({n})')
    out = np.zeros(n)
    for x, d in zip(mixture.samples, delays):
        if d >= 0:
            out[d:] += x[:n - d]
        else:
            out[:n + d] += x[-d:]
    return Waveform(out / mixture.channels, mixture.sample_rate)


def gcc_phat_delays(mixture: Waveform, ref_channel: int = 0, max_delay: int = 16) -> np.ndarray:
    """Per-channel delays that align every channel to the reference (GCC-PHAT)."""
    n = 1 << int(np.ceil(np.log2(2 * mixture.length)))
    spectra = np.fft.rfft(mixture.samples, n=n)
    cross = spectra[ref_channel] * spectra.conj()
    cross /= np.maximum(np.abs(cross), 1e-12)
    corr = np.fft.irfft(cross, n=n)
    lags = np.arange(-max_delay, max_delay + 1)
    window = corr[:, lags % n]
    lag = lags[np.argmax(window, axis=1)]
    # lag[c] > 0: the reference lags channel c, so channel c must be delayed
    return lag.astype(int)
