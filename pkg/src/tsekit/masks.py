"""Ideal ratio masks, magnitude masking and the mask MSE loss.

Masks are stored in ``.npy`` tensor files (a documented header with shape
and dtype followed by raw little-endian data), which also carry
per-speaker GSS posteriors and ASR posterior matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .dsp import ComplexSpectrogram, _readonly

IRM_FLOOR = 1e-10


@dataclass(frozen=True)
class Mask:
    """Real time-frequency gains in [0, 1], shape ``(frames, freqs)``."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f'mask must be (frames, freqs), got shape {values.shape}')
        if np.any(values < 0) or np.any(values > 1) or np.any(np.isnan(values)):
            raise ValueError('mask values must lie in [0, 1]')
        object.__setattr__(self, 'values', _readonly(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class MaskEstimator(Protocol):
    """Anything that maps a mixture spectrogram to a magnitude mask."""

    def __call__(self, mixture: ComplexSpectrogram, activities=None, features=None) -> Mask:
        ...


def _single(spec: ComplexSpectrogram, name: str) -> np.ndarray:
    if spec.channels != 1:
        raise ValueError(f'{name} must be single-channel, got {spec.channels} channels')
    return spec.bins[0]


def ideal_ratio_mask(clean: ComplexSpectrogram, noise: ComplexSpectrogram,
                     floor: float = IRM_FLOOR) -> Mask:
    """``sqrt(|S|^2 / (|S|^2 + |N|^2 + floor))``; bins where both are silent get 0."""
    s = _single(clean, 'clean')
    n = _single(noise, 'noise')
    if s.shape != n.shape:
        raise ValueError(f'shape mismatch: clean {s.shape}, noise {n.shape}')
    ps = np.abs(s) ** 2
    pn = np.abs(n) ** 2
    return Mask(np.sqrt(ps / (ps + pn + floor)))


def apply_mask(mixture: ComplexSpectrogram, mask: Mask) -> ComplexSpectrogram:
    """Scale magnitudes by the mask, keeping the mixture phase (every channel)."""
    if mixture.bins.shape[1:] != mask.shape:
        raise ValueError(f'mask shape {mask.shape} does not match spectrogram {mixture.bins.shape[1:]}')
    return ComplexSpectrogram(mixture.bins * mask.values, mixture.config, mixture.sample_rate)


def mse_mask_loss(estimate: Mask, target: Mask) -> float:
    if estimate.shape != target.shape:
        raise ValueError(f'shape mismatch: {estimate.shape} vs {target.shape}')
    return float(np.mean((estimate.values - target.values) ** 2))


def save_tensor(path: str | Path, array) -> Path:
    """Write a real or complex array as ``.npy`` (no pickled objects)."""
    array = np.asarray(getattr(array, 'values', array))
    if array.dtype.kind not in 'fc':
        raise ValueError(f'only float and complex tensors are supported, got {array.dtype}')
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(array, dtype=array.dtype.newbyteorder('<')),
            allow_pickle=False)
    return path


def load_tensor(path: str | Path) -> np.ndarray:
    array = np.load(Path(path), allow_pickle=False)
    if array.dtype.kind not in 'fc':
        raise ValueError(f'{path}: unsupported tensor dtype {array.dtype}')
    return array


def save_mask(path: str | Path, mask: Mask) -> Path:
    return save_tensor(path, mask.values)


def load_mask(path: str | Path) -> Mask:
    return Mask(load_tensor(path))
