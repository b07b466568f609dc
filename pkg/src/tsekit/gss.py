"""Diarization-guided source separation.

A complex angular central Gaussian mixture model (cACGMM) is fit per
frequency to unit-normalised multichannel STFT vectors. Each speaker has
one class and a dedicated noise class is always present; the diarization
activity restricts which classes may explain a frame. The resulting
posteriors act as masks for mask-based MVDR beamforming.

Model, for frequency ``f`` and frame ``t`` with allowed class set ``A_t``::

    p(z) = sum_{k in A_t} pi_fk / (sum_{j in A_t} pi_fj) * ACG(z; B_fk)
    ACG(z; B) = (D-1)! / (2 pi^D det B) * (z^H B^-1 z)^-D

Both M-step updates are minorise-maximise steps (Tyler's fixed point for
``B``, a tangent bound on the per-frame normaliser for ``pi``), so each
iteration is a generalised EM step and the log-likelihood cannot decrease.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .beamform import DIAGONAL_LOADING, apply_beamformer, estimate_scm, mvdr_weights
from .dsp import SAMPLE_RATE, ComplexSpectrogram, StftConfig, Waveform, _readonly, istft, stft
from .masks import Mask

NOISE_CLASS = 'noise'


class Segment(NamedTuple):
    """One diarized speech interval, in seconds."""

    speaker: str
    start: float
    end: float


class DegenerateTargetError(ValueError):
    """The target speaker has no active frames to extract."""


@dataclass(frozen=True)
class ActivityPattern:
    """Allowed classes per frame; ``active`` is ``(speakers + 1, frames)``, noise last."""

    active: np.ndarray
    speaker_ids: tuple[str, ...]
    context_pad: int = 0

    def __post_init__(self):
        active = np.array(self.active, dtype=bool)
        ids = tuple(self.speaker_ids)
        if active.ndim != 2 or active.shape[0] != len(ids) + 1:
            raise ValueError(f'expected ({len(ids) + 1}, frames) activity, got {active.shape}')
        if not active[-1].all():
            raise ValueError('the noise class must be active in every frame')
        object.__setattr__(self, 'active', _readonly(active))
        object.__setattr__(self, 'speaker_ids', ids)

    @property
    def frame_count(self) -> int:
        return self.active.shape[1]

    @property
    def class_labels(self) -> list[str]:
        return [*self.speaker_ids, NOISE_CLASS]

    def speaker(self, speaker_id: str) -> np.ndarray:
        return self.active[self.speaker_ids.index(speaker_id)]


def activities_from_segments(segments: Sequence[Segment], frame_count: int, hop: int = 256,
                             sample_rate: int = SAMPLE_RATE, context_pad: int = 0,
                             speakers: Sequence[str] | None = None) -> ActivityPattern:
    """Frame-level activity from diarization segments.

    Frame ``f`` is centred on sample ``f * hop``. It belongs to a segment
    when ``start <= f * hop <= end`` (times rounded to the nearest sample),
    i.e. frames ``ceil(start / hop) .. floor(end / hop)``; the span is then
    widened by ``context_pad`` frames on each side.
    """
    segments = [Segment(*s) for s in segments]
    if speakers is None:
        speakers = sorted({s.speaker for s in segments})
    speakers = list(speakers)
    active = np.zeros((len(speakers) + 1, frame_count), dtype=bool)
    active[-1] = True
    last_center = (frame_count - 1) * hop
    for i, seg in enumerate(segments):
        if seg.speaker not in speakers:
            raise ValueError(f'segment {i}: unknown speaker {seg.speaker!r}')
        start = int(round(seg.start * sample_rate))
        end = int(round(seg.end * sample_rate))
        if not 0 <= start <= end <= last_center:
            raise ValueError(
                f'segment {i} ({seg.start}s-{seg.end}s) outside session of '
                f'{last_center / sample_rate}s'
            )
        first, last = -(-start // hop), end // hop
        if first > last:
            continue
        k = speakers.index(seg.speaker)
        active[k, max(0, first - context_pad):min(frame_count, last + context_pad + 1)] = True
    return ActivityPattern(active, tuple(speakers), context_pad)


@dataclass
class CacgmmState:
    """Fitted parameters; arrays are indexed ``[freq, class, ...]``."""

    class_weights: np.ndarray
    shape_matrices: np.ndarray
    log_likelihood_trace: list[float] = field(default_factory=list)


def _normalize_shape(b: np.ndarray, loading: float) -> np.ndarray:
    """Hermitise, trace-normalise to ``D`` and diagonally load."""
    d = b.shape[-1]
    b = 0.5 * (b + b.conj().swapaxes(-1, -2))
    trace = np.trace(b, axis1=-2, axis2=-1).real
    b = b * (d / np.maximum(trace, np.finfo(float).tiny))[..., None, None]
    return (b + loading * np.eye(d)) / (1 + loading)


def _acg_terms(z: np.ndarray, b: np.ndarray):
    """Quadratic forms ``z^H B^-1 z`` ``(F, K, T)`` and log-determinants ``(F, K)``.

    With ``B = C C^H`` the form is ``||C^-1 z||^2``.
    """
    chol = np.linalg.cholesky(b)
    freqs, classes, d, _ = b.shape
    inv_chol = np.linalg.inv(chol)
    # one (T, D) x (D, K*D) product per frequency is much faster than K*F tiny ones
    stacked = inv_chol.transpose(0, 3, 1, 2).reshape(freqs, d, classes * d)
    projected = np.matmul(z, stacked)
    power = projected.real ** 2 + projected.imag ** 2
    quad = power.reshape(freqs, -1, classes, d).sum(axis=-1).transpose(0, 2, 1)
    quad = np.maximum(quad, np.finfo(float).tiny)
    logdet = 2 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1).real), axis=-1)
    return quad, logdet


def _weighted_scatter(weights: np.ndarray, z: np.ndarray) -> np.ndarray:
    """``sum_t w[f,k,t] z z^H`` with shape ``(F, K, D, D)``."""
    freqs, classes, frames = weights.shape
    d = z.shape[-1]
    weighted = (weights[..., None] * z[:, None]).transpose(0, 1, 3, 2)
    out = np.matmul(weighted.reshape(freqs, classes * d, frames), z.conj())
    return out.reshape(freqs, classes, d, d)


def cacgmm_em(observations: ComplexSpectrogram, activities: ActivityPattern,
              iterations: int = 20, loading: float = DIAGONAL_LOADING,
              ) -> tuple[list[Mask], CacgmmState]:
    """Fit the guided cACGMM and return one posterior mask per class.

    Masks follow ``activities.class_labels`` (speakers first, noise last).
    Shape matrices start from the covariance of the normalised observations
    weighted by uniform posteriors over the allowed classes (the noise class
    additionally blended with identity), and class weights start uniform.
    Posteriors of classes that are not allowed in a frame are exactly zero.
    """
    if observations.channels < 2:
        raise ValueError('cACGMM needs at least two channels')
    if iterations < 1:
        raise ValueError('iterations must be at least 1')
    allowed = activities.active
    num_classes, frames = allowed.shape
    if frames != observations.frame_count:
        raise ValueError(
            f'activity covers {frames} frames, spectrogram has {observations.frame_count}'
        )

    y = observations.bins.transpose(2, 1, 0)  # (F, T, D)
    freqs, _, d = y.shape
    norm = np.linalg.norm(y, axis=-1)
    valid = norm ** 2 > 1e-20 * max(float(np.max(norm)) ** 2, np.finfo(float).tiny)
    z = np.where(valid[..., None], y / np.where(valid, norm, 1.0)[..., None], 1 / math.sqrt(d))
    log_const = math.lgamma(d) - d * math.log(math.pi) - math.log(2)

    uniform = allowed / allowed.sum(axis=0, keepdims=True)
    shape = _normalize_shape(_weighted_scatter(uniform[None] * valid[:, None], z), loading)
    # the noise class also gets a white component, so a noise class that is
    # co-active with a speaker everywhere still starts distinguishable from it
    shape[:, -1] = _normalize_shape(shape[:, -1] + np.eye(d), loading)
    weights = np.full((freqs, num_classes), 1.0 / num_classes)

    state = CacgmmState(weights, shape)
    with np.errstate(divide='ignore'):
        log_allowed = np.log(allowed.astype(float))

    def e_step(weights, quad, logdet):
        log_pdf = log_const - logdet[..., None] - d * np.log(quad)
        prior = weights[..., None] * allowed[None]
        with np.errstate(divide='ignore'):
            log_prior = np.log(prior) - np.log(prior.sum(axis=1, keepdims=True))
        joint = log_prior + log_pdf + log_allowed[None]
        top = joint.max(axis=1, keepdims=True)
        ll = top[:, 0] + np.log(np.exp(joint - top).sum(axis=1))
        gamma = np.exp(joint - ll[:, None])
        # bins without energy carry no direction: posterior falls back to the prior
        gamma = np.where(valid[:, None], gamma, np.exp(log_prior + log_allowed[None]))
        return gamma, float(ll[valid].mean())

    def class_objective(gamma, quad, logdet):
        return np.sum(gamma * valid[:, None] * (-logdet[..., None] - d * np.log(quad)), axis=-1)

    quad, logdet = _acg_terms(z, shape)
    for _ in range(iterations):
        gamma, ll = e_step(weights, quad, logdet)
        state.log_likelihood_trace.append(ll)
        g = gamma * valid[:, None]
        mass = g.sum(axis=-1)

        # pi: maximise sum_k c_k log pi_k - sum_t pi(A_t) / pi_old(A_t), then renormalise
        old_norm = np.einsum('fk,kt->ft', weights, allowed.astype(float))
        exposure = np.einsum('kt,ft->fk', allowed.astype(float), valid / old_norm)
        new_weights = np.where(exposure > 0, mass / np.where(exposure > 0, exposure, 1.0), 0.0)
        weights = new_weights / new_weights.sum(axis=1, keepdims=True)

        # B: Tyler fixed point, kept only if it does not lower the class objective
        scatter = _weighted_scatter(g / quad, z)
        candidate = _normalize_shape(
            d * scatter / np.maximum(mass, np.finfo(float).tiny)[..., None, None], loading)
        cand_quad, cand_logdet = _acg_terms(z, candidate)
        better = class_objective(gamma, cand_quad, cand_logdet) >= class_objective(gamma, quad, logdet)
        better &= mass > 0
        shape = np.where(better[..., None, None], candidate, shape)
        quad = np.where(better[..., None], cand_quad, quad)
        logdet = np.where(better, cand_logdet, logdet)

    gamma, ll = e_step(weights, quad, logdet)
    state.log_likelihood_trace.append(ll)
    state.class_weights = weights
    state.shape_matrices = shape
    masks = [Mask(np.clip(gamma[:, k].T, 0.0, 1.0)) for k in range(num_classes)]
    return masks, state


@dataclass(frozen=True)
class GssConfig:
    stft: StftConfig = StftConfig(1024, 256)
    iterations: int = 20
    context_pad: int = 15
    loading: float = DIAGONAL_LOADING
    ref_channel: int = 0
    mask_floor: float | None = None

    def to_dict(self) -> dict:
        return {'stft': self.stft.to_dict(), 'iterations': self.iterations,
                'context_pad': self.context_pad, 'loading': self.loading,
                'ref_channel': self.ref_channel, 'mask_floor': self.mask_floor}

    @classmethod
    def from_dict(cls, d: dict) -> 'GssConfig':
        d = dict(d)
        if 'stft' in d:
            d['stft'] = StftConfig(**d['stft'])
        return cls(**d)


@dataclass
class Separation:
    """cACGMM output for one session, reusable across target speakers."""

    spec: ComplexSpectrogram
    masks: list[Mask]
    state: CacgmmState
    speakers: list[str]
    length: int


def separate(mixture: Waveform, segments: Sequence[Segment], cfg: GssConfig = GssConfig(),
             speakers: Sequence[str] | None = None) -> Separation:
    """Run STFT, padded activity estimation and the guided cACGMM once per session."""
    if not cfg.stft.center:
        raise ValueError('GSS assumes centred STFT frames')
    segments = [Segment(*s) for s in segments]
    if speakers is None:
        speakers = sorted({s.speaker for s in segments})
    speakers = list(speakers)
    spec = stft(mixture, cfg.stft)
    activities = activities_from_segments(
        segments, spec.frame_count, cfg.stft.hop, mixture.sample_rate, cfg.context_pad, speakers)
    masks, state = cacgmm_em(spec, activities, cfg.iterations, cfg.loading)
    return Separation(spec, masks, state, speakers, mixture.length)


def extract_target(separation: Separation, target_speaker: str, segments: Sequence[Segment],
                   cfg: GssConfig = GssConfig()) -> Waveform:
    """MVDR towards one speaker using its posterior and the complement as noise mask."""
    if target_speaker not in separation.speakers:
        raise ValueError(f'unknown target speaker {target_speaker!r}')
    spec = separation.spec
    exact = activities_from_segments(
        segments, spec.frame_count, cfg.stft.hop, spec.sample_rate, 0, separation.speakers)
    if not exact.speaker(target_speaker).any():
        raise DegenerateTargetError(f'target speaker {target_speaker!r} has no active frames')
    target_mask = separation.masks[separation.speakers.index(target_speaker)]
    noise_mask = Mask(1.0 - target_mask.values)
    weights = mvdr_weights(estimate_scm(spec, target_mask), estimate_scm(spec, noise_mask),
                           cfg.ref_channel, cfg.loading)
    enhanced = apply_beamformer(weights, spec)
    if cfg.mask_floor is not None:
        gain = np.maximum(target_mask.values, cfg.mask_floor)
        enhanced = ComplexSpectrogram(enhanced.bins * gain, enhanced.config, enhanced.sample_rate)
    return istft(enhanced, length=separation.length)


def gss_enhance(mixture: Waveform, segments: Sequence[Segment], target_speaker: str,
                cfg: GssConfig = GssConfig(), speakers: Sequence[str] | None = None,
                return_masks: bool = False):
    """Extract one speaker from a multichannel session.

    STFT, padded diarization activity, cACGMM posteriors, MVDR with the
    target posterior as speech mask and its complement as noise mask, an
    optional floor-limited post-mask, and inverse STFT back to the input
    length.
    """
    segments = [Segment(*s) for s in segments]
    if speakers is None:
        speakers = sorted({s.speaker for s in segments} | {target_speaker})
    if target_speaker not in speakers:
        raise ValueError(f'unknown target speaker {target_speaker!r}')
    if not any(s.speaker == target_speaker for s in segments):
        raise DegenerateTargetError(f'target speaker {target_speaker!r} has no segments')
    separation = separate(mixture, segments, cfg, speakers)
    out = extract_target(separation, target_speaker, segments, cfg)
    if return_masks:
        return out, separation.masks, separation.state
    return out
