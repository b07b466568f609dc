"""Far-field training-data simulation.

Near-field segments are placed on a session timeline, convolved with
image-source room impulse responses for a 6-microphone array and mixed
with noise at a requested SNR. Every intermediate signal is kept so the
mixture can be reconstructed exactly from its parts.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .dsp import SAMPLE_RATE, StftConfig, Waveform
from .gss import ActivityPattern, Segment, activities_from_segments

ARRAY_SIZE = 6
REFERENCE_CHANNEL = 0


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room.

    ``absorption`` is a single energy absorption coefficient or six of them,
    ordered ``(x=0, x=L, y=0, y=W, z=0, z=H)``.
    """

    dimensions: tuple[float, float, float] = (6.0, 5.0, 3.0)
    absorption: float | tuple[float, ...] = 0.4
    speed_of_sound: float = 343.0
    max_reflection_order: int = 10

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0:
            raise ValueError(f'room dimensions must be three positive lengths, got {self.dimensions}')
        alpha = np.broadcast_to(np.asarray(self.absorption, dtype=float), (6,))
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise ValueError(f'absorption coefficients must lie in (0, 1], got {self.absorption}')
        if self.max_reflection_order < 0:
            raise ValueError('max_reflection_order must be non-negative')
        if self.speed_of_sound <= 0:
            raise ValueError('speed_of_sound must be positive')
        object.__setattr__(self, 'dimensions', dims)
        if not np.isscalar(self.absorption):
            object.__setattr__(self, 'absorption', tuple(float(a) for a in alpha))

    @property
    def wall_reflection(self) -> np.ndarray:
        """Pressure reflection coefficients ``sqrt(1 - alpha)`` per wall."""
        alpha = np.broadcast_to(np.asarray(self.absorption, dtype=float), (6,))
        return np.sqrt(1.0 - alpha)

    def contains(self, position) -> bool:
        p = np.asarray(position, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d['dimensions'] = list(self.dimensions)
        if not np.isscalar(self.absorption):
            d['absorption'] = list(self.absorption)
        return d


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.mic_positions, dtype=float)
        if pos.shape != (ARRAY_SIZE, 3):
            raise ValueError(f'expected {ARRAY_SIZE} microphones in 3-D, got shape {pos.shape}')
        object.__setattr__(self, 'mic_positions', pos)

    @classmethod
    def circular(cls, center, radius: float = 0.05) -> 'ArrayGeometry':
        angle = 2 * np.pi * np.arange(ARRAY_SIZE) / ARRAY_SIZE
        offsets = np.stack([radius * np.cos(angle), radius * np.sin(angle), np.zeros(ARRAY_SIZE)], 1)
        return cls(np.asarray(center, dtype=float) + offsets)


def _image_sources(room: RoomSpec, source: np.ndarray):
    """Enumerate image positions and their reflection gains up to the max order.

    Per axis an image sits at ``(1 - 2q) s + 2 n L`` with ``q`` in {0, 1};
    it has ``|n - q|`` reflections off the wall at 0 and ``|n|`` off the
    wall at ``L``.
    """
    order = room.max_reflection_order
    n = np.arange(-order, order + 1)
    beta = room.wall_reflection.reshape(3, 2)
    coords, counts, gains = [], [], []
    for axis in range(3):
        nn, qq = np.meshgrid(n, (0, 1), indexing='ij')
        nn, qq = nn.ravel(), qq.ravel()
        low, high = np.abs(nn - qq), np.abs(nn)
        coords.append((1 - 2 * qq) * source[axis] + 2 * nn * room.dimensions[axis])
        counts.append(low + high)
        gains.append(beta[axis, 0] ** low * beta[axis, 1] ** high)
    grid = np.ix_(range(len(coords[0])), range(len(coords[1])), range(len(coords[2])))
    total = counts[0][grid[0]] + counts[1][grid[1]] + counts[2][grid[2]]
    keep = total <= order
    positions = np.stack(np.broadcast_arrays(
        coords[0][grid[0]], coords[1][grid[1]], coords[2][grid[2]]), -1)[keep]
    gain = (gains[0][grid[0]] * gains[1][grid[1]] * gains[2][grid[2]])[keep]
    return positions, gain


def simulate_rir(room: RoomSpec, source, mics: ArrayGeometry,
                 sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Image-source impulse responses, shape ``(6, taps)``.

    Each image contributes ``gain / (4 pi d)`` at delay ``d / c * fs`` rounded
    to the nearest sample (halves round up).
    """
    source = np.asarray(source, dtype=float)
    if not room.contains(source):
        raise ValueError(f'source {source.tolist()} outside room {room.dimensions}')
    for m, mic in enumerate(mics.mic_positions):
        if not room.contains(mic):
            raise ValueError(f'microphone {m} at {mic.tolist()} outside room {room.dimensions}')
    positions, gain = _image_sources(room, source)
    dist = np.linalg.norm(positions[None] - mics.mic_positions[:, None], axis=-1)
    delay = np.floor(dist / room.speed_of_sound * sample_rate + 0.5).astype(int)
    rir = np.zeros((ARRAY_SIZE, delay.max() + 1))
    for m in range(ARRAY_SIZE):
        np.add.at(rir[m], delay[m], gain / (4 * np.pi * dist[m]))
    return rir


def _cyclic(samples: np.ndarray, length: int) -> np.ndarray:
    """Repeat along time (per channel) or truncate to ``length`` samples."""
    reps = -(-length // samples.shape[1])
    return np.tile(samples, (1, reps))[:, :length]


def _power(samples: np.ndarray, active: np.ndarray) -> float:
    return float(np.mean(samples[:, active] ** 2))


def mix_at_snr(target: Waveform, noise: Waveform, snr_db: float,
               active: np.ndarray | None = None) -> tuple[Waveform, float]:
    """Scale ``noise`` so that the target-to-noise power ratio equals ``snr_db``.

    Powers are averaged over all channels and over the ``active`` samples
    (default: samples where any target channel is nonzero). Noise shorter
    than the target is extended cyclically, longer noise is truncated.

    Returns:
        The mixture and the gain applied to the noise.
    """
    if target.channels != noise.channels:
        raise ValueError(f'channel mismatch: target {target.channels}, noise {noise.channels}')
    noise_samples = _cyclic(noise.samples, target.length)
    if active is None:
        active = np.any(target.samples != 0, axis=0)
    active = np.asarray(active, dtype=bool)
    if not active.any():
        raise ValueError('target has no active samples')
    target_power = _power(target.samples, active)
    noise_power = _power(noise_samples, active)
    if target_power == 0:
        raise ValueError('target is silent')
    if noise_power == 0:
        raise ValueError('noise is silent over the target-active samples')
    scale = math.sqrt(target_power / (noise_power * 10 ** (snr_db / 10)))
    return Waveform(target.samples + scale * noise_samples, target.sample_rate), scale


def measured_snr(target: Waveform, mixture: Waveform, active: np.ndarray | None = None) -> float:
    """SNR of ``mixture`` relative to its known ``target`` component."""
    if active is None:
        active = np.any(target.samples != 0, axis=0)
    residual = mixture.samples - target.samples
    return 10 * math.log10(_power(target.samples, active) / _power(residual, active))


def snr_proxy_score(segment: Waveform, frame: int = 512, hop: int = 256) -> float:
    """Energy of a segment relative to its quietest 10 % of frames, in dB.

    A cheap stand-in for a neural quality predictor: clean near-field speech
    has near-silent pauses and scores high; stationary background noise
    fills the pauses and pulls the score down.
    """
    x = segment.samples
    if x.shape[1] < frame:
        x = np.pad(x, ((0, 0), (0, frame - x.shape[1])))
    frames = np.lib.stride_tricks.sliding_window_view(x, frame, axis=-1)[:, ::hop]
    energy = np.mean(frames ** 2, axis=(0, 2))
    quiet = np.sort(energy)[:max(1, int(math.ceil(0.1 * energy.size)))]
    return float(10 * np.log10((energy.mean() + 1e-10) / (quiet.mean() + 1e-10)))


def quality_gate(segments: Sequence[Waveform], scorer: Callable[[Waveform], float],
                 threshold: float) -> list[Waveform]:
    """Keep segments whose score is at least ``threshold``, in order."""
    return [s for s in segments if scorer(s) >= threshold]


@dataclass(frozen=True)
class SimulatedMixture:
    mixture: Waveform
    clean_refs: list[Waveform]
    images: list[Waveform]
    noise: Waveform
    activities: ActivityPattern
    segments: list[Segment]
    metadata: dict = field(default_factory=dict)

    @property
    def speaker_ids(self) -> list[str]:
        return list(self.activities.speaker_ids)


def _random_position(rng: np.random.Generator, room: RoomSpec, margin: float = 0.5) -> np.ndarray:
    dims = np.asarray(room.dimensions)
    margin = np.minimum(margin, dims / 4)
    low = np.array([margin[0], margin[1], min(1.0, dims[2] / 3)])
    high = np.array([dims[0] - margin[0], dims[1] - margin[1], min(1.8, 2 * dims[2] / 3)])
    return low + rng.random(3) * (high - low)


def _sequential(lengths: list[int], session: int, gap: int, rng: np.random.Generator) -> list[int]:
    """Random disjoint starts for segments laid out in the given order, ``gap`` apart."""
    busy = sum(n + gap for n in lengths)
    if busy > session + gap:
        raise ValueError(f'segments need {busy - gap} samples, session has {session}')
    cuts = np.sort(rng.integers(0, session + gap - busy + 1, size=len(lengths)))
    starts, cursor = [], 0
    for n, extra in zip(lengths, np.diff(np.concatenate([[0], cuts]))):
        cursor += int(extra)
        starts.append(cursor)
        cursor += n + gap
    return starts


def _place_segments(lengths: list[list[int]], session: int, hop: int,
                    rng: np.random.Generator, allow_overlap: bool) -> list[list[int]]:
    """Start samples per speaker; a speaker never overlaps itself.

    Without overlap every segment of every speaker is disjoint, with one hop
    of silence between neighbours so frame-level activity stays disjoint.
    """
    if allow_overlap:
        starts = []
        for spk in lengths:
            order = rng.permutation(len(spk))
            placed = _sequential([spk[i] for i in order], session, 0, rng)
            row = [0] * len(spk)
            for i, start in zip(order, placed):
                row[i] = start
            starts.append(row)
        return starts
    order = [(s, i) for s, spk in enumerate(lengths) for i in range(len(spk))]
    order = [order[j] for j in rng.permutation(len(order))]
    placed = _sequential([lengths[s][i] for s, i in order], session, hop, rng)
    starts = [[0] * len(spk) for spk in lengths]
    for (s, i), start in zip(order, placed):
        starts[s][i] = start
    return starts


def build_training_example(
        speaker_segments: Sequence[Sequence[Waveform]],
        noise_pool: Sequence[Waveform],
        room: RoomSpec,
        array: ArrayGeometry,
        snr_db: float | None,
        seed: int,
        session_seconds: float,
        speaker_ids: Sequence[str] | None = None,
        source_positions: Sequence | None = None,
        allow_overlap: bool = True,
        offsets: Sequence[Sequence[float]] | None = None,
        stft_config: StftConfig = StftConfig(),
) -> SimulatedMixture:
    """Simulate one far-field session.

    Segments of each speaker are placed at seeded random offsets, convolved
    with that speaker's impulse responses, and summed. One noise recording
    is drawn from the pool: 6-channel noise is used as recorded, mono noise
    is rendered as a point source. ``snr_db=None`` adds no noise. The clean
    reference of each speaker is its reverberant image at channel 0.

    ``offsets`` (seconds, one list per speaker) pins the segment start times
    instead of drawing them.
    """
    if not speaker_segments:
        raise ValueError('at least one speaker is required')
    if snr_db is not None and not noise_pool:
        raise ValueError('noise pool is empty')
    rng = np.random.default_rng(seed)
    sr = SAMPLE_RATE
    session = int(round(session_seconds * sr))
    if speaker_ids is None:
        speaker_ids = [f'spk{k}' for k in range(len(speaker_segments))]
    speaker_ids = list(speaker_ids)
    lengths = [[seg.length for seg in spk] for spk in speaker_segments]
    for sid, spk in zip(speaker_ids, lengths):
        for n in spk:
            if n > session:
                raise ValueError(f'segment of {sid} ({n} samples) longer than session ({session})')
        for seg in speaker_segments[speaker_ids.index(sid)]:
            if seg.channels != 1 or seg.sample_rate != sr:
                raise ValueError(f'segments of {sid} must be mono at {sr} Hz')

    if source_positions is None:
        source_positions = [_random_position(rng, room) for _ in speaker_segments]
    if offsets is None:
        starts = _place_segments(lengths, session, stft_config.hop, rng, allow_overlap)
    else:
        starts = [[int(round(o * sr)) for o in spk] for spk in offsets]
        for sid, spk_starts, spk_lengths in zip(speaker_ids, starts, lengths):
            if len(spk_starts) != len(spk_lengths):
                raise ValueError(f'{sid}: {len(spk_starts)} offsets for {len(spk_lengths)} segments')
            for start, n in zip(spk_starts, spk_lengths):
                if start < 0 or start + n > session:
                    raise ValueError(f'{sid}: segment at {start / sr}s does not fit the session')

    images, placements = [], []
    for k, (sid, spk) in enumerate(zip(speaker_ids, speaker_segments)):
        rir = simulate_rir(room, source_positions[k], array, sr)
        dry = np.zeros(session)
        for seg, start in zip(spk, starts[k]):
            dry[start:start + seg.length] += seg.samples[0]
            placements.append(Segment(sid, start / sr, (start + seg.length) / sr))
        wet = fftconvolve(dry[None], rir, axes=-1)[:, :session]
        images.append(Waveform(wet, sr))

    speech = np.sum([im.samples for im in images], axis=0)
    active = np.zeros(session, dtype=bool)
    for seg in placements:
        active[int(round(seg.start * sr)):int(round(seg.end * sr))] = True

    noise_meta = None
    if snr_db is None:
        mixture, scale = Waveform(speech, sr), 0.0
        noise = np.zeros_like(speech)
    else:
        index = int(rng.integers(len(noise_pool)))
        raw = noise_pool[index]
        offset = int(rng.integers(raw.length))
        raw = np.roll(raw.samples, -offset, axis=-1)
        raw = _cyclic(raw, session)
        noise_meta = {'index': index, 'offset': offset}
        if raw.shape[0] == 1:
            position = _random_position(rng, room)
            noise_meta['position'] = position.tolist()
            raw = fftconvolve(raw, simulate_rir(room, position, array, sr), axes=-1)[:, :session]
        elif raw.shape[0] != ARRAY_SIZE:
            raise ValueError(f'noise must be mono or {ARRAY_SIZE}-channel, got {raw.shape[0]}')
        mixture, scale = mix_at_snr(Waveform(speech, sr), Waveform(raw, sr), snr_db, active)
        noise = scale * raw

    frames = stft_config.frame_count(session)
    activities = activities_from_segments(
        placements, frames, stft_config.hop, sr, context_pad=0, speakers=speaker_ids)
    metadata = {
        'seed': seed,
        'snr_db': snr_db,
        'noise_scale': scale,
        'noise': noise_meta,
        'session_samples': session,
        'sample_rate': sr,
        'reference_channel': REFERENCE_CHANNEL,
        'room': room.to_dict(),
        'mic_positions': array.mic_positions.tolist(),
        'source_positions': {sid: np.asarray(p).tolist() for sid, p in zip(speaker_ids, source_positions)},
        'placements': [seg._asdict() for seg in placements],
    }
    return SimulatedMixture(
        mixture=mixture,
        clean_refs=[im.channel(REFERENCE_CHANNEL) for im in images],
        images=images,
        noise=Waveform(noise, sr),
        activities=activities,
        segments=placements,
        metadata=metadata,
    )


def synthetic_speech(seconds: float, rng: np.random.Generator,
                     f0_range: tuple[float, float] = (90.0, 250.0),
                     sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Speech-like test signal: voiced syllables with gliding pitch and formants.

    Not speech, but it has the properties the front-end cares about: harmonic
    structure, a speech-like spectral tilt, syllabic modulation and pauses.
    """
    total = int(round(seconds * sample_rate))
    out = np.zeros(total)
    pos = int(rng.integers(0, sample_rate // 20))
    f0_base = rng.uniform(*f0_range)
    while pos < total:
        dur = int(rng.uniform(0.12, 0.35) * sample_rate)
        t = np.arange(min(dur, total - pos)) / sample_rate
        f0 = f0_base * (1 + rng.uniform(-0.15, 0.15) + rng.uniform(-0.2, 0.2) * t / max(t[-1], 1e-3)) \
            if t.size else f0_base
        phase = 2 * np.pi * np.cumsum(np.broadcast_to(f0, t.shape)) / sample_rate
        formants = (rng.uniform(300, 900), rng.uniform(900, 2500), rng.uniform(2400, 3500))
        syllable = np.zeros(t.size)
        top = int((sample_rate / 2 - 200) // (f0_base * 1.4))
        for h in range(1, top + 1):
            freq = h * f0_base
            envelope = sum(np.exp(-0.5 * ((freq - f) / 150.0) ** 2) for f in formants)
            syllable += (envelope + 0.02) / np.sqrt(h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        syllable *= np.hanning(t.size)
        if rng.random() < 0.5:
            # fricative onset: high-passed noise burst
            burst = min(int(rng.uniform(0.03, 0.08) * sample_rate), t.size)
            hiss = np.diff(rng.standard_normal(burst + 1)) * np.hanning(burst)
            syllable[:burst] += hiss * rng.uniform(0.1, 0.3) * np.max(np.abs(syllable))
        out[pos:pos + t.size] = syllable * rng.uniform(0.5, 1.0)
        pos += t.size + int(rng.uniform(0.02, 0.25) * sample_rate)
    peak = np.max(np.abs(out))
    return Waveform(0.5 * out / peak if peak > 0 else out, sample_rate)


def speech_shaped_noise(seconds: float, rng: np.random.Generator, channels: int = 1,
                        sample_rate: int = SAMPLE_RATE) -> Waveform:
    """White noise with a first-order low-pass tilt, scaled to unit-ish power."""
    white = rng.standard_normal((channels, int(round(seconds * sample_rate))))
    tilted = lfilter([1.0], [1.0, -0.9], white, axis=-1)
    return Waveform(0.1 * tilted / np.std(tilted), sample_rate)
