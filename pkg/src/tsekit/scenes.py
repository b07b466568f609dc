"""Seeded synthetic meeting scenes built from mixsim primitives."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .mixsim import (ArrayGeometry, RoomSpec, SimulatedMixture, build_training_example,
                     speech_shaped_noise, synthetic_speech)

ARRAY_HEIGHT = 1.2
# pitch bands per speaker slot, low voices first
F0_BANDS = ((90.0, 140.0), (180.0, 260.0), (130.0, 190.0), (220.0, 300.0))


def ring_positions(rng: np.random.Generator, center: np.ndarray, count: int,
                   distance: float, min_gap: float) -> list[np.ndarray]:
    """Sources on a horizontal ring around the array, at least ``min_gap`` radians apart."""
    base = rng.uniform(0, 2 * np.pi)
    slack = 2 * np.pi - count * min_gap
    cuts = np.sort(rng.uniform(0, slack, count - 1)) if count > 1 else np.zeros(0)
    gaps = np.diff(np.concatenate(([0.0], cuts, [slack])))[:-1] + min_gap
    angles = base + np.concatenate(([0.0], np.cumsum(gaps)))
    return [center + [distance * np.cos(a), distance * np.sin(a), rng.uniform(0.1, 0.5)]
            for a in angles]


def two_speaker_scene(seed: int, snr_db: float | None = 20.0, room: RoomSpec = RoomSpec(),
                      distance: float = 1.5) -> SimulatedMixture:
    """10 s, speakers A and B with two utterances each, partly overlapping.

    Speaker positions are at least 60 degrees apart as seen from the array,
    and the session has speech-free stretches for the noise class.
    """
    rng = np.random.default_rng(seed)
    center = np.array([room.dimensions[0] / 2, room.dimensions[1] / 2, ARRAY_HEIGHT])
    a0 = rng.uniform(0, 2 * np.pi)
    a1 = a0 + rng.uniform(np.pi / 3, 5 * np.pi / 3)
    positions = [center + [distance * np.cos(a), distance * np.sin(a), rng.uniform(0.1, 0.5)]
                 for a in (a0, a1)]
    segments = [[synthetic_speech(2.5, rng, F0_BANDS[k]), synthetic_speech(2.0, rng, F0_BANDS[k])]
                for k in range(2)]
    noise = [speech_shaped_noise(12.0, rng)]
    return build_training_example(
        segments, noise, room, ArrayGeometry.circular(center), snr_db, seed, 10.0,
        speaker_ids=['A', 'B'], offsets=[[0.5, 5.5], [2.3, 7.0]], source_positions=positions)


def synthetic_session(seed: int, speakers: Sequence[str] = ('A', 'B'), segments_per_speaker: int = 2,
                      segment_seconds: tuple[float, float] = (1.5, 3.0), session_seconds: float = 10.0,
                      snr_db: float | None = 10.0, room: RoomSpec = RoomSpec(),
                      allow_overlap: bool = True, distance: float = 1.5) -> SimulatedMixture:
    """Random session with synthetic talkers on a ring around a centred array."""
    if len(speakers) > len(F0_BANDS):
        raise ValueError(f'at most {len(F0_BANDS)} synthetic speakers are supported')
    rng = np.random.default_rng(seed)
    center = np.array([room.dimensions[0] / 2, room.dimensions[1] / 2, ARRAY_HEIGHT])
    positions = ring_positions(rng, center, len(speakers), distance, np.pi / 6)
    segments = [[synthetic_speech(rng.uniform(*segment_seconds), rng, F0_BANDS[k])
                 for _ in range(segments_per_speaker)] for k in range(len(speakers))]
    noise = [speech_shaped_noise(session_seconds + 2.0, rng)]
    return build_training_example(
        segments, noise, room, ArrayGeometry.circular(center), snr_db, seed, session_seconds,
        speaker_ids=list(speakers), source_positions=positions, allow_overlap=allow_overlap)
