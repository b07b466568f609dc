"""Slow, obviously-correct reference implementations used only by the tests."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def edit_distance(a, b) -> int:
    """Textbook recursive Levenshtein distance."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def dist(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(dist(i - 1, j) + 1, dist(i, j - 1) + 1,
                   dist(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return dist(len(a), len(b))


def ctc_path_sum(probs: np.ndarray, target, blank: int = 0) -> float:
    """log of the summed probability of every frame-level path that collapses to ``target``."""
    frames, vocab = probs.shape
    total = 0.0
    for path in itertools.product(range(vocab), repeat=frames):
        collapsed = [k for k, _ in itertools.groupby(path) if k != blank]
        if collapsed == list(target):
            total += float(np.prod(probs[np.arange(frames), path]))
    return np.log(total) if total > 0 else float('-inf')


def dft(frame: np.ndarray) -> np.ndarray:
    n = len(frame)
    k = np.arange(n)
    return np.array([np.sum(frame * np.exp(-2j * np.pi * kk * k / n)) for kk in range(n // 2 + 1)])


def mirror_images(dims, source, beta, order):
    """Image sources found by mirroring across walls, one reflection at a time.

    ``beta`` holds the six pressure reflection coefficients ordered
    (x=0, x=L, y=0, y=W, z=0, z=H). Returns {rounded position: gain}.
    """
    images = {tuple(np.round(source, 9)): (np.asarray(source, float), 1.0, None)}
    frontier = [(np.asarray(source, float), 1.0, None)]
    for _ in range(order):
        nxt = []
        for pos, gain, last in frontier:
            for wall in range(6):
                if wall == last:
                    continue
                axis, side = divmod(wall, 2)
                p = pos.copy()
                p[axis] = -p[axis] if side == 0 else 2 * dims[axis] - p[axis]
                key = tuple(np.round(p, 9))
                if key not in images:
                    images[key] = (p, gain * beta[wall], wall)
                    nxt.append(images[key])
        frontier = nxt
    return {k: (v[0], v[1]) for k, v in images.items()}


def mirror_rir(dims, source, mic, beta, order, c=343.0, fs=16000):
    taps = {}
    for pos, gain in mirror_images(dims, source, beta, order).values():
        d = np.linalg.norm(pos - mic)
        k = int(np.floor(d / c * fs + 0.5))
        taps[k] = taps.get(k, 0.0) + gain / (4 * np.pi * d)
    out = np.zeros(max(taps) + 1)
    for k, v in taps.items():
        out[k] = v
    return out


def mvdr_direct(phi_s: np.ndarray, phi_n: np.ndarray, ref: int, loading: float = 1e-6) -> np.ndarray:
    """Per-frequency loop over the closed-form MVDR, with explicit inverse."""
    out = []
    for s, n in zip(phi_s, phi_n):
        d = n.shape[0]
        n = n + loading * np.trace(n).real / d * np.eye(d)
        m = np.linalg.inv(n) @ s
        out.append(m[:, ref] / np.trace(m))
    return np.array(out)
