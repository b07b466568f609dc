"""Character error scoring, CTC and attention log-likelihoods, and the MTL objective.

Corpus CER pools S/D/I counts over utterances before dividing, so the
per-type rates in a report add up to the CER.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

CTC_BLANK = 0
MTL_WEIGHT = 0.3


@dataclass(frozen=True)
class ErrorCounts:
    S: int = 0
    D: int = 0
    I: int = 0
    N: int = 0

    def __post_init__(self):
        for name in ('S', 'D', 'I', 'N'):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f'{name} must be a nonnegative integer, got {value!r}')
            object.__setattr__(self, name, int(value))
        if self.S + self.D > self.N:
            raise ValueError(f'S + D ({self.S + self.D}) exceeds N ({self.N})')

    def __add__(self, other: 'ErrorCounts') -> 'ErrorCounts':
        return ErrorCounts(self.S + other.S, self.D + other.D, self.I + other.I, self.N + other.N)

    @property
    def errors(self) -> int:
        return self.S + self.D + self.I

    def rates(self) -> dict:
        """S, D, I and CER as percentages of N."""
        if self.N == 0:
            raise ValueError('rates are undefined for an empty reference (N = 0)')
        return {k: 100.0 * v / self.N for k, v in
                (('S', self.S), ('D', self.D), ('I', self.I), ('CER', self.errors))}

    def to_dict(self) -> dict:
        return {'S': self.S, 'D': self.D, 'I': self.I, 'N': self.N}


def merge_counts(counts) -> ErrorCounts:
    total = ErrorCounts()
    for c in counts:
        total = total + c
    return total


def normalize_text(text: str, mapping: Mapping[str, str] | None = None) -> str:
    """Drop all whitespace, then map characters through ``mapping`` (identity by default)."""
    chars = (c for c in text if not c.isspace())
    if mapping:
        return ''.join(mapping.get(c, c) for c in chars)
    return ''.join(chars)


def align_and_count(reference: Sequence, hypothesis: Sequence) -> ErrorCounts:
    """Unit-cost edit alignment counts.

    Among optimal paths the backtrace prefers substitution (or match), then
    deletion, then insertion, so the split into S/D/I is reproducible.
    """
    n, m = len(reference), len(hypothesis)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        r = reference[i - 1]
        row, prev = cost[i], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hypothesis[j - 1]), prev[j] + 1, row[j - 1] + 1)
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diff = reference[i - 1] != hypothesis[j - 1]
            if cost[i, j] == cost[i - 1, j - 1] + diff:
                s += diff
                i, j = i - 1, j - 1
                continue
        if i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ErrorCounts(s, d, ins, n)


def cer(counts: ErrorCounts) -> float:
    """``(S + D + I) / N * 100``."""
    if counts.N == 0:
        raise ValueError('CER is undefined when the reference is empty (N = 0)')
    return 100.0 * counts.errors / counts.N


@dataclass(frozen=True)
class PosteriorMatrix:
    """Per-frame log-probabilities ``(frames, vocab)``; ``blank`` indexes the CTC blank."""

    log_probs: np.ndarray
    blank: int = CTC_BLANK

    def __post_init__(self):
        lp = np.array(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[1] < 1:
            raise ValueError(f'log_probs must be (frames, vocab), got shape {lp.shape}')
        if lp.shape[0] and np.any(np.abs(logsumexp(lp, axis=1)) > 1e-6):
            raise ValueError('every frame must normalise (logsumexp = 0 within 1e-6)')
        if not 0 <= self.blank < lp.shape[1]:
            raise ValueError(f'blank index {self.blank} outside vocab of size {lp.shape[1]}')
        lp.setflags(write=False)
        object.__setattr__(self, 'log_probs', lp)

    @classmethod
    def from_probs(cls, probs, blank: int = CTC_BLANK) -> 'PosteriorMatrix':
        with np.errstate(divide='ignore'):
            return cls(np.log(np.asarray(probs, dtype=np.float64)), blank)

    @property
    def frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def vocab(self) -> int:
        return self.log_probs.shape[1]


def _check_labels(target, vocab: int, blank: int | None) -> list[int]:
    labels = [int(y) for y in target]
    for y in labels:
        if not 0 <= y < vocab or y == blank:
            raise ValueError(f'label {y} is not a valid non-blank symbol (vocab {vocab}, blank {blank})')
    return labels


def ctc_log_prob(posteriors: PosteriorMatrix, target: Sequence[int]) -> float:
    """log P(target | X) by the CTC forward recursion in log space.

    Returns ``-inf`` when the frames cannot fit the target (fewer frames than
    labels plus repeated neighbours).
    """
    labels = _check_labels(target, posteriors.vocab, posteriors.blank)
    lp = posteriors.log_probs
    frames = lp.shape[0]
    repeats = sum(a == b for a, b in zip(labels, labels[1:]))
    if frames < len(labels) + repeats or frames == 0:
        return float('-inf')
    ext = np.full(2 * len(labels) + 1, posteriors.blank)
    ext[1::2] = labels
    # s can skip from s-2 when ext[s] is a label different from ext[s-2]
    skip = np.zeros(len(ext), dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]
    alpha = np.full(len(ext), -np.inf)
    alpha[0] = lp[0, ext[0]]
    if len(ext) > 1:
        alpha[1] = lp[0, ext[1]]
    for t in range(1, frames):
        prev = alpha
        stay = prev
        step = np.concatenate(([-np.inf], prev[:-1]))
        jump = np.full(len(ext), -np.inf)
        jump[2:] = np.where(skip[2:], prev[:-2], -np.inf)
        alpha = np.logaddexp(np.logaddexp(stay, step), jump) + lp[t, ext]
    tail = alpha[-2:] if len(ext) > 1 else alpha[-1:]
    return float(min(logsumexp(tail), 0.0))


def attention_ce_log_prob(posteriors: PosteriorMatrix, target: Sequence[int]) -> float:
    """``sum_u log p_u(y_u)`` over output steps; steps must equal the target length."""
    labels = _check_labels(target, posteriors.vocab, None)
    if posteriors.frames != len(labels):
        raise ValueError(f'{posteriors.frames} output steps for a target of length {len(labels)}')
    return float(np.sum(posteriors.log_probs[np.arange(len(labels)), labels]))


def mtl_loss(logp_ctc: float, logp_att: float, lam: float = MTL_WEIGHT) -> float:
    """``lam * logp_ctc + (1 - lam) * logp_att``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f'lambda must lie in [0, 1], got {lam}')
    if lam == 1.0:
        return float(logp_ctc)
    if lam == 0.0:
        return float(logp_att)
    return lam * logp_ctc + (1.0 - lam) * logp_att


def read_transcripts(path: str | Path) -> dict[str, str]:
    """``utterance-id<TAB>text`` lines (UTF-8); blank lines are skipped."""
    out: dict[str, str] = {}
    with open(path, encoding='utf-8') as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip('\n').rstrip('\r')
            if not line.strip():
                continue
            if '\t' not in line:
                raise ValueError(f'{path}:{lineno}: expected "utterance-id<TAB>text"')
            uid, text = line.split('\t', 1)
            if uid in out:
                raise ValueError(f'{path}:{lineno}: duplicate utterance id {uid!r}')
            out[uid] = text
    return out


def write_transcripts(path: str | Path, transcripts: Mapping[str, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        for uid in sorted(transcripts):
            fh.write(f'{uid}\t{transcripts[uid]}\n')
    return path


@dataclass
class ScoreReport:
    """Pooled counts per system plus the overall pool."""

    systems: dict = field(default_factory=dict)

    @property
    def overall(self) -> ErrorCounts:
        return merge_counts(self.systems.values())

    def to_json(self) -> dict:
        rows = []
        for name, counts in list(self.systems.items()) + [('overall', self.overall)]:
            rates = counts.rates() if counts.N else dict.fromkeys(('S', 'D', 'I', 'CER'))
            rows.append({'system': name, 'counts': counts.to_dict(), **rates})
        return {'rows': rows}

    def render(self) -> str:
        return render_table(self.to_json())


def render_table(report: Mapping) -> str:
    """Aligned text table (System, S, D, I, CER in percent, one decimal)."""
    header = ('System', 'S', 'D', 'I', 'CER')
    lines = []
    for row in report['rows']:
        if row.get('CER') is None:
            lines.append((row['system'], '-', '-', '-', '-'))
        else:
            lines.append((row['system'],) + tuple(f"{row[k]:.1f}" for k in header[1:]))
    width = max(len(header[0]), *(len(r[0]) for r in lines))
    fmt = f'{{:<{width}}}' + '  {:>6}' * 4
    out = [fmt.format(*header), '-' * (width + 32)]
    out += [fmt.format(*r) for r in lines]
    return '\n'.join(out) + '\n'


def score_corpus(hypotheses: Mapping[str, Mapping[str, str]], references: Mapping[str, str],
                 mapping: Mapping[str, str] | None = None) -> ScoreReport:
    """Score each system's hypotheses against shared references.

    Raises ValueError listing every hypothesis id without a reference.
    """
    missing = sorted({uid for hyps in hypotheses.values() for uid in hyps} - set(references))
    if missing:
        raise ValueError(f'no reference for utterance ids: {", ".join(missing)}')
    report = ScoreReport()
    for system, hyps in hypotheses.items():
        report.systems[system] = merge_counts(
            align_and_count(normalize_text(references[uid], mapping), normalize_text(text, mapping))
            for uid, text in sorted(hyps.items()))
    return report


def save_report(path: str | Path, report: ScoreReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json(), indent=2, ensure_ascii=False) + '\n', encoding='utf-8')
    return path
