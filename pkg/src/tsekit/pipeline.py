"""Session manifests, run configuration and batch orchestration.

Output layout of an extraction or oracle run::

    OUT/config.json                      exact RunConfig used
    OUT/metadata.json                    one record per written WAV
    OUT/failures.json                    per-segment / per-speaker error records
    OUT/<session>/<speaker>/<segment>.wav

Workers write only under their own ``<session>`` directory.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import evalkit
from .beamform import (apply_beamformer, delay_and_sum, estimate_scm, gcc_phat_delays,
                       mvdr_weights)
from .dsp import SAMPLE_RATE, StftConfig, Waveform, istft, si_snr, stft
from .gss import (DegenerateTargetError, GssConfig, Segment, activities_from_segments,
                  extract_target, separate)
from .masks import Mask, apply_mask, ideal_ratio_mask
from .mixsim import (REFERENCE_CHANNEL, ArrayGeometry, RoomSpec, SimulatedMixture,
                     build_training_example, quality_gate, snr_proxy_score, speech_shaped_noise,
                     synthetic_speech)
from .scenes import ARRAY_HEIGHT, F0_BANDS, ring_positions, synthetic_session
from .wavio import read_wav, wav_duration, write_wav

STAGES = ('gss', 'passthrough', 'delay_and_sum', 'activity_mvdr')
EXAMPLE_MANIFEST = Path(__file__).parent / 'data' / 'example_session.json'


class ValidationError(ValueError):
    """Bad manifest, config or inputs; nothing was processed."""


# --------------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestSegment:
    speaker: str
    start: float
    end: float
    id: str | None = None
    transcript: str | None = None

    def to_dict(self) -> dict:
        d = {'speaker': self.speaker, 'start': self.start, 'end': self.end}
        if self.id is not None:
            d['id'] = self.id
        if self.transcript is not None:
            d['transcript'] = self.transcript
        return d


@dataclass(frozen=True)
class SessionManifest:
    """One recorded session with oracle diarization.

    ``audio`` and ``references`` (speaker -> single-channel reverberant
    reference WAV, optional) are paths relative to ``base_dir``.
    """

    session_id: str
    audio: str
    speakers: tuple[str, ...]
    segments: tuple[ManifestSegment, ...]
    duration: float | None = None
    references: Mapping[str, str] | None = None
    base_dir: Path = field(default=Path('.'), compare=False)

    def to_dict(self) -> dict:
        d = {'session_id': self.session_id, 'audio': self.audio}
        if self.duration is not None:
            d['duration'] = self.duration
        d['speakers'] = list(self.speakers)
        d['segments'] = [s.to_dict() for s in self.segments]
        if self.references is not None:
            d['references'] = dict(self.references)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + '\n'

    @property
    def audio_path(self) -> Path:
        return self.base_dir / self.audio

    def reference_path(self, speaker: str) -> Path | None:
        if not self.references or speaker not in self.references:
            return None
        return self.base_dir / self.references[speaker]

    def segment_id(self, index: int) -> str:
        seg = self.segments[index]
        if seg.id is not None:
            return seg.id
        return f'{self.session_id}_{seg.speaker}_{round(seg.start * 1000):07d}_{round(seg.end * 1000):07d}'

    def gss_segments(self) -> list[Segment]:
        return [Segment(s.speaker, s.start, s.end) for s in self.segments]

    def transcripts(self) -> dict[str, str]:
        return {self.segment_id(i): s.transcript for i, s in enumerate(self.segments)
                if s.transcript is not None}


def _require(d: Mapping, key: str, kinds, where: str):
    if key not in d:
        raise ValidationError(f'{where}: missing field {key!r}')
    value = d[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise ValidationError(f'{where}: field {key!r} has wrong type {type(value).__name__}')
    return value


def manifest_from_dict(d: Mapping, base_dir: str | Path = '.', check_audio: bool = True) -> SessionManifest:
    """Build and validate a manifest; every problem names the offending record."""
    if not isinstance(d, Mapping):
        raise ValidationError('manifest must be a JSON object')
    known = {'session_id', 'audio', 'duration', 'speakers', 'segments', 'references'}
    extra = set(d) - known
    if extra:
        raise ValidationError(f'manifest: unknown fields {sorted(extra)}')
    session_id = _require(d, 'session_id', str, 'manifest')
    where = f'session {session_id!r}'
    audio = _require(d, 'audio', str, where)
    speakers = _require(d, 'speakers', list, where)
    if not speakers or not all(isinstance(s, str) and s for s in speakers):
        raise ValidationError(f'{where}: speakers must be a nonempty list of names')
    if len(set(speakers)) != len(speakers):
        raise ValidationError(f'{where}: duplicate speaker ids')
    base_dir = Path(base_dir)

    duration = d.get('duration')
    if duration is not None and (not isinstance(duration, (int, float)) or isinstance(duration, bool)
                                 or duration <= 0):
        raise ValidationError(f'{where}: duration must be a positive number')
    audio_path = base_dir / audio
    if check_audio and audio_path.exists():
        actual = wav_duration(audio_path)
        if duration is not None and abs(actual - duration) > 1.0 / SAMPLE_RATE:
            raise ValidationError(f'{where}: duration {duration}s disagrees with {audio} ({actual}s)')
        limit = actual
    elif duration is not None:
        limit = float(duration)
    else:
        raise ValidationError(f'{where}: audio {audio_path} not found and no duration given')

    raw_segments = _require(d, 'segments', list, where)
    segments, ids = [], set()
    for i, raw in enumerate(raw_segments):
        sw = f'{where}, segment {i}'
        if not isinstance(raw, Mapping):
            raise ValidationError(f'{sw}: must be an object')
        unknown = set(raw) - {'speaker', 'start', 'end', 'id', 'transcript'}
        if unknown:
            raise ValidationError(f'{sw}: unknown fields {sorted(unknown)}')
        speaker = _require(raw, 'speaker', str, sw)
        start = _require(raw, 'start', (int, float), sw)
        end = _require(raw, 'end', (int, float), sw)
        if speaker not in speakers:
            raise ValidationError(f'{sw}: unknown speaker {speaker!r}')
        if not (math.isfinite(start) and math.isfinite(end)) or start < 0 or start >= end:
            raise ValidationError(f'{sw}: need 0 <= start < end, got start={start}, end={end}')
        if end > limit + 1e-9:
            raise ValidationError(f'{sw}: end {end}s beyond audio duration {limit}s')
        for key in ('id', 'transcript'):
            if key in raw and not isinstance(raw[key], str):
                raise ValidationError(f'{sw}: {key} must be a string')
        segments.append(ManifestSegment(speaker, start, end, raw.get('id'), raw.get('transcript')))

    references = d.get('references')
    if references is not None:
        if not isinstance(references, Mapping) or not all(isinstance(v, str) for v in references.values()):
            raise ValidationError(f'{where}: references must map speaker ids to paths')
        for spk in references:
            if spk not in speakers:
                raise ValidationError(f'{where}: reference for unknown speaker {spk!r}')
    manifest = SessionManifest(session_id, audio, tuple(speakers), tuple(segments), duration,
                               dict(references) if references is not None else None, base_dir)
    for i in range(len(segments)):
        sid = manifest.segment_id(i)
        if sid in ids:
            raise ValidationError(f'{where}, segment {i}: duplicate segment id {sid!r}')
        ids.add(sid)
    return manifest


def load_manifest(path: str | Path, check_audio: bool = True) -> SessionManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ValidationError(f'{path}: cannot read manifest ({exc.strerror})') from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path}: malformed JSON at line {exc.lineno}: {exc.msg}') from exc
    try:
        return manifest_from_dict(data, path.parent, check_audio)
    except ValidationError as exc:
        raise ValidationError(f'{path}: {exc}') from None


def save_manifest(path: str | Path, manifest: SessionManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.to_json(), encoding='utf-8')
    return path


# --------------------------------------------------------------------- config

@dataclass(frozen=True)
class SimulationConfig:
    """Settings for ``simulate``.

    ``snr_grid`` lists the SNRs a session may draw from; ``sources`` is a
    JSON file ``{"speakers": {id: [wav, ...]}, "noise": [wav, ...]}`` or
    None for synthetic talkers.
    """

    sessions: int = 2
    speakers: int = 2
    segments_per_speaker: int = 2
    segment_seconds: tuple[float, float] = (1.5, 3.0)
    session_seconds: float = 10.0
    snr_grid: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    room: RoomSpec = RoomSpec()
    allow_overlap: bool = True
    quality_threshold: float | None = None
    sources: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d['room'] = self.room.to_dict()
        d['segment_seconds'] = list(self.segment_seconds)
        d['snr_grid'] = list(self.snr_grid)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> 'SimulationConfig':
        d = dict(d)
        if 'room' in d:
            room = dict(d['room'])
            room['dimensions'] = tuple(room.get('dimensions', RoomSpec().dimensions))
            if isinstance(room.get('absorption'), list):
                room['absorption'] = tuple(room['absorption'])
            d['room'] = RoomSpec(**room)
        for key in ('segment_seconds', 'snr_grid'):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)


@dataclass(frozen=True)
class RunConfig:
    stage: str = 'gss'
    stft: StftConfig = StftConfig()
    gss: GssConfig = GssConfig()
    simulation: SimulationConfig = SimulationConfig()
    ref_channel: int = REFERENCE_CHANNEL
    max_delay: int = 16
    seed: int = 0
    jobs: int = 1
    wav_format: str = 'float32'
    out: str | None = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValidationError(f'unknown stage {self.stage!r}; choose from {", ".join(STAGES)}')
        if self.jobs < 1:
            raise ValidationError('jobs must be at least 1')
        if self.wav_format not in ('float32', 'pcm16'):
            raise ValidationError(f'unknown wav_format {self.wav_format!r}')

    def to_dict(self) -> dict:
        return {'stage': self.stage, 'stft': self.stft.to_dict(), 'gss': self.gss.to_dict(),
                'simulation': self.simulation.to_dict(), 'ref_channel': self.ref_channel,
                'max_delay': self.max_delay, 'seed': self.seed, 'jobs': self.jobs,
                'wav_format': self.wav_format, 'out': self.out}

    @classmethod
    def from_dict(cls, d: Mapping) -> 'RunConfig':
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f'config: unknown fields {sorted(unknown)}')
        try:
            if 'stft' in d:
                d['stft'] = StftConfig(**d['stft'])
            if 'gss' in d:
                d['gss'] = GssConfig.from_dict(d['gss'])
            if 'simulation' in d:
                d['simulation'] = SimulationConfig.from_dict(d['simulation'])
            return cls(**d)
        except ValidationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ValidationError(f'config: {exc}') from exc

    def replace(self, **changes) -> 'RunConfig':
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**d)


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as exc:
        raise ValidationError(f'{path}: cannot read config ({exc.strerror})') from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path}: malformed JSON at line {exc.lineno}: {exc.msg}') from exc
    return RunConfig.from_dict(data)


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + '\n', encoding='utf-8')


# --------------------------------------------------------------------- extraction

@dataclass
class RunResult:
    records: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    out: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _sample_span(seg: ManifestSegment, sr: int) -> tuple[int, int]:
    return int(round(seg.start * sr)), int(round(seg.end * sr))


def _failure(manifest, speaker, segment, stage, exc) -> dict:
    return {'session': manifest.session_id, 'speaker': speaker, 'segment': segment,
            'stage': stage, 'error': type(exc).__name__, 'message': str(exc)}


def _activity_mvdr(mixture: Waveform, manifest: SessionManifest, target: str, config: RunConfig) -> Waveform:
    """MVDR whose masks come from diarization alone: target-only frames vs target-silent frames."""
    spec = stft(mixture, config.stft)
    act = activities_from_segments(manifest.gss_segments(), spec.frame_count, config.stft.hop,
                                   mixture.sample_rate, 0, manifest.speakers)
    mine = act.speaker(target)
    if not mine.any():
        raise DegenerateTargetError(f'target speaker {target!r} has no active frames')
    others = act.active[:-1][[i for i, s in enumerate(act.speaker_ids) if s != target]]
    busy = others.any(axis=0) if len(others) else np.zeros_like(mine)
    speech = mine & ~busy if (mine & ~busy).any() else mine
    if (~mine).sum() == 0:
        raise ValueError(f'{target!r} is active in every frame; no noise frames for the covariance')
    freqs = spec.freq_bins
    target_mask = Mask(np.repeat(speech[:, None], freqs, axis=1).astype(float))
    noise_mask = Mask(np.repeat((~mine)[:, None], freqs, axis=1).astype(float))
    weights = mvdr_weights(estimate_scm(spec, target_mask), estimate_scm(spec, noise_mask),
                           config.ref_channel)
    return istft(apply_beamformer(weights, spec), length=mixture.length)


def _read_references(manifest: SessionManifest) -> dict[str, Waveform]:
    refs = {}
    for spk in manifest.speakers:
        path = manifest.reference_path(spk)
        if path is not None:
            refs[spk] = read_wav(path)
    return refs


def _score(output: Waveform, mixture: Waveform, ref: Waveform | None, span, ref_channel: int) -> dict:
    if ref is None:
        return {}
    clean = ref.samples[0, span[0]:span[1]]
    if not np.any(clean):
        return {}
    return {'si_snr': si_snr(output.samples[0], clean),
            'si_snr_mixture': si_snr(mixture.samples[ref_channel, span[0]:span[1]], clean)}


def _session_worker(args) -> tuple[list, list]:
    manifest, config, out, mode = args
    records, failures = [], []
    try:
        mixture = read_wav(manifest.audio_path)
        references = _read_references(manifest)
    except (OSError, ValueError) as exc:
        return [], [_failure(manifest, None, None, 'read', exc)]
    sr = mixture.sample_rate
    stage = 'oracle_irm' if mode == 'oracle' else config.stage
    by_speaker = {spk: [i for i, s in enumerate(manifest.segments) if s.speaker == spk]
                  for spk in manifest.speakers}

    def emit(speaker: str, index: int, wave: Waveform):
        seg = manifest.segments[index]
        seg_id = manifest.segment_id(index)
        rel = Path(manifest.session_id) / speaker / f'{seg_id}.wav'
        write_wav(out / rel, wave, config.wav_format)
        span = _sample_span(seg, sr)
        records.append({'session': manifest.session_id, 'speaker': speaker, 'segment': seg_id,
                        'start': seg.start, 'end': seg.end, 'samples': wave.length,
                        'path': rel.as_posix(), 'stage': stage,
                        **_score(wave, mixture, references.get(speaker), span, config.ref_channel)})

    session_output: Callable[[str], Waveform] | None = None
    if stage == 'gss':
        try:
            separation = separate(mixture, manifest.gss_segments(), config.gss, manifest.speakers)
        except Exception as exc:  # noqa: BLE001 - batch-continue policy
            return [], [_failure(manifest, None, None, stage, exc)]
        session_output = lambda spk: extract_target(separation, spk, manifest.gss_segments(), config.gss)
    elif stage == 'activity_mvdr':
        session_output = lambda spk: _activity_mvdr(mixture, manifest, spk, config)
    elif stage == 'oracle_irm':
        session_output = lambda spk: _oracle_irm(mixture, references, spk, config)

    for speaker in manifest.speakers:
        indices = by_speaker[speaker]
        if not indices:
            failures.append(_failure(manifest, speaker, None, stage,
                                     DegenerateTargetError(f'speaker {speaker!r} has no segments')))
            continue
        full = None
        if session_output is not None:
            try:
                full = session_output(speaker)
            except Exception as exc:  # noqa: BLE001
                failures.append(_failure(manifest, speaker, None, stage, exc))
                continue
        for index in indices:
            try:
                start, stop = _sample_span(manifest.segments[index], sr)
                if stop > mixture.length:
                    raise ValueError(f'segment ends at sample {stop}, audio has {mixture.length}')
                if full is not None:
                    wave = full.crop(start, stop)
                elif stage == 'passthrough':
                    wave = mixture.channel(config.ref_channel).crop(start, stop)
                else:
                    crop = mixture.crop(start, stop)
                    wave = delay_and_sum(crop, gcc_phat_delays(crop, config.ref_channel, config.max_delay))
                emit(speaker, index, wave)
            except Exception as exc:  # noqa: BLE001
                failures.append(_failure(manifest, speaker, manifest.segment_id(index), stage, exc))
    return records, failures


def _oracle_irm(mixture: Waveform, references: Mapping[str, Waveform], speaker: str,
                config: RunConfig) -> Waveform:
    """IRM of the speaker's reference image against everything else at the reference channel."""
    if speaker not in references:
        raise ValidationError(f'no reference audio for speaker {speaker!r}')
    ref = references[speaker]
    mix = mixture.channel(config.ref_channel)
    if ref.length != mix.length:
        raise ValueError(f'reference of {speaker!r} has {ref.length} samples, mixture {mix.length}')
    mix_spec = stft(mix, config.stft)
    mask = ideal_ratio_mask(stft(ref, config.stft), stft(Waveform(mix.samples - ref.samples), config.stft))
    return istft(apply_mask(mix_spec, mask), length=mix.length)


def _run(manifests: Sequence[SessionManifest], config: RunConfig, out: str | Path | None,
         mode: str) -> RunResult:
    out = Path(out if out is not None else (config.out or 'out'))
    ids = [m.session_id for m in manifests]
    if len(set(ids)) != len(ids):
        raise ValidationError('duplicate session ids across manifests')
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / 'config.json', config.to_dict())
    jobs = [(m, config, out, mode) for m in manifests]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, len(jobs))) as pool:
            results = list(pool.map(_session_worker, jobs))
    else:
        results = [_session_worker(j) for j in jobs]
    result = RunResult(out=out)
    for records, failures in results:
        result.records.extend(records)
        result.failures.extend(failures)
    key = lambda r: (r['session'], r['speaker'] or '', r['segment'] or '')
    result.records.sort(key=key)
    result.failures.sort(key=key)
    _dump(out / 'metadata.json', {'records': result.records})
    _dump(out / 'failures.json', {'failures': result.failures})
    return result


def run_extraction(manifests, config: RunConfig = RunConfig(), out=None) -> RunResult:
    """Treat every manifest speaker in turn as the target and write one WAV per segment.

    Failures are recorded, never raised, except for invalid inputs.
    """
    if isinstance(manifests, SessionManifest):
        manifests = [manifests]
    return _run(list(manifests), config, out, 'extract')


def oracle_enhance(manifests, config: RunConfig = RunConfig(), out=None) -> RunResult:
    """IRM upper bound: mask the reference channel with each speaker's oracle IRM."""
    if isinstance(manifests, SessionManifest):
        manifests = [manifests]
    manifests = list(manifests)
    for m in manifests:
        missing = [s for s in m.speakers if m.reference_path(s) is None]
        if missing:
            raise ValidationError(f'session {m.session_id!r}: no reference audio for {missing}')
    return _run(manifests, config, out, 'oracle')


# --------------------------------------------------------------------- scoring

def score_run(hypotheses: Mapping[str, str | Path | Mapping[str, str]],
              references: str | Path | Mapping[str, str], out: str | Path | None = None,
              mapping: Mapping[str, str] | None = None) -> evalkit.ScoreReport:
    """Score one or more systems' transcripts; writes report.json and report.txt if ``out`` is set."""
    def load(x):
        return dict(x) if isinstance(x, Mapping) else evalkit.read_transcripts(x)
    refs = load(references)
    report = evalkit.score_corpus({name: load(h) for name, h in hypotheses.items()}, refs, mapping)
    if out is not None:
        out = Path(out)
        evalkit.save_report(out / 'report.json', report)
        (out / 'report.txt').write_text(report.render(), encoding='utf-8')
    return report


# --------------------------------------------------------------------- simulation

def write_simulated_session(out_dir: str | Path, session_id: str, sim: SimulatedMixture,
                            transcripts: Mapping[int, str] | None = None) -> Path:
    """Write mixture, per-speaker references, metadata sidecar and manifest; returns the manifest path."""
    root = Path(out_dir) / session_id
    write_wav(root / 'mixture.wav', sim.mixture)
    references = {}
    for spk, ref in zip(sim.speaker_ids, sim.clean_refs):
        references[spk] = f'ref_{spk}.wav'
        write_wav(root / references[spk], ref)
    _dump(root / 'metadata.json', sim.metadata)
    order = sorted(range(len(sim.segments)), key=lambda i: (sim.segments[i].start, sim.segments[i].speaker))
    count: dict[str, int] = {}
    segments = []
    for i in order:
        seg = sim.segments[i]
        count[seg.speaker] = count.get(seg.speaker, 0) + 1
        segments.append(ManifestSegment(seg.speaker, seg.start, seg.end,
                                        f'{session_id}_{seg.speaker}_{count[seg.speaker]:03d}',
                                        (transcripts or {}).get(i)))
    manifest = SessionManifest(session_id, 'mixture.wav', tuple(sim.speaker_ids), tuple(segments),
                               sim.mixture.length / sim.mixture.sample_rate, references, root)
    return save_manifest(root / 'manifest.json', manifest)


def _session_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _load_sources(path: Path, threshold: float | None):
    try:
        spec = json.loads(path.read_text(encoding='utf-8'))
        speakers = {spk: [read_wav(path.parent / w) for w in wavs] for spk, wavs in spec['speakers'].items()}
        noise = [read_wav(path.parent / w) for w in spec['noise']]
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f'{path}: bad source list ({exc})') from exc
    if threshold is not None:
        speakers = {spk: quality_gate(segs, snr_proxy_score, threshold) for spk, segs in speakers.items()}
    speakers = {spk: segs for spk, segs in speakers.items() if segs}
    if not speakers or not noise:
        raise ValidationError(f'{path}: no usable speech segments or noise')
    return speakers, noise


def simulate(config: RunConfig, out: str | Path | None = None, sources: str | Path | None = None) -> list[Path]:
    """Write ``config.simulation.sessions`` simulated sessions; returns their manifest paths."""
    sim_cfg = config.simulation
    out = Path(out if out is not None else (config.out or 'sim'))
    sources = sources if sources is not None else sim_cfg.sources
    paths = []
    if sources is not None:
        pool, noise = _load_sources(Path(sources), sim_cfg.quality_threshold)
    for index in range(sim_cfg.sessions):
        seed = _session_seed(config.seed, index)
        rng = np.random.default_rng(seed)
        snr = float(sim_cfg.snr_grid[int(rng.integers(len(sim_cfg.snr_grid)))])
        session_id = f'sim{index:04d}'
        if sources is None:
            speakers = [f'S{k}' for k in range(sim_cfg.speakers)]
            sim = synthetic_session(seed, speakers, sim_cfg.segments_per_speaker, sim_cfg.segment_seconds,
                                    sim_cfg.session_seconds, snr, sim_cfg.room, sim_cfg.allow_overlap)
        else:
            names = sorted(pool)
            chosen = sorted(rng.choice(len(names), size=min(sim_cfg.speakers, len(names)), replace=False))
            speakers = [names[c] for c in chosen]
            segs = [[pool[s][j] for j in rng.choice(len(pool[s]), size=min(sim_cfg.segments_per_speaker,
                                                                             len(pool[s])), replace=False)]
                    for s in speakers]
            room = sim_cfg.room
            center = [room.dimensions[0] / 2, room.dimensions[1] / 2, min(1.2, room.dimensions[2] / 2)]
            sim = build_training_example(segs, noise, room, ArrayGeometry.circular(center), snr, seed,
                                         sim_cfg.session_seconds, speaker_ids=speakers,
                                         allow_overlap=sim_cfg.allow_overlap)
        paths.append(write_simulated_session(out, session_id, sim))
    _dump(out / 'config.json', config.to_dict())
    return paths


def render_session(manifest: SessionManifest, out_dir: str | Path, seed: int = 0,
                   snr_db: float | None = 10.0) -> SessionManifest:
    """Synthesize audio matching a diarization manifest exactly (synthetic talkers)."""
    if manifest.duration is None:
        raise ValidationError('rendering needs an explicit session duration')
    if len(manifest.speakers) > len(F0_BANDS):
        raise ValidationError(f'at most {len(F0_BANDS)} synthetic speakers can be rendered')
    rng = np.random.default_rng(seed)
    room = RoomSpec()
    center = np.array([room.dimensions[0] / 2, room.dimensions[1] / 2, ARRAY_HEIGHT])
    positions = ring_positions(rng, center, len(manifest.speakers), 1.5, np.pi / 4)
    segs, offsets = [], []
    for k, spk in enumerate(manifest.speakers):
        mine = [s for s in manifest.segments if s.speaker == spk]
        segs.append([synthetic_speech((round(s.end * SAMPLE_RATE) - round(s.start * SAMPLE_RATE)) / SAMPLE_RATE,
                                      rng, F0_BANDS[k]) for s in mine])
        offsets.append([s.start for s in mine])
    noise = [speech_shaped_noise(manifest.duration + 1.0, rng)]
    sim = build_training_example(segs, noise, room, ArrayGeometry.circular(center), snr_db, seed,
                                 manifest.duration, speaker_ids=list(manifest.speakers),
                                 source_positions=positions, offsets=offsets)
    out_dir = Path(out_dir)
    write_wav(out_dir / manifest.audio, sim.mixture)
    references = dict(manifest.references or {spk: f'ref_{spk}.wav' for spk in manifest.speakers})
    for spk, ref in zip(sim.speaker_ids, sim.clean_refs):
        if spk in references:
            write_wav(out_dir / references[spk], ref)
    rendered = SessionManifest(manifest.session_id, manifest.audio, manifest.speakers, manifest.segments,
                               manifest.duration, references, out_dir)
    save_manifest(out_dir / 'manifest.json', rendered)
    return load_manifest(out_dir / 'manifest.json')
