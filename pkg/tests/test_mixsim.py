import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsekit.dsp import SAMPLE_RATE, Waveform
from tsekit.mixsim import (ArrayGeometry, RoomSpec, build_training_example, measured_snr, mix_at_snr,
                           quality_gate, simulate_rir, snr_proxy_score, speech_shaped_noise,
                           synthetic_speech)

from oracles import mirror_images, mirror_rir

ARRAY = ArrayGeometry.circular([3.0, 2.5, 1.2])


class TestRoom:
    def test_validation(self):
        with pytest.raises(ValueError):
            RoomSpec((6, 0, 3))
        with pytest.raises(ValueError):
            RoomSpec(absorption=0.0)
        with pytest.raises(ValueError):
            RoomSpec(absorption=(0.5,) * 5 + (1.2,))

    def test_array_needs_six(self):
        with pytest.raises(ValueError):
            ArrayGeometry(np.zeros((4, 3)))


class TestRir:
    def test_free_field(self):
        room = RoomSpec(max_reflection_order=0)
        src = np.array([1.0, 1.0, 1.5])
        rir = simulate_rir(room, src, ARRAY)
        for m, mic in enumerate(ARRAY.mic_positions):
            d = np.linalg.norm(src - mic)
            k = int(np.floor(d / 343.0 * SAMPLE_RATE + 0.5))
            assert np.count_nonzero(rir[m]) == 1
            assert rir[m, k] == pytest.approx(1 / (4 * np.pi * d), rel=1e-12)

    def test_inverse_distance(self):
        room = RoomSpec((20, 20, 20), max_reflection_order=0)
        mic = ArrayGeometry(np.tile([10.0, 10.0, 10.0], (6, 1)))
        near = simulate_rir(room, [11.0, 10.0, 10.0], mic)[0].max()
        far = simulate_rir(room, [12.0, 10.0, 10.0], mic)[0].max()
        assert far == pytest.approx(near / 2, rel=1e-12)

    def test_order2_matches_mirror_enumeration(self):
        room = RoomSpec((5.0, 4.0, 3.0), absorption=0.5, max_reflection_order=2)
        src = np.array([1.3, 2.9, 1.1])
        rir = simulate_rir(room, src, ARRAY)
        beta = room.wall_reflection
        images = mirror_images(room.dimensions, src, beta, 2)
        # second order: 2 per axis from opposite walls, 4 per pair of axes
        assert len(images) == 1 + 6 + 18
        for m, mic in enumerate(ARRAY.mic_positions):
            oracle = mirror_rir(room.dimensions, src, mic, beta, 2)
            got = np.trim_zeros(rir[m], 'b')
            assert len(got) == len(oracle)
            np.testing.assert_allclose(got, oracle, rtol=1e-12, atol=1e-15)

    def test_frozen_first_arrivals(self):
        room = RoomSpec((5.0, 4.0, 3.0), absorption=0.5, max_reflection_order=2)
        rir = simulate_rir(room, [1.3, 2.9, 1.1], ARRAY)
        # computed once with the mirror-enumeration oracle
        taps = np.flatnonzero(rir[0])
        assert taps[:4].tolist() == [84, 136, 146, 181]
        assert rir[0, taps[:2]] == pytest.approx([0.04426096406, 0.01928619598], rel=1e-9)

    def test_outside_rejected(self):
        with pytest.raises(ValueError, match='outside'):
            simulate_rir(RoomSpec(), [7.0, 1.0, 1.0], ARRAY)

    @settings(max_examples=15)
    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_energy_non_increasing_in_absorption(self, a, b):
        lo, hi = sorted((a, b))
        src = [1.0, 1.5, 1.0]
        e = [np.sum(simulate_rir(RoomSpec(absorption=x, max_reflection_order=3), src, ARRAY) ** 2)
             for x in (lo, hi)]
        assert e[1] <= e[0] * (1 + 1e-12)


class TestMixAtSnr:
    @pytest.mark.parametrize('snr', [0.0, 20.0])
    def test_power_ratio(self, rng, snr):
        target = Waveform(rng.standard_normal((6, 8000)))
        noise = Waveform(rng.standard_normal((6, 8000)))
        mix, scale = mix_at_snr(target, noise, snr)
        p_t = np.mean(target.samples ** 2)
        p_n = np.mean((scale * noise.samples) ** 2)
        assert p_n == pytest.approx(p_t / 10 ** (snr / 10), rel=1e-9)

    def test_speech_shaped_minus_ten(self, rng):
        target = synthetic_speech(2.0, rng)
        noise = speech_shaped_noise(3.0, rng)
        mix, _ = mix_at_snr(target, noise, -10.0)
        assert measured_snr(target, mix) == pytest.approx(-10.0, abs=0.01)

    def test_cyclic_extension_keeps_channels(self, rng):
        target = Waveform(rng.standard_normal((2, 1000)))
        noise = Waveform(np.stack([np.ones(300), -np.ones(300)]))
        mix, scale = mix_at_snr(target, noise, 0.0)
        residual = mix.samples - target.samples
        assert np.allclose(residual[0], scale) and np.allclose(residual[1], -scale)

    def test_rejects_silence(self, rng):
        x = Waveform(rng.standard_normal((1, 100)))
        with pytest.raises(ValueError):
            mix_at_snr(Waveform(np.zeros((1, 100))), x, 0)
        with pytest.raises(ValueError):
            mix_at_snr(x, Waveform(np.zeros((1, 100))), 0)
        with pytest.raises(ValueError, match='channel'):
            mix_at_snr(x, Waveform(np.ones((2, 100))), 0)

    @settings(max_examples=30)
    @given(st.floats(-10, 20), st.integers(0, 2 ** 31))
    def test_fidelity_property(self, snr, seed):
        rng = np.random.default_rng(seed)
        target = Waveform(rng.standard_normal((6, 4000)) * np.r_[np.zeros(1000), np.ones(3000)])
        noise = Waveform(rng.standard_normal((6, 2500)))
        mix, _ = mix_at_snr(target, noise, snr)
        assert measured_snr(target, mix) == pytest.approx(snr, abs=0.01)


class TestQualityGate:
    def test_thresholds(self, rng):
        segs = [synthetic_speech(1.0, rng) for _ in range(3)]
        scores = [snr_proxy_score(s) for s in segs]
        assert quality_gate(segs, snr_proxy_score, min(scores) - 1) == segs
        assert quality_gate(segs, snr_proxy_score, max(scores) + 1) == []

    def test_clean_kept_noisy_dropped(self, rng):
        clean = [synthetic_speech(1.5, rng) for _ in range(4)]
        noisy = [Waveform(c.samples + 0.1 * rng.standard_normal(c.samples.shape)) for c in clean]
        kept = quality_gate(clean + noisy, snr_proxy_score, 15.0)
        assert kept == clean
        assert min(map(snr_proxy_score, clean)) > 15.0 > max(map(snr_proxy_score, noisy))

    def test_order_preserved(self):
        segs = [Waveform(np.full((1, 600), v)) for v in (3.0, 1.0, 2.0)]
        assert quality_gate(segs, lambda s: s.samples[0, 0], 1.5) == [segs[0], segs[2]]


class TestBuildExample:
    def test_single_speaker_anechoic(self, rng):
        room = RoomSpec(max_reflection_order=0)
        seg = synthetic_speech(1.0, rng)
        src = [1.0, 1.0, 1.5]
        sim = build_training_example([[seg]], [], room, ARRAY, None, 0, 2.0, source_positions=[src],
                                     offsets=[[0.5]])
        rir = simulate_rir(room, src, ARRAY)
        dry = np.zeros(32000)
        dry[8000:24000] = seg.samples[0]
        expected = np.stack([np.convolve(dry, h)[:32000] for h in rir])
        np.testing.assert_allclose(sim.mixture.samples, expected, atol=1e-12)
        act = sim.activities.speaker('spk0')
        assert act[32:94].all() and not act[:31].any() and not act[95:].any()

    def test_disjoint_two_speakers(self, rng):
        segs = [[synthetic_speech(1.0, rng)], [synthetic_speech(1.0, rng)]]
        sim = build_training_example(segs, [], RoomSpec(max_reflection_order=2), ARRAY, None, 3, 4.0,
                                     allow_overlap=False)
        np.testing.assert_allclose(sim.mixture.samples, sim.images[0].samples + sim.images[1].samples,
                                   atol=1e-12)
        a, b = sim.activities.active[:2]
        assert not np.any(a & b)

    def test_reconstruction_and_refs(self, scene):
        total = sum(im.samples for im in scene.images) + scene.noise.samples
        assert np.max(np.abs(scene.mixture.samples - total)) < 1e-12
        for ref, im in zip(scene.clean_refs, scene.images):
            np.testing.assert_array_equal(ref.samples[0], im.samples[0])
        assert scene.mixture.length == scene.clean_refs[0].length == scene.metadata['session_samples']

    def test_snr_and_metadata(self, scene):
        active = np.zeros(scene.mixture.length, dtype=bool)
        for seg in scene.segments:
            active[round(seg.start * SAMPLE_RATE):round(seg.end * SAMPLE_RATE)] = True
        speech = Waveform(sum(im.samples for im in scene.images))
        assert measured_snr(speech, scene.mixture, active) == pytest.approx(20.0, abs=0.01)
        assert scene.metadata['seed'] == 0 and scene.metadata['room']['dimensions'] == [6.0, 5.0, 3.0]

    def test_deterministic(self, rng):
        segs = [[synthetic_speech(1.0, np.random.default_rng(1))]]
        noise = [speech_shaped_noise(3.0, np.random.default_rng(2))]
        runs = [build_training_example(segs, noise, RoomSpec(max_reflection_order=3), ARRAY, 5.0, 11, 3.0)
                for _ in range(2)]
        assert runs[0].mixture.samples.tobytes() == runs[1].mixture.samples.tobytes()
        assert runs[0].metadata == runs[1].metadata

    def test_segment_too_long(self, rng):
        with pytest.raises(ValueError, match='longer than session'):
            build_training_example([[synthetic_speech(3.0, rng)]], [], RoomSpec(), ARRAY, None, 0, 2.0)

    def test_needs_speaker_and_noise(self, rng):
        with pytest.raises(ValueError):
            build_training_example([], [], RoomSpec(), ARRAY, None, 0, 2.0)
        with pytest.raises(ValueError, match='noise pool'):
            build_training_example([[synthetic_speech(1.0, rng)]], [], RoomSpec(), ARRAY, 0.0, 0, 2.0)
