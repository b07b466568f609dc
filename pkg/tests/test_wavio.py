import numpy as np
import pytest
from scipy.io import wavfile

from tsekit.dsp import Waveform
from tsekit.wavio import read_wav, wav_duration, write_wav


@pytest.mark.parametrize('channels', [1, 6])
def test_float32_round_trip(tmp_path, rng, channels):
    x = Waveform(rng.uniform(-1, 1, (channels, 1600)))
    y = read_wav(write_wav(tmp_path / 'a.wav', x))
    assert y.channels == channels
    np.testing.assert_allclose(y.samples, x.samples, atol=1e-7)


def test_pcm16_quantisation(tmp_path, rng):
    x = Waveform(rng.uniform(-1, 1, (2, 800)))
    y = read_wav(write_wav(tmp_path / 'a.wav', x, 'pcm16'))
    assert np.max(np.abs(y.samples - x.samples)) <= 0.5 / 32768 + 1e-12
    rate, raw = wavfile.read(tmp_path / 'a.wav')
    assert raw.dtype == np.int16 and raw.shape == (800, 2)


def test_other_rate_rejected(tmp_path):
    wavfile.write(tmp_path / 'b.wav', 8000, np.zeros(80, dtype=np.int16))
    with pytest.raises(ValueError, match='8000 Hz'):
        read_wav(tmp_path / 'b.wav')
    assert read_wav(tmp_path / 'b.wav', expected_rate=None).sample_rate == 8000


def test_duration(tmp_path):
    write_wav(tmp_path / 'c.wav', Waveform(np.zeros((6, 24000))))
    assert wav_duration(tmp_path / 'c.wav') == 1.5


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        write_wav(tmp_path / 'd.wav', Waveform(np.zeros(10)), 'mp3')
