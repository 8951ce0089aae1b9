import wave

import numpy as np
import pytest
from scipy.io import wavfile

from harmopitch.audio_io import read_wav, write_wav
from harmopitch.errors import ParameterError
from harmopitch.preprocess import AudioBuffer


def test_float_round_trip(tmp_path):
    x = np.random.default_rng(0).uniform(-1, 1, 1000)
    write_wav(tmp_path / "a.wav", AudioBuffer(x, 16000))
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == 16000
    np.testing.assert_allclose(back.samples, x.astype(np.float32))


def test_pcm16(tmp_path):
    write_wav(tmp_path / "a.wav", AudioBuffer(np.array([0.0, 0.5, -1.0]), 8000), pcm16=True)
    np.testing.assert_allclose(read_wav(tmp_path / "a.wav").samples,
                               [0, 16384 / 32768, -32767 / 32768])


def test_pcm24(tmp_path):
    values = np.array([0, 2**22, -2**23, 2**23 - 1])
    raw = b"".join(int(v).to_bytes(3, "little", signed=True) for v in values)
    with wave.open(str(tmp_path / "a.wav"), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(3)
        w.setframerate(16000)
        w.writeframes(raw)
    np.testing.assert_allclose(read_wav(tmp_path / "a.wav").samples, values / 2**23)


def test_stereo_downmix(tmp_path):
    data = np.array([[0.2, 0.4], [-1.0, 1.0]], dtype=np.float32)
    wavfile.write(tmp_path / "s.wav", 22050, data)
    np.testing.assert_allclose(read_wav(tmp_path / "s.wav").samples, [0.3, 0.0], atol=1e-7)


@pytest.mark.parametrize("rate", [4000, 96000])
def test_rate_outside_range(tmp_path, rate):
    wavfile.write(tmp_path / "r.wav", rate, np.zeros(100, dtype=np.float32))
    with pytest.raises(ParameterError):
        read_wav(tmp_path / "r.wav")
