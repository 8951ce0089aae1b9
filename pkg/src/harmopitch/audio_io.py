"""WAV reading and writing."""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import ParameterError
from .preprocess import AudioBuffer

MIN_RATE, MAX_RATE = 8000, 48000


def read_wav(path) -> AudioBuffer:
    """Read PCM 16/24/32-bit or float WAV as floats in [-1, 1], downmixing by averaging."""
    sr, data = wavfile.read(path)
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit PCM comes back left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ParameterError(f"unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if not MIN_RATE <= sr <= MAX_RATE:
        raise ParameterError(f"sample rate {sr} Hz outside [{MIN_RATE}, {MAX_RATE}]")
    return AudioBuffer(x, int(sr))


def write_wav(path, audio: AudioBuffer, pcm16: bool = False) -> None:
    if pcm16:
        data = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = audio.samples.astype(np.float32)
    wavfile.write(path, audio.sample_rate, data)
