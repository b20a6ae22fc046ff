"""Utility & helper functions: WAV, raw array and JSON I/O, seeded RNG streams."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import soundfile as sf

from beam3d.errors import AudioIOError, UnsupportedAudioError

logger = logging.getLogger(__name__)

WAV_RATE = 16000
WAV_SUBTYPE = "PCM_16"
_PCM_SCALE = 32768.0


def read_wav(path: str | Path, fs: int = WAV_RATE) -> np.ndarray:
    """Read a 16-bit PCM WAV file as ``(samples, channels)`` floats in [-1, 1).

    Args:
        path: File to read.
        fs: Required sample rate; other rates are rejected, never resampled.
    """
    try:
        info = sf.info(str(path))
    except (RuntimeError, OSError) as exc:
        raise AudioIOError(f"Cannot read {path}: {exc}") from exc
    if info.format != "WAV" or info.subtype != WAV_SUBTYPE:
        raise UnsupportedAudioError(
            f"{path}: expected 16-bit PCM WAV, found {info.format}/{info.subtype}"
        )
    if info.samplerate != fs:
        raise UnsupportedAudioError(
            f"{path}: sample rate {info.samplerate} Hz, expected {fs} Hz"
        )
    try:
        data, _ = sf.read(str(path), dtype="int16", always_2d=True)
    except (RuntimeError, OSError) as exc:
        raise AudioIOError(f"Cannot read {path}: {exc}") from exc
    return data.astype(float) / _PCM_SCALE


def write_wav(path: str | Path, samples: np.ndarray, fs: int = WAV_RATE) -> Path:
    """Write ``(samples,)`` or ``(samples, channels)`` floats as 16-bit PCM.

    Samples outside the representable range are clipped with a warning.
    """
    path = Path(path)
    data = np.asarray(samples, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    scaled = np.rint(data * _PCM_SCALE)
    clipped = (scaled < -_PCM_SCALE) | (scaled > _PCM_SCALE - 1)
    if np.any(clipped):
        logger.warning("Clipping %d samples while writing %s", int(clipped.sum()), path)
    pcm = np.clip(scaled, -_PCM_SCALE, _PCM_SCALE - 1).astype(np.int16)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), pcm, fs, subtype=WAV_SUBTYPE, format="WAV")
    except (RuntimeError, OSError) as exc:
        raise AudioIOError(f"Cannot write {path}: {exc}") from exc
    return path


def write_float32(path: str | Path, array: np.ndarray, **meta: Any) -> Path:
    """Dump an array as little-endian float32 with a ``.json`` sidecar."""
    path = Path(path)
    values = np.asarray(array)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(values.astype("<f4").tobytes(order="C"))
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(
            json.dumps(
                {"dtype": "float32-le", "order": "C", "shape": list(values.shape), **meta},
                indent=2,
            )
        )
    except OSError as exc:
        raise AudioIOError(f"Cannot write {path}: {exc}") from exc
    return path


def read_float32(path: str | Path) -> np.ndarray:
    """Inverse of :func:`write_float32`."""
    path = Path(path)
    try:
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    except (OSError, ValueError) as exc:
        raise AudioIOError(f"Cannot read {path}: {exc}") from exc
    return raw.reshape(meta["shape"])


def read_json(path: str | Path) -> dict[str, Any]:
    """Load a JSON document, reporting the file on failure."""
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise AudioIOError(f"Cannot read JSON document {path}: {exc}") from exc


def write_json(path: str | Path, document: dict[str, Any]) -> Path:
    """Write a JSON document with stable key order."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, indent=2, sort_keys=True))
    except OSError as exc:
        raise AudioIOError(f"Cannot write {path}: {exc}") from exc
    return path


def scene_rng(seed: int, scene_index: int, stream: int = 0) -> np.random.Generator:
    """Independent random stream for one scene derived from the master seed."""
    return np.random.default_rng([seed, scene_index, stream])
