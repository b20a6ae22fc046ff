"""Image-source room impulse responses and scene rendering for shoebox rooms.

Room coordinates run from the corner at the origin to ``dims``; the array frame
of :mod:`beam3d.geometry` is a translation of the room frame to the array
centre.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import butter, fftconvolve, sosfilt

from beam3d.errors import (
    ArgumentError,
    AudioIOError,
    DegenerateSceneError,
    GeometryError,
    ShapeError,
)
from beam3d.geometry import SAMPLE_RATE, SPEED_OF_SOUND, Location3D, MicArray

logger = logging.getLogger(__name__)

SINC_TAPS = 81
IMAGE_FLOOR = 1e-4
SIR_RANGE_DB = (-6.0, 6.0)
SNR_RANGE_DB = (-5.0, 20.0)
MIN_NOISE_SOURCES = 3

_HALF_TAPS = SINC_TAPS // 2
RIR_LEAD = _HALF_TAPS
"""Pre-delay that keeps the full sinc of every path, however short."""
_QUADRANTS = np.array(list(itertools.product((0, 1), repeat=3)))


@dataclass(frozen=True)
class Room:
    """Shoebox room with uniform wall absorption.

    Attributes:
        dims: (Lx, Ly, Lz) in metres.
        t60: Reverberation time in seconds; 0 means anechoic.
        max_order: Highest reflection order simulated.
    """

    dims: tuple[float, float, float] = (2.8, 1.5, 1.3)
    t60: float = 0.2
    max_order: int = 20

    def __post_init__(self) -> None:
        """Validate dimensions, reverberation time and order."""
        dims = tuple(float(v) for v in self.dims)
        if len(dims) != 3 or not all(v > 0.0 for v in dims):
            raise GeometryError(f"Room dimensions must be positive, got {self.dims}")
        if not 0.0 <= self.t60 <= 1.0:
            raise GeometryError(f"T60 must lie in [0, 1] s, got {self.t60}")
        if self.max_order < 0:
            raise GeometryError(f"max_order must be >= 0, got {self.max_order}")
        object.__setattr__(self, "dims", dims)

    @property
    def volume(self) -> float:
        """Room volume in cubic metres."""
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def surface(self) -> float:
        """Total wall area in square metres."""
        lx, ly, lz = self.dims
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def contains(self, xyz: Sequence[float] | np.ndarray) -> bool:
        """Return whether a point lies strictly inside the room."""
        point = np.asarray(xyz, dtype=float)
        return bool(np.all(point > 0.0) and np.all(point < np.asarray(self.dims)))

    def to_dict(self) -> dict:
        """Serialise to a JSON-friendly mapping."""
        return {"dims": list(self.dims), "t60": self.t60, "max_order": self.max_order}

    @classmethod
    def from_dict(cls, data: Mapping) -> Room:
        """Inverse of :meth:`to_dict`."""
        return cls(
            tuple(data.get("dims", (2.8, 1.5, 1.3))),  # type: ignore[arg-type]
            float(data.get("t60", 0.2)),
            int(data.get("max_order", 20)),
        )


def absorption_from_t60(room: Room) -> float:
    """Sabine absorption ``0.161 V / (S T60)``, clamped to (0, 1].

    A T60 of zero is the anechoic convention and returns 1.
    """
    if room.t60 <= 0.0:
        return 1.0
    alpha = 0.161 * room.volume / (room.surface * room.t60)
    if alpha > 1.0:
        logger.warning(
            "Sabine absorption %.3f for T60=%.3f s in a %s m room exceeds 1; clamping",
            alpha,
            room.t60,
            room.dims,
        )
        return 1.0
    return alpha


def _image_sources(room: Room, source: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Image positions and reflection orders up to ``room.max_order``."""
    reach = room.max_order // 2 + 1
    offsets = np.arange(-reach, reach + 1)
    lattice = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), -1)
    lattice = lattice.reshape(-1, 1, 3)
    quadrants = _QUADRANTS[None, :, :]
    orders = np.abs(2 * lattice - quadrants).sum(axis=-1).ravel()
    positions = ((1 - 2 * quadrants) * source + 2 * lattice * np.asarray(room.dims))
    positions = positions.reshape(-1, 3)
    keep = orders <= room.max_order
    return positions[keep], orders[keep]


def simulate_rir(
    room: Room,
    source: Sequence[float] | np.ndarray,
    mic: Sequence[float] | np.ndarray,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    lead: int = 0,
) -> np.ndarray:
    """Room impulse response from ``source`` to ``mic`` (room coordinates).

    Each image contributes ``beta**order / (4 pi r)`` at a fractional delay of
    ``r fs / c`` samples, realised with an 81-tap Hann-windowed sinc. Images
    more than 80 dB below the direct path are skipped.

    Sample ``n`` of the response holds time ``n - lead``. Sinc taps that fall
    before ``-lead`` are dropped, which only happens for paths shorter than
    ``(40 - lead) c / fs``; ``lead=40`` keeps every tap and the caller then
    discards the first ``lead`` samples of the convolution.
    """
    if lead < 0:
        raise ArgumentError(f"lead must be non-negative, got {lead}")
    src = np.asarray(source, dtype=float)
    rec = np.asarray(mic, dtype=float)
    if not room.contains(src):
        raise GeometryError(f"Source {src.tolist()} is outside the room {room.dims}")
    if not room.contains(rec):
        raise GeometryError(f"Microphone {rec.tolist()} is outside the room {room.dims}")
    direct = float(np.linalg.norm(src - rec))
    if direct == 0.0:
        raise GeometryError("Source and microphone coincide")

    beta = math.sqrt(1.0 - absorption_from_t60(room))
    positions, orders = _image_sources(room, src)
    distances = np.linalg.norm(positions - rec, axis=-1)
    gains = np.power(beta, orders.astype(float))
    keep = gains * direct / distances >= IMAGE_FLOOR
    distances, gains = distances[keep], gains[keep]
    amplitudes = gains / (4.0 * math.pi * distances)

    delays = distances * fs / c
    centres = np.rint(delays).astype(int)
    taps = centres[:, None] + np.arange(-_HALF_TAPS, _HALF_TAPS + 1)[None, :]
    offsets = taps - delays[:, None]
    window = 0.5 * (1.0 + np.cos(np.pi * offsets / (_HALF_TAPS + 1)))
    values = amplitudes[:, None] * np.sinc(offsets) * window

    taps = taps + lead
    rir = np.zeros(int(centres.max()) + _HALF_TAPS + 1 + lead)
    valid = taps >= 0
    np.add.at(rir, taps[valid], values[valid])
    return rir


class Role(str, enum.Enum):
    """Part a source plays in a scene."""

    TARGET = "target"
    INTERFERER = "interferer"
    NOISE = "noise"


@dataclass(frozen=True)
class SourceSpec:
    """One source of a scene, located relative to the array centre."""

    region: str
    location: Location3D
    signal: str
    role: Role = Role.TARGET

    def to_dict(self) -> dict:
        """Serialise to a JSON-friendly mapping."""
        return {
            "region": self.region,
            "location": self.location.to_dict(),
            "signal": self.signal,
            "role": self.role.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SourceSpec:
        """Inverse of :meth:`to_dict`."""
        return cls(
            str(data["region"]),
            Location3D.from_dict(data["location"]),
            str(data["signal"]),
            Role(data.get("role", "target")),
        )


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Everything needed to render one multichannel mixture."""

    room: Room
    array: MicArray
    array_center: tuple[float, float, float]
    sources: tuple[SourceSpec, ...]
    sir_db: float = 0.0
    snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self) -> None:
        """Check the source roles and mixing levels."""
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "array_center", tuple(float(v) for v in self.array_center))
        targets = [s for s in self.sources if s.role is Role.TARGET]
        if len(targets) != 1:
            raise DegenerateSceneError(
                f"A scene needs exactly one target, got {len(targets)}"
            )
        n_noise = len(self.noises)
        if 0 < n_noise < MIN_NOISE_SOURCES:
            raise DegenerateSceneError(
                f"Noise needs at least {MIN_NOISE_SOURCES} directional sources, got {n_noise}"
            )
        if not SIR_RANGE_DB[0] <= self.sir_db <= SIR_RANGE_DB[1]:
            raise DegenerateSceneError(f"SIR {self.sir_db} dB outside {SIR_RANGE_DB}")
        if not SNR_RANGE_DB[0] <= self.snr_db <= SNR_RANGE_DB[1]:
            raise DegenerateSceneError(f"SNR {self.snr_db} dB outside {SNR_RANGE_DB}")

    @property
    def target(self) -> SourceSpec:
        """The single target source."""
        return next(s for s in self.sources if s.role is Role.TARGET)

    @property
    def interferers(self) -> list[SourceSpec]:
        """Competing speakers."""
        return [s for s in self.sources if s.role is Role.INTERFERER]

    @property
    def noises(self) -> list[SourceSpec]:
        """Directional noise sources."""
        return [s for s in self.sources if s.role is Role.NOISE]

    def source_position(self, source: SourceSpec) -> np.ndarray:
        """Room coordinates of a source."""
        return np.asarray(self.array_center) + source.location.to_cartesian()

    def mic_positions(self) -> np.ndarray:
        """Room coordinates of the microphones, shape (M, 3)."""
        return np.asarray(self.array_center)[None, :] + self.array.positions

    def to_dict(self) -> dict:
        """Serialise to the scene JSON schema."""
        return {
            "room": self.room.to_dict(),
            "array": {**self.array.to_dict(), "center": list(self.array_center)},
            "sources": [s.to_dict() for s in self.sources],
            "sir_db": self.sir_db,
            "snr_db": self.snr_db,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> SceneSpec:
        """Inverse of :meth:`to_dict`."""
        array_data = data["array"]
        return cls(
            Room.from_dict(data["room"]),
            MicArray.from_dict(array_data),
            tuple(array_data["center"]),  # type: ignore[arg-type]
            tuple(SourceSpec.from_dict(s) for s in data["sources"]),
            float(data.get("sir_db", 0.0)),
            float(data.get("snr_db", 20.0)),
            int(data.get("seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class RenderedScene:
    """Rendered mixture and the reverberant image of every source at the mics.

    ``stems`` and ``gains`` follow the order of ``spec.sources``.
    """

    spec: SceneSpec
    mixture: np.ndarray
    stems: list[np.ndarray] = field(default_factory=list)
    gains: list[float] = field(default_factory=list)

    @property
    def target_stem(self) -> np.ndarray:
        """Reverberant target image, shape (samples, M)."""
        return self.stems[self.spec.sources.index(self.spec.target)]

    def other_stems(self) -> list[np.ndarray]:
        """Images of every non-target source."""
        target = self.spec.sources.index(self.spec.target)
        return [stem for i, stem in enumerate(self.stems) if i != target]


def _fit_length(signal: np.ndarray, length: int) -> np.ndarray:
    out = np.zeros(length)
    n = min(length, signal.shape[0])
    out[:n] = signal[:n]
    return out


def _power(x: np.ndarray) -> float:
    return float(np.mean(x**2)) if x.size else 0.0


def render_scene(
    spec: SceneSpec,
    signals: Mapping[str, np.ndarray],
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
) -> RenderedScene:
    """Convolve every source with its RIRs and mix at the requested levels.

    The target keeps unit gain. Interferers are scaled jointly so that the
    target-to-interferer power ratio of the reverberant images equals
    ``sir_db``; noises likewise against ``snr_db``. The mixture is the sum of
    the scaled stems in source order.
    """
    for source in spec.sources:
        if source.signal not in signals:
            raise AudioIOError(f"No signal loaded for {source.signal!r} ({source.region})")
    target_signal = np.asarray(signals[spec.target.signal], dtype=float)
    if target_signal.ndim != 1:
        raise ShapeError(f"Source signals must be mono, got {target_signal.shape}")
    length = target_signal.shape[0]
    mics = spec.mic_positions()

    images = []
    for source in spec.sources:
        dry = _fit_length(np.asarray(signals[source.signal], dtype=float), length)
        position = spec.source_position(source)
        rirs = [simulate_rir(spec.room, position, mic, fs, c, lead=RIR_LEAD) for mic in mics]
        image = np.stack(
            [fftconvolve(dry, rir)[RIR_LEAD : RIR_LEAD + length] for rir in rirs], axis=-1
        )
        images.append(image)

    roles = [source.role for source in spec.sources]
    target_power = _power(images[roles.index(Role.TARGET)])
    if target_power == 0.0:
        raise DegenerateSceneError(f"Target signal {spec.target.signal!r} is silent")

    gains = [1.0] * len(images)
    for role, ratio_db in ((Role.INTERFERER, spec.sir_db), (Role.NOISE, spec.snr_db)):
        members = [i for i, r in enumerate(roles) if r is role]
        if not members:
            continue
        joint_power = _power(sum(images[i] for i in members))  # type: ignore[arg-type]
        if joint_power == 0.0:
            logger.warning("All %s sources are silent; leaving them unscaled", role.value)
            continue
        gain = math.sqrt(target_power / (joint_power * 10.0 ** (ratio_db / 10.0)))
        for i in members:
            gains[i] = gain

    stems = [gain * image for gain, image in zip(gains, images)]
    mixture = np.zeros_like(stems[0])
    for stem in stems:
        mixture = mixture + stem
    return RenderedScene(spec, mixture, stems, gains)


def pink_noise(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance 1/f noise."""
    spectrum = np.fft.rfft(rng.standard_normal(n_samples))
    freqs = np.arange(spectrum.shape[0])
    spectrum[0] = 0.0
    spectrum[1:] /= np.sqrt(freqs[1:])
    noise = np.fft.irfft(spectrum, n=n_samples)
    return noise / (np.std(noise) + 1e-12)


def synthetic_speech(
    n_samples: int,
    rng: np.random.Generator,
    fs: float = SAMPLE_RATE,
    band: tuple[float, float] = (100.0, 7000.0),
    syllable_rate: float = 4.0,
    rms: float = 0.1,
) -> np.ndarray:
    """Speech-like test signal: band-limited pink noise under a syllabic envelope."""
    sos = butter(4, band, btype="bandpass", fs=fs, output="sos")
    carrier = sosfilt(sos, pink_noise(n_samples, rng))
    t = np.arange(n_samples) / fs
    rate = syllable_rate * rng.uniform(0.8, 1.2)
    envelope = (0.5 * (1.0 - np.cos(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))) ** 1.5
    # slow loudness drift between phrases
    drift = 0.6 + 0.4 * np.sin(2.0 * np.pi * 0.3 * t + rng.uniform(0, 2 * np.pi)) ** 2
    speech = carrier * envelope * drift
    return rms * speech / (np.sqrt(np.mean(speech**2)) + 1e-12)
