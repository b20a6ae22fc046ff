"""In-car scene planning and scene directories.

Four seat regions surround a dual microphone mounted at the front of the cabin:
the driver (S1), the co-driver (S2) and two rear passengers (S3 behind S1,
S4 behind S2). Seen from the array the centres of S1 and S3 (and of S2 and
S4) are 16 degrees apart in azimuth but differ in distance.

A scene directory holds ``mixture.wav``, one reverberant image per source
under ``stems/`` and a ``scene.json`` manifest.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from beam3d.errors import AudioIOError, ConfigurationError, DegenerateSceneError
from beam3d.geometry import DUAL_MIC_SPACING, Location3D, MicArray, RegionBox
from beam3d.room import (
    SIR_RANGE_DB,
    SNR_RANGE_DB,
    RenderedScene,
    Role,
    Room,
    SceneSpec,
    SourceSpec,
    pink_noise,
    render_scene,
    synthetic_speech,
)
from beam3d.utils import read_json, read_wav, scene_rng, write_json, write_wav

logger = logging.getLogger(__name__)

CAR_DIMS = (2.8, 1.5, 1.3)
ARRAY_CENTER = (0.35, 0.75, 1.20)
HEAD_HEIGHT = 1.05
SITTING_HEIGHT_RANGE = (0.95, 1.15)
REGION_HALF_EXTENTS = (0.2, 0.25, 0.1)
CONDITIONS = ("S1", "S1+2", "S1+3", "S1+4", "S1+2+3", "S1+2+4", "S1+3+4")
BUILTIN_SPEECH = "builtin:speech"
BUILTIN_PINK = "builtin:pink"
MANIFEST = "scene.json"
MIXTURE = "mixture.wav"
PEAK_LEVEL = 0.9

# (azimuth in degrees, horizontal distance in metres) of each seat centre
_SEATS = {
    "S1": (-36.0, 0.65),
    "S2": (36.0, 0.65),
    "S3": (-20.0, 1.40),
    "S4": (20.0, 1.40),
}


def car_array(spacing: float = DUAL_MIC_SPACING) -> MicArray:
    """Dual microphone mounted across the cabin (along y), mic 0 on the co-driver side."""
    half = spacing / 2.0
    return MicArray(np.array([[0.0, half, 0.0], [0.0, -half, 0.0]]), ((0, 1),))


def seat_center(seat: str, array_center: tuple[float, float, float] = ARRAY_CENTER) -> Location3D:
    """Array-frame location of a seat region centre at the nominal head height."""
    try:
        azimuth, reach = _SEATS[seat]
    except KeyError:
        raise ConfigurationError(f"Unknown seat {seat!r}; expected one of {sorted(_SEATS)}") from None
    az = math.radians(azimuth)
    return Location3D.from_cartesian(
        (reach * math.cos(az), reach * math.sin(az), HEAD_HEIGHT - array_center[2])
    )


def seat_region(
    seat: str,
    half_extents: tuple[float, float, float] = REGION_HALF_EXTENTS,
    array_center: tuple[float, float, float] = ARRAY_CENTER,
) -> RegionBox:
    """Candidate region of a seat."""
    return RegionBox(seat_center(seat, array_center), half_extents)


def condition_seats(condition: str) -> list[str]:
    """Seats speaking in a speaker-mix condition, target first (``S1+3`` -> S1, S3)."""
    parts = condition.split("+")
    if not parts or parts[0] not in _SEATS:
        raise ConfigurationError(f"Malformed speaker-mix condition {condition!r}")
    seats = [parts[0]] + [f"S{p.lstrip('S')}" for p in parts[1:]]
    for seat in seats:
        if seat not in _SEATS:
            raise ConfigurationError(f"Unknown seat {seat!r} in condition {condition!r}")
    return seats


@dataclass(frozen=True)
class SceneConfig:
    """Scene-generation document, usually read from JSON.

    Either ``sources`` lists explicit sources used for every scene, or scenes
    are planned from the seat presets cycling through ``conditions``.
    """

    room_dims: tuple[float, float, float] = CAR_DIMS
    t60_range: tuple[float, float] = (0.05, 0.3)
    max_order: int = 20
    array: MicArray = field(default_factory=car_array)
    array_center: tuple[float, float, float] = ARRAY_CENTER
    fs: int = 16000
    duration: float = 4.0
    n_scenes: int = 1
    conditions: tuple[str, ...] = ("S1+3",)
    sir_range: tuple[float, float] = SIR_RANGE_DB
    snr_range: tuple[float, float] = SNR_RANGE_DB
    n_noises: int = 3
    region_half_extents: tuple[float, float, float] = REGION_HALF_EXTENTS
    perturb: bool = True
    signals: Mapping[str, str] = field(default_factory=dict)
    sources: tuple[SourceSpec, ...] = ()
    regions: Mapping[str, RegionBox] = field(default_factory=dict)
    sir_db: float = 0.0
    snr_db: float = 20.0
    seed: int = 0
    base_dir: Path = Path(".")

    def __post_init__(self) -> None:
        """Validate ranges and condition names."""
        if self.n_scenes < 1:
            raise ConfigurationError(f"n_scenes must be >= 1, got {self.n_scenes}")
        if self.duration * self.fs < 512:
            raise ConfigurationError(f"Duration {self.duration} s is shorter than one frame")
        for low, high, name, bounds in (
            (*self.sir_range, "sir_range", SIR_RANGE_DB),
            (*self.snr_range, "snr_range", SNR_RANGE_DB),
        ):
            if not bounds[0] <= low <= high <= bounds[1]:
                raise ConfigurationError(f"{name} ({low}, {high}) outside {bounds}")
        if not 0.0 <= self.t60_range[0] <= self.t60_range[1] <= 1.0:
            raise ConfigurationError(f"t60_range {self.t60_range} outside [0, 1] s")
        if not self.sources:
            for condition in self.conditions:
                condition_seats(condition)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path = Path(".")) -> SceneConfig:
        """Build from the JSON document schema described in the README."""
        room = data.get("room", {})
        array_data = data.get("array", {})
        array = MicArray.from_dict(array_data) if "positions" in array_data else car_array()
        t60 = room.get("t60_range", room.get("t60", (0.05, 0.3)))
        t60_range = (float(t60), float(t60)) if isinstance(t60, (int, float)) else tuple(t60)
        conditions = data.get("conditions", data.get("condition", ("S1+3",)))
        if isinstance(conditions, str):
            conditions = (conditions,)
        try:
            return cls(
                room_dims=tuple(room.get("dims", CAR_DIMS)),  # type: ignore[arg-type]
                t60_range=t60_range,  # type: ignore[arg-type]
                max_order=int(room.get("max_order", 20)),
                array=array,
                array_center=tuple(array_data.get("center", ARRAY_CENTER)),  # type: ignore[arg-type]
                fs=int(data.get("fs", 16000)),
                duration=float(data.get("duration", 4.0)),
                n_scenes=int(data.get("n_scenes", 1)),
                conditions=tuple(conditions),
                sir_range=tuple(data.get("sir_range", SIR_RANGE_DB)),  # type: ignore[arg-type]
                snr_range=tuple(data.get("snr_range", SNR_RANGE_DB)),  # type: ignore[arg-type]
                n_noises=int(data.get("n_noises", 3)),
                region_half_extents=tuple(
                    data.get("region_half_extents", REGION_HALF_EXTENTS)
                ),  # type: ignore[arg-type]
                perturb=bool(data.get("perturb", True)),
                signals=dict(data.get("signals", {})),
                sources=tuple(SourceSpec.from_dict(s) for s in data.get("sources", ())),
                regions={
                    name: RegionBox.from_dict(box)
                    for name, box in data.get("regions", {}).items()
                },
                sir_db=float(data.get("sir_db", 0.0)),
                snr_db=float(data.get("snr_db", 20.0)),
                seed=int(data.get("seed", 0)),
                base_dir=base_dir,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"Invalid scene config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> SceneConfig:
        """Read a scene-config document; relative signal paths resolve against its folder."""
        path = Path(path)
        return cls.from_dict(read_json(path), base_dir=path.parent)


@dataclass(frozen=True, eq=False)
class PlannedScene:
    """A scene ready to render, with the candidate region of its target."""

    scene_id: str
    condition: str
    spec: SceneSpec
    region: RegionBox
    duration: float
    fs: int


def _random_noise_location(
    config: SceneConfig, rng: np.random.Generator, margin: float = 0.1
) -> Location3D:
    dims = np.asarray(config.room_dims)
    center = np.asarray(config.array_center)
    while True:
        point = rng.uniform(margin, dims - margin)
        if np.linalg.norm(point - center) > 0.3:
            return Location3D.from_cartesian(point - center)


def _speaker_location(
    config: SceneConfig, region: RegionBox, room: Room, rng: np.random.Generator
) -> Location3D:
    if config.perturb:
        for _ in range(100):
            loc = region.sample(rng)
            if room.contains(np.asarray(config.array_center) + loc.to_cartesian()):
                return loc
        raise DegenerateSceneError(f"Region around {region.center} lies outside the room")
    # seat centre at a random sitting height
    xyz = region.center.to_cartesian()
    xyz[2] = rng.uniform(*SITTING_HEIGHT_RANGE) - config.array_center[2]
    return Location3D.from_cartesian(xyz)


def plan_scene(config: SceneConfig, index: int) -> PlannedScene:
    """Draw room, levels and source positions of scene ``index``."""
    rng = scene_rng(config.seed, index)
    room = Room(
        config.room_dims,
        float(rng.uniform(*config.t60_range)),
        config.max_order,
    )
    scene_seed = int(rng.integers(2**31))
    if config.sources:
        sources = list(config.sources)
        target = next((s for s in sources if s.role is Role.TARGET), None)
        if target is None:
            raise ConfigurationError("Explicit sources need a target")
        region = config.regions.get(
            target.region, RegionBox(target.location, config.region_half_extents)
        )
        spec = SceneSpec(
            room, config.array, config.array_center, tuple(sources),
            config.sir_db, config.snr_db, scene_seed,
        )
        return PlannedScene(
            f"scene_{index:04d}", target.region, spec, region, config.duration, config.fs
        )

    condition = config.conditions[index % len(config.conditions)]
    seats = condition_seats(condition)
    regions = {
        seat: seat_region(seat, config.region_half_extents, config.array_center) for seat in seats
    }
    sources = []
    for k, seat in enumerate(seats):
        sources.append(
            SourceSpec(
                seat,
                _speaker_location(config, regions[seat], room, rng),
                config.signals.get(seat, f"{BUILTIN_SPEECH}:{k}"),
                Role.TARGET if k == 0 else Role.INTERFERER,
            )
        )
    for k in range(config.n_noises):
        sources.append(
            SourceSpec(
                f"noise{k}",
                _random_noise_location(config, rng),
                f"{BUILTIN_PINK}:{k}",
                Role.NOISE,
            )
        )
    spec = SceneSpec(
        room,
        config.array,
        config.array_center,
        tuple(sources),
        float(rng.uniform(*config.sir_range)),
        float(rng.uniform(*config.snr_range)),
        scene_seed,
    )
    return PlannedScene(
        f"scene_{index:04d}", condition, spec, regions[seats[0]], config.duration, config.fs
    )


def load_signals(
    spec: SceneSpec, n_samples: int, fs: int = 16000, base_dir: Path = Path(".")
) -> dict[str, np.ndarray]:
    """Resolve every source's signal reference to a mono waveform.

    ``builtin:speech:<k>`` and ``builtin:pink:<k>`` are generated from the scene
    seed; anything else is a WAV path (first channel used).
    """
    signals: dict[str, np.ndarray] = {}
    for source in spec.sources:
        ref = source.signal
        if ref in signals:
            continue
        if ref.startswith(BUILTIN_SPEECH) or ref.startswith(BUILTIN_PINK):
            stream = int(ref.rsplit(":", 1)[-1]) if ref.count(":") == 2 else 0
            kind = 0 if ref.startswith(BUILTIN_SPEECH) else 1
            rng = np.random.default_rng([spec.seed, kind, stream])
            if kind == 0:
                signals[ref] = synthetic_speech(n_samples, rng, fs)
            else:
                signals[ref] = 0.1 * pink_noise(n_samples, rng)
            continue
        path = Path(ref) if Path(ref).is_absolute() else base_dir / ref
        if not path.exists():
            raise AudioIOError(f"Signal {ref!r} for {source.region} not found at {path}")
        signals[ref] = read_wav(path, fs)[:, 0]
    return signals


def render_planned(planned: PlannedScene, base_dir: Path = Path(".")) -> RenderedScene:
    """Load the signals of a planned scene and render it."""
    n_samples = int(round(planned.duration * planned.fs))
    signals = load_signals(planned.spec, n_samples, planned.fs, base_dir)
    return render_scene(planned.spec, signals, fs=planned.fs)


def write_scene_dir(
    out_dir: str | Path, planned: PlannedScene, rendered: RenderedScene
) -> Path:
    """Write mixture, stems and manifest; all audio shares one peak normalisation."""
    out_dir = Path(out_dir)
    peak = float(np.max(np.abs(rendered.mixture)))
    for stem in rendered.stems:
        peak = max(peak, float(np.max(np.abs(stem))))
    level = PEAK_LEVEL / peak if peak > 0.0 else 1.0
    write_wav(out_dir / MIXTURE, level * rendered.mixture, planned.fs)
    stem_files = []
    for index, (source, stem) in enumerate(zip(planned.spec.sources, rendered.stems)):
        name = f"stems/{index:02d}_{source.role.value}_{source.region}.wav"
        write_wav(out_dir / name, level * stem, planned.fs)
        stem_files.append(name)
    write_json(
        out_dir / MANIFEST,
        {
            "scene_id": planned.scene_id,
            "condition": planned.condition,
            "fs": planned.fs,
            "duration": planned.duration,
            "level": level,
            "mixture": MIXTURE,
            "stems": stem_files,
            "gains": rendered.gains,
            "region": planned.region.to_dict(),
            "spec": planned.spec.to_dict(),
        },
    )
    logger.info("Wrote %s (%s)", out_dir, planned.condition)
    return out_dir


@dataclass(frozen=True, eq=False)
class LoadedScene:
    """A scene directory read back from disk."""

    path: Path
    scene_id: str
    condition: str
    fs: int
    spec: SceneSpec
    region: RegionBox
    mixture: np.ndarray
    stems: list[np.ndarray]

    @property
    def scene_index(self) -> int:
        """Trailing number of the scene id (``scene_0007`` -> 7), 0 when there is none."""
        match = re.search(r"(\d+)$", self.scene_id)
        return int(match.group(1)) if match else 0

    @property
    def target_index(self) -> int:
        """Position of the target among the sources."""
        return self.spec.sources.index(self.spec.target)

    @property
    def target_image(self) -> np.ndarray:
        """Reverberant target at every microphone."""
        return self.stems[self.target_index]

    @property
    def other_images(self) -> list[np.ndarray]:
        """Images of the interferers and noises."""
        return [s for i, s in enumerate(self.stems) if i != self.target_index]

    @property
    def true_location(self) -> Location3D:
        """Ground-truth target location (only the ``sf-true`` mode may use it)."""
        return self.spec.target.location


def load_scene_dir(path: str | Path) -> LoadedScene:
    """Read a directory written by :func:`write_scene_dir`."""
    path = Path(path)
    manifest = read_json(path / MANIFEST)
    try:
        fs = int(manifest["fs"])
        spec = SceneSpec.from_dict(manifest["spec"])
        region = RegionBox.from_dict(manifest["region"])
        stems = [read_wav(path / name, fs) for name in manifest["stems"]]
        mixture = read_wav(path / manifest.get("mixture", MIXTURE), fs)
    except KeyError as exc:
        raise AudioIOError(f"{path / MANIFEST} is missing {exc}") from exc
    return LoadedScene(
        path,
        str(manifest.get("scene_id", path.name)),
        str(manifest.get("condition", "")),
        fs,
        spec,
        region,
        mixture,
        stems,
    )
