"""Coordinate conventions, microphone arrays, path lengths and candidate regions.

The array lies in its own Cartesian frame with the array centre at the origin.
Azimuth is measured from +x in the horizontal plane, elevation from the
horizontal plane, so a location maps to the unit direction
``(cos(el) cos(az), cos(el) sin(az), sin(el))`` scaled by its distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from beam3d.errors import (
    ArgumentError,
    InvalidLocationError,
    InvalidRegionError,
    MicIndexError,
    ShapeError,
)

SPEED_OF_SOUND = 343.0
SAMPLE_RATE = 16000
DUAL_MIC_SPACING = 0.118

_TWO_PI = 2.0 * math.pi


def _normalize_azimuth(azimuth: float) -> float:
    wrapped = math.fmod(azimuth, _TWO_PI)
    if wrapped < 0.0:
        wrapped += _TWO_PI
    # fmod of a tiny negative number can round up to exactly 2*pi
    return 0.0 if wrapped >= _TWO_PI else wrapped


@dataclass(frozen=True)
class Location3D:
    """Source position relative to the array centre.

    Attributes:
        azimuth: Radians, normalised to [0, 2*pi) on construction.
        elevation: Radians in [-pi/2, pi/2].
        distance: Metres from the array centre, strictly positive.
    """

    azimuth: float
    elevation: float
    distance: float

    def __post_init__(self) -> None:
        """Validate the fields and normalise the azimuth."""
        values = (self.azimuth, self.elevation, self.distance)
        if not all(math.isfinite(v) for v in values):
            raise InvalidLocationError(f"Non-finite location {values}")
        if self.distance <= 0.0:
            raise InvalidLocationError(
                f"Distance must be positive, got {self.distance}"
            )
        if abs(self.elevation) > math.pi / 2:
            raise InvalidLocationError(
                f"Elevation must lie in [-pi/2, pi/2], got {self.elevation}"
            )
        object.__setattr__(self, "azimuth", _normalize_azimuth(self.azimuth))

    @classmethod
    def from_degrees(
        cls, azimuth: float, elevation: float, distance: float
    ) -> Location3D:
        """Build a location from angles given in degrees."""
        return cls(math.radians(azimuth), math.radians(elevation), distance)

    @classmethod
    def from_cartesian(cls, xyz: Sequence[float] | np.ndarray) -> Location3D:
        """Convert an array-frame Cartesian point (metres) to a location."""
        x, y, z = (float(v) for v in xyz)
        distance = math.sqrt(x * x + y * y + z * z)
        if distance <= 0.0:
            raise InvalidLocationError("The array centre has no direction")
        elevation = math.asin(max(-1.0, min(1.0, z / distance)))
        return cls(math.atan2(y, x), elevation, distance)

    def direction(self) -> np.ndarray:
        """Return the unit vector pointing from the array centre to the source."""
        cos_el = math.cos(self.elevation)
        return np.array(
            [
                cos_el * math.cos(self.azimuth),
                cos_el * math.sin(self.azimuth),
                math.sin(self.elevation),
            ]
        )

    def to_cartesian(self) -> np.ndarray:
        """Return the array-frame Cartesian image of the location in metres."""
        return self.distance * self.direction()

    def to_dict(self) -> dict[str, float]:
        """Serialise to plain degrees/metres for JSON manifests."""
        return {
            "azimuth_deg": math.degrees(self.azimuth),
            "elevation_deg": math.degrees(self.elevation),
            "distance_m": self.distance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, float]) -> Location3D:
        """Inverse of :meth:`to_dict`."""
        return cls.from_degrees(
            data["azimuth_deg"], data["elevation_deg"], data["distance_m"]
        )


@dataclass(frozen=True, eq=False)
class MicArray:
    """Microphone positions and the ordered pairs used for phase features.

    Positions are re-centred on construction so the array centre is the origin.
    """

    positions: np.ndarray
    pairs: tuple[tuple[int, int], ...] = ((0, 1),)

    def __post_init__(self) -> None:
        """Validate the geometry, centre it and freeze the position buffer."""
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ShapeError(f"Positions must have shape (M, 3), got {positions.shape}")
        n_mics = positions.shape[0]
        if n_mics < 2:
            raise ShapeError(f"An array needs at least two microphones, got {n_mics}")
        gaps = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
        if np.any(gaps[~np.eye(n_mics, dtype=bool)] == 0.0):
            raise ShapeError("Microphone positions must be distinct")
        pairs = tuple((int(p1), int(p2)) for p1, p2 in self.pairs)
        if not pairs:
            raise ShapeError("At least one microphone pair is required")
        for p1, p2 in pairs:
            if not (0 <= p1 < n_mics and 0 <= p2 < n_mics) or p1 == p2:
                raise MicIndexError(f"Invalid microphone pair ({p1}, {p2})")
        positions = positions - positions.mean(axis=0)
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def dual(cls, spacing: float = DUAL_MIC_SPACING) -> MicArray:
        """Two microphones on the x-axis, ``spacing`` metres apart."""
        half = spacing / 2.0
        return cls(np.array([[half, 0.0, 0.0], [-half, 0.0, 0.0]]), ((0, 1),))

    @property
    def n_mics(self) -> int:
        """Number of microphones M."""
        return int(self.positions.shape[0])

    @property
    def n_pairs(self) -> int:
        """Number of microphone pairs P."""
        return len(self.pairs)

    def pair(self, pair_index: int) -> tuple[int, int]:
        """Return the microphone indices of a pair, checking the index."""
        if not 0 <= pair_index < len(self.pairs):
            raise MicIndexError(
                f"Pair index {pair_index} out of range for {len(self.pairs)} pairs"
            )
        return self.pairs[pair_index]

    def to_dict(self) -> dict[str, list]:
        """Serialise to JSON-friendly lists."""
        return {
            "positions": self.positions.tolist(),
            "pairs": [list(p) for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> MicArray:
        """Inverse of :meth:`to_dict`."""
        pairs = tuple(tuple(p) for p in data.get("pairs", [[0, 1]]))
        return cls(np.asarray(data["positions"], dtype=float), pairs)  # type: ignore[arg-type]


def source_to_mic_distance(loc: Location3D, array: MicArray, mic_index: int) -> float:
    """Return the direct-path length from ``loc`` to one microphone in metres.

    The Euclidean norm equals the law-of-cosines form
    ``d_p^2 = d_op^2 + d^2 - 2 d_op d cos(alpha)`` for any array layout.
    """
    if not 0 <= mic_index < array.n_mics:
        raise MicIndexError(
            f"Microphone index {mic_index} out of range for {array.n_mics} mics"
        )
    return float(np.linalg.norm(loc.to_cartesian() - array.positions[mic_index]))


def mic_distances(loc: Location3D, array: MicArray) -> np.ndarray:
    """Return the direct-path lengths to every microphone, shape (M,)."""
    return np.linalg.norm(loc.to_cartesian()[None, :] - array.positions, axis=-1)


def pure_delay(
    loc: Location3D,
    array: MicArray,
    pair_index: int = 0,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
) -> float:
    """Return the fractional sample delay ``(d_p1 - d_p2) * fs / c`` of a pair."""
    if fs <= 0 or c <= 0:
        raise ArgumentError(f"fs and c must be positive, got fs={fs}, c={c}")
    p1, p2 = array.pair(pair_index)
    d1 = source_to_mic_distance(loc, array, p1)
    d2 = source_to_mic_distance(loc, array, p2)
    return (d1 - d2) * fs / c


def far_field_delay(
    azimuth: float,
    elevation: float,
    array: MicArray,
    pair_index: int = 0,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
) -> float:
    """Plane-wave limit of :func:`pure_delay` for a source infinitely far away."""
    p1, p2 = array.pair(pair_index)
    cos_el = math.cos(elevation)
    unit = np.array(
        [cos_el * math.cos(azimuth), cos_el * math.sin(azimuth), math.sin(elevation)]
    )
    return -float((array.positions[p1] - array.positions[p2]) @ unit) * fs / c


@dataclass(frozen=True)
class RegionBox:
    """Axis-aligned box around the Cartesian image of a centre location.

    Attributes:
        center: The given (estimated) location l_c.
        half_extents: Box half sizes (dx, dy, dz) in metres, all positive.
    """

    center: Location3D
    half_extents: tuple[float, float, float] = field(default=(0.2, 0.25, 0.1))

    def __post_init__(self) -> None:
        """Reject degenerate boxes and boxes with a vertex at the array centre."""
        extents = tuple(float(v) for v in self.half_extents)
        if len(extents) != 3 or not all(v > 0.0 for v in extents):
            raise InvalidRegionError(
                f"Half extents must be three positive numbers, got {self.half_extents}"
            )
        object.__setattr__(self, "half_extents", extents)
        for corner in self.corner_points():
            if not np.linalg.norm(corner) > 0.0:
                raise InvalidRegionError(
                    f"Region around {self.center} has a vertex at the array centre"
                )

    def corner_points(self) -> np.ndarray:
        """Return the eight Cartesian corners, shape (8, 3).

        Corner ``k`` takes ``+h`` on axis ``i`` when bit ``i`` of ``k`` is set
        and ``-h`` otherwise.
        """
        codes = np.arange(8)[:, None]
        signs = np.where((codes >> np.arange(3)) & 1, 1.0, -1.0)
        return self.center.to_cartesian()[None, :] + signs * np.asarray(self.half_extents)

    def contains(self, xyz: Sequence[float] | np.ndarray) -> bool:
        """Return whether a Cartesian point lies inside the closed box."""
        offset = np.abs(np.asarray(xyz, dtype=float) - self.center.to_cartesian())
        return bool(np.all(offset <= np.asarray(self.half_extents) + 1e-12))

    def sample(self, rng: np.random.Generator) -> Location3D:
        """Draw a location uniformly from the box volume."""
        offset = rng.uniform(-1.0, 1.0, size=3) * np.asarray(self.half_extents)
        return Location3D.from_cartesian(self.center.to_cartesian() + offset)

    def to_dict(self) -> dict:
        """Serialise to a JSON-friendly mapping."""
        return {"center": self.center.to_dict(), "half_extents": list(self.half_extents)}

    @classmethod
    def from_dict(cls, data: dict) -> RegionBox:
        """Inverse of :meth:`to_dict`."""
        extents = tuple(float(v) for v in data["half_extents"])
        return cls(Location3D.from_dict(data["center"]), extents)  # type: ignore[arg-type]


def region_vertices(box: RegionBox) -> list[Location3D]:
    """Return the 8 box corners followed by the centre (L = 9 candidates)."""
    vertices = []
    for index, corner in enumerate(box.corner_points()):
        if not np.linalg.norm(corner) > 0.0:
            raise InvalidRegionError(f"Vertex {index} coincides with the array centre")
        vertices.append(Location3D.from_cartesian(corner))
    vertices.append(box.center)
    return vertices
