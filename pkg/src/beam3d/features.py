"""Spectral, phase, 3D spatial and 3D region features.

The spatial feature scores, per time-frequency bin, how well the observed
inter-channel phase difference (IPD) matches the theoretical phase difference
(TPD) of a hypothesised location. The region feature mixes the spatial
features of a region's centre and vertices with a posterior over those
candidates.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.special import softmax

from beam3d.errors import (
    ArgumentError,
    AudioIOError,
    FeatureKindError,
    ShapeError,
)
from beam3d.geometry import (
    SPEED_OF_SOUND,
    Location3D,
    MicArray,
    far_field_delay,
    pure_delay,
)
from beam3d.spectral import Spectrogram

logger = logging.getLogger(__name__)

LPS_FLOOR = 1e-10
HIDDEN_SIZE = 40
WEIGHTS_MAGIC = b"BW3D"

PosteriorMode = Literal["uniform", "heuristic", "mlp"]


class FeatureKind(str, enum.Enum):
    """What a :class:`FeatureMap` holds."""

    LPS = "lps"
    IPD = "ipd"
    SF = "sf"
    RF = "rf"
    MASK = "mask"


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Real ``[frame, bin]`` map.

    Value ranges: SF and RF lie in [-P, P] for P microphone pairs, IPD in
    (-pi, pi], MASK in [0, 1]; LPS is unbounded.
    """

    data: np.ndarray
    kind: FeatureKind
    n_pairs: int = 1

    def __post_init__(self) -> None:
        """Require a two dimensional map."""
        if self.data.ndim != 2:
            raise ShapeError(f"Feature maps are [frame, bin], got {self.data.shape}")

    @property
    def value_range(self) -> tuple[float, float]:
        """Closed bounds documented for this kind."""
        if self.kind in (FeatureKind.SF, FeatureKind.RF):
            return (-float(self.n_pairs), float(self.n_pairs))
        if self.kind is FeatureKind.IPD:
            return (-np.pi, np.pi)
        if self.kind is FeatureKind.MASK:
            return (0.0, 1.0)
        return (-np.inf, np.inf)

    @property
    def shape(self) -> tuple[int, int]:
        """``(frames, bins)``."""
        return (int(self.data.shape[0]), int(self.data.shape[1]))


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - phase, 2.0 * np.pi)


def lps(spec: Spectrogram, ref_channel: int = 0) -> FeatureMap:
    """Log power spectrum ``log(|Y_ref|^2 + 1e-10)`` of the reference channel."""
    power = np.abs(spec.channel(ref_channel)) ** 2
    return FeatureMap(np.log(power + LPS_FLOOR), FeatureKind.LPS)


def ipd(spec: Spectrogram, pair: tuple[int, int]) -> FeatureMap:
    """Observed phase difference ``angle(Y_p1) - angle(Y_p2)``, wrapped."""
    p1, p2 = pair
    diff = np.angle(spec.channel(p1)) - np.angle(spec.channel(p2))
    return FeatureMap(wrap_phase(diff), FeatureKind.IPD)


def tpd(
    loc: Location3D,
    array: MicArray,
    pair_index: int = 0,
    n_fft: int = 512,
    fs: float = 16000,
    c: float = SPEED_OF_SOUND,
    far_field: bool = False,
) -> np.ndarray:
    """Theoretical phase difference per bin, ``2 pi (k / n_fft) tau`` (not wrapped).

    With ``far_field`` the delay is the plane-wave delay of the location's
    direction and the distance cue is dropped.
    """
    if far_field:
        tau = far_field_delay(loc.azimuth, loc.elevation, array, pair_index, fs, c)
    else:
        tau = pure_delay(loc, array, pair_index, fs, c)
    bins = np.arange(n_fft // 2 + 1)
    return 2.0 * np.pi * bins / n_fft * tau


def spatial_feature(
    spec: Spectrogram,
    loc: Location3D,
    array: MicArray,
    pairs: Sequence[int] | None = None,
    c: float = SPEED_OF_SOUND,
    far_field: bool = False,
) -> FeatureMap:
    """Spatial feature ``sum_p cos(IPD_p - TPD_p(loc))`` over the given pair indices."""
    pair_indices = list(range(array.n_pairs)) if pairs is None else list(pairs)
    if not pair_indices:
        raise ArgumentError("The spatial feature needs at least one microphone pair")
    total = np.zeros((spec.n_frames, spec.n_bins))
    for index in pair_indices:
        observed = ipd(spec, array.pair(index)).data
        expected = tpd(loc, array, index, spec.n_fft, spec.fs, c, far_field)
        total += np.cos(observed - expected[None, :])
    return FeatureMap(total, FeatureKind.SF, n_pairs=len(pair_indices))


@dataclass(frozen=True, eq=False)
class PosteriorWeights:
    """Parameters of the two-layer attention network.

    ``w1`` maps the per-frame stack of L spatial features (``L * F`` inputs)
    to ``H`` hidden units, ``w2`` maps those to ``L`` candidate logits.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        """Check the layer shapes chain together and hold finite values."""
        hidden = self.b1.shape[0]
        n_candidates = self.b2.shape[0]
        if (
            self.w1.ndim != 2
            or self.w1.shape[1] != hidden
            or self.w2.shape != (hidden, n_candidates)
            or self.w1.shape[0] % n_candidates
        ):
            raise ShapeError(
                "Inconsistent attention weights: "
                f"w1 {self.w1.shape}, b1 {self.b1.shape}, "
                f"w2 {self.w2.shape}, b2 {self.b2.shape}"
            )
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ArgumentError(f"Attention weights {name} contain non-finite values")

    @property
    def n_candidates(self) -> int:
        """Number of candidate locations L."""
        return int(self.b2.shape[0])

    @property
    def n_bins(self) -> int:
        """Number of frequency bins F expected per candidate."""
        return int(self.w1.shape[0] // self.n_candidates)

    @property
    def hidden_size(self) -> int:
        """Hidden layer width H."""
        return int(self.b1.shape[0])

    @classmethod
    def random(
        cls,
        n_candidates: int,
        n_bins: int,
        rng: np.random.Generator,
        hidden_size: int = HIDDEN_SIZE,
    ) -> PosteriorWeights:
        """Glorot-scaled random weights, useful for tests and smoke runs."""
        fan_in = n_candidates * n_bins
        return cls(
            rng.normal(0.0, np.sqrt(2.0 / (fan_in + hidden_size)), (fan_in, hidden_size)),
            np.zeros(hidden_size),
            rng.normal(0.0, np.sqrt(2.0 / (hidden_size + n_candidates)), (hidden_size, n_candidates)),
            np.zeros(n_candidates),
        )

    @classmethod
    def load(cls, path: str | Path) -> PosteriorWeights:
        """Read the ``BW3D`` format: 16-byte header then little-endian float32 arrays.

        The header is the magic ``BW3D`` followed by u32 L, F, H. The body holds
        w1 (L*F x H), b1 (H), w2 (H x L) and b2 (L), each row-major.
        """
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise AudioIOError(f"Cannot read attention weights {path}: {exc}") from exc
        if len(raw) < 16 or raw[:4] != WEIGHTS_MAGIC:
            raise AudioIOError(f"{path} is not a BW3D weights file")
        n_candidates, n_bins, hidden = struct.unpack("<III", raw[4:16])
        sizes = [
            n_candidates * n_bins * hidden,
            hidden,
            hidden * n_candidates,
            n_candidates,
        ]
        body = np.frombuffer(raw, dtype="<f4", offset=16)
        if body.size != sum(sizes):
            raise AudioIOError(
                f"{path}: expected {sum(sizes)} weights for L={n_candidates}, "
                f"F={n_bins}, H={hidden}, found {body.size}"
            )
        parts = np.split(body.astype(float), np.cumsum(sizes)[:-1])
        return cls(
            parts[0].reshape(n_candidates * n_bins, hidden),
            parts[1],
            parts[2].reshape(hidden, n_candidates),
            parts[3],
        )

    def save(self, path: str | Path) -> None:
        """Write the weights in the ``BW3D`` format read by :meth:`load`."""
        header = WEIGHTS_MAGIC + struct.pack(
            "<III", self.n_candidates, self.n_bins, self.hidden_size
        )
        body = np.concatenate(
            [self.w1.ravel(), self.b1.ravel(), self.w2.ravel(), self.b2.ravel()]
        ).astype("<f4")
        Path(path).write_bytes(header + body.tobytes())

    def forward(self, stacked: np.ndarray) -> np.ndarray:
        """Per-frame candidate probabilities for a ``[frame, L * F]`` input."""
        hidden = np.maximum(stacked @ self.w1 + self.b1, 0.0)
        return softmax(hidden @ self.w2 + self.b2, axis=-1)


def _check_stack(sf_stack: Sequence[FeatureMap]) -> tuple[int, int]:
    if not sf_stack:
        raise ShapeError("At least one candidate spatial feature is required")
    shape = sf_stack[0].shape
    for index, feature in enumerate(sf_stack):
        if feature.shape != shape:
            raise ShapeError(
                f"Candidate {index} has shape {feature.shape}, expected {shape}"
            )
    return shape


def attention_posterior(
    sf_stack: Sequence[FeatureMap],
    mode: PosteriorMode = "uniform",
    *,
    beta: float = 5.0,
    weights: PosteriorWeights | None = None,
) -> np.ndarray:
    """Posterior over the L candidate locations.

    Args:
        sf_stack: Spatial features of the candidates, all the same shape.
        mode: ``uniform`` gives 1/L each; ``heuristic`` is a softmax over
            ``beta`` times each map's time-frequency mean; ``mlp`` runs the
            attention network on every frame and averages the per-frame
            distributions.
        beta: Sharpness of the heuristic posterior.
        weights: Network parameters for ``mlp`` mode.

    Returns:
        Non-negative vector of length L summing to one.
    """
    n_frames, n_bins = _check_stack(sf_stack)
    n_candidates = len(sf_stack)
    if mode == "uniform":
        return np.full(n_candidates, 1.0 / n_candidates)
    if mode == "heuristic":
        means = np.array([feature.data.mean() for feature in sf_stack])
        return softmax(beta * means)
    if mode == "mlp":
        if weights is None:
            raise ArgumentError("mlp posterior requires attention weights")
        if weights.n_candidates != n_candidates or weights.n_bins != n_bins:
            raise ShapeError(
                f"Attention weights expect L={weights.n_candidates}, F={weights.n_bins}; "
                f"got L={n_candidates}, F={n_bins}"
            )
        # [frame, candidate * bin], candidate-major like the weight layout
        stacked = np.stack([feature.data for feature in sf_stack], axis=1)
        per_frame = weights.forward(stacked.reshape(n_frames, n_candidates * n_bins))
        posterior = per_frame.mean(axis=0)
        return posterior / posterior.sum()
    raise ArgumentError(f"Unknown posterior mode {mode!r}")


def region_feature(sf_stack: Sequence[FeatureMap], posterior: np.ndarray) -> FeatureMap:
    """Region feature ``sum_i p_i SF(l_i)``."""
    _check_stack(sf_stack)
    posterior = np.asarray(posterior, dtype=float)
    if posterior.shape != (len(sf_stack),):
        raise ShapeError(
            f"Posterior of shape {posterior.shape} for {len(sf_stack)} candidates"
        )
    if not np.isclose(posterior.sum(), 1.0, atol=1e-6):
        logger.warning("Posterior sums to %.6f, not 1", posterior.sum())
    stacked = np.stack([feature.data for feature in sf_stack])
    mixed = np.tensordot(posterior, stacked, axes=1)
    return FeatureMap(mixed, FeatureKind.RF, n_pairs=sf_stack[0].n_pairs)


def feature_mask(feature: FeatureMap) -> FeatureMap:
    """Map a spatial or region feature affinely onto a [0, 1] mask."""
    if feature.kind not in (FeatureKind.SF, FeatureKind.RF):
        raise FeatureKindError(f"Cannot derive a mask from a {feature.kind.value} map")
    mask = np.clip((feature.data / feature.n_pairs + 1.0) / 2.0, 0.0, 1.0)
    return FeatureMap(mask, FeatureKind.MASK)


def complementary_mask(mask: FeatureMap) -> FeatureMap:
    """Interferer mask ``1 - M``."""
    if mask.kind is not FeatureKind.MASK:
        raise FeatureKindError(f"Expected a mask, got a {mask.kind.value} map")
    return FeatureMap(1.0 - mask.data, FeatureKind.MASK)
