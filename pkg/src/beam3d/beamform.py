"""Mask-based spatial statistics and closed-form beamformers.

Shape convention: spectrogram data is ``[frame, bin, channel]``; utterance SCMs
are ``[bin, M, M]`` and framewise SCMs ``[frame, bin, M, M]``; beamforming
weights are ``[bin, M]`` or ``[frame, bin, M]``.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from beam3d.errors import ArgumentError, NumericalError, ShapeError
from beam3d.features import FeatureKind, FeatureMap
from beam3d.geometry import (
    SAMPLE_RATE,
    SPEED_OF_SOUND,
    Location3D,
    MicArray,
    mic_distances,
)
from beam3d.spectral import Spectrogram

logger = logging.getLogger(__name__)

SCM_FLOOR = 1e-10
LOADING = 1e-6


@dataclass(frozen=True, eq=False)
class SCM:
    """Spatial covariance matrices, per bin or per (frame, bin)."""

    matrices: np.ndarray
    framewise: bool = False

    def __post_init__(self) -> None:
        """Check the matrix stack layout."""
        expected = 4 if self.framewise else 3
        m = self.matrices
        if m.ndim != expected or m.shape[-1] != m.shape[-2]:
            raise ShapeError(
                f"{'Framewise' if self.framewise else 'Utterance'} SCMs must have "
                f"{expected} dims ending in M x M, got {m.shape}"
            )

    @property
    def n_channels(self) -> int:
        """Matrix size M."""
        return int(self.matrices.shape[-1])

    def trace(self) -> np.ndarray:
        """Real trace of every matrix."""
        return np.real(np.trace(self.matrices, axis1=-2, axis2=-1))


@dataclass(frozen=True, eq=False)
class BeamWeights:
    """Complex beamforming coefficients, per bin or per (frame, bin)."""

    coeffs: np.ndarray
    ref_channel: int = 0

    def __post_init__(self) -> None:
        """Require a ``[bin, M]`` or ``[frame, bin, M]`` array of finite values."""
        if self.coeffs.ndim not in (2, 3):
            raise ShapeError(f"Weights must be [bin, M] or [frame, bin, M], got {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise NumericalError("Beamforming weights contain non-finite values")

    @property
    def framewise(self) -> bool:
        """Whether the weights vary over frames."""
        return self.coeffs.ndim == 3


def _magnitudes(spec: Spectrogram | np.ndarray, ref_channel: int) -> np.ndarray:
    if isinstance(spec, Spectrogram):
        return np.abs(spec.channel(ref_channel))
    return np.abs(np.asarray(spec))


def oracle_irm(
    target: Spectrogram | np.ndarray,
    *others: Spectrogram | np.ndarray,
    ref_channel: int = 0,
) -> FeatureMap:
    """Ideal ratio mask ``|S| / (|S| + sum |others|)`` at the reference channel.

    Bins where every source is silent get 0. The interferer mask is
    ``complementary_mask`` of the result.
    """
    target_mag = _magnitudes(target, ref_channel)
    total = target_mag.copy()
    for other in others:
        other_mag = _magnitudes(other, ref_channel)
        if other_mag.shape != target_mag.shape:
            raise ShapeError(f"Stem shape {other_mag.shape} != target {target_mag.shape}")
        total = total + other_mag
    mask = np.divide(
        target_mag, total, out=np.zeros_like(target_mag), where=total > 0.0
    )
    return FeatureMap(mask, FeatureKind.MASK)


def _check_mask(spec: Spectrogram, mask: FeatureMap | np.ndarray) -> np.ndarray:
    values = mask.data if isinstance(mask, FeatureMap) else np.asarray(mask, dtype=float)
    if values.shape != (spec.n_frames, spec.n_bins):
        raise ShapeError(
            f"Mask shape {values.shape} does not match spectrogram "
            f"({spec.n_frames}, {spec.n_bins})"
        )
    return values


def masked_scm_framewise(spec: Spectrogram, mask: FeatureMap | np.ndarray) -> SCM:
    """Rank-one SCMs ``(M o Y)(M o Y)^H`` for every time-frequency bin."""
    masked = _check_mask(spec, mask)[..., None] * spec.data
    return SCM(np.einsum("tfm,tfn->tfmn", masked, masked.conj()), framewise=True)


def masked_scm_utterance(
    spec: Spectrogram, mask: FeatureMap | np.ndarray, power: float = 2.0
) -> SCM:
    """Mask-weighted average SCM per bin.

    ``Phi_f = sum_t w YY^H / (sum_t w + eps)`` with ``w = M ** power``.
    """
    weight = _check_mask(spec, mask) ** power
    y = spec.data
    numerator = np.einsum("tf,tfm,tfn->fmn", weight, y, y.conj())
    denominator = weight.sum(axis=0) + SCM_FLOOR
    return SCM(numerator / denominator[:, None, None])


def _loading(phi: np.ndarray) -> np.ndarray:
    """Diagonal loading ``1e-6 tr(Phi) / M`` with a floor for all-zero statistics."""
    n = phi.shape[-1]
    trace = np.real(np.trace(phi, axis1=-2, axis2=-1))
    return np.maximum(LOADING * trace / n, SCM_FLOOR * LOADING)


def _solve_loaded(phi: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(Phi + delta I) X = rhs`` for stacks of M x M systems.

    Two-channel systems use the closed-form inverse.
    """
    n = phi.shape[-1]
    loaded = phi + _loading(phi)[..., None, None] * np.eye(n)
    if n == 2:
        a, b = loaded[..., 0, 0], loaded[..., 0, 1]
        c, d = loaded[..., 1, 0], loaded[..., 1, 1]
        det = a * d - b * c
        singular = np.abs(det) <= np.finfo(float).eps * np.abs(a * d)
        if np.any(singular):
            bins = np.argwhere(singular)[:, -1].tolist()
            raise NumericalError(f"Singular SCM at bins {sorted(set(bins))}", bins)
        inverse = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2)
        inverse = inverse / det[..., None, None]
        return inverse @ rhs
    try:
        return np.linalg.solve(loaded, rhs)
    except np.linalg.LinAlgError:
        bins = [
            int(index[-1])
            for index in np.ndindex(loaded.shape[:-2])
            if np.linalg.matrix_rank(loaded[index]) < n
        ]
        raise NumericalError(f"Singular SCM at bins {bins}", bins) from None


def mvdr_weights(scm_s: SCM, scm_n: SCM, ref_channel: int = 0) -> BeamWeights:
    """Souden MVDR ``(Phi_NN + dI)^-1 Phi_SS / tr(...) e_ref``.

    Utterance SCMs give per-bin weights, framewise SCMs per-frame weights.
    Bins whose target statistics vanish get zero weights.
    """
    if scm_s.matrices.shape != scm_n.matrices.shape:
        raise ShapeError(
            f"Target SCM {scm_s.matrices.shape} != noise SCM {scm_n.matrices.shape}"
        )
    if not 0 <= ref_channel < scm_s.n_channels:
        raise ShapeError(f"Reference channel {ref_channel} out of range")
    ratio = _solve_loaded(scm_n.matrices, scm_s.matrices)
    trace = np.trace(ratio, axis1=-2, axis2=-1)
    degenerate = (scm_s.trace() <= 0.0) | (np.abs(trace) == 0.0)
    if np.any(degenerate):
        logger.warning(
            "Target SCM vanishes in %d of %d bins; using zero weights there",
            int(degenerate.sum()),
            degenerate.size,
        )
    safe = np.where(degenerate, 1.0, trace)
    coeffs = ratio[..., :, ref_channel] / safe[..., None]
    coeffs = np.where(degenerate[..., None], 0.0, coeffs)
    return BeamWeights(coeffs, ref_channel)


def mcwf_weights(
    spec: Spectrogram, target_ref: Spectrogram | np.ndarray, ref_channel: int = 0
) -> BeamWeights:
    """Utterance multichannel Wiener filter ``(Phi_YY + dI)^-1 phi_YS``.

    Args:
        spec: Multichannel mixture.
        target_ref: Ground-truth target at the reference channel, either a
            spectrogram (its ``ref_channel`` is used) or a ``[frame, bin]`` array.
        ref_channel: Recorded on the returned weights.
    """
    target = (
        target_ref.channel(ref_channel)
        if isinstance(target_ref, Spectrogram)
        else np.asarray(target_ref)
    )
    if target.shape != (spec.n_frames, spec.n_bins):
        raise ShapeError(
            f"Target spectrogram {target.shape} does not match mixture "
            f"({spec.n_frames}, {spec.n_bins})"
        )
    y = spec.data
    n_frames = spec.n_frames
    phi_yy = np.einsum("tfm,tfn->fmn", y, y.conj()) / n_frames
    phi_ys = np.einsum("tfm,tf->fm", y, target.conj()) / n_frames
    coeffs = _solve_loaded(phi_yy, phi_ys[..., None])[..., 0]
    return BeamWeights(coeffs, ref_channel)


def apply_beamformer(weights: BeamWeights, spec: Spectrogram) -> Spectrogram:
    """Single-channel output ``S_hat = w^H Y``."""
    w = weights.coeffs
    if w.shape[-1] != spec.n_channels or w.shape[-2] != spec.n_bins:
        raise ShapeError(
            f"Weights {w.shape} do not match spectrogram with "
            f"{spec.n_bins} bins and {spec.n_channels} channels"
        )
    if weights.framewise:
        if w.shape[0] != spec.n_frames:
            raise ShapeError(f"Weights cover {w.shape[0]} frames, spectrogram has {spec.n_frames}")
        out = np.einsum("tfm,tfm->tf", w.conj(), spec.data)
    else:
        out = np.einsum("fm,tfm->tf", w.conj(), spec.data)
    return spec.with_data(out[..., None])


def steering_vector(
    loc: Location3D,
    array: MicArray,
    f_bin: int,
    n_fft: int = 512,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    near_field: bool = True,
    ref_channel: int = 0,
) -> np.ndarray:
    """Relative transfer function of a point source, normalised to the reference mic.

    Near field: ``v_m = (d_ref / d_m) exp(+j 2 pi (k / n_fft) (t_m - t_ref))``
    with ``t_m = d_m fs / c``. Far field drops the amplitude term and uses
    plane-wave delays, so the vector depends on direction only. The phase sign
    follows the analysis kernel in :mod:`beam3d.spectral`.
    """
    return _steering_matrix(loc, array, np.array([f_bin]), n_fft, fs, c, near_field, ref_channel)[0]


def _steering_matrix(
    loc: Location3D,
    array: MicArray,
    bins: np.ndarray,
    n_fft: int,
    fs: float,
    c: float,
    near_field: bool,
    ref_channel: int,
) -> np.ndarray:
    """Steering vectors for several bins at once, shape ``[bin, M]``."""
    if near_field:
        distances = mic_distances(loc, array)
        delays = distances * fs / c
        amplitude = distances[ref_channel] / distances
    else:
        delays = -(array.positions @ loc.direction()) * fs / c
        amplitude = np.ones(array.n_mics)
    relative = delays - delays[ref_channel]
    phase = 2.0 * np.pi * bins[:, None] / n_fft * relative[None, :]
    return amplitude[None, :] * np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class BeamPattern:
    """Normalised beamformer response over an azimuth-elevation-distance grid."""

    azimuths: np.ndarray
    elevations: np.ndarray
    distances: np.ndarray
    response_db: np.ndarray

    def cell_of(self, loc: Location3D) -> tuple[int, int, int]:
        """Grid indices nearest to a location (azimuth distance taken on the circle)."""
        az_gap = np.abs(np.angle(np.exp(1j * (self.azimuths - loc.azimuth))))
        return (
            int(np.argmin(az_gap)),
            int(np.argmin(np.abs(self.elevations - loc.elevation))),
            int(np.argmin(np.abs(self.distances - loc.distance))),
        )

    def response_at(self, loc: Location3D) -> float:
        """Response in dB of the grid cell nearest to ``loc``."""
        return float(self.response_db[self.cell_of(loc)])

    def rows(self) -> list[tuple[float, float, float, float]]:
        """``(theta_deg, phi_deg, dist_m, response_db)`` with azimuth outermost."""
        out = []
        for (i, az), (j, el), (k, dist) in itertools.product(
            enumerate(self.azimuths), enumerate(self.elevations), enumerate(self.distances)
        ):
            out.append(
                (math.degrees(az), math.degrees(el), float(dist), float(self.response_db[i, j, k]))
            )
        return out

    def to_csv(self, path: str | Path) -> None:
        """Write one row per grid cell with a header row."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["theta_deg", "phi_deg", "dist_m", "response_db"])
            for row in self.rows():
                writer.writerow([f"{value:.6f}" for value in row])

    def to_raw(self, path: str | Path) -> Path:
        """Write float32 little-endian responses plus a JSON sidecar; return its path."""
        path = Path(path)
        path.write_bytes(self.response_db.astype("<f4").tobytes(order="C"))
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(
            json.dumps(
                {
                    "dtype": "float32-le",
                    "order": "C",
                    "shape": list(self.response_db.shape),
                    "axes": {
                        "theta_deg": np.degrees(self.azimuths).tolist(),
                        "phi_deg": np.degrees(self.elevations).tolist(),
                        "dist_m": self.distances.tolist(),
                    },
                    "unit": "dB re grid maximum",
                },
                indent=2,
            )
        )
        return sidecar


def beampattern(
    weights: BeamWeights,
    array: MicArray,
    azimuths: Sequence[float] | np.ndarray,
    elevations: Sequence[float] | np.ndarray,
    distances: Sequence[float] | np.ndarray,
    bands: Sequence[int] | np.ndarray,
    n_fft: int = 512,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    near_field: bool = True,
) -> BeamPattern:
    """Band-averaged power response ``10 log10 mean_f |w_f^H v_f(l)|^2``.

    Angles are in radians. The grid maximum is normalised to 0 dB.
    """
    az, el, dist = (np.asarray(v, dtype=float) for v in (azimuths, elevations, distances))
    bands = np.asarray(bands, dtype=int)
    if min(az.size, el.size, dist.size, bands.size) == 0:
        raise ArgumentError("Beampattern grid axes and band set must be non-empty")
    if weights.framewise:
        raise ArgumentError("Beampatterns need utterance (per-bin) weights")
    w = weights.coeffs[bands]
    response = np.empty((az.size, el.size, dist.size))
    for (i, a), (j, e), (k, d) in itertools.product(enumerate(az), enumerate(el), enumerate(dist)):
        vectors = _steering_matrix(
            Location3D(a, e, d), array, bands, n_fft, fs, c, near_field, weights.ref_channel
        )
        gains = np.einsum("fm,fm->f", w.conj(), vectors)
        response[i, j, k] = np.mean(np.abs(gains) ** 2)
    response_db = 10.0 * np.log10(np.maximum(response, np.finfo(float).tiny))
    return BeamPattern(az, el, dist, response_db - response_db.max())
