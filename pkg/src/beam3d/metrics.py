"""Scale-invariant SDR and per-scene evaluation reports."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from beam3d.errors import ArgumentError, ShapeError

SI_SDR_CAP = 100.0
SI_SDR_EPS = 1e-12


def si_sdr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB.

    The estimate is projected onto the reference, ``alpha = <est, ref> / |ref|^2``,
    and the result ``10 log10(|alpha ref|^2 / |est - alpha ref|^2)`` is clipped
    to +-100 dB so perfect and all-zero estimates stay finite. No mean is removed.
    """
    ref = np.asarray(reference, dtype=float).ravel()
    est = np.asarray(estimate, dtype=float).ravel()
    if ref.shape != est.shape:
        raise ShapeError(f"Reference has {ref.size} samples, estimate {est.size}")
    if ref.size == 0:
        raise ShapeError("SI-SDR needs at least one sample")
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise ArgumentError("SI-SDR reference is all zeros")
    alpha = float(est @ ref) / ref_energy
    projection = alpha * ref
    residual = est - projection
    signal = float(projection @ projection)
    distortion = float(residual @ residual)
    if signal == 0.0:
        return -SI_SDR_CAP
    value = 10.0 * math.log10(signal / max(distortion, SI_SDR_EPS))
    return float(np.clip(value, -SI_SDR_CAP, SI_SDR_CAP))


@dataclass(frozen=True)
class MetricRow:
    """SI-SDR of one enhancement condition on one scene."""

    scene_id: str
    condition: str
    si_sdr_mix: float
    si_sdr_enh: float
    speakers: str = ""

    @property
    def delta(self) -> float:
        """Improvement over the unprocessed mixture."""
        return self.si_sdr_enh - self.si_sdr_mix


@dataclass
class MetricReport:
    """Per-scene SI-SDR rows with per-group and overall means."""

    rows: list[MetricRow] = field(default_factory=list)

    def add(
        self,
        scene_id: str,
        condition: str,
        si_sdr_mix: float,
        si_sdr_enh: float,
        speakers: str = "",
    ) -> MetricRow:
        """Append one measurement."""
        row = MetricRow(scene_id, condition, si_sdr_mix, si_sdr_enh, speakers)
        self.rows.append(row)
        return row

    def means(self) -> list[MetricRow]:
        """Mean rows per (condition, speaker group) and per condition over all groups."""
        groups: dict[tuple[str, str], list[MetricRow]] = defaultdict(list)
        for row in self.rows:
            groups[(row.condition, row.speakers)].append(row)
            groups[(row.condition, "all")].append(row)
        out = []
        for (condition, speakers), members in groups.items():
            out.append(
                MetricRow(
                    "mean",
                    condition,
                    float(np.mean([r.si_sdr_mix for r in members])),
                    float(np.mean([r.si_sdr_enh for r in members])),
                    speakers,
                )
            )
        return sorted(out, key=lambda r: (r.condition, r.speakers == "all", r.speakers))

    def mean_delta(self, condition: str) -> float:
        """Mean SI-SDR improvement of one condition over every scene."""
        deltas = [row.delta for row in self.rows if row.condition == condition]
        if not deltas:
            raise ArgumentError(f"No rows for condition {condition!r}")
        return float(np.mean(deltas))

    def to_csv(self, path: str | Path, include_means: bool = True) -> None:
        """Write ``scene_id, condition, si_sdr_mix, si_sdr_enh, delta, speakers`` rows."""
        rows = self.rows + (self.means() if include_means else [])
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["scene_id", "condition", "si_sdr_mix", "si_sdr_enh", "delta", "speakers"]
            )
            for row in rows:
                writer.writerow(
                    [
                        row.scene_id,
                        row.condition,
                        f"{row.si_sdr_mix:.4f}",
                        f"{row.si_sdr_enh:.4f}",
                        f"{row.delta:.4f}",
                        row.speakers,
                    ]
                )
