"""Define the state structures for the separation pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from beam3d.beamform import SCM, BeamWeights
from beam3d.features import FeatureMap
from beam3d.geometry import Location3D, MicArray, RegionBox
from beam3d.spectral import Spectrogram


@dataclass
class InputState:
    """What a caller hands to the pipeline.

    Only ``mixture``, ``array`` and ``region`` are needed for feature-driven
    masks; the oracle mask and the Wiener filter also need the source images.
    """

    mixture: Optional[np.ndarray] = None
    """Multichannel mixture, ``(samples, M)``."""

    array: Optional[MicArray] = None

    region: Optional[RegionBox] = None
    """Candidate region of the target around its estimated location."""

    target_image: Optional[np.ndarray] = None
    """Reverberant target at every microphone, ``(samples, M)``."""

    other_images: list[np.ndarray] = field(default_factory=list)

    true_location: Optional[Location3D] = None
    """Ground truth, read only by the ``sf-true`` mode."""

    scene_id: str = ""
    scene_index: int = 0


@dataclass
class State(InputState):
    """Represents the complete state of a run, extending InputState with intermediate results."""

    beamformer: str = "mvdr"
    """Filter chosen for this run; drives the routing after mask estimation."""

    spectrogram: Optional[Spectrogram] = None
    target_spec: Optional[Spectrogram] = None
    other_specs: list[Spectrogram] = field(default_factory=list)

    features: dict[str, FeatureMap] = field(default_factory=dict)
    """Feature maps keyed by kind (``lps``, ``ipd``, ``sf`` or ``rf``)."""

    location: Optional[FeatureMap] = None
    """The spatial or region feature that drives a feature mask."""

    candidates: list[Location3D] = field(default_factory=list)
    posterior: Optional[np.ndarray] = None

    mask: Optional[FeatureMap] = None
    scm_target: Optional[SCM] = None
    scm_noise: Optional[SCM] = None
    weights: Optional[BeamWeights] = None

    enhanced_spec: Optional[Spectrogram] = None
    enhanced: Optional[np.ndarray] = None
    """Single-channel estimate of the target at the reference microphone."""
