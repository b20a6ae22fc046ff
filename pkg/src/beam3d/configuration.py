"""Define the configurable parameters of the separation pipeline."""

from __future__ import annotations

import os
from dataclasses import MISSING, asdict, dataclass, field, fields
from typing import Any, Literal, Mapping, Optional

from dotenv import load_dotenv
from langchain_core.runnables import RunnableConfig, ensure_config

from beam3d.errors import ConfigurationError

ENV_PREFIX = "BEAM3D_"

Mode = Literal["sf-center", "sf-perturbed", "rf-region", "sf-true", "sf-1d"]
MaskSource = Literal["oracle-irm", "feature"]
Beamformer = Literal["mvdr", "mcwf", "mask-only"]
Posterior = Literal["uniform", "heuristic", "mlp"]

MODES = ("sf-center", "sf-perturbed", "rf-region", "sf-true", "sf-1d")
MASK_SOURCES = ("oracle-irm", "feature")
BEAMFORMERS = ("mvdr", "mcwf", "mask-only")
POSTERIORS = ("uniform", "heuristic", "mlp")


@dataclass(kw_only=True)
class Configuration:
    """The configuration for one separation run."""

    mode: Mode = field(
        default="rf-region",
        metadata={
            "description": "Which location cue drives the feature mask: the spatial feature at "
            "the region centre, at a random point inside the region, the region feature, "
            "the spatial feature at the true location, or the far-field feature at the centre."
        },
    )

    mask_source: MaskSource = field(
        default="oracle-irm",
        metadata={
            "description": "Where the target mask comes from: the ideal ratio mask computed "
            "from the stems, or the affine map of the location feature."
        },
    )

    beamformer: Beamformer = field(
        default="mvdr",
        metadata={"description": "Spatial filter applied to the mixture, or plain masking."},
    )

    posterior: Posterior = field(
        default="heuristic",
        metadata={"description": "How the region feature weighs its candidate locations."},
    )

    beta: float = field(
        default=5.0,
        metadata={"description": "Sharpness of the heuristic posterior softmax."},
    )

    weights_path: Optional[str] = field(
        default=None,
        metadata={"description": "BW3D attention weights file, required by the mlp posterior."},
    )

    mask_power: float = field(
        default=2.0,
        metadata={"description": "Exponent applied to the mask when averaging statistics."},
    )

    ref_channel: int = field(
        default=0,
        metadata={"description": "Reference microphone for masks, weights and scoring."},
    )

    fs: int = field(default=16000, metadata={"description": "Sample rate in Hz."})

    n_fft: int = field(default=512, metadata={"description": "STFT window length."})

    hop: int = field(default=256, metadata={"description": "STFT frame advance."})

    speed_of_sound: float = field(
        default=343.0, metadata={"description": "Speed of sound in m/s."}
    )

    seed: int = field(
        default=0,
        metadata={"description": "Seed of the perturbed location draw."},
    )

    dump_features: bool = field(
        default=False,
        metadata={"description": "Keep intermediate feature maps for inspection."},
    )

    condition: Optional[str] = field(
        default=None,
        metadata={"description": "Name of the output condition; derived from the options if unset."},
    )

    @property
    def condition_name(self) -> str:
        """Output name, ``<beamformer>_<mask_source>_<mode>`` unless set explicitly."""
        return self.condition or f"{self.beamformer}_{self.mask_source}_{self.mode}"

    def validate(self) -> Configuration:
        """Reject unknown choices and incompatible combinations."""
        for name, value, allowed in (
            ("mode", self.mode, MODES),
            ("mask_source", self.mask_source, MASK_SOURCES),
            ("beamformer", self.beamformer, BEAMFORMERS),
            ("posterior", self.posterior, POSTERIORS),
        ):
            if value not in allowed:
                raise ConfigurationError(f"{name} must be one of {allowed}, got {value!r}")
        if self.beamformer == "mcwf" and self.mask_source != "oracle-irm":
            raise ConfigurationError("The Wiener filter needs the oracle target (mask_source=oracle-irm)")
        if self.posterior == "mlp" and self.mode == "rf-region" and not self.weights_path:
            raise ConfigurationError("The mlp posterior needs weights_path")
        if self.mask_power <= 0.0:
            raise ConfigurationError(f"mask_power must be positive, got {self.mask_power}")
        if self.n_fft <= 0 or self.hop <= 0 or self.hop > self.n_fft:
            raise ConfigurationError(f"Invalid framing n_fft={self.n_fft}, hop={self.hop}")
        if self.fs <= 0 or self.speed_of_sound <= 0:
            raise ConfigurationError("fs and speed_of_sound must be positive")
        if self.ref_channel < 0:
            raise ConfigurationError(f"ref_channel must be >= 0, got {self.ref_channel}")
        return self

    def to_configurable(self) -> dict[str, Any]:
        """Return the mapping to pass as ``{"configurable": ...}``."""
        return asdict(self)

    @classmethod
    def from_runnable_config(
        cls, config: Optional[RunnableConfig] = None
    ) -> Configuration:
        """Create a Configuration instance from a RunnableConfig object."""
        config = ensure_config(config)
        configurable = config.get("configurable") or {}
        _fields = {f.name for f in fields(cls) if f.init}
        try:
            return cls(**{k: v for k, v in configurable.items() if k in _fields})
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_env(cls, env: Optional[Mapping[str, str]] = None) -> dict[str, Any]:
        """Read ``BEAM3D_<FIELD>`` overrides, loading a ``.env`` file first.

        Returns only the fields that are set, coerced to the field's type, so
        the result can be layered under file and command-line values.
        """
        if env is None:
            load_dotenv()
            env = os.environ
        values: dict[str, Any] = {}
        for f in fields(cls):
            raw = env.get(ENV_PREFIX + f.name.upper())
            if raw is None:
                continue
            values[f.name] = _coerce(f.name, f.default, raw)
        return values


def _coerce(name: str, default: Any, raw: str) -> Any:
    if default is MISSING or default is None or isinstance(default, str):
        return raw
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(raw)
            return lowered in ("1", "true", "yes")
        return type(default)(raw)
    except ValueError:
        raise ConfigurationError(
            f"{ENV_PREFIX}{name.upper()}={raw!r} is not a valid {type(default).__name__}"
        ) from None
