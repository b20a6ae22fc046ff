"""Define the region-guided separation pipeline as a LangGraph dataflow.

analyze -> compute_features -> estimate_mask, then either ``apply_mask`` for
mask-only output or ``estimate_statistics -> compute_weights -> beamform`` for
the MVDR beamformer (the Wiener filter skips the statistics), and finally
``synthesize``.
"""

from __future__ import annotations

import logging
from typing import Any, Dict, Literal, Optional

import numpy as np
from langchain_core.runnables import RunnableConfig
from langgraph.graph import StateGraph

from beam3d.beamform import (
    apply_beamformer,
    masked_scm_utterance,
    mcwf_weights,
    mvdr_weights,
    oracle_irm,
)
from beam3d.configuration import Configuration
from beam3d.errors import ConfigurationError
from beam3d.features import (
    PosteriorWeights,
    attention_posterior,
    complementary_mask,
    feature_mask,
    ipd,
    lps,
    region_feature,
    spatial_feature,
)
from beam3d.geometry import Location3D, MicArray, RegionBox, region_vertices
from beam3d.spectral import istft, pad_edges, stft
from beam3d.state import InputState, State
from beam3d.utils import scene_rng

logger = logging.getLogger(__name__)

PERTURB_STREAM = 1
"""RNG stream of the ``sf-perturbed`` draw; stream 0 plans the scene itself."""


def _needs_oracle(configuration: Configuration) -> bool:
    return configuration.mask_source == "oracle-irm" or configuration.beamformer == "mcwf"


def analyze(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Transform the mixture (and, for oracle runs, the source images) to the STFT domain."""
    configuration = Configuration.from_runnable_config(config).validate()
    if state.mixture is None or state.array is None:
        raise ConfigurationError("The pipeline needs a mixture and a microphone array")
    mixture = np.asarray(state.mixture, dtype=float)
    if mixture.ndim != 2 or mixture.shape[1] != state.array.n_mics:
        raise ConfigurationError(
            f"Mixture of shape {mixture.shape} does not match a {state.array.n_mics}-mic array"
        )
    framing = (configuration.n_fft, configuration.hop, configuration.fs)
    hop = configuration.hop
    update: Dict[str, Any] = {
        "beamformer": configuration.beamformer,
        "spectrogram": stft(pad_edges(mixture, hop), *framing),
    }
    if _needs_oracle(configuration):
        if state.target_image is None:
            raise ConfigurationError(
                f"{configuration.mask_source}/{configuration.beamformer} needs the target image"
            )
        update["target_spec"] = stft(pad_edges(state.target_image, hop), *framing)
        update["other_specs"] = [
            stft(pad_edges(image, hop), *framing) for image in state.other_images
        ]
    logger.debug("Analysed %s: %s", state.scene_id or "mixture", update["spectrogram"].data.shape)
    return update


def _location_for(
    mode: str,
    region: Optional[RegionBox],
    true_location: Optional[Location3D],
    seed: int,
    scene_index: int,
) -> Location3D:
    if mode == "sf-true":
        if true_location is None:
            raise ConfigurationError("sf-true needs the true target location")
        return true_location
    if region is None:
        raise ConfigurationError(f"{mode} needs the target region")
    if mode == "sf-perturbed":
        return region.sample(scene_rng(seed, scene_index, PERTURB_STREAM))
    return region.center


def compute_features(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Compute LPS, IPD and the location feature selected by the mode."""
    configuration = Configuration.from_runnable_config(config)
    spec = state.spectrogram
    array = state.array
    assert spec is not None and array is not None
    features = {
        "lps": lps(spec, configuration.ref_channel),
        "ipd": ipd(spec, array.pair(0)),
    }
    c = configuration.speed_of_sound
    update: Dict[str, Any] = {}
    if configuration.mode == "rf-region":
        if state.region is None:
            raise ConfigurationError("rf-region needs the target region")
        candidates = region_vertices(state.region)
        stack = [spatial_feature(spec, loc, array, c=c) for loc in candidates]
        weights = (
            PosteriorWeights.load(configuration.weights_path)
            if configuration.posterior == "mlp" and configuration.weights_path
            else None
        )
        posterior = attention_posterior(
            stack, configuration.posterior, beta=configuration.beta, weights=weights
        )
        logger.debug("Candidate posterior %s", np.round(posterior, 3).tolist())
        location = region_feature(stack, posterior)
        features["rf"] = location
        update.update(candidates=candidates, posterior=posterior)
    else:
        loc = _location_for(
            configuration.mode,
            state.region,
            state.true_location,
            configuration.seed,
            state.scene_index,
        )
        location = spatial_feature(
            spec, loc, array, c=c, far_field=configuration.mode == "sf-1d"
        )
        features["sf"] = location
        update["candidates"] = [loc]
    update.update(features=features, location=location)
    return update


def estimate_mask(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Estimate the target time-frequency mask."""
    configuration = Configuration.from_runnable_config(config)
    if configuration.mask_source == "oracle-irm":
        mask = oracle_irm(
            state.target_spec, *state.other_specs, ref_channel=configuration.ref_channel
        )
    else:
        assert state.location is not None
        mask = feature_mask(state.location)
    return {"mask": mask}


def route_beamformer(
    state: State,
) -> Literal["apply_mask", "estimate_statistics", "compute_weights"]:
    """Determine the next node from the chosen filter.

    Args:
        state (State): The current pipeline state.

    Returns:
        str: ``apply_mask`` for mask-only output, ``estimate_statistics`` for
        MVDR, ``compute_weights`` for the Wiener filter.
    """
    if state.beamformer == "mask-only":
        return "apply_mask"
    if state.beamformer == "mvdr":
        return "estimate_statistics"
    if state.beamformer == "mcwf":
        return "compute_weights"
    raise ConfigurationError(f"Unknown beamformer {state.beamformer!r}")


def apply_mask(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Mask the reference channel."""
    configuration = Configuration.from_runnable_config(config)
    spec = state.spectrogram
    assert spec is not None and state.mask is not None
    ref = configuration.ref_channel
    masked = state.mask.data[..., None] * spec.data[:, :, ref : ref + 1]
    return {"enhanced_spec": spec.with_data(masked)}


def estimate_statistics(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Mask-weighted target and interference covariance matrices."""
    configuration = Configuration.from_runnable_config(config)
    spec = state.spectrogram
    assert spec is not None and state.mask is not None
    power = configuration.mask_power
    return {
        "scm_target": masked_scm_utterance(spec, state.mask, power),
        "scm_noise": masked_scm_utterance(spec, complementary_mask(state.mask), power),
    }


def compute_weights(state: State, config: RunnableConfig) -> Dict[str, Any]:
    """Solve for the beamforming weights."""
    configuration = Configuration.from_runnable_config(config)
    ref = configuration.ref_channel
    if state.beamformer == "mcwf":
        assert state.spectrogram is not None and state.target_spec is not None
        return {"weights": mcwf_weights(state.spectrogram, state.target_spec, ref)}
    assert state.scm_target is not None and state.scm_noise is not None
    return {"weights": mvdr_weights(state.scm_target, state.scm_noise, ref)}


def beamform(state: State) -> Dict[str, Any]:
    """Filter the mixture with the computed weights."""
    assert state.weights is not None and state.spectrogram is not None
    return {"enhanced_spec": apply_beamformer(state.weights, state.spectrogram)}


def synthesize(state: State) -> Dict[str, Any]:
    """Return to the time domain and strip the edge padding added by ``analyze``."""
    assert state.enhanced_spec is not None and state.mixture is not None
    hop = state.enhanced_spec.hop
    samples = istft(state.enhanced_spec)[:, 0]
    return {"enhanced": samples[hop : hop + len(state.mixture)]}


builder = StateGraph(State, input=InputState, config_schema=Configuration)

builder.add_node(analyze)
builder.add_node(compute_features)
builder.add_node(estimate_mask)
builder.add_node(apply_mask)
builder.add_node(estimate_statistics)
builder.add_node(compute_weights)
builder.add_node(beamform)
builder.add_node(synthesize)

builder.add_edge("__start__", "analyze")
builder.add_edge("analyze", "compute_features")
builder.add_edge("compute_features", "estimate_mask")
builder.add_conditional_edges("estimate_mask", route_beamformer)
builder.add_edge("estimate_statistics", "compute_weights")
builder.add_edge("compute_weights", "beamform")
builder.add_edge("beamform", "synthesize")
builder.add_edge("apply_mask", "synthesize")
builder.add_edge("synthesize", "__end__")

graph = builder.compile()
graph.name = "Region Beamformer"


def run_separation(
    mixture: np.ndarray,
    array: MicArray,
    region: Optional[RegionBox] = None,
    *,
    target_image: Optional[np.ndarray] = None,
    other_images: Optional[list[np.ndarray]] = None,
    true_location: Optional[Location3D] = None,
    configuration: Optional[Configuration] = None,
    scene_id: str = "",
    scene_index: int = 0,
) -> Dict[str, Any]:
    """Run the pipeline once and return the final state values.

    Args:
        mixture: ``(samples, M)`` multichannel mixture.
        array: Microphone geometry of the mixture.
        region: Candidate region of the target.
        target_image: Reverberant target image, for oracle masks and the Wiener filter.
        other_images: Images of every other source, for the oracle mask.
        true_location: Target location, for the ``sf-true`` mode.
        configuration: Pipeline options; defaults apply when omitted.
        scene_id: Label used in log messages.
        scene_index: Selects the scene's own stream for the ``sf-perturbed`` draw.
    """
    configuration = (configuration or Configuration()).validate()
    input_state = {
        "mixture": mixture,
        "array": array,
        "region": region,
        "target_image": target_image,
        "other_images": list(other_images or []),
        "true_location": true_location,
        "scene_id": scene_id,
        "scene_index": scene_index,
    }
    return graph.invoke(input_state, {"configurable": configuration.to_configurable()})
