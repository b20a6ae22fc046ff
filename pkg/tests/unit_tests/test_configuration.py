import pytest

from beam3d.configuration import Configuration
from beam3d.errors import ConfigurationError


def test_configuration_empty() -> None:
    Configuration.from_runnable_config({})


def test_configuration_ignores_unknown_keys() -> None:
    configuration = Configuration.from_runnable_config(
        {"configurable": {"mode": "sf-center", "thread_id": "abc"}}
    )
    assert configuration.mode == "sf-center"
    assert configuration.beamformer == "mvdr"


def test_condition_name_is_derived_from_options() -> None:
    configuration = Configuration(beamformer="mask-only", mask_source="feature", mode="rf-region")
    assert configuration.condition_name == "mask-only_feature_rf-region"
    assert Configuration(condition="baseline").condition_name == "baseline"


@pytest.mark.parametrize(
    "overrides",
    [
        {"mode": "sf-everywhere"},
        {"beamformer": "mcwf", "mask_source": "feature"},
        {"posterior": "mlp", "mode": "rf-region"},
        {"mask_power": 0.0},
        {"hop": 1024},
    ],
)
def test_validate_rejects_bad_combinations(overrides: dict) -> None:
    with pytest.raises(ConfigurationError):
        Configuration(**overrides).validate()


def test_mlp_posterior_with_weights_is_valid() -> None:
    Configuration(posterior="mlp", weights_path="attention.bw3d").validate()


def test_from_env_coerces_field_types() -> None:
    values = Configuration.from_env(
        {"BEAM3D_BETA": "2.5", "BEAM3D_DUMP_FEATURES": "yes", "BEAM3D_MODE": "sf-1d", "OTHER": "x"}
    )
    assert values == {"beta": 2.5, "dump_features": True, "mode": "sf-1d"}


def test_from_env_rejects_malformed_numbers() -> None:
    with pytest.raises(ConfigurationError, match="BEAM3D_SEED"):
        Configuration.from_env({"BEAM3D_SEED": "seven"})
