import math

import numpy as np
import pytest

from beam3d.errors import AudioIOError, ConfigurationError
from beam3d.room import Role
from beam3d.scene import (
    ARRAY_CENTER,
    CONDITIONS,
    SceneConfig,
    condition_seats,
    load_scene_dir,
    load_signals,
    plan_scene,
    render_planned,
    seat_center,
    seat_region,
    write_scene_dir,
)

QUICK = {"duration": 0.5, "room": {"t60_range": [0.05, 0.1], "max_order": 4}}


def test_front_and_rear_seats_are_16_degrees_apart() -> None:
    for front, rear in (("S1", "S3"), ("S2", "S4")):
        gap = math.degrees(abs(seat_center(front).azimuth - seat_center(rear).azimuth))
        assert gap == pytest.approx(16.0, abs=0.5)
    assert seat_center("S3").distance > seat_center("S1").distance


def test_seat_regions_fit_in_the_cabin() -> None:
    dims = np.array([2.8, 1.5, 1.3])
    for seat in ("S1", "S2", "S3", "S4"):
        corners = np.asarray(ARRAY_CENTER) + seat_region(seat).corner_points()
        assert np.all(corners > 0.0) and np.all(corners < dims)


def test_condition_seats() -> None:
    assert condition_seats("S1") == ["S1"]
    assert condition_seats("S1+3") == ["S1", "S3"]
    assert condition_seats("S1+2+4") == ["S1", "S2", "S4"]
    assert len(CONDITIONS) == 7
    with pytest.raises(ConfigurationError):
        condition_seats("S1+7")


def test_three_speaker_plan() -> None:
    config = SceneConfig.from_dict({**QUICK, "conditions": ["S1+2+3"], "n_noises": 3, "seed": 4})
    planned = plan_scene(config, 0)
    roles = [source.role for source in planned.spec.sources]
    assert roles.count(Role.TARGET) == 1
    assert roles.count(Role.INTERFERER) == 2
    assert roles.count(Role.NOISE) >= 3
    assert planned.condition == "S1+2+3"
    assert planned.region.contains(planned.spec.target.location.to_cartesian())
    for source in planned.spec.sources:
        assert planned.spec.room.contains(planned.spec.source_position(source))


def test_plans_are_seeded() -> None:
    config = SceneConfig.from_dict({**QUICK, "conditions": list(CONDITIONS), "n_scenes": 7, "seed": 11})
    first = [plan_scene(config, i) for i in range(7)]
    again = plan_scene(config, 3)
    assert again.spec.to_dict() == first[3].spec.to_dict()
    assert [p.condition for p in first] == list(CONDITIONS)
    assert len({p.spec.seed for p in first}) == 7
    for planned in first:
        assert -6.0 <= planned.spec.sir_db <= 6.0
        assert -5.0 <= planned.spec.snr_db <= 20.0
        assert 0.05 <= planned.spec.room.t60 <= 0.1


def test_unperturbed_speakers_sit_at_the_seat_centre() -> None:
    config = SceneConfig.from_dict({**QUICK, "conditions": ["S1"], "perturb": False, "n_noises": 0})
    target = plan_scene(config, 0).spec.target.location.to_cartesian()
    center = seat_center("S1").to_cartesian()
    np.testing.assert_allclose(target[:2], center[:2], atol=1e-9)
    assert 0.95 <= target[2] + ARRAY_CENTER[2] <= 1.15


@pytest.mark.parametrize(
    "document",
    [
        {"n_scenes": 0},
        {"sir_range": [-10, 0]},
        {"conditions": ["S5"]},
        {"duration": 0.01},
        {"room": {"t60_range": "long"}},
    ],
)
def test_invalid_scene_configs(document: dict) -> None:
    with pytest.raises(ConfigurationError):
        SceneConfig.from_dict(document)


def test_builtin_signals_are_distinct_and_seeded() -> None:
    config = SceneConfig.from_dict({**QUICK, "conditions": ["S1+3"]})
    spec = plan_scene(config, 0).spec
    signals = load_signals(spec, 4000)
    assert len(signals) == len(spec.sources)
    values = list(signals.values())
    assert not np.array_equal(values[0], values[1])
    again = load_signals(spec, 4000)
    assert all(np.array_equal(signals[k], again[k]) for k in signals)


def test_missing_wav_signal(tmp_path) -> None:
    config = SceneConfig.from_dict(
        {**QUICK, "conditions": ["S1"], "n_noises": 0, "signals": {"S1": "absent.wav"}},
        base_dir=tmp_path,
    )
    with pytest.raises(AudioIOError, match="absent.wav"):
        load_signals(plan_scene(config, 0).spec, 4000, base_dir=tmp_path)


def test_scene_directory_round_trip(tmp_path) -> None:
    config = SceneConfig.from_dict({**QUICK, "conditions": ["S1+3"], "seed": 2})
    planned = plan_scene(config, 0)
    rendered = render_planned(planned)
    folder = write_scene_dir(tmp_path / planned.scene_id, planned, rendered)
    assert (folder / "mixture.wav").exists()
    assert len(list((folder / "stems").glob("*.wav"))) == len(planned.spec.sources)

    scene = load_scene_dir(folder)
    assert scene.scene_id == "scene_0000"
    assert scene.condition == "S1+3"
    assert scene.mixture.shape == (8000, 2)
    assert scene.target_image.shape == (8000, 2)
    assert len(scene.other_images) == len(planned.spec.sources) - 1
    assert scene.true_location.azimuth == pytest.approx(planned.spec.target.location.azimuth)
    peak = max(np.max(np.abs(audio)) for audio in [scene.mixture, *scene.stems])
    assert peak == pytest.approx(0.9, abs=1e-3)
    # stems sum to the mixture up to 16-bit quantisation
    total = sum(scene.stems)
    assert np.max(np.abs(total - scene.mixture)) < len(scene.stems) * 2.0**-15
