import logging
import math

import numpy as np
import pytest

from beam3d.errors import ArgumentError, AudioIOError, DegenerateSceneError, GeometryError
from beam3d.geometry import Location3D, MicArray
from beam3d.metrics import si_sdr
from beam3d.room import (
    RIR_LEAD,
    SINC_TAPS,
    Role,
    Room,
    SceneSpec,
    SourceSpec,
    absorption_from_t60,
    pink_noise,
    render_scene,
    simulate_rir,
    synthetic_speech,
)

CENTER = (1.4, 0.75, 0.65)


def _speech(seed: int, n: int = 8000) -> np.ndarray:
    return synthetic_speech(n, np.random.default_rng(seed))


def test_absorption_examples(caplog) -> None:
    assert absorption_from_t60(Room((2.8, 1.5, 1.3), 0.0)) == 1.0
    assert absorption_from_t60(Room((4.5, 1.8, 1.5), 0.3)) == pytest.approx(0.18576, abs=1e-5)
    with caplog.at_level(logging.WARNING):
        assert absorption_from_t60(Room((0.5, 0.5, 0.5), 0.01)) == 1.0
    assert "clamping" in caplog.text


def test_room_validation() -> None:
    with pytest.raises(GeometryError):
        Room((2.8, 0.0, 1.3))
    with pytest.raises(GeometryError):
        Room(t60=1.5)


def test_direct_path_pulse() -> None:
    room = Room((4.0, 4.0, 3.0), 0.2, max_order=0)
    rir = simulate_rir(room, (1.0, 2.0, 1.5), (2.0, 2.0, 1.5))
    # direct path delay 1 m * 16000 / 343 = 46.647 samples
    assert int(np.argmax(rir)) in (46, 47)
    assert rir.sum() == pytest.approx(1 / (4 * np.pi), rel=1e-2)
    assert rir.max() <= 1 / (4 * np.pi)
    farther = simulate_rir(room, (0.0 + 0.5, 2.0, 1.5), (2.5, 2.0, 1.5))
    assert farther.sum() == pytest.approx(0.5 * rir.sum(), rel=1e-2)


def test_direct_path_delay_follows_geometry() -> None:
    room = Room((2.8, 1.5, 1.3), 0.0, 0)
    dims = np.array(room.dims)
    rng = np.random.default_rng(21)
    for _ in range(50):
        source, mic = rng.uniform(0.1, dims - 0.1, size=(2, 3))
        distance = float(np.linalg.norm(source - mic))
        if distance < 0.05:
            continue
        delay = distance * 16000 / 343.0
        rir = simulate_rir(room, source, mic, lead=RIR_LEAD)
        assert int(np.argmax(rir)) - RIR_LEAD in (math.floor(delay), math.ceil(delay))
        assert rir.sum() == pytest.approx(1 / (4 * math.pi * distance), rel=1e-2)


def test_lead_keeps_the_sinc_of_close_sources() -> None:
    room = Room((2.8, 1.5, 1.3), 0.0, 0)
    # 0.05 m is 2.33 samples, so most of the leading sinc lies before t = 0
    source, mic = (1.0, 0.75, 0.65), (1.05, 0.75, 0.65)
    plain = simulate_rir(room, source, mic)
    padded = simulate_rir(room, source, mic, lead=RIR_LEAD)
    assert np.count_nonzero(padded) == SINC_TAPS
    assert np.count_nonzero(plain) < SINC_TAPS
    np.testing.assert_allclose(padded[RIR_LEAD:], plain)
    assert padded.sum() == pytest.approx(1 / (4 * math.pi * 0.05), rel=1e-2)
    with pytest.raises(ArgumentError):
        simulate_rir(room, source, mic, lead=-1)


def test_anechoic_reflections_vanish() -> None:
    direct = simulate_rir(Room((2.8, 1.5, 1.3), 0.0, 0), (0.5, 0.5, 0.5), (1.8, 1.0, 1.0))
    reflected = simulate_rir(Room((2.8, 1.5, 1.3), 0.0, 3), (0.5, 0.5, 0.5), (1.8, 1.0, 1.0))
    assert np.array_equal(direct, reflected)


def test_reverberation_adds_energy() -> None:
    args = ((0.5, 0.5, 0.5), (1.8, 1.0, 1.0))
    dry = simulate_rir(Room((2.8, 1.5, 1.3), 0.0), *args)
    wet = simulate_rir(Room((2.8, 1.5, 1.3), 0.3), *args)
    assert wet.size > dry.size
    assert np.sum(wet**2) > np.sum(dry**2)


def test_positions_outside_room() -> None:
    with pytest.raises(GeometryError):
        simulate_rir(Room(), (3.0, 0.5, 0.5), (1.0, 1.0, 1.0))


def _two_talker_spec(sir_db: float = 6.0) -> SceneSpec:
    room = Room((2.8, 1.5, 1.3), 0.0, 0)
    # mirror images about the array axis, so both stems have the same power
    return SceneSpec(
        room,
        MicArray.dual(),
        CENTER,
        (
            SourceSpec("A", Location3D.from_degrees(50.0, 0.0, 0.5), "talk", Role.TARGET),
            SourceSpec("B", Location3D.from_degrees(-50.0, 0.0, 0.5), "talk", Role.INTERFERER),
        ),
        sir_db=sir_db,
    )


def test_interferer_gain_follows_sir() -> None:
    rendered = render_scene(_two_talker_spec(6.0), {"talk": _speech(0)})
    assert rendered.gains[0] == 1.0
    assert rendered.gains[1] == pytest.approx(10 ** (-6 / 20), rel=1e-3)
    np.testing.assert_allclose(rendered.mixture, rendered.stems[0] + rendered.stems[1])


def test_single_source_mixture_is_the_target() -> None:
    spec = SceneSpec(
        Room((2.8, 1.5, 1.3), 0.0, 0),
        MicArray.dual(),
        CENTER,
        (SourceSpec("A", Location3D.from_degrees(30.0, -10.0, 0.7), "talk"),),
    )
    rendered = render_scene(spec, {"talk": _speech(1)})
    assert np.array_equal(rendered.mixture, rendered.target_stem)
    assert rendered.other_stems() == []
    assert si_sdr(rendered.target_stem[:, 0], rendered.mixture[:, 0]) == 100.0


def test_rendering_is_deterministic() -> None:
    spec = _two_talker_spec(0.0)
    first = render_scene(spec, {"talk": _speech(2)})
    second = render_scene(spec, {"talk": _speech(2)})
    assert np.array_equal(first.mixture, second.mixture)


def test_missing_and_silent_signals() -> None:
    with pytest.raises(AudioIOError):
        render_scene(_two_talker_spec(), {})
    with pytest.raises(DegenerateSceneError):
        render_scene(_two_talker_spec(), {"talk": np.zeros(4000)})


def test_scene_roles_are_checked() -> None:
    loc = Location3D.from_degrees(0.0, 0.0, 0.5)
    with pytest.raises(DegenerateSceneError):
        SceneSpec(Room(), MicArray.dual(), CENTER, (SourceSpec("A", loc, "s", Role.INTERFERER),))
    noises = tuple(SourceSpec(f"n{k}", loc, "n", Role.NOISE) for k in range(2))
    with pytest.raises(DegenerateSceneError):
        SceneSpec(Room(), MicArray.dual(), CENTER, (SourceSpec("A", loc, "s"),) + noises)
    with pytest.raises(DegenerateSceneError):
        SceneSpec(Room(), MicArray.dual(), CENTER, (SourceSpec("A", loc, "s"),), sir_db=9.0)


def test_scene_spec_serialisation() -> None:
    spec = _two_talker_spec(3.0)
    again = SceneSpec.from_dict(spec.to_dict())
    assert again.sir_db == 3.0
    assert again.target.region == "A"
    assert [s.role for s in again.sources] == [Role.TARGET, Role.INTERFERER]
    np.testing.assert_allclose(again.mic_positions(), spec.mic_positions())


def test_generators_are_seeded() -> None:
    speech = _speech(3, 16000)
    assert np.sqrt(np.mean(speech**2)) == pytest.approx(0.1, rel=1e-6)
    assert np.array_equal(speech, _speech(3, 16000))
    noise = pink_noise(16000, np.random.default_rng(4))
    assert np.std(noise) == pytest.approx(1.0, rel=1e-6)
    # more energy in the lowest quarter of the spectrum than in the top quarter
    power = np.abs(np.fft.rfft(noise)) ** 2
    quarter = power.size // 4
    assert power[1:quarter].sum() > power[-quarter:].sum()
