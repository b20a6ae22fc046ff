from typing import Callable, Sequence

import numpy as np
import pytest

from beam3d.geometry import Location3D
from beam3d.room import RenderedScene, Role, Room, SceneSpec, SourceSpec, render_scene, synthetic_speech
from beam3d.scene import ARRAY_CENTER, car_array

TARGET = Location3D.from_degrees(-36.0, -13.0, 0.67)
INTERFERER = Location3D.from_degrees(60.0, -10.0, 0.7)


@pytest.fixture
def render_talkers() -> Callable[..., RenderedScene]:
    """Render a target plus interferers in the car cabin from built-in speech."""

    def _render(
        target: Location3D = TARGET,
        interferers: Sequence[Location3D] = (INTERFERER,),
        t60: float = 0.0,
        seconds: float = 1.5,
        seed: int = 0,
    ) -> RenderedScene:
        sources = [SourceSpec("T", target, "s0", Role.TARGET)]
        sources += [
            SourceSpec(f"I{k}", loc, f"s{k + 1}", Role.INTERFERER)
            for k, loc in enumerate(interferers)
        ]
        spec = SceneSpec(Room((2.8, 1.5, 1.3), t60, 6), car_array(), ARRAY_CENTER, tuple(sources), seed=seed)
        n = int(seconds * 16000)
        signals = {
            source.signal: synthetic_speech(n, np.random.default_rng([seed, k]))
            for k, source in enumerate(sources)
        }
        return render_scene(spec, signals)

    return _render
