import numpy as np

from beam3d.beamform import beampattern, oracle_irm
from beam3d.configuration import Configuration
from beam3d.features import attention_posterior, region_feature, spatial_feature
from beam3d.geometry import Location3D, region_vertices
from beam3d.graph import run_separation
from beam3d.metrics import MetricReport, si_sdr
from beam3d.room import Role, SourceSpec
from beam3d.scene import SceneConfig, plan_scene, render_planned, seat_center
from beam3d.spectral import stft

TARGET = Location3D.from_degrees(-36.0, -13.0, 0.67)
INTERFERER = Location3D.from_degrees(60.0, -10.0, 0.7)


def _correlation(feature: np.ndarray, mask: np.ndarray) -> float:
    return float(np.corrcoef(feature.ravel(), mask.ravel())[0, 1])


def test_anechoic_source_matches_its_spatial_feature(render_talkers) -> None:
    scene = render_talkers(interferers=())
    spec = stft(scene.mixture)
    power = np.abs(spec.channel(0)) ** 2
    active = power > 1e-3 * power.max()
    feature = spatial_feature(spec, TARGET, scene.spec.array)
    assert feature.data[active].mean() > 0.9


def test_spatial_feature_separates_two_talkers(render_talkers) -> None:
    scene = render_talkers()
    mixture = stft(scene.mixture)
    irm = oracle_irm(stft(scene.target_stem), stft(scene.stems[1])).data
    feature = spatial_feature(mixture, TARGET, scene.spec.array).data
    gap = feature[irm > 0.8].mean() - feature[irm < 0.2].mean()
    assert gap >= 0.3


def test_spatial_feature_separates_talkers_far_apart_in_azimuth(render_talkers) -> None:
    rng = np.random.default_rng(11)
    passed = 0
    for seed in range(20):
        side = rng.choice([-1.0, 1.0])
        azimuth = rng.uniform(-60.0, -10.0)
        gap = rng.uniform(40.0, 70.0)
        target = Location3D.from_degrees(side * azimuth, rng.uniform(-20.0, 0.0), rng.uniform(0.5, 0.8))
        other = Location3D.from_degrees(
            side * (azimuth + gap), rng.uniform(-20.0, 0.0), rng.uniform(0.5, 0.8)
        )
        scene = render_talkers(target=target, interferers=(other,), seconds=1.0, seed=seed)
        mixture = stft(scene.mixture)
        irm = oracle_irm(stft(scene.target_stem), stft(scene.stems[1])).data
        feature = spatial_feature(mixture, target, scene.spec.array).data
        passed += feature[irm > 0.8].mean() - feature[irm < 0.2].mean() >= 0.3
    assert passed >= 18


def test_spatial_feature_tells_talkers_apart_by_distance(render_talkers) -> None:
    rng = np.random.default_rng(12)
    passed = 0
    for seed in range(20):
        azimuth = rng.uniform(-36.0, -30.0)
        target = Location3D.from_degrees(azimuth, -13.0, 0.6)
        # same direction within 16 degrees, 0.85 m further away
        other = Location3D.from_degrees(azimuth + rng.uniform(8.0, 16.0), -6.0, 1.45)
        scene = render_talkers(target=target, interferers=(other,), seconds=1.0, seed=seed)
        mixture = stft(scene.mixture)
        target_spec, other_spec = stft(scene.target_stem), stft(scene.stems[1])
        feature = spatial_feature(mixture, target, scene.spec.array).data
        own = _correlation(feature, oracle_irm(target_spec, other_spec).data)
        foreign = _correlation(feature, oracle_irm(other_spec, target_spec).data)
        passed += own > foreign
    assert passed >= 16


def test_region_feature_tolerates_an_offset_talker() -> None:
    config = SceneConfig(
        t60_range=(0.0, 0.0), duration=1.0, n_scenes=20, conditions=("S1",), seed=4
    )
    region_scores, center_scores = [], []
    for index in range(config.n_scenes):
        planned = plan_scene(config, index)
        assert planned.region.contains(planned.spec.target.location.to_cartesian())
        rendered = render_planned(planned)
        mixture = stft(rendered.mixture)
        irm = oracle_irm(
            stft(rendered.target_stem), *(stft(s) for s in rendered.other_stems())
        ).data
        stack = [
            spatial_feature(mixture, loc, planned.spec.array)
            for loc in region_vertices(planned.region)
        ]
        posterior = attention_posterior(stack, "heuristic", beta=5.0)
        region_scores.append(_correlation(region_feature(stack, posterior).data, irm))
        center_scores.append(_correlation(stack[-1].data, irm))
    assert np.mean(region_scores) >= np.mean(center_scores) - 0.02
    assert np.mean(region_scores) > np.mean(center_scores)


def test_oracle_beamformers_improve_si_sdr() -> None:
    config = SceneConfig.from_dict(
        {
            "duration": 2.0,
            "room": {"t60_range": [0.05, 0.3]},
            "conditions": ["S1+2", "S1+3", "S1+4", "S1+2+3"],
            "n_scenes": 20,
            "seed": 1,
        }
    )
    report = MetricReport()
    options = {
        "mvdr": Configuration(beamformer="mvdr", mode="sf-center"),
        "mcwf": Configuration(beamformer="mcwf", mode="sf-center"),
    }
    for index in range(config.n_scenes):
        planned = plan_scene(config, index)
        rendered = render_planned(planned)
        reference = rendered.target_stem[:, 0]
        baseline = si_sdr(reference, rendered.mixture[:, 0])
        for name, configuration in options.items():
            res = run_separation(
                rendered.mixture,
                planned.spec.array,
                planned.region,
                target_image=rendered.target_stem,
                other_images=rendered.other_stems(),
                configuration=configuration,
            )
            report.add(planned.scene_id, name, baseline, si_sdr(reference, res["enhanced"]), planned.condition)
    assert report.mean_delta("mvdr") >= 3.0
    assert report.mean_delta("mcwf") >= 5.0


def test_mvdr_pattern_separates_driver_from_rear_seat() -> None:
    driver, rear = seat_center("S1"), seat_center("S3")
    config = SceneConfig(
        t60_range=(0.0, 0.0),
        duration=2.0,
        sources=(
            SourceSpec("S1", driver, "builtin:speech:0", Role.TARGET),
            SourceSpec("S3", rear, "builtin:speech:1", Role.INTERFERER),
        ),
    )
    planned = plan_scene(config, 0)
    rendered = render_planned(planned)
    res = run_separation(
        rendered.mixture,
        planned.spec.array,
        planned.region,
        target_image=rendered.target_stem,
        other_images=rendered.other_stems(),
        configuration=Configuration(beamformer="mvdr", mask_source="oracle-irm"),
    )
    pattern = beampattern(
        res["weights"],
        planned.spec.array,
        np.radians(np.arange(0.0, 360.0, 5.0)),
        np.radians([-30.0, -15.0, 0.0, 15.0]),
        [0.4, 0.7, 1.0, 1.3, 1.6, 1.9],
        np.arange(128, 257),
    )
    assert pattern.response_db.shape == (72, 4, 6)
    target = pattern.response_at(driver)
    assert np.mean(pattern.response_db > target) <= 0.05
    assert pattern.response_at(rear) <= target - 10.0
