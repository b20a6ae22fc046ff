"""Command-line entry point: ``beam3d simulate|separate|evaluate|beampattern``.

Options are layered as defaults, then ``BEAM3D_*`` environment variables (a
``.env`` file is honoured), then a ``--config`` JSON document, then flags.
"""

from __future__ import annotations

import argparse
import logging
import math
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from beam3d.beamform import beampattern
from beam3d.configuration import (
    BEAMFORMERS,
    MASK_SOURCES,
    MODES,
    POSTERIORS,
    Configuration,
)
from beam3d.errors import (
    EXIT_OK,
    ArgumentError,
    Beam3DError,
    ConfigurationError,
    MicIndexError,
)
from beam3d.features import FeatureMap
from beam3d.graph import run_separation
from beam3d.metrics import MetricReport, si_sdr
from beam3d.scene import (
    LoadedScene,
    SceneConfig,
    load_scene_dir,
    plan_scene,
    render_planned,
    write_scene_dir,
)
from beam3d.utils import read_json, read_wav, write_float32, write_wav

logger = logging.getLogger("beam3d")

ENHANCED_DIR = "enhanced"
FEATURES_DIR = "features"
MIXTURE_CONDITION = "mixture"


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _add_separation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file of pipeline options")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--mask", dest="mask_source", choices=MASK_SOURCES)
    parser.add_argument("--beamformer", choices=BEAMFORMERS)
    parser.add_argument("--posterior", choices=POSTERIORS)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--weights", dest="weights_path", type=str, help="BW3D attention weights")
    parser.add_argument("--mask-power", dest="mask_power", type=float)
    parser.add_argument("--ref-channel", dest="ref_channel", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--condition", help="output name; derived from the options by default")


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with its four subcommands."""
    parser = argparse.ArgumentParser(
        prog="beam3d", description="Region-guided 3D beamforming for in-car speech."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="render scenes from a scene config")
    simulate.add_argument("--config", type=Path, help="scene config JSON")
    simulate.add_argument("--out", type=Path, required=True, help="output folder")
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--n-scenes", dest="n_scenes", type=int)
    simulate.set_defaults(handler=cmd_simulate)

    separate = sub.add_parser("separate", help="enhance the target of scene folders")
    separate.add_argument("scenes", nargs="+", type=Path)
    _add_separation_flags(separate)
    separate.add_argument("--dump-features", dest="dump_features", action="store_true", default=None)
    separate.set_defaults(handler=cmd_separate)

    evaluate = sub.add_parser("evaluate", help="score enhanced outputs with SI-SDR")
    evaluate.add_argument("scenes", nargs="+", type=Path)
    evaluate.add_argument("--conditions", help="comma separated; default: every enhanced output")
    evaluate.add_argument("--config", type=Path, help="JSON file of pipeline options")
    evaluate.add_argument("--ref-channel", dest="ref_channel", type=int)
    evaluate.add_argument("--out", type=Path, required=True, help="CSV report")
    evaluate.set_defaults(handler=cmd_evaluate)

    pattern = sub.add_parser("beampattern", help="3D response of a scene's beamformer")
    pattern.add_argument("scene", type=Path)
    _add_separation_flags(pattern)
    pattern.add_argument("--out", type=Path, required=True)
    pattern.add_argument("--format", choices=("csv", "raw"), default="csv")
    pattern.add_argument("--azimuth-step", dest="azimuth_step", type=float, default=5.0)
    pattern.add_argument("--elevations", type=_floats, default=[-30.0, -15.0, 0.0, 15.0])
    pattern.add_argument("--distances", type=_floats, default=[0.4, 0.7, 1.0, 1.3, 1.6, 1.9])
    pattern.add_argument("--band", type=_floats, default=[4000.0, 8000.0], help="low,high in Hz")
    pattern.add_argument("--far-field", dest="far_field", action="store_true")
    pattern.set_defaults(handler=cmd_beampattern)
    return parser


def load_configuration(args: argparse.Namespace) -> Configuration:
    """Layer environment, ``--config`` file and flags into a validated configuration."""
    values: dict[str, Any] = Configuration.from_env()
    if getattr(args, "config", None) is not None:
        document = read_json(args.config)
        if not isinstance(document, dict):
            raise ConfigurationError(f"{args.config} must hold a JSON object")
        values.update(document)
    for name in (
        "mode",
        "mask_source",
        "beamformer",
        "posterior",
        "beta",
        "weights_path",
        "mask_power",
        "ref_channel",
        "seed",
        "condition",
        "dump_features",
    ):
        value = getattr(args, name, None)
        if value is not None:
            values[name] = value
    try:
        return Configuration.from_runnable_config({"configurable": values}).validate()
    except Beam3DError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"Invalid configuration: {exc}") from exc


def _separate_scene(scene: LoadedScene, configuration: Configuration) -> dict[str, Any]:
    if scene.fs != configuration.fs:
        raise ConfigurationError(f"Scene rate {scene.fs} Hz != configured {configuration.fs} Hz")
    return run_separation(
        scene.mixture,
        scene.spec.array,
        scene.region,
        target_image=scene.target_image,
        other_images=scene.other_images,
        true_location=scene.true_location if configuration.mode == "sf-true" else None,
        configuration=configuration,
        scene_id=scene.scene_id,
        scene_index=scene.scene_index,
    )


def _dump_features(folder: Path, result: dict[str, Any]) -> None:
    maps: dict[str, FeatureMap] = dict(result.get("features") or {})
    if result.get("mask") is not None:
        maps["mask"] = result["mask"]
    for name, feature in maps.items():
        write_float32(folder / f"{name}.f32", feature.data, kind=feature.kind.value, axes=["frame", "bin"])
    if result.get("posterior") is not None:
        write_float32(
            folder / "posterior.f32",
            result["posterior"],
            candidates=[loc.to_dict() for loc in result.get("candidates", [])],
        )


def cmd_simulate(args: argparse.Namespace) -> int:
    """Render every scene of a scene config into ``--out``."""
    if args.config is not None:
        data = read_json(args.config)
        base_dir = args.config.parent
    else:
        data, base_dir = {}, Path(".")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.n_scenes is not None:
        data["n_scenes"] = args.n_scenes
    config = SceneConfig.from_dict(data, base_dir=base_dir)
    for index in range(config.n_scenes):
        planned = plan_scene(config, index)
        try:
            rendered = render_planned(planned, base_dir)
        except Beam3DError as exc:
            logger.error("%s: %s", planned.scene_id, exc)
            return exc.exit_code
        write_scene_dir(args.out / planned.scene_id, planned, rendered)
    logger.info("Rendered %d scenes into %s", config.n_scenes, args.out)
    return EXIT_OK


def cmd_separate(args: argparse.Namespace) -> int:
    """Write ``enhanced/<condition>.wav`` into every scene folder."""
    configuration = load_configuration(args)
    condition = configuration.condition_name
    for folder in args.scenes:
        try:
            scene = load_scene_dir(folder)
            result = _separate_scene(scene, configuration)
            write_wav(folder / ENHANCED_DIR / f"{condition}.wav", result["enhanced"], scene.fs)
            if configuration.dump_features:
                _dump_features(folder / FEATURES_DIR / condition, result)
        except Beam3DError as exc:
            logger.error("%s: %s", folder, exc)
            return exc.exit_code
        logger.info("%s: wrote %s", scene.scene_id, condition)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Score every enhanced output against the target image at the reference mic."""
    ref = load_configuration(args).ref_channel
    requested = [c for c in (args.conditions or "").split(",") if c]
    report = MetricReport()
    for folder in args.scenes:
        try:
            scene = load_scene_dir(folder)
            if ref >= scene.mixture.shape[1]:
                raise MicIndexError(
                    f"Reference channel {ref} out of range for {scene.mixture.shape[1]} mics"
                )
            reference = scene.target_image[:, ref]
            mixture = scene.mixture[:, ref]
            baseline = si_sdr(reference, mixture)
            conditions = requested or [MIXTURE_CONDITION] + sorted(
                p.stem for p in (folder / ENHANCED_DIR).glob("*.wav")
            )
            for condition in conditions:
                if condition == MIXTURE_CONDITION:
                    estimate = mixture
                else:
                    estimate = read_wav(folder / ENHANCED_DIR / f"{condition}.wav", scene.fs)[:, 0]
                row = report.add(
                    scene.scene_id, condition, baseline, si_sdr(reference, estimate), scene.condition
                )
                logger.debug("%s %s: %+.2f dB", scene.scene_id, condition, row.delta)
        except Beam3DError as exc:
            logger.error("%s: %s", folder, exc)
            return exc.exit_code
    if not report.rows:
        raise ArgumentError("Nothing to evaluate")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(args.out)
    for row in report.means():
        if row.speakers == "all":
            logger.info("%-40s mean SI-SDR improvement %+.2f dB", row.condition, row.delta)
    return EXIT_OK


def cmd_beampattern(args: argparse.Namespace) -> int:
    """Compute the response of a scene's beamformer over an az/el/distance grid."""
    configuration = load_configuration(args)
    if configuration.beamformer == "mask-only":
        raise ConfigurationError("mask-only output has no spatial response")
    if len(args.band) != 2 or not 0.0 <= args.band[0] < args.band[1] <= configuration.fs / 2:
        raise ArgumentError(f"Band {args.band} must be low,high within Nyquist")
    if args.azimuth_step <= 0.0:
        raise ArgumentError("azimuth step must be positive")
    try:
        scene = load_scene_dir(args.scene)
        result = _separate_scene(scene, configuration)
    except Beam3DError as exc:
        logger.error("%s: %s", args.scene, exc)
        return exc.exit_code
    hz_per_bin = configuration.fs / configuration.n_fft
    bands = np.arange(
        math.ceil(args.band[0] / hz_per_bin), math.floor(args.band[1] / hz_per_bin) + 1
    )
    pattern = beampattern(
        result["weights"],
        scene.spec.array,
        np.radians(np.arange(0.0, 360.0, args.azimuth_step)),
        np.radians(args.elevations),
        args.distances,
        bands,
        configuration.n_fft,
        configuration.fs,
        configuration.speed_of_sound,
        near_field=not args.far_field,
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        pattern.to_csv(args.out)
    else:
        pattern.to_raw(args.out)
    for source in scene.spec.sources:
        logger.info(
            "%-10s %-10s response %6.1f dB",
            source.role.value,
            source.region,
            pattern.response_at(source.location),
        )
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line; return the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except Beam3DError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
