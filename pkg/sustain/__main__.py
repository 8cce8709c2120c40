from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from sustain import __version__ as sustain_version
from sustain import _logs, cohort, features, ml, periods, pitch, settings, signal_io, synth, vibrato
from sustain.settings import Config
from sustain.utils import AnalysisError, write_csv

log = logging.getLogger(__name__)


_EPILOG = r"""
Examples:
  %(prog)s synth --out a.wav --f0 130 --jitter 1 --shimmer 3
  %(prog)s extract --input a.wav --label ALS --age 60 --sex F --out a.csv
  %(prog)s cohort --out cohort.csv --separation 2
  %(prog)s classify --features cohort.csv --model lda --subset S1,S3,S11,PVI
  %(prog)s search --features cohort.csv --model knn --top 5
  %(prog)s -v segment --input a.wav --method wm --out cycles.csv
"""

# Options whose dest contains a dot go to the configuration: "pitch.f_min" is
# option f_min in the [pitch] section of the config file.
_CONFIG_SEPARATOR = "."


class _UsageError(Exception):
    pass


def _config_option(
    parser: argparse.ArgumentParser, *flags: str, key: str, convert: Callable[[str], Any], help: str
) -> None:
    parser.add_argument(*flags, dest=key, type=convert, default=None, help=help)


def _add_pitch_options(parser: argparse.ArgumentParser) -> None:
    _config_option(parser, "--f-min", key="pitch.f_min", convert=float, help="lowest f0 in Hz")
    _config_option(parser, "--f-max", key="pitch.f_max", convert=float, help="highest f0 in Hz")
    _config_option(
        parser, "--hop", key="pitch.hop_s", convert=float, help="f0 contour time step in seconds"
    )
    _config_option(
        parser, "--frame", key="pitch.frame_s", convert=float, help="f0 analysis frame in seconds"
    )
    _config_option(
        parser,
        "--voicing-threshold",
        key="pitch.voicing_threshold",
        convert=float,
        help="normalized autocorrelation below which a frame is unvoiced",
    )
    _config_option(
        parser,
        "--octave-tolerance",
        key="pitch.octave_tolerance",
        convert=float,
        help="take the shortest lag whose autocorrelation reaches this share of the best",
    )


def _add_vibrato_options(parser: argparse.ArgumentParser) -> None:
    _config_option(
        parser, "--band-lo", key="vibrato.band_lo", convert=float, help="bandpass low edge in Hz"
    )
    _config_option(
        parser, "--band-hi", key="vibrato.band_hi", convert=float, help="bandpass high edge in Hz"
    )
    _config_option(
        parser,
        "--filter-order",
        key="vibrato.order",
        convert=int,
        help="Butterworth prototype order",
    )
    _config_option(
        parser,
        "--welch-window",
        key="vibrato.welch_window_s",
        convert=float,
        help="Welch segment length in seconds",
    )
    _config_option(
        parser,
        "--welch-overlap",
        key="vibrato.welch_overlap",
        convert=float,
        help="overlap of Welch segments, as a fraction of a segment",
    )


def _add_trim_options(parser: argparse.ArgumentParser) -> None:
    _config_option(
        parser, "--head", key="trim.head_s", convert=float, help="seconds to cut from the start"
    )
    _config_option(
        parser, "--tail", key="trim.tail_s", convert=float, help="seconds to cut from the end"
    )


def _add_segmentation_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--method",
        choices=["wm-pc", "wm"],
        default="wm-pc",
        help="wm-pc: phase constrained waveform matching (default), wm: plain waveform matching",
    )
    _config_option(
        parser,
        "--window-frac",
        key="segmentation.refine_window_frac",
        convert=float,
        help="boundary search window, as a fraction of the period",
    )
    _config_option(
        parser,
        "--min-cycles",
        key="segmentation.min_cycles",
        convert=int,
        help="fail if fewer cycles are found",
    )
    _config_option(
        parser,
        "--match-window",
        key="segmentation.match_window_frac",
        convert=float,
        help="waveform compared around each boundary, as a fraction of the period",
    )
    _config_option(
        parser,
        "--tie-tolerance",
        key="segmentation.tie_tolerance",
        convert=float,
        help="scores within this share of the score range count as a tie",
    )


def _add_cv_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--features", type=Path, required=True, help="features CSV file")
    parser.add_argument("--model", choices=ml.MODEL_NAMES, default="lda", help="classifier")
    _config_option(parser, "--folds", key="cv.folds", convert=int, help="number of folds (7)")
    _config_option(
        parser, "--repeats", key="cv.repetitions", convert=int, help="number of repetitions (40)"
    )
    _config_option(parser, "--seed", key="cv.seed", convert=int, help="base random seed")
    _config_option(parser, "--k", key="knn.k", convert=int, help="neighbours per class for knn (3)")
    parser.add_argument(
        "--unstratified",
        dest="cv.stratified",
        action="store_const",
        const=False,
        default=None,
        help="shuffle all samples together instead of keeping class ratios in folds",
    )
    parser.add_argument("--out", type=Path, help="write the full report as JSON here")


def _load_waveform(path: Path, config: Config) -> signal_io.Waveform:
    w = signal_io.load_wav(path)
    return signal_io.trim_edges(w, config.trim.head_s, config.trim.tail_s)


def _write_json(data: object, path: Optional[Path]) -> None:
    text = json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")
        log.info(f"wrote {path}")


def _split_names(text: Optional[str]) -> Optional[list[str]]:
    if text is None:
        return None
    return [name.strip() for name in text.split(",") if name.strip()]


def run_synth(args: argparse.Namespace, config: Config) -> None:
    spec = synth.SynthSpec(
        f0=args.f0,
        duration=args.duration,
        sample_rate=args.sample_rate,
        jitter_pct=args.jitter,
        shimmer_pct=args.shimmer,
        vibrato_rate=args.vibrato_rate,
        vibrato_depth=args.vibrato_depth,
        noise_snr_db=args.snr,
        harmonics=args.harmonics,
        seed=config.cv.seed,
    )
    w, truth = synth.synth_voice(spec)
    signal_io.write_wav(args.out, w)
    truth_path = args.truth_csv or args.out.with_suffix(".csv")
    write_csv(
        truth_path,
        ["cycle_index", "boundary_sample", "period_samples", "amplitude"],
        (
            [index, int(truth.boundaries[index]), float(period), float(amplitude)]
            for index, (period, amplitude) in enumerate(zip(truth.periods, truth.amplitudes))
        ),
    )


def run_f0(args: argparse.Namespace, config: Config) -> None:
    contour = pitch.estimate_f0(_load_waveform(args.input, config), config.pitch)
    write_csv(
        args.out,
        ["time_s", "f0_hz"],
        ([float(t), float(f0)] for t, f0 in zip(contour.times, contour.values)),
    )


def run_segment(args: argparse.Namespace, config: Config) -> None:
    w = _load_waveform(args.input, config)
    contour = pitch.estimate_f0(w, config.pitch)
    cycles = periods.segment(w, contour, args.method, config.segmentation, config.pitch)
    write_csv(
        args.out,
        ["boundary_sample", "period_samples", "amplitude"],
        (
            [int(boundary), float(period), float(amplitude)]
            for boundary, period, amplitude in zip(
                cycles.boundaries, cycles.periods, cycles.amplitudes
            )
        ),
    )
    if args.drift_csv is not None:
        phi = periods.phase_function(pitch.expand_to_radians(contour, w.sample_rate, len(w)))
        drift = periods.phase_drift(phi, cycles.boundaries)
        write_csv(
            args.drift_csv,
            ["cycle_index", "drift_rad"],
            ([index, float(value)] for index, value in enumerate(drift)),
        )
        log.info(f"phase drift slope: {periods.drift_slope(drift):.6g} rad/cycle")


def run_extract(args: argparse.Namespace, config: Config) -> None:
    paths: list[Path] = args.input
    metadata = [args.id, args.label, args.age, args.sex]
    if len(paths) > 1 and any(value is not None for value in metadata):
        raise _UsageError("--id, --label, --age and --sex can only be used with one --input")

    try:
        label = None if args.label is None else features.Label.parse(args.label)
        sex = None if args.sex is None else features.Sex.parse(args.sex)
    except ValueError as e:
        raise _UsageError(str(e)) from e

    values = features.extract_many(
        paths,
        trim=config.trim,
        jobs=args.jobs,
        pitch=config.pitch,
        segmentation=config.segmentation,
        perturbation=config.perturbation,
        vibrato=config.vibrato,
        method=args.method,
    )
    vectors = tuple(
        features.FeatureVector(
            id=args.id or path.stem, label=label, age=args.age, sex=sex, features=row
        )
        for path, row in zip(paths, values)
    )
    features.write_csv(features.Dataset(vectors), args.out)


def run_pvi(args: argparse.Namespace, config: Config) -> None:
    contour = pitch.estimate_f0(_load_waveform(args.input, config), config.pitch)
    result = vibrato.compute_pvi(contour, config.vibrato)
    _write_json(
        {
            "pvi": result.pvi,
            "band_lo": result.band[0],
            "band_hi": result.band[1],
            "n_segments": result.n_segments,
        },
        args.out,
    )

    if args.spectrum_csv is not None:
        write_csv(
            args.spectrum_csv,
            ["freq_hz", "amplitude"],
            (
                [float(f), float(a)]
                for f, a in zip(result.spectrum.frequencies, result.spectrum.amplitudes)
            ),
        )
    if args.contours_csv is not None:
        write_csv(
            args.contours_csv,
            ["time_s", "normalized", "filtered"],
            (
                [float(t), float(n), float(f)]
                for t, n, f in zip(contour.times, result.normalized, result.filtered)
            ),
        )
    if args.response_csv is not None:
        bandpass = vibrato.design_bandpass(
            config.vibrato.band_lo, config.vibrato.band_hi, contour.rate, config.vibrato.order
        )
        freqs = result.spectrum.frequencies
        write_csv(
            args.response_csv,
            ["freq_hz", "gain_db"],
            (
                [float(f), float(g)]
                for f, g in zip(freqs, vibrato.magnitude_response(bandpass, freqs))
            ),
        )


def run_stats(args: argparse.Namespace, config: Config) -> None:
    dataset = features.read_csv(args.features)
    names = _split_names(args.feature) or list(dataset.feature_names)
    indices = features.feature_indices(names, dataset.feature_names)

    report: dict[str, Any] = {}
    kde_rows = []
    for index in indices:
        name = dataset.feature_names[index]
        summaries = features.group_stats(dataset, index)
        report[name] = {label.value: summary.to_json() for label, summary in summaries.items()}
        als, hc = summaries[features.Label.ALS], summaries[features.Label.HC]
        kde_rows.extend(
            [name, float(x), float(a), float(h)]
            for x, a, h in zip(als.grid, als.density, hc.density)
        )

    _write_json(report, args.out)
    if args.kde_csv is not None:
        write_csv(args.kde_csv, ["feature", "x", "density_ALS", "density_HC"], kde_rows)


def run_age_correct(args: argparse.Namespace, config: Config) -> None:
    corrected = features.age_correct(features.read_csv(args.features))
    features.write_csv(corrected, args.out)


def run_classify(args: argparse.Namespace, config: Config) -> None:
    dataset = features.read_csv(args.features)
    report = ml.cross_validate(
        dataset, args.model, _split_names(args.subset), config.cv, config.knn
    )
    print(ml.format_table([ml.SubsetResult(report.features, report)]))
    if args.out is not None:
        _write_json(report.to_json(), args.out)


def run_search(args: argparse.Namespace, config: Config) -> None:
    dataset = features.read_csv(args.features)
    results = ml.subset_search(
        dataset,
        args.model,
        config.cv,
        config.knn,
        candidates=_split_names(args.candidates),
        jobs=args.jobs,
    )
    print(ml.format_table(results, args.top))
    if args.out is not None:
        _write_json([result.report.to_json() for result in results], args.out)


def run_cohort(args: argparse.Namespace, config: Config) -> None:
    spec = cohort.CohortSpec(
        n_healthy=args.n_healthy,
        n_als=args.n_als,
        separation=args.separation,
        informative=tuple(_split_names(args.informative) or features.FEATURE_NAMES),
        age_slope=args.age_slope,
    )
    features.write_csv(cohort.make_cohort(spec, config.cv.seed), args.out)


def run_fetch_info(args: argparse.Namespace, config: Config) -> None:
    print(cohort.describe_public_dataset(), end="")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sustain",
        description="Sustained vowel analysis: jitter, shimmer, vibrato and ALS screening.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"Sustain {sustain_version}",
        help="display the Sustain version number and exit",
    )
    verbose_group = parser.add_mutually_exclusive_group()
    verbose_group.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help=(
            "print all logging messages to stderr, only warnings and errors "
            "are printed by default (but all messages always go to a log "
            "file as well)"
        ),
    )
    verbose_group.add_argument(
        "--verbose-logger",
        action="append",  # Allow passing multiple times: --verbose-logger foo --verbose-logger bar
        help=(
            "increase verbosity for just one logger only, e.g. "
            "--verbose-logger=sustain.periods "
            "to see what the segmentation is doing"
        ),
    )
    parser.add_argument(
        "--config", type=Path, help="read configuration from this TOML file too"
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sub = subparsers.add_parser("synth", help="generate a synthetic sustained vowel")
    sub.add_argument("--out", type=Path, required=True, help="WAV file to write")
    sub.add_argument(
        "--truth-csv", type=Path, help="ground truth cycles (default: next to the WAV file)"
    )
    sub.add_argument("--f0", type=float, default=130.0, help="fundamental frequency in Hz")
    sub.add_argument("--duration", type=float, default=3.0, help="length in seconds")
    sub.add_argument("--sample-rate", type=int, default=44100, help="samples per second")
    sub.add_argument("--jitter", type=float, default=0.0, help="local jitter in percent")
    sub.add_argument("--shimmer", type=float, default=0.0, help="local shimmer in percent")
    sub.add_argument("--vibrato-rate", type=float, default=0.0, help="vibrato frequency in Hz")
    sub.add_argument(
        "--vibrato-depth", type=float, default=0.0, help="vibrato depth as a fraction of f0"
    )
    sub.add_argument("--snr", type=float, help="add noise with this SNR in dB (default: none)")
    sub.add_argument("--harmonics", type=int, default=10, help="number of partials")
    _config_option(sub, "--seed", key="cv.seed", convert=int, help="random seed")
    sub.set_defaults(func=run_synth)

    sub = subparsers.add_parser("f0", help="estimate the f0 contour")
    sub.add_argument("--input", type=Path, required=True, help="WAV file")
    sub.add_argument("--out", type=Path, required=True, help="CSV file with time_s,f0_hz")
    _add_pitch_options(sub)
    _add_trim_options(sub)
    sub.set_defaults(func=run_f0)

    sub = subparsers.add_parser("segment", help="split a recording into periods")
    sub.add_argument("--input", type=Path, required=True, help="WAV file")
    sub.add_argument("--out", type=Path, required=True, help="CSV file, one row per cycle")
    sub.add_argument("--drift-csv", type=Path, help="also write the phase drift of boundaries")
    _add_segmentation_options(sub)
    _add_pitch_options(sub)
    _add_trim_options(sub)
    sub.set_defaults(func=run_segment)

    sub = subparsers.add_parser("extract", help="compute the feature vector of recordings")
    sub.add_argument(
        "--input", type=Path, action="append", required=True, help="WAV file, can be repeated"
    )
    sub.add_argument("--out", type=Path, required=True, help="features CSV file")
    sub.add_argument("--id", help="speaker id (default: file name without extension)")
    sub.add_argument("--label", help="ALS or HC")
    sub.add_argument("--age", type=float, help="age in years")
    sub.add_argument("--sex", help="M or F")
    sub.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    _config_option(
        sub,
        "--classical-rap",
        key="perturbation.classical_rap",
        convert=lambda text: text.lower() in ("1", "true", "yes"),
        help="true: classical normalization of relative average perturbation",
    )
    _add_segmentation_options(sub)
    _add_pitch_options(sub)
    _add_vibrato_options(sub)
    _add_trim_options(sub)
    sub.set_defaults(func=run_extract)

    sub = subparsers.add_parser("pvi", help="compute the pathological vibrato index")
    sub.add_argument("--input", type=Path, required=True, help="WAV file")
    sub.add_argument("--out", type=Path, help="JSON file (default: print)")
    sub.add_argument("--spectrum-csv", type=Path, help="write the amplitude spectrum")
    sub.add_argument("--contours-csv", type=Path, help="write normalized and filtered contours")
    sub.add_argument("--response-csv", type=Path, help="write the bandpass filter response")
    _add_pitch_options(sub)
    _add_vibrato_options(sub)
    _add_trim_options(sub)
    sub.set_defaults(func=run_pvi)

    sub = subparsers.add_parser("stats", help="group statistics of features")
    sub.add_argument("--features", type=Path, required=True, help="features CSV file")
    sub.add_argument("--feature", help="comma-separated feature names (default: all)")
    sub.add_argument("--out", type=Path, help="JSON file (default: print)")
    sub.add_argument("--kde-csv", type=Path, help="write kernel density estimates")
    sub.set_defaults(func=run_stats)

    sub = subparsers.add_parser("age-correct", help="remove the age trend from features")
    sub.add_argument("--features", type=Path, required=True, help="features CSV file")
    sub.add_argument("--out", type=Path, required=True, help="corrected features CSV file")
    sub.set_defaults(func=run_age_correct)

    sub = subparsers.add_parser("classify", help="cross-validate a classifier")
    _add_cv_options(sub)
    sub.add_argument("--subset", help="comma-separated feature names (default: all)")
    sub.set_defaults(func=run_classify)

    sub = subparsers.add_parser("search", help="cross-validate every feature subset")
    _add_cv_options(sub)
    sub.add_argument("--candidates", help="search only these comma-separated features")
    sub.add_argument("--top", type=int, default=10, help="number of rows to print")
    sub.add_argument("--jobs", type=int, default=1, help="subsets evaluated in parallel")
    sub.set_defaults(func=run_search)

    sub = subparsers.add_parser("cohort", help="generate a synthetic features dataset")
    sub.add_argument("--out", type=Path, required=True, help="features CSV file")
    sub.add_argument("--n-healthy", type=int, default=39, help="number of healthy speakers")
    sub.add_argument("--n-als", type=int, default=15, help="number of ALS speakers")
    sub.add_argument(
        "--separation", type=float, default=0.0, help="ALS shift in standard deviations"
    )
    sub.add_argument("--informative", help="comma-separated features that differ (default: all)")
    sub.add_argument(
        "--age-slope", type=float, default=0.0, help="age effect in standard deviations per year"
    )
    _config_option(sub, "--seed", key="cv.seed", convert=int, help="random seed")
    sub.set_defaults(func=run_cohort)

    sub = subparsers.add_parser("fetch-info", help="how to get the public recordings")
    sub.set_defaults(func=run_fetch_info)

    return parser


def _config_overrides(args: argparse.Namespace) -> dict[str, dict[str, Any]]:
    result: dict[str, dict[str, Any]] = {}
    for dest, value in vars(args).items():
        if _CONFIG_SEPARATOR in dest and value is not None:
            section, key = dest.split(_CONFIG_SEPARATOR)
            result.setdefault(section, {})[key] = value
    return result


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)

    _logs.setup(
        all_loggers_verbose=args.verbose, verbose_loggers=(args.verbose_logger or [])
    )

    try:
        config = settings.load(args.config, _config_overrides(args))
    except settings.ConfigError as e:
        print(f"sustain: config: {e}", file=sys.stderr)
        return 2

    log.debug(f"running {args.command} with {dataclasses.asdict(config)}")
    try:
        args.func(args, config)
    except _UsageError as e:
        parser.error(str(e))  # exits with status 2
    except AnalysisError as e:
        log.debug(f"{args.command} failed", exc_info=True)
        print(f"sustain: {e.stage}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
