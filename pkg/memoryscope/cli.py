"""
Command-line front end.

Every subcommand computes first and writes its outputs afterwards, all inside
``--out``. Exit codes: 0 success, 2 configuration error, 3 numerical or
validation failure.
"""
import argparse
import hashlib
import logging
import sys
import typing as tp

import numpy as np
from pydantic import ValidationError

from memoryscope import __version__
from memoryscope.artifacts import (
    ArtifactSet,
    RunManifest,
    csv_bytes,
    now,
    profile_csv,
    table1_csv,
    trajectory_csv,
)
from memoryscope.config import (
    FPDephasingSpec,
    HemisphericalSpec,
    RunConfig,
    SphereSpec,
    canonical_json,
    load_config,
)
from memoryscope.dynamics import TimeGrid, check_family
from memoryscope.errors import ConfigError, MemoryScopeError
from memoryscope.experiment import (
    TABLE_AMPLITUDES,
    ExperimentConfig,
    Reading,
    calibrate_delay,
    table1_run,
)
from memoryscope.linalg import eigvalsh_hermitian
from memoryscope.log import configure_logging
from memoryscope.measure import (
    StateScan,
    integrate_increases,
    local_scan,
    orthogonal_scan,
    trajectory,
)
from memoryscope.parallel import default_jobs
from memoryscope.qstate import trace_distances
from memoryscope.surfaces import validate_surface

logger = logging.getLogger("memoryscope.cli")

EXIT_OK = 0
EXIT_FAILED = 3


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="override every configured seed")
    common.add_argument(
        "--jobs", type=int, help="worker threads (default: available processors)"
    )
    common.add_argument(
        "--window",
        nargs=2,
        type=float,
        metavar=("L1", "L2"),
        help="thickness window in units of lambda0 (times for non-optical families)",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="memoryscope",
        description=(
            "Trace-distance non-Markovianity by orthogonal pairs and by local surface scans."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    measure = sub.add_parser("measure", parents=[common], help="compute the measure")
    measure.add_argument("--mode", choices=("local", "orthogonal", "both"), default="both")
    measure.set_defaults(func=cmd_measure)

    reproduce = sub.add_parser(
        "reproduce-paper", parents=[common], help="surface and pair scans for three amplitudes"
    )
    reproduce.add_argument(
        "--full-reading",
        action="store_true",
        help="integrate every increase on the thickness grid instead of the window increase",
    )
    reproduce.set_defaults(func=cmd_reproduce_paper)

    validate = sub.add_parser("validate", parents=[common], help="check family and surface")
    validate.set_defaults(func=cmd_validate)

    scan = sub.add_parser("scan-surface", parents=[common], help="sample the configured surface")
    scan.set_defaults(func=cmd_scan_surface)

    traj = sub.add_parser(
        "trajectory", parents=[common], help="trace distance of the configured pair"
    )
    traj.set_defaults(func=cmd_trajectory)
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    config = load_config(args.config)
    logger.info("loaded %s (%s dynamics)", args.config, config.dynamics.family)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.window is not None:
        config = _apply_window(config, *args.window)
    return config


def _apply_window(config: RunConfig, l1: float, l2: float) -> RunConfig:
    if not l1 < l2:
        raise ConfigError(f"need L1 < L2, got {l1:g} {l2:g}", location="--window")
    dynamics = config.dynamics
    if isinstance(dynamics, FPDephasingSpec):
        windowed: tp.Any = dynamics.windowed(l1, l2)
    else:
        points = dynamics.grid.points if dynamics.grid is not None else 2
        windowed = dynamics.model_copy(
            update={"grid": TimeGrid(t_min=l1, t_max=l2, points=points)}
        )
    return config.model_copy(update={"dynamics": windowed})


def _manifest(command: str, config: tp.Any, seeds: dict[str, int], **extra: tp.Any) -> RunManifest:
    digest = hashlib.sha256(canonical_json(config).encode()).hexdigest()
    return RunManifest(
        command=command,
        config_hash=digest,
        seeds=seeds,
        started_at=now(),
        finished_at="",
        **extra,
    )


def _scan_csv(scan: StateScan) -> bytes:
    rows = np.stack([scan.theta, scan.phi, scan.increase, scan.normalized_increase], axis=-1)
    return csv_bytes(("theta", "phi", "increase", "normalized_increase"), rows)


def _describe_argmax(scan: StateScan) -> str:
    argmax = scan.result.argmax or {}
    if "theta" in argmax:
        return f"theta={argmax['theta']:.6f} phi={argmax['phi']:.6f}"
    return f"index {argmax.get('index')}"


def cmd_measure(args: argparse.Namespace) -> int:
    config = _load(args)
    family, times = config.dynamics.build()
    scans: dict[str, StateScan] = {}
    if args.mode in ("local", "both"):
        if config.surface is None:
            raise ConfigError("local mode needs a 'surface' section", location="surface")
        surface = config.surface.build()
        scans["local"] = local_scan(
            family, surface.reference, surface, None, times, args.jobs, config.chunk_size
        )
    if args.mode in ("orthogonal", "both"):
        scans["orthogonal"] = orthogonal_scan(
            family, config.pair_lattice(family.dim), times, args.jobs, config.chunk_size
        )

    artifacts = ArtifactSet()
    for name, scan in scans.items():
        artifacts.add_model(f"{name}.json", scan.result)
        artifacts.add(f"{name}_scan.csv", _scan_csv(scan))
    artifacts.commit(args.out, _manifest("measure", config, config.seeds()))

    for name, scan in scans.items():
        print(f"N_{name} = {scan.result.value:.6f}  argmax: {_describe_argmax(scan)}")
    if len(scans) == 2:
        gap = abs(scans["local"].result.value - scans["orthogonal"].result.value)
        print(f"|N_local - N_orthogonal| = {gap:.3e}")
    return EXIT_OK


def cmd_trajectory(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.pair is None:
        raise ConfigError("trajectory needs a 'pair' section", location="pair")
    family, times = config.dynamics.build()
    rho_a, rho_b = config.pair.build()
    traj = trajectory(family, rho_a, rho_b, times)
    result = integrate_increases(traj)

    artifacts = ArtifactSet()
    artifacts.add("trajectory.csv", trajectory_csv(traj.times, traj.values))
    artifacts.add_model("trajectory.json", result)
    artifacts.commit(args.out, _manifest("trajectory", config, config.seeds()))
    print(
        f"D(0) = {traj.initial_distance:.6f}  N_pair = {result.value:.6f}  "
        f"increase intervals: {len(result.increase_intervals)}"
    )
    return EXIT_OK


def cmd_scan_surface(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.surface is None:
        raise ConfigError("scan-surface needs a 'surface' section", location="surface")
    surface = config.surface.build()
    sample = surface.sample()
    distance = trace_distances(sample.states, surface.reference.entries[None])
    eigenvalues = eigvalsh_hermitian(sample.states)
    purity = np.einsum("nij,nji->n", sample.states, sample.states).real
    rows = np.stack(
        [np.arange(len(sample)), sample.theta, sample.phi, distance, eigenvalues[:, 0], purity],
        axis=-1,
    )
    artifacts = ArtifactSet()
    artifacts.add(
        "surface.csv",
        csv_bytes(("index", "theta", "phi", "distance", "min_eigenvalue", "purity"), rows),
    )
    artifacts.commit(args.out, _manifest("scan-surface", config, config.seeds()))
    print(
        f"{len(sample)} {surface.kind.value} states; distance to reference "
        f"in [{np.min(distance):.6f}, {np.max(distance):.6f}]"
    )
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = _load(args)
    family, _ = config.dynamics.build()
    check_times = np.linspace(0.0, family.horizon, config.validation.cptp_points)
    family_report = check_family(family, check_times)

    surface_report = None
    if config.surface is not None:
        spec = config.surface
        if isinstance(spec, (SphereSpec, HemisphericalSpec)):
            # probe the directions a strict build would reject up front
            spec = spec.model_copy(update={"strict": False})
        surface_report = validate_surface(
            spec.build(), config.validation.n_directions, config.validation.seed
        )

    artifacts = ArtifactSet()
    artifacts.add_model("family_report.json", family_report)
    if surface_report is not None:
        artifacts.add_model("surface_report.json", surface_report)
    artifacts.commit(args.out, _manifest("validate", config, config.seeds()))

    ok = family_report.ok and (surface_report is None or surface_report.ok)
    print(
        f"{family_report.family}: trace error {family_report.max_trace_error:.3e}, "
        f"Choi min eigenvalue {family_report.min_choi_eigenvalue:.3e}, "
        f"identity error {family_report.identity_error:.3e}"
    )
    if surface_report is not None:
        print(
            f"{surface_report.kind} surface: {len(surface_report.failures)} failures "
            f"over {surface_report.n_directions} directions"
        )
        for failure in surface_report.failures[:20]:
            coords = ", ".join(f"{c:+.4f}" for c in failure.direction)
            print(f"  #{failure.index} ({coords}): {failure.reason}")
    return EXIT_OK if ok else EXIT_FAILED


def _experiment_config(args: argparse.Namespace) -> tuple[ExperimentConfig, RunConfig | None]:
    run = _load(args) if args.config else None
    experiment = (run.experiment if run is not None else None) or ExperimentConfig()
    update: dict[str, tp.Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.window is not None:
        update["window"] = tuple(args.window)
    if update:
        experiment = ExperimentConfig.model_validate({**experiment.model_dump(), **update})
    return experiment, run


def cmd_reproduce_paper(args: argparse.Namespace) -> int:
    experiment, run = _experiment_config(args)
    calibration = None
    if experiment.delay is None:
        strongest = experiment.params.model_copy(update={"a_alpha": TABLE_AMPLITUDES[0]})
        calibration = calibrate_delay(strongest, window=experiment.window)
    reading = Reading.FULL if args.full_reading else Reading.WINDOWED
    outcome = table1_run(experiment, calibration, reading, jobs=args.jobs)

    artifacts = ArtifactSet()
    for key, dataset in outcome.datasets.items():
        artifacts.add_dataset(f"datasets/{key}", dataset, heatmap=True)
    for key, profile in outcome.profiles.items():
        artifacts.add(f"profiles/{key}.csv", profile_csv(profile))
    artifacts.add("table1.csv", table1_csv(outcome.table))
    artifacts.add_text("table1.txt", outcome.table.format())
    artifacts.add_model("table1.json", outcome.table)

    seeds = run.seeds() if run is not None else {}
    seeds["experiment"] = experiment.seed
    manifest = _manifest(
        "reproduce-paper",
        experiment,
        seeds,
        calibration=calibration.model_dump(mode="json") if calibration else None,
    )
    artifacts.commit(args.out, manifest)
    print(outcome.table.format(), end="")
    return EXIT_OK


def main(argv: tp.Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    if args.jobs is None:
        args.jobs = default_jobs()
    try:
        return int(args.func(args))
    except MemoryScopeError as exc:
        print(f"memoryscope: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        print(f"memoryscope: error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
