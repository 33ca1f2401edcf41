from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Any
from typing import TypeVar

import click

from wbinfer.arrow import ResultRow
from wbinfer.baselines import GOODNESS_OF_FIT
from wbinfer.baselines import Statistic
from wbinfer.baselines import TestResult
from wbinfer.baselines import gof_test
from wbinfer.baselines import lr_test
from wbinfer.config import merge_overrides
from wbinfer.config import read_config_file
from wbinfer.errors import CalibrationError
from wbinfer.errors import ConfigurationError
from wbinfer.errors import DomainError
from wbinfer.errors import ParseError
from wbinfer.errors import SpecValidationError
from wbinfer.experiments import HOMOGENEITY_DESIGNS
from wbinfer.experiments import NULL_STREAM
from wbinfer.experiments import ONESAMPLE_ALTERNATIVES
from wbinfer.experiments import ExperimentKind
from wbinfer.experiments import ExperimentSpec
from wbinfer.experiments import RunContext
from wbinfer.experiments import TestName
from wbinfer.experiments import default_homogeneity_spec
from wbinfer.experiments import default_onesample_spec
from wbinfer.experiments import paper_scale
from wbinfer.experiments import parse_spec
from wbinfer.experiments import run
from wbinfer.io import clear_output_path
from wbinfer.io import read_json
from wbinfer.io import read_observations
from wbinfer.models import TestDecision
from wbinfer.models import homogeneity_test
from wbinfer.models import onesample_test
from wbinfer.plot import PlotKind
from wbinfer.plot import plot_results
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.specfun import RngStream
from wbinfer.types import BeliefPair

logger = logging.getLogger(__name__)

CommandFn = TypeVar("CommandFn", bound=Callable[..., Any])

EXIT_INVALID = 2
EXIT_CALIBRATION = 3

# config-file keys holding comma-separated sequences
_SEQUENCE_KEYS = {"thetas", "omegas", "ns", "tests", "alternative", "null_params"}

# CLI option name -> experiment spec field, where they differ
_SPEC_FIELDS = {"reps": "replications"}


class WbInferGroup(click.Group):
    """Maps library errors to exit codes: 2 for invalid input, 3 for failed calibrations."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except (SpecValidationError, ConfigurationError, ParseError, DomainError) as error:
            click.echo(f"error: {error}", err=True)
            ctx.exit(EXIT_INVALID)
        except CalibrationError as error:
            click.echo(f"error: {error}", err=True)
            for point in error.result.trajectory[-5:]:
                click.echo(f"  t={point.iteration} omega={point.omega:.6g} phi={point.phi_hat:.4f}", err=True)
            ctx.exit(EXIT_CALIBRATION)


def _apply(function: CommandFn, options: list[Callable[[CommandFn], CommandFn]]) -> CommandFn:
    for option in reversed(options):
        function = option(function)
    return function


def run_options(function: CommandFn) -> CommandFn:
    options = [
        click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), default=None, help="Master seed."),
        click.option("--alpha", type=click.FloatRange(0.0, 1.0, min_open=True, max_open=True), default=None),
        click.option("--reps", type=click.IntRange(min=1), default=None, help="Replications per grid point."),
        click.option("--mc-inner", type=click.IntRange(min=1), default=None, help="Inner PRS draws."),
        click.option("--mc-outer", type=click.IntRange(min=1), default=None, help="Outer data draws."),
        click.option("--null-reps", type=click.IntRange(min=1), default=None, help="Baseline null replications."),
        click.option("--experiment-id", type=str, default=None, help="Name used for output files."),
        click.option("--out", "output_path", type=str, default=None, help="Output directory path or URI."),
        click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True),
        click.option("--cache-dir", type=str, default=None, help="Directory for calibration and null caches."),
        click.option("--config", "config_filename", type=str, default=None, help="Flat key = value settings file."),
    ]
    return _apply(function, options)


def calibration_options(function: CommandFn) -> CommandFn:
    options = [
        click.option("--sa-max-iters", type=click.IntRange(min=1), default=None),
        click.option("--sa-batch", type=click.IntRange(min=1), default=None),
        click.option("--sa-t0", type=click.FloatRange(min=0.0, min_open=True), default=None),
        click.option("--sa-c", type=click.FloatRange(min=0.0, min_open=True), default=None),
        click.option("--sa-tolerance", type=click.FloatRange(min=0.0, min_open=True), default=None),
        click.option("--sa-inner-early", type=click.IntRange(min=1), default=None),
        click.option("--sa-inner-late", type=click.IntRange(min=1), default=None),
        click.option("--recheck-outer", type=click.IntRange(min=1), default=None),
    ]
    return _apply(function, options)


def data_options(function: CommandFn) -> CommandFn:
    options = [
        click.option("--data", "data_filename", type=str, default=None, help="File of observations."),
        click.option("--value", "values", type=float, multiple=True, help="Observation; repeat for a sample."),
    ]
    return _apply(function, options)


def _config_values(filename: str | None) -> dict[str, Any]:
    if filename is None:
        return {}
    values: dict[str, Any] = {}
    for key, value in read_config_file(filename).items():
        values[key] = [part.strip() for part in value.split(",") if part.strip()] if key in _SEQUENCE_KEYS else value
    return values


def _build_spec(config_filename: str | None, **options: Any) -> ExperimentSpec:
    cli = {_SPEC_FIELDS.get(key, key): value for key, value in options.items()}
    return parse_spec(merge_overrides(_config_values(config_filename), cli))


def _observations(data_filename: str | None, values: tuple[float, ...]) -> list[float]:
    if data_filename is not None:
        return read_observations(data_filename) + list(values)
    if not values:
        raise ConfigurationError("give observations with --data or --value")
    return list(values)


def _echo_rows(rows: list[ResultRow]) -> None:
    click.echo(f"{'test':<16}{'param1':>10}{'param2':>10}{'n':>6}{'estimate':>12}{'se':>10}")
    for row in rows:
        click.echo(
            f"{row.test:<16}{row.param1:>10.4g}{row.param2:>10.4g}{row.n:>6}{row.estimate:>12.6f}{row.se:>10.4f}"
        )


def _run_and_echo(
    ctx: click.Context, spec: ExperimentSpec, output_path: str | None, threads: int, cache_dir: str | None
) -> None:
    output = run(spec, output_path, threads=threads, progress=ctx.obj["progress"], cache_dir=cache_dir)
    _echo_rows(output.rows)
    if output_path is not None:
        click.echo(f"wrote {len(output.rows)} rows to {output_path}")


def _echo_decision(name: str, decision: TestDecision) -> None:
    evidence: BeliefPair = decision.evidence
    verdict = "reject" if decision.reject else "accept"
    click.echo(
        f"{name:<6} pl={evidence.plausibility:.4f} (se {evidence.plausibility_se:.4f}) "
        f"omega={decision.omega:.6g} alpha={decision.alpha:g} -> {verdict}"
    )


def _echo_baseline(name: str, result: TestResult) -> None:
    verdict = "reject" if result.reject else "accept"
    click.echo(
        f"{name:<6} T={result.statistic:.4f} crit={result.critical_value:.4f} "
        f"p={result.p_value:.4f} (se {result.p_value_se:.4f}) -> {verdict}"
    )


@click.group(cls=WbInferGroup, context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    show_default=True,
)
@click.option("--quiet", is_flag=True, help="Disable progress bars.")
@click.pass_context
def main(ctx: click.Context, log_level: str, quiet: bool) -> None:
    """Weak-belief inference: calibrate predictive random sets, evaluate beliefs and run power studies."""
    logging.basicConfig(level=log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    ctx.obj = {"progress": not quiet}


@main.command(name="calibrate")
@click.option("--family", type=click.Choice([k.value for k in PrsKind]), default=None, help="PRS family.")
@click.option("--n", type=click.IntRange(min=1), default=None, help="Dimension parameter of the family.")
@run_options
@calibration_options
@click.pass_context
def calibrate_command(
    ctx: click.Context,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Solve phi(omega) = alpha for the maximal-belief omega."""
    spec = _build_spec(config_filename, kind=ExperimentKind.CALIBRATE, **options)
    _run_and_echo(ctx, spec, output_path, threads, cache_dir)


@main.command(name="belief")
@click.option("--model", type=click.Choice(["normal", "bernoulli"]), default=None)
@click.option("--x", type=float, default=None, help="Normal observation.")
@click.option("--n", type=click.IntRange(min=1), default=None, help="Bernoulli trials.")
@click.option("--successes", type=click.IntRange(min=0), default=None, help="Bernoulli successes.")
@click.option("--theta", "thetas", type=float, multiple=True, help="Threshold of {Theta <= theta}; repeatable.")
@click.option("--omega", "omegas", type=click.FloatRange(0.0, 1.0), multiple=True, help="Weakening; repeatable.")
@click.option("--mc", "with_mc", is_flag=True, help="Add Monte Carlo estimates next to the closed form.")
@run_options
@click.pass_context
def belief_command(
    ctx: click.Context,
    with_mc: bool,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Belief and plausibility of {Theta <= theta} over a theta x omega grid."""
    tests = (TestName.MB, TestName.MB_MC) if with_mc else None
    spec = _build_spec(config_filename, kind=ExperimentKind.BELIEF_CURVE, tests=tests, **options)
    _run_and_echo(ctx, spec, output_path, threads, cache_dir)


@main.command(name="credibility")
@click.option("--family", type=click.Choice([k.value for k in PrsKind]), default=None, help="PRS family.")
@click.option("--n", type=click.IntRange(min=1), default=None)
@click.option("--omega", "omegas", type=click.FloatRange(min=0.0), multiple=True, help="Grid point; repeatable.")
@run_options
@click.pass_context
def credibility_command(
    ctx: click.Context,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Credibility curve phi_alpha(omega) over a grid."""
    spec = _build_spec(config_filename, kind=ExperimentKind.CREDIBILITY_CURVE, **options)
    _run_and_echo(ctx, spec, output_path, threads, cache_dir)


def _calibrated(spec: ExperimentSpec, family: PrsFamily, output_path: str | None, cache_dir: str | None) -> Any:
    return RunContext(spec=spec, cache_dir=cache_dir, output_path=output_path).calibrate(family)


@main.command(name="test-homogeneity")
@data_options
@click.option("--lr/--no-lr", "with_lr", default=True, show_default=True, help="Also run the likelihood-ratio test.")
@run_options
@calibration_options
def test_homogeneity_command(
    data_filename: str | None,
    values: tuple[float, ...],
    with_lr: bool,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Test equality of exponential rates for one sample."""
    x = _observations(data_filename, values)
    spec = _build_spec(config_filename, kind=ExperimentKind.CALIBRATE, family=PrsKind.KL_BALL, n=len(x), **options)
    calib = _calibrated(spec, PrsFamily(PrsKind.KL_BALL, n=len(x)), output_path, cache_dir)
    decision = homogeneity_test(x, spec.alpha, calib, spec.mc, RngStream(spec.seed))
    _echo_decision("mb", decision)
    if with_lr:
        null_rng = RngStream(spec.seed, NULL_STREAM, (len(x),))
        _echo_baseline("lr", lr_test(x, spec.alpha, spec.null_reps, null_rng))


@main.command(name="test-onesample")
@data_options
@click.option("--null", "null_distribution", type=str, default=None, help="scipy.stats name of F0.")
@click.option("--null-param", "null_params", type=float, multiple=True, help="Parameter of F0; repeatable.")
@click.option(
    "--baseline", "baselines", type=click.Choice([s.value for s in GOODNESS_OF_FIT]), multiple=True, default=()
)
@run_options
@calibration_options
def test_onesample_command(
    data_filename: str | None,
    values: tuple[float, ...],
    baselines: tuple[str, ...],
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Test H0: F = F0 for one sample."""
    x = _observations(data_filename, values)
    spec = _build_spec(
        config_filename, kind=ExperimentKind.CALIBRATE, family=PrsKind.BETA_BOX_HIER, n=len(x), **options
    )
    calib = _calibrated(spec, PrsFamily(PrsKind.BETA_BOX_HIER, n=len(x)), output_path, cache_dir)
    decision = onesample_test(x, spec.f0, spec.alpha, calib, spec.mc, RngStream(spec.seed))
    _echo_decision("mb", decision)
    for name in baselines:
        statistic = Statistic(name)
        null_rng = RngStream(spec.seed, NULL_STREAM, (GOODNESS_OF_FIT.index(statistic) + 1, len(x)))
        _echo_baseline(name, gof_test(statistic, x, spec.f0, spec.alpha, spec.null_reps, null_rng))


@main.command(name="power")
@click.option("--study", type=click.Choice(["homogeneity", "onesample"]), default="homogeneity", show_default=True)
@click.option("--design", type=click.Choice(sorted(HOMOGENEITY_DESIGNS)), default="balanced", show_default=True)
@click.option("--alternative", type=click.Choice(sorted(ONESAMPLE_ALTERNATIVES)), default="a", show_default=True)
@click.option("--spec", "spec_filename", type=str, default=None, help="JSON experiment spec or manifest.")
@click.option("--theta", "thetas", type=click.FloatRange(min=0.0, min_open=True), multiple=True)
@click.option("--ns", type=click.IntRange(min=1), multiple=True)
@click.option("--test", "tests", type=click.Choice([t.value for t in TestName]), multiple=True)
@click.option("--paper-scale", "full_scale", is_flag=True, help="Use at least 1000 replications per grid point.")
@run_options
@calibration_options
@click.pass_context
def power_command(
    ctx: click.Context,
    study: str,
    design: str,
    alternative: str,
    spec_filename: str | None,
    full_scale: bool,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Rejection rates of the maximal-belief test and its baselines over a grid of alternatives."""
    if spec_filename is not None:
        payload = read_json(spec_filename)
        base = dict(payload.get("spec", payload))
    elif study == "homogeneity":
        base = default_homogeneity_spec(design).model_dump()
    else:
        base = default_onesample_spec(alternative).model_dump()
    cli = {_SPEC_FIELDS.get(key, key): value for key, value in options.items()}
    spec = parse_spec(merge_overrides(merge_overrides(base, _config_values(config_filename)), cli))
    if full_scale:
        spec = paper_scale(spec)
    _run_and_echo(ctx, spec, output_path, threads, cache_dir)


@main.command(name="size")
@click.option("--model", type=click.Choice(["homogeneity", "onesample"]), default=None)
@click.option("--ns", type=click.IntRange(min=1), multiple=True)
@click.option("--test", "tests", type=click.Choice([t.value for t in TestName]), multiple=True)
@run_options
@calibration_options
@click.pass_context
def size_command(
    ctx: click.Context,
    output_path: str | None,
    threads: int,
    cache_dir: str | None,
    config_filename: str | None,
    **options: Any,
) -> None:
    """Empirical type-I error of the tests at the nominal level alpha."""
    spec = _build_spec(config_filename, kind=ExperimentKind.TYPE1_SIZE, **options)
    _run_and_echo(ctx, spec, output_path, threads, cache_dir)


@main.command(name="clear-output-path")
@click.option("--output-path", required=True, type=str, help="Output directory path or URI.")
def clear_output_path_command(output_path: str) -> None:
    """Remove a results directory, caches included."""
    clear_output_path(output_path)


@main.command(name="plot")
@click.option("--results", "csv_filename", required=True, type=str, help="Results CSV filename or URI.")
@click.option("--kind", type=click.Choice([k.value for k in PlotKind]), required=True)
@click.option("--out", "output_filename", required=True, type=str, help="Output SVG filename or URI.")
@click.option("--experiment", type=str, default=None, help="Only plot rows of this experiment id.")
def plot_command(csv_filename: str, kind: str, output_filename: str, experiment: str | None) -> None:
    """Render a results CSV as an SVG plot."""
    series = plot_results(csv_filename, PlotKind(kind), output_filename, experiment)
    click.echo(f"wrote {series} series to {output_filename}")


if __name__ == "__main__":
    main()
