"""Declarative power/size studies and curve tables.

Every replication draws from ``RngStream(seed, replication, (grid_index, purpose))``, so results do not
depend on the worker pool size or on the order in which replications finish.
"""

from __future__ import annotations

import logging
import os.path
import time
from collections.abc import Callable
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from dataclasses import dataclass
from enum import StrEnum
from typing import Any
from typing import Self

import numpy as np
from more_itertools import chunked
from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import ValidationError
from pydantic import model_validator
from tqdm import tqdm

from wbinfer import __version__
from wbinfer.arrow import ResultRow
from wbinfer.baselines import DEFAULT_NULL_REPS
from wbinfer.baselines import GOODNESS_OF_FIT
from wbinfer.baselines import Statistic
from wbinfer.baselines import gof_test
from wbinfer.baselines import lr_test
from wbinfer.calibrate import CalibrationResult
from wbinfer.calibrate import credibility_curve
from wbinfer.calibrate import solve_mb
from wbinfer.config import MonteCarloParams
from wbinfer.config import SaParams
from wbinfer.errors import CalibrationError
from wbinfer.errors import SpecValidationError
from wbinfer.io import CalibrationCache
from wbinfer.io import NullDistributionCache
from wbinfer.io import calibration_to_dict
from wbinfer.io import create_output_path
from wbinfer.io import read_json
from wbinfer.io import write_json
from wbinfer.io import write_manifest
from wbinfer.io import write_results_csv
from wbinfer.models import ModelParams
from wbinfer.models import bernoulli_belief
from wbinfer.models import bernoulli_belief_mc
from wbinfer.models import generate_data
from wbinfer.models import homogeneity_test
from wbinfer.models import normal_belief
from wbinfer.models import normal_belief_mc
from wbinfer.models import onesample_test
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.specfun import RngStream
from wbinfer.types import Distribution
from wbinfer.types import ModelTag
from wbinfer.types import binomial_se

logger = logging.getLogger(__name__)

CALIBRATION_STREAM = 2**63
NULL_STREAM = 2**63 + 1
CURVE_STREAM = 2**63 + 2

DATA_PURPOSE = 0
MB_PURPOSE = 1
BASELINE_PURPOSE = 2

DESK_REPLICATIONS = 500
PAPER_REPLICATIONS = 1000

# Beta(b1, b2) alternatives of the one-sample power study
ONESAMPLE_ALTERNATIVES = {
    "a": (0.8, 0.8),
    "b": (1.3, 1.3),
    "c": (0.6, 0.6),
    "d": (1.6, 1.6),
    "e": (0.6, 0.8),
    "f": (1.3, 1.6),
}
HOMOGENEITY_DESIGNS = {"balanced": (50, 50), "unbalanced": (10, 90)}


class ExperimentKind(StrEnum):
    BELIEF_CURVE = "belief-curve"
    CREDIBILITY_CURVE = "credibility-curve"
    CALIBRATE = "calibrate"
    HOMOGENEITY_POWER = "homogeneity-power"
    ONESAMPLE_POWER = "onesample-power"
    TYPE1_SIZE = "type1-size"


class TestName(StrEnum):
    __test__ = False

    MB = "mb"
    MB_MC = "mb-mc"
    LR = "lr"
    KS = "ks"
    AD = "ad"
    CVM = "cvm"


_BASELINE_STATISTICS = {
    TestName.LR: Statistic.LR,
    TestName.KS: Statistic.KS,
    TestName.AD: Statistic.AD,
    TestName.CVM: Statistic.CVM,
}

_UNIT_FAMILIES = (PrsKind.POINT, PrsKind.VACUOUS, PrsKind.INTERVAL, PrsKind.RECTANGLE)


class ExperimentSpec(BaseModel):
    """A power/size study or curve table; everything needed to reproduce a result file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment_id: str = "experiment"
    kind: ExperimentKind
    model: ModelTag | None = None
    family: PrsKind | None = None
    tests: tuple[TestName, ...] = (TestName.MB,)

    x: float | None = None
    n: int | None = Field(default=None, ge=1)
    successes: int | None = Field(default=None, ge=0)
    n1: int | None = Field(default=None, ge=1)
    n2: int | None = Field(default=None, ge=1)
    thetas: tuple[float, ...] = ()
    omegas: tuple[float, ...] = ()
    ns: tuple[int, ...] = ()
    alternative: tuple[float, float] | None = None
    null_distribution: str = "uniform"
    null_params: tuple[float, ...] = (0.0, 1.0)

    replications: int = Field(default=DESK_REPLICATIONS, ge=1)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    mc_inner: int = Field(default=10_000, ge=100)
    mc_outer: int = Field(default=1_000, ge=1)
    recheck_outer: int = Field(default=10_000, ge=1)
    null_reps: int = Field(default=DEFAULT_NULL_REPS, ge=1_000)
    sa_max_iters: int = Field(default=2000, ge=1)
    sa_batch: int = Field(default=200, ge=1)
    sa_t0: float = Field(default=20.0, gt=0.0)
    sa_c: float | None = Field(default=None, gt=0.0)
    sa_inner_early: int = Field(default=1_000, ge=100)
    sa_inner_late: int = Field(default=10_000, ge=100)
    sa_tolerance: float = Field(default=0.01, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _check_kind_requirements(self) -> Self:
        problems = list(self._kind_problems())
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def _kind_problems(self) -> Iterable[str]:
        match self.kind:
            case ExperimentKind.BELIEF_CURVE:
                if self.model not in (ModelTag.NORMAL, ModelTag.BERNOULLI):
                    yield "model: belief-curve needs model 'normal' or 'bernoulli'"
                if self.model == ModelTag.NORMAL and self.x is None:
                    yield "x: normal belief curves need the observation x"
                if self.model == ModelTag.BERNOULLI and (self.n is None or self.successes is None):
                    yield "n, successes: Bernoulli belief curves need n and successes"
                if self.model == ModelTag.BERNOULLI and self.n is not None and (self.successes or 0) > self.n:
                    yield "successes: must not exceed n"
                if not self.thetas:
                    yield "thetas: grid must be nonempty"
                if not self.omegas:
                    yield "omegas: grid must be nonempty"
            case ExperimentKind.CREDIBILITY_CURVE | ExperimentKind.CALIBRATE:
                if self.family is None:
                    yield "family: a PRS family is required"
                if self.kind == ExperimentKind.CREDIBILITY_CURVE and not self.omegas:
                    yield "omegas: grid must be nonempty"
                if self.family == PrsKind.KL_BALL and self.n is not None and self.n < 2:
                    yield "n: the kl-ball family needs n >= 2"
                if self.family in _UNIT_FAMILIES and any(w > 1.0 for w in self.omegas):
                    yield f"omegas: {self.family} indices must lie in [0, 1]"
            case ExperimentKind.HOMOGENEITY_POWER:
                if self.n1 is None or self.n2 is None:
                    yield "n1, n2: homogeneity power needs both group sizes"
                if not self.thetas:
                    yield "thetas: rate-ratio grid must be nonempty"
                yield from self._test_problems({TestName.MB, TestName.LR})
            case ExperimentKind.ONESAMPLE_POWER:
                if self.alternative is None:
                    yield "alternative: one-sample power needs Beta(b1, b2) parameters"
                if not self.ns:
                    yield "ns: sample-size grid must be nonempty"
                yield from self._test_problems({TestName.MB, TestName.KS, TestName.AD, TestName.CVM})
            case ExperimentKind.TYPE1_SIZE:
                if self.model not in (ModelTag.HOMOGENEITY, ModelTag.ONESAMPLE):
                    yield "model: type1-size needs model 'homogeneity' or 'onesample'"
                if not self.ns:
                    yield "ns: sample-size grid must be nonempty"
                if self.model == ModelTag.HOMOGENEITY:
                    yield from self._test_problems({TestName.MB, TestName.LR})
                    if any(n < 2 for n in self.ns):
                        yield "ns: homogeneity needs at least two observations"
                elif self.model == ModelTag.ONESAMPLE:
                    yield from self._test_problems({TestName.MB, TestName.KS, TestName.AD, TestName.CVM})
        if any(w < 0.0 for w in self.omegas):
            yield "omegas: values must be nonnegative"

    def _test_problems(self, allowed: set[TestName]) -> Iterable[str]:
        extra = sorted(set(self.tests) - allowed)
        if extra:
            yield f"tests: {', '.join(extra)} not available for {self.kind}"

    @property
    def mc(self) -> MonteCarloParams:
        return MonteCarloParams(inner=self.mc_inner, outer=self.mc_outer, recheck_outer=self.recheck_outer)

    @property
    def sa(self) -> SaParams:
        return SaParams(
            c=self.sa_c,
            t0=self.sa_t0,
            max_iters=self.sa_max_iters,
            batch=self.sa_batch,
            inner_early=self.sa_inner_early,
            inner_late=self.sa_inner_late,
            recheck_outer=self.recheck_outer,
            tolerance=self.sa_tolerance,
        )

    @property
    def f0(self) -> Distribution:
        return Distribution(self.null_distribution, self.null_params)

    def calibration_settings(self) -> dict[str, Any]:
        return asdict(self.sa) | {"mc_inner": self.mc_inner}


def parse_spec(values: dict[str, Any]) -> ExperimentSpec:
    try:
        return ExperimentSpec.model_validate(values)
    except ValidationError as error:
        raise SpecValidationError([dict(e) for e in error.errors()]) from error


def load_manifest(filename: str) -> ExperimentSpec:
    return parse_spec(read_json(filename)["spec"])


@dataclass(frozen=True)
class RunOutput:
    rows: list[ResultRow]
    manifest: dict[str, Any]


@dataclass
class RunContext:
    spec: ExperimentSpec
    threads: int = 1
    progress: bool = False
    cache_dir: str | None = None
    output_path: str | None = None

    def __post_init__(self) -> None:
        self.calibrations = CalibrationCache(self._cache_path("calibrations"))
        self.nulls = NullDistributionCache(self._cache_path("nulls"))

    def _cache_path(self, name: str) -> str | None:
        return os.path.join(self.cache_dir, name) if self.cache_dir is not None else None

    def row(self, test: str, param1: float, param2: float, n: int, estimate: float, se: float, reps: int) -> ResultRow:
        return ResultRow(
            experiment=self.spec.experiment_id,
            test=test,
            param1=float(param1),
            param2=float(param2),
            n=int(n),
            estimate=float(estimate),
            se=float(se),
            reps=int(reps),
            seed=self.spec.seed,
        )

    def calibrate(self, family: PrsFamily) -> CalibrationResult:
        spec = self.spec
        key = CalibrationCache.key(family, spec.alpha, spec.calibration_settings(), spec.seed)
        rng = RngStream(spec.seed, CALIBRATION_STREAM, (list(PrsKind).index(family.kind), family.n))
        result = self.calibrations.get_or_create(key, lambda: solve_mb(family, spec.alpha, spec.sa, rng))
        if not result.converged:
            if self.output_path is not None:
                write_json(
                    os.path.join(self.output_path, f"{spec.experiment_id}_calibration_failure.json"),
                    calibration_to_dict(result),
                )
            raise CalibrationError(result)
        return result

    def replicate(self, task: Callable[[int], dict[str, bool]], description: str) -> list[dict[str, bool]]:
        replications = range(self.spec.replications)
        with tqdm(total=len(replications), desc=description, unit="rep", disable=not self.progress) as pbar:
            if self.threads <= 1:
                results = []
                for batch in chunked(replications, 64):
                    results.extend(task(r) for r in batch)
                    pbar.update(len(batch))
                return results
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                results = []
                for outcome in pool.map(task, replications):
                    results.append(outcome)
                    pbar.update(1)
                return results


def _rejection_rows(
    context: RunContext,
    outcomes: list[dict[str, bool]],
    tests: Iterable[TestName],
    param1: float,
    param2: float,
    n: int,
) -> list[ResultRow]:
    rows = []
    for test in tests:
        rate = float(np.mean([outcome[test] for outcome in outcomes]))
        rows.append(context.row(test, param1, param2, n, rate, binomial_se(rate, len(outcomes)), len(outcomes)))
    return rows


def _belief_curve(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    rows = []
    for j, omega in enumerate(spec.omegas):
        for k, theta in enumerate(spec.thetas):
            rng = RngStream(spec.seed, CURVE_STREAM, (j, k))
            if spec.model == ModelTag.NORMAL:
                assert spec.x is not None
                pair = normal_belief(spec.x, theta, omega)
                mc_pair = normal_belief_mc(spec.x, theta, omega, spec.mc, rng) if TestName.MB_MC in spec.tests else None
                n = 1
            else:
                assert spec.n is not None and spec.successes is not None
                pair = bernoulli_belief(spec.n, spec.successes, theta, omega)
                mc_pair = (
                    bernoulli_belief_mc(spec.n, spec.successes, theta, omega, spec.mc, rng)
                    if TestName.MB_MC in spec.tests
                    else None
                )
                n = spec.n
            rows.append(context.row("belief", theta, omega, n, pair.belief, 0.0, 0))
            rows.append(context.row("plausibility", theta, omega, n, pair.plausibility, 0.0, 0))
            if mc_pair is not None:
                rows.append(context.row("belief-mc", theta, omega, n, mc_pair.belief, mc_pair.belief_se, spec.mc_inner))
                rows.append(
                    context.row(
                        "plausibility-mc", theta, omega, n, mc_pair.plausibility, mc_pair.plausibility_se, spec.mc_inner
                    )
                )
    return rows


def _family(spec: ExperimentSpec, n: int | None = None) -> PrsFamily:
    assert spec.family is not None
    if spec.family in (PrsKind.POINT, PrsKind.VACUOUS, PrsKind.INTERVAL):
        return PrsFamily(spec.family)
    return PrsFamily(spec.family, n=n or spec.n or 2)


def _credibility_curve(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    family = _family(spec)
    curve = credibility_curve(family, spec.omegas, spec.alpha, spec.mc, RngStream(spec.seed, CURVE_STREAM))
    return [context.row("phi", e.omega, e.alpha, family.n, e.phi_hat, e.std_err, e.outer_draws) for e in curve]


def _calibrate(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    family = _family(spec)
    result = context.calibrate(family)
    return [
        context.row("omega_star", spec.alpha, 0.0, family.n, result.omega_star, 0.0, len(result.trajectory)),
        context.row(
            "phi",
            spec.alpha,
            result.omega_star,
            family.n,
            result.final_phi.phi_hat,
            result.final_phi.std_err,
            result.final_phi.outer_draws,
        ),
    ]


def _homogeneity_outcomes(
    context: RunContext, rates: tuple[float, ...], grid_index: int, description: str
) -> list[dict[str, bool]]:
    spec = context.spec
    n = len(rates)
    calib = context.calibrate(PrsFamily(PrsKind.KL_BALL, n=n)) if TestName.MB in spec.tests else None
    null_rng = RngStream(spec.seed, NULL_STREAM, (n,))

    def task(replication: int) -> dict[str, bool]:
        rng = RngStream(spec.seed, replication, (grid_index,))
        data = generate_data(ModelTag.HOMOGENEITY, ModelParams(rates=rates), n, rng.child(DATA_PURPOSE))
        outcome = {}
        if calib is not None:
            decision = homogeneity_test(data.observations, spec.alpha, calib, spec.mc, rng.child(MB_PURPOSE))
            outcome[TestName.MB] = decision.reject
        if TestName.LR in spec.tests:
            result = lr_test(data.observations, spec.alpha, spec.null_reps, null_rng, context.nulls)
            outcome[TestName.LR] = result.reject
        return outcome

    return context.replicate(task, description)


def _onesample_outcomes(
    context: RunContext, sampling: Distribution, n: int, grid_index: int, description: str
) -> list[dict[str, bool]]:
    spec = context.spec
    f0 = spec.f0
    calib = context.calibrate(PrsFamily(PrsKind.BETA_BOX_HIER, n=n)) if TestName.MB in spec.tests else None
    baselines = [t for t in spec.tests if t in (TestName.KS, TestName.AD, TestName.CVM)]

    def task(replication: int) -> dict[str, bool]:
        rng = RngStream(spec.seed, replication, (grid_index,))
        data = generate_data(ModelTag.ONESAMPLE, ModelParams(distribution=sampling), n, rng.child(DATA_PURPOSE))
        outcome = {}
        if calib is not None:
            decision = onesample_test(data.observations, f0, spec.alpha, calib, spec.mc, rng.child(MB_PURPOSE))
            outcome[TestName.MB] = decision.reject
        for test in baselines:
            statistic = _BASELINE_STATISTICS[test]
            null_rng = RngStream(spec.seed, NULL_STREAM, (GOODNESS_OF_FIT.index(statistic) + 1, n))
            result = gof_test(statistic, data.observations, f0, spec.alpha, spec.null_reps, null_rng, context.nulls)
            outcome[test] = result.reject
        return outcome

    return context.replicate(task, description)


def _homogeneity_power(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    assert spec.n1 is not None and spec.n2 is not None
    rows = []
    for i, theta in enumerate(spec.thetas):
        rates = (1.0,) * spec.n1 + (float(theta),) * spec.n2
        outcomes = _homogeneity_outcomes(context, rates, i, f"theta={theta:g}")
        rows.extend(_rejection_rows(context, outcomes, spec.tests, theta, spec.n1, spec.n1 + spec.n2))
    return rows


def _onesample_power(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    assert spec.alternative is not None
    b1, b2 = spec.alternative
    sampling = Distribution("beta", (b1, b2))
    rows = []
    for i, n in enumerate(spec.ns):
        outcomes = _onesample_outcomes(context, sampling, n, i, f"n={n}")
        rows.extend(_rejection_rows(context, outcomes, spec.tests, b1, b2, n))
    return rows


def _type1_size(context: RunContext) -> list[ResultRow]:
    spec = context.spec
    rows = []
    for i, n in enumerate(spec.ns):
        if spec.model == ModelTag.HOMOGENEITY:
            outcomes = _homogeneity_outcomes(context, (1.0,) * n, i, f"n={n}")
        else:
            outcomes = _onesample_outcomes(context, spec.f0, n, i, f"n={n}")
        rows.extend(_rejection_rows(context, outcomes, spec.tests, spec.alpha, 0.0, n))
    return rows


_RUNNERS: dict[ExperimentKind, Callable[[RunContext], list[ResultRow]]] = {
    ExperimentKind.BELIEF_CURVE: _belief_curve,
    ExperimentKind.CREDIBILITY_CURVE: _credibility_curve,
    ExperimentKind.CALIBRATE: _calibrate,
    ExperimentKind.HOMOGENEITY_POWER: _homogeneity_power,
    ExperimentKind.ONESAMPLE_POWER: _onesample_power,
    ExperimentKind.TYPE1_SIZE: _type1_size,
}


def run(
    spec: ExperimentSpec,
    output_path: str | None = None,
    threads: int = 1,
    progress: bool = False,
    cache_dir: str | None = None,
) -> RunOutput:
    """Calibrate what the experiment needs, evaluate beliefs or decisions, aggregate, and write CSV + manifest."""
    started = time.perf_counter()
    if output_path is not None:
        create_output_path(output_path)
    context = RunContext(spec=spec, threads=threads, progress=progress, cache_dir=cache_dir, output_path=output_path)
    rows = _RUNNERS[spec.kind](context)
    manifest = {
        "spec": spec.model_dump(mode="json"),
        "version": __version__,
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "rows": len(rows),
    }
    if output_path is not None:
        write_results_csv(os.path.join(output_path, f"{spec.experiment_id}.csv"), rows)
        write_manifest(os.path.join(output_path, f"{spec.experiment_id}.manifest.json"), manifest)
    logger.info("experiment %s produced %d rows", spec.experiment_id, len(rows))
    return RunOutput(rows=rows, manifest=manifest)


def paper_scale(spec: ExperimentSpec) -> ExperimentSpec:
    """The same study at the replication count of the published power curves."""
    return spec.model_copy(update={"replications": max(spec.replications, PAPER_REPLICATIONS)})


def default_homogeneity_spec(design: str = "balanced", **overrides: Any) -> ExperimentSpec:
    n1, n2 = HOMOGENEITY_DESIGNS[design]
    values: dict[str, Any] = {
        "experiment_id": f"homogeneity-{design}",
        "kind": ExperimentKind.HOMOGENEITY_POWER,
        "n1": n1,
        "n2": n2,
        "thetas": (1.0, 1.5, 2.0, 2.5, 3.0),
        "tests": (TestName.MB, TestName.LR),
    }
    return parse_spec(values | overrides)


def default_onesample_spec(alternative: str = "a", **overrides: Any) -> ExperimentSpec:
    values: dict[str, Any] = {
        "experiment_id": f"onesample-{alternative}",
        "kind": ExperimentKind.ONESAMPLE_POWER,
        "alternative": ONESAMPLE_ALTERNATIVES[alternative],
        "ns": (10, 20, 30, 40, 50),
        "tests": (TestName.KS, TestName.AD, TestName.CVM, TestName.MB),
    }
    return parse_spec(values | overrides)
