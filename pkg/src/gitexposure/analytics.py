"""Database statistics, regression fitting, and scale estimation.

The four reference metrics and their published fit constants:

    total persons    ~ 3310 * numRepos^0.382        (power)
    shortlog lines   ~ 2000 * numRepos^0.5          (power)
    total time       ~ 0.1 s * numRepos             (linear through origin)
    compromised %    ~ 9.4 * log10(numRepos) - 11   (log-linear)

Fits are ordinary least squares in the transformed space (log-log for power
curves, log10-x for the log-linear one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Sequence

from .identity import PersonDatabase, is_compromised
from .pipeline import PipelineStats


class EmptyDatabase(Exception):
    """Percentage statistics are undefined over zero persons."""


class DegenerateInput(ValueError):
    """The points cannot determine a fit (too few, or identical x values)."""


class FamilyMismatch(Exception):
    """The curve family does not match the metric's reference family."""


@dataclass(frozen=True)
class DbStats:
    total_persons: int
    persons_ge2_repos_pct: float
    persons_ge5_commits_pct: float
    shortlog_lines_total: int
    noreply_enabled_pct: float
    compromised_pct: float
    failed_repos_pct: float


def database_stats(
    db: PersonDatabase, pipeline: PipelineStats | None = None
) -> DbStats:
    """Compute the reference metrics over a frozen database.

    The compromised percentage is taken over noreply-enabled persons (how
    many of those who opted in still leaked a real address), and the failed
    percentage over the pipeline's selected repositories when pipeline stats
    are available (0.0 otherwise).
    """
    persons = db.persons()
    total = len(persons)
    if total == 0:
        raise EmptyDatabase("no persons in the database")
    ge2 = sum(1 for p in persons if p.repo_count() >= 2)
    ge5 = sum(1 for p in persons if p.total_commits() >= 5)
    noreply = [p for p in persons if p.usernames]
    compromised = sum(1 for p in noreply if is_compromised(p))
    failed_pct = 0.0
    if pipeline is not None and pipeline.selected > 0:
        failed_pct = 100.0 * pipeline.failed / pipeline.selected
    return DbStats(
        total_persons=total,
        persons_ge2_repos_pct=100.0 * ge2 / total,
        persons_ge5_commits_pct=100.0 * ge5 / total,
        shortlog_lines_total=db.lines_ingested,
        noreply_enabled_pct=100.0 * len(noreply) / total,
        compromised_pct=100.0 * compromised / len(noreply) if noreply else 0.0,
        failed_repos_pct=failed_pct,
    )


def format_pct(value: float) -> str:
    """One decimal place, half-up rounding."""
    return str(Decimal(repr(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class PowerCurve:
    """y = a * x^b"""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.a <= 0:
            raise ValueError("power curve needs finite parameters and a > 0")

    def __call__(self, x: float) -> float:
        return self.a * x**self.b


@dataclass(frozen=True)
class LogLinearCurve:
    """y = m * log10(x) + c"""

    m: float
    c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.m) and math.isfinite(self.c)):
            raise ValueError("log-linear curve needs finite parameters")

    def __call__(self, x: float) -> float:
        return self.m * math.log10(x) + self.c


@dataclass(frozen=True)
class LinearCurve:
    """y = m * x (through the origin)"""

    m: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.m):
            raise ValueError("linear curve needs a finite slope")

    def __call__(self, x: float) -> float:
        return self.m * x


FitCurve = PowerCurve | LogLinearCurve | LinearCurve


def _ols(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    sxx = sum((x - mean_x) ** 2 for x in xs)
    if sxx == 0:
        raise DegenerateInput("all x values identical")
    sxy = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, mean_y - slope * mean_x


def fit_curve(points: Sequence[tuple[float, float]], family: type) -> FitCurve:
    """Least-squares fit of the points to the given curve family."""
    if len(points) < 2:
        raise DegenerateInput("need at least two points")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    if family is PowerCurve:
        if any(x <= 0 for x in xs) or any(y <= 0 for y in ys):
            raise DegenerateInput("power fit needs positive x and y")
        slope, intercept = _ols([math.log(x) for x in xs], [math.log(y) for y in ys])
        return PowerCurve(math.exp(intercept), slope)
    if family is LogLinearCurve:
        if any(x <= 0 for x in xs):
            raise DegenerateInput("log-linear fit needs positive x")
        slope, intercept = _ols([math.log10(x) for x in xs], ys)
        return LogLinearCurve(slope, intercept)
    if family is LinearCurve:
        sxx = sum(x * x for x in xs)
        if sxx == 0:
            raise DegenerateInput("all x values are zero")
        return LinearCurve(sum(x * y for x, y in zip(xs, ys)) / sxx)
    raise FamilyMismatch(f"unknown curve family: {family!r}")


class Metric(Enum):
    TOTAL_PERSONS = "total-persons"
    SHORTLOG_LINES = "shortlog-lines"
    TOTAL_TIME = "total-time"
    COMPROMISED_PCT = "compromised-pct"


METRIC_FAMILY: dict[Metric, type] = {
    Metric.TOTAL_PERSONS: PowerCurve,
    Metric.SHORTLOG_LINES: PowerCurve,
    Metric.TOTAL_TIME: LinearCurve,
    Metric.COMPROMISED_PCT: LogLinearCurve,
}

# published fit constants; estimates work out of the box without refitting
PUBLISHED_CURVES: dict[Metric, FitCurve] = {
    Metric.TOTAL_PERSONS: PowerCurve(3310.0, 0.382),
    Metric.SHORTLOG_LINES: PowerCurve(2000.0, 0.5),
    Metric.TOTAL_TIME: LinearCurve(0.1),
    Metric.COMPROMISED_PCT: LogLinearCurve(9.4, -11.0),
}


def estimate(metric: Metric, num_repos: int, curve: FitCurve | None = None) -> float:
    """Evaluate the metric's curve at num_repos (reference constants by default)."""
    if num_repos < 1:
        raise ValueError("num_repos must be >= 1")
    if curve is None:
        curve = PUBLISHED_CURVES[metric]
    if type(curve) is not METRIC_FAMILY[metric]:
        raise FamilyMismatch(
            f"{metric.value} expects {METRIC_FAMILY[metric].__name__}, "
            f"got {type(curve).__name__}"
        )
    return curve(num_repos)


PHISHING_CLICK_RATE_LOW = 0.08
PHISHING_CLICK_RATE_HIGH = 0.35


def phishing_click_range(person_count: int) -> tuple[float, float]:
    """Bracketing estimate of phishing link clicks over a person population."""
    if person_count < 0:
        raise ValueError("person_count must be non-negative")
    return (
        PHISHING_CLICK_RATE_LOW * person_count,
        PHISHING_CLICK_RATE_HIGH * person_count,
    )
