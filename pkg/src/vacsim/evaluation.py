"""Baseline comparison: incidence-proportional allocation vs a candidate.

Projections run each region independently for a fixed horizon after applying
the vaccine at day 0. Case counts subtract the vaccinated (directly
immunized) people, so "cumulative cases" means infections only; an
active-case mode reports the currently-infectious compartment instead.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from datetime import date as Date
from typing import Sequence

from .env import StateContext
from .epi import CompartmentState, EpiParams, Trajectory, apply_vaccine, integrate
from .pipeline import DistributionSet

__all__ = [
    "EvaluationError",
    "ProjectionScenario",
    "ComparisonReport",
    "naive_policy",
    "naive_policy_from_states",
    "project_with_allocation",
    "compare",
    "comparison_csv",
    "comparison_summary_json",
]


class EvaluationError(ValueError):
    """Invalid comparison input."""


def naive_policy(contexts: Sequence[StateContext]) -> DistributionSet:
    """Allocate by share of active cases inferred from context features.

    Active cases here are projected cases not yet recovered or dead. When the
    exact infectious compartment is available, prefer naive_policy_from_states.
    """
    if not contexts:
        raise EvaluationError("no contexts")
    active = {}
    for c in contexts:
        share_active = 1.0 - (c.predicted_death_rate + c.predicted_recovery_rate) / 100.0
        active[c.region] = c.total_predicted_cases * max(share_active, 0.0)
    total = math.fsum(active.values())
    if total <= 0:
        raise EvaluationError("zero total infected; incidence-proportional share undefined")
    return DistributionSet(
        date=contexts[0].date,
        bucket_size=0,
        percentages={r: 100.0 * v / total for r, v in active.items()},
    )


def naive_policy_from_states(
    states: dict[str, CompartmentState], date: Date
) -> DistributionSet:
    """Allocate proportionally to the infectious compartment."""
    infected = {r: s.infected for r, s in states.items()}
    total = math.fsum(infected.values())
    if total <= 0:
        raise EvaluationError("zero total infected; incidence-proportional share undefined")
    return DistributionSet(
        date=date,
        bucket_size=0,
        percentages={r: 100.0 * v / total for r, v in infected.items()},
    )


@dataclass(frozen=True)
class ProjectionScenario:
    """Everything shared between the two compared policies."""

    params_by_region: dict[str, EpiParams]
    initial_states: dict[str, CompartmentState]
    doses: float = 1_000_000
    efficacy: float = 1.0
    horizon: int = 45
    dt: float = 0.25
    start_date: Date = Date(2020, 12, 31)
    case_mode: str = "cumulative"  # "cumulative" | "active"

    def __post_init__(self):
        if set(self.params_by_region) != set(self.initial_states):
            raise EvaluationError("params and initial states must cover the same regions")
        if self.doses < 0:
            raise EvaluationError("doses must be >= 0")
        if not (0 <= self.efficacy <= 1):
            raise EvaluationError("efficacy must be in [0,1]")
        if self.horizon < 1:
            raise EvaluationError("horizon must be >= 1")
        if self.case_mode not in ("cumulative", "active"):
            raise EvaluationError(f"unknown case mode: {self.case_mode}")


def project_with_allocation(
    dist: DistributionSet,
    doses: float,
    efficacy: float,
    params_by_region: dict[str, EpiParams],
    initial_states: dict[str, CompartmentState],
    horizon: int = 45,
    dt: float = 0.25,
    start_date: Date = Date(2020, 12, 31),
) -> dict[str, Trajectory]:
    """Apply the allocation at day 0 and integrate each region independently."""
    missing = sorted(set(dist.percentages) - set(params_by_region))
    if missing:
        raise EvaluationError(f"no parameters for regions: {', '.join(missing)}")
    extra = sorted(set(params_by_region) - set(dist.percentages))
    if extra:
        raise EvaluationError(f"distribution lacks regions: {', '.join(extra)}")
    out: dict[str, Trajectory] = {}
    for region, pct in dist.percentages.items():
        state = apply_vaccine(initial_states[region], pct * doses / 100.0, efficacy)
        out[region] = integrate(
            state, params_by_region[region], horizon=horizon, dt=dt, start_date=start_date
        )
    return out


@dataclass(frozen=True)
class ComparisonReport:
    """Day-wise totals under both policies and their difference."""

    days: tuple[int, ...]  # 1..horizon
    cases_baseline: tuple[float, ...]
    cases_candidate: tuple[float, ...]
    difference: tuple[float, ...]  # baseline - candidate, per day
    cumulative_difference: float  # difference at the horizon
    bucket_size: int
    doses: float
    efficacy: float
    case_mode: str

    def __post_init__(self):
        n = len(self.days)
        if not (len(self.cases_baseline) == len(self.cases_candidate) == len(self.difference) == n):
            raise EvaluationError("comparison series lengths differ")


def _case_series(
    trajectories: dict[str, Trajectory],
    vaccinated: dict[str, float],
    horizon: int,
    case_mode: str,
) -> list[float]:
    series = []
    for day in range(1, horizon + 1):
        total = 0.0
        for region, traj in trajectories.items():
            state = traj.state_at_day(day)
            if case_mode == "active":
                total += state.infected
            else:
                total += state.ever_infected - vaccinated[region]
        series.append(total)
    return series


def _vaccinated_counts(
    dist: DistributionSet, scenario: ProjectionScenario
) -> dict[str, float]:
    return {
        region: min(
            dist.percentages[region] * scenario.doses / 100.0 * scenario.efficacy,
            scenario.initial_states[region].susceptible,
        )
        for region in dist.percentages
    }


def compare(
    candidate: DistributionSet, baseline: DistributionSet, scenario: ProjectionScenario
) -> ComparisonReport:
    """Project both policies on the shared scenario and difference the totals."""
    if set(candidate.percentages) != set(baseline.percentages):
        raise EvaluationError("policies cover different regions")
    projections = {}
    vaccinated = {}
    for name, dist in (("baseline", baseline), ("candidate", candidate)):
        projections[name] = project_with_allocation(
            dist,
            scenario.doses,
            scenario.efficacy,
            scenario.params_by_region,
            scenario.initial_states,
            horizon=scenario.horizon,
            dt=scenario.dt,
            start_date=scenario.start_date,
        )
        vaccinated[name] = _vaccinated_counts(dist, scenario)
    cases_baseline = _case_series(
        projections["baseline"], vaccinated["baseline"], scenario.horizon, scenario.case_mode
    )
    cases_candidate = _case_series(
        projections["candidate"], vaccinated["candidate"], scenario.horizon, scenario.case_mode
    )
    difference = [b - c for b, c in zip(cases_baseline, cases_candidate)]
    return ComparisonReport(
        days=tuple(range(1, scenario.horizon + 1)),
        cases_baseline=tuple(cases_baseline),
        cases_candidate=tuple(cases_candidate),
        difference=tuple(difference),
        cumulative_difference=difference[-1],
        bucket_size=candidate.bucket_size,
        doses=scenario.doses,
        efficacy=scenario.efficacy,
        case_mode=scenario.case_mode,
    )


def comparison_csv(report: ComparisonReport) -> str:
    out = io.StringIO()
    out.write("day,cases_naive,cases_candidate,difference\n")
    for day, naive, cand, diff in zip(
        report.days, report.cases_baseline, report.cases_candidate, report.difference
    ):
        out.write(f"{day},{repr(naive)},{repr(cand)},{repr(diff)}\n")
    return out.getvalue()


def comparison_summary_json(reports: dict[int, ComparisonReport]) -> str:
    doc = {
        "cumulative_difference_by_bucket": {
            str(bucket): r.cumulative_difference for bucket, r in sorted(reports.items())
        },
        "horizon": len(next(iter(reports.values())).days) if reports else None,
    }
    return json.dumps(doc, sort_keys=True)
