"""Vaccine-distribution decision environment.

One episode is one calendar day: the agent acts once per recipient region in
a fixed order. The action is a bucket count in [0, bucket_size-1]; the reward
peaks when the allocated fraction matches the recipient's share of the day's
susceptible population:

    reward = exp(-(allocated_fraction - susceptible_share)^2 / reward_width)

Episodes never mutate epidemic state; the vaccine's epidemiological effect is
applied only during evaluation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date as Date
from typing import Sequence

import numpy as np

__all__ = [
    "FEATURE_NAMES",
    "CONTEXT_CSV_HEADER",
    "StateContext",
    "EnvConfig",
    "StepOutcome",
    "EnvError",
    "VaccineDistributionEnv",
    "scaling_from_contexts",
    "scale_features",
    "contexts_to_csv",
    "contexts_from_csv",
]

#: Context features, in presentation order. The observation vector follows it.
FEATURE_NAMES = (
    "total_predicted_cases",
    "predicted_death_rate",
    "predicted_recovery_rate",
    "susceptible",
    "population",
    "icu_beds",
    "hospital_beds",
    "ventilators",
    "age_over_50",
)


class EnvError(ValueError):
    """Invalid environment input or illegal transition."""


@dataclass(frozen=True)
class StateContext:
    """The 9-feature description of one recipient region on one day."""

    region: str
    date: Date
    total_predicted_cases: float
    predicted_death_rate: float
    predicted_recovery_rate: float
    susceptible: float
    population: float
    icu_beds: float
    hospital_beds: float
    ventilators: float
    age_over_50: float

    def __post_init__(self):
        for name in FEATURE_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise EnvError(f"{self.region}: feature {name} must be finite and >= 0, got {v}")
        if self.susceptible > self.population + 1e-9 * max(self.population, 1.0):
            raise EnvError(f"{self.region}: susceptible exceeds population")
        for name in ("predicted_death_rate", "predicted_recovery_rate"):
            v = getattr(self, name)
            if v > 100.0:
                raise EnvError(f"{self.region}: {name} above 100, got {v}")

    def features(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=float)


@dataclass(frozen=True)
class EnvConfig:
    """Environment hyper-parameters (one round of distribution)."""

    bucket_size: int = 1000
    batch_size: float = 1_000_000
    recipients_per_day: int = 5
    efficacy: float = 1.0
    reward_width: float = 1e-4
    feature_scaling: tuple[tuple[float, float], ...] = field(
        default_factory=lambda: tuple((0.0, 1.0) for _ in FEATURE_NAMES)
    )

    def __post_init__(self):
        if self.bucket_size < 2:
            raise EnvError(f"bucket_size must be >= 2, got {self.bucket_size}")
        if self.recipients_per_day < 1:
            raise EnvError(f"recipients_per_day must be >= 1, got {self.recipients_per_day}")
        if not (self.reward_width > 0):
            raise EnvError(f"reward_width must be > 0, got {self.reward_width}")
        if not (0 <= self.efficacy <= 1):
            raise EnvError(f"efficacy must be in [0, 1], got {self.efficacy}")
        if len(self.feature_scaling) != len(FEATURE_NAMES):
            raise EnvError("feature_scaling needs one (min, max) pair per feature")


@dataclass(frozen=True)
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def scaling_from_contexts(contexts: Sequence[StateContext]) -> tuple[tuple[float, float], ...]:
    """Per-feature (min, max) bounds over a set of contexts.

    Used to pin observation scaling to the training window; a constant
    feature maps to zero (degenerate pair collapses to (v, v)).
    """
    if not contexts:
        raise EnvError("need at least one context to derive scaling")
    mat = np.stack([c.features() for c in contexts])
    return tuple((float(lo), float(hi)) for lo, hi in zip(mat.min(axis=0), mat.max(axis=0)))


def scale_features(features: np.ndarray, scaling: Sequence[tuple[float, float]]) -> np.ndarray:
    """Min-max scale into [0, 1]; out-of-range values are clamped."""
    out = np.empty(len(features))
    for i, ((lo, hi), v) in enumerate(zip(scaling, features)):
        if hi <= lo:
            out[i] = 0.0
        else:
            out[i] = min(max((v - lo) / (hi - lo), 0.0), 1.0)
    return out


CONTEXT_CSV_HEADER = (
    "date,region,total_predicted_cases,death_rate,recovery_rate,"
    "susceptible,population,icu_beds,hospital_beds,ventilators,age_over_50"
)


def contexts_to_csv(days: Sequence[Sequence[StateContext]]) -> str:
    """Serialize day contexts; one row per recipient, rows grouped by day."""
    out = io.StringIO()
    out.write(CONTEXT_CSV_HEADER + "\n")
    for day in days:
        for c in day:
            out.write(
                f"{c.date.isoformat()},{c.region},{c.total_predicted_cases!r},"
                f"{c.predicted_death_rate!r},{c.predicted_recovery_rate!r},"
                f"{c.susceptible!r},{c.population!r},{c.icu_beds!r},"
                f"{c.hospital_beds!r},{c.ventilators!r},{c.age_over_50!r}\n"
            )
    return out.getvalue()


def contexts_from_csv(text: str) -> list[list[StateContext]]:
    """Parse day contexts grouped by date (ascending), file order within a day."""
    reader = csv.DictReader(io.StringIO(text))
    expected = CONTEXT_CSV_HEADER.split(",")
    if reader.fieldnames != expected:
        raise EnvError(f"context CSV header must be {expected}, got {reader.fieldnames}")
    by_date: dict[Date, list[StateContext]] = {}
    for row_no, row in enumerate(reader, start=2):
        try:
            ctx = StateContext(
                region=row["region"],
                date=Date.fromisoformat(row["date"]),
                total_predicted_cases=float(row["total_predicted_cases"]),
                predicted_death_rate=float(row["death_rate"]),
                predicted_recovery_rate=float(row["recovery_rate"]),
                susceptible=float(row["susceptible"]),
                population=float(row["population"]),
                icu_beds=float(row["icu_beds"]),
                hospital_beds=float(row["hospital_beds"]),
                ventilators=float(row["ventilators"]),
                age_over_50=float(row["age_over_50"]),
            )
        except (TypeError, ValueError) as exc:
            raise EnvError(f"context CSV row {row_no}: {exc}") from exc
        by_date.setdefault(ctx.date, []).append(ctx)
    return [by_date[d] for d in sorted(by_date)]


class VaccineDistributionEnv:
    """Discrete-action allocation environment over one day's recipients.

    Instances carry a mutable cursor and are single-threaded; distinct
    instances are independent.
    """

    def __init__(self, config: EnvConfig):
        self.config = config
        self._contexts: list[StateContext] = []
        self._shares: np.ndarray | None = None
        self._cursor = 0
        self._done = True

    @property
    def observation_size(self) -> int:
        return len(FEATURE_NAMES)

    @property
    def action_count(self) -> int:
        return self.config.bucket_size

    @property
    def cursor(self) -> int:
        """Index of the recipient awaiting an action."""
        return self._cursor

    def reset(self, day_contexts: Sequence[StateContext]) -> np.ndarray:
        """Start an episode over one day's recipients; returns recipient 0's observation."""
        cfg = self.config
        if len(day_contexts) != cfg.recipients_per_day:
            raise EnvError(
                f"expected {cfg.recipients_per_day} recipient contexts, got {len(day_contexts)}"
            )
        dates = {c.date for c in day_contexts}
        if len(dates) != 1:
            raise EnvError(f"recipient contexts span multiple dates: {sorted(dates)}")
        self._contexts = list(day_contexts)
        susceptible = np.array([c.susceptible for c in self._contexts])
        total = susceptible.sum()
        self._shares = susceptible / total if total > 0 else np.full(len(susceptible), 0.0)
        self._cursor = 0
        self._done = False
        return self.observe(0)

    def observe(self, index: int) -> np.ndarray:
        """Scaled feature vector for one of the day's recipients."""
        if not self._contexts:
            raise EnvError("environment not initialized; call reset first")
        return scale_features(self._contexts[index].features(), self.config.feature_scaling)


    def susceptible_share(self, index: int) -> float:
        """This recipient's susceptible fraction of the day's total."""
        if self._shares is None:
            raise EnvError("environment not initialized; call reset first")
        return float(self._shares[index])

    def context(self, index: int) -> StateContext:
        return self._contexts[index]

    def step(self, action: int) -> StepOutcome:
        cfg = self.config
        if self._done:
            raise EnvError("step called on finished episode; call reset first")
        if not (0 <= action < cfg.bucket_size):
            raise EnvError(f"action {action} outside [0, {cfg.bucket_size - 1}]")

        index = self._cursor
        allocated = action / cfg.bucket_size
        share = self.susceptible_share(index)
        reward = math.exp(-((allocated - share) ** 2) / cfg.reward_width)

        self._cursor += 1
        self._done = self._cursor >= cfg.recipients_per_day
        next_obs = (
            np.zeros(self.observation_size) if self._done else self.observe(self._cursor)
        )
        return StepOutcome(
            observation=next_obs,
            reward=reward,
            done=self._done,
            info={"recipient": index, "allocated_fraction": allocated, "susceptible_share": share},
        )

    def optimal_action(self, context_index: int) -> int:
        """Admissible action minimizing |action/bucket_size - susceptible_share|.

        Exact ties resolve to the larger action.
        """
        share = self.susceptible_share(context_index)
        b = self.config.bucket_size
        lo = min(max(math.floor(share * b), 0), b - 1)
        hi = min(lo + 1, b - 1)
        d_lo = abs(lo / b - share)
        d_hi = abs(hi / b - share)
        return hi if d_hi <= d_lo else lo
