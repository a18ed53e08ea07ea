"""Ingestion of observed case series and static region attributes.

A Snapshot bundles both inputs with a content hash so every downstream
artifact can state exactly which data produced it. Context building projects
each region's fitted model forward and joins the static capacity columns.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path

from .env import StateContext
from .epi import (
    EpiError,
    EpiParams,
    ObservedSeries,
    derive_rates,
    initial_state_from_row,
    integrate,
    read_observed_csv,
)

__all__ = [
    "DataError",
    "RegionStatic",
    "Snapshot",
    "read_statics_csv",
    "snapshot_from_texts",
    "load_snapshot",
    "build_contexts",
]

STATICS_HEADER = (
    "region",
    "population",
    "hospital_beds",
    "icu_beds",
    "ventilators",
    "age_over_50",
)


class DataError(ValueError):
    """Schema or coverage violation in input files."""


@dataclass(frozen=True)
class RegionStatic:
    """Per-region capacity and demographic columns."""

    region: str
    population: float
    hospital_beds: float
    icu_beds: float
    ventilators: float
    age_over_50: float

    def __post_init__(self):
        for name in ("population", "hospital_beds", "icu_beds", "ventilators", "age_over_50"):
            if getattr(self, name) < 0:
                raise DataError(f"{self.region}: {name} must be >= 0")
        if self.population <= 0:
            raise DataError(f"{self.region}: population must be positive")
        if self.age_over_50 > self.population:
            raise DataError(f"{self.region}: age_over_50 exceeds population")


@dataclass(frozen=True)
class Snapshot:
    """Observed series plus statics for one consistent region set."""

    observed: dict[str, ObservedSeries]
    statics: dict[str, RegionStatic]
    content_hash: str

    @property
    def regions(self) -> list[str]:
        return sorted(self.observed)


def read_statics_csv(text: str) -> dict[str, RegionStatic]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise DataError("statics file is empty") from None
    if header != STATICS_HEADER:
        raise DataError(f"statics header must be {','.join(STATICS_HEADER)}, got {header}")
    statics: dict[str, RegionStatic] = {}
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(STATICS_HEADER):
            raise DataError(f"statics row {row_num}: expected {len(STATICS_HEADER)} columns")
        region = row[0]
        if region in statics:
            raise DataError(f"statics row {row_num}: duplicate region {region}")
        try:
            statics[region] = RegionStatic(
                region=region,
                population=float(row[1]),
                hospital_beds=float(row[2]),
                icu_beds=float(row[3]),
                ventilators=float(row[4]),
                age_over_50=float(row[5]),
            )
        except (ValueError, DataError) as exc:
            raise DataError(f"statics row {row_num}: {exc}") from exc
    if not statics:
        raise DataError("statics file has no rows")
    return statics


def snapshot_from_texts(series_text: str, statics_text: str) -> Snapshot:
    """Parse, cross-validate, and hash the two input documents."""
    try:
        observed = read_observed_csv(series_text)
    except EpiError as exc:
        raise DataError(f"series file: {exc}") from exc
    statics = read_statics_csv(statics_text)
    missing_statics = sorted(set(observed) - set(statics))
    if missing_statics:
        raise DataError(f"regions missing from statics: {', '.join(missing_statics)}")
    missing_series = sorted(set(statics) - set(observed))
    if missing_series:
        raise DataError(f"regions missing from series: {', '.join(missing_series)}")
    digest = hashlib.sha256()
    digest.update(series_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(statics_text.encode("utf-8"))
    return Snapshot(observed=observed, statics=statics, content_hash=digest.hexdigest())


def load_snapshot(series_path: str | Path, statics_path: str | Path) -> Snapshot:
    series_text = Path(series_path).read_text(encoding="utf-8")
    statics_text = Path(statics_path).read_text(encoding="utf-8")
    return snapshot_from_texts(series_text, statics_text)


def build_contexts(
    snapshot: Snapshot,
    params_by_region: dict[str, EpiParams],
    window: tuple[Date, Date],
    dt: float = 0.25,
) -> list[list[StateContext]]:
    """Per-day context rows over an inclusive date window.

    Each region is projected on one continuous trajectory started at its first
    observed day; days past the observed range simply continue that
    trajectory. Susceptible is reported as population minus projected cases.
    """
    start, end = window
    if end < start:
        raise DataError(f"window end {end} precedes start {start}")
    missing = sorted(set(snapshot.observed) - set(params_by_region))
    if missing:
        raise DataError(f"no fitted parameters for: {', '.join(missing)}")

    trajectories = {}
    for region in snapshot.regions:
        series = snapshot.observed[region]
        first_day = series.rows[0][0]
        if start < first_day:
            raise DataError(
                f"{region}: window starts {start}, before first observed day {first_day}"
            )
        horizon = (end - first_day).days
        trajectories[region] = integrate(
            initial_state_from_row(series.rows[0], snapshot.statics[region].population),
            params_by_region[region],
            horizon=max(horizon, 1),
            dt=dt,
            start_date=first_day,
        )

    days: list[list[StateContext]] = []
    for offset in range((end - start).days + 1):
        day = start + timedelta(days=offset)
        row: list[StateContext] = []
        for region in snapshot.regions:
            static = snapshot.statics[region]
            traj = trajectories[region]
            day_index = (day - traj.start_date).days
            rates = derive_rates(traj.up_to_day(day_index))
            cases = rates.total_predicted_cases
            row.append(
                StateContext(
                    region=region,
                    date=day,
                    total_predicted_cases=cases,
                    predicted_death_rate=rates.death_rate,
                    predicted_recovery_rate=rates.recovery_rate,
                    susceptible=max(static.population - cases, 0.0),
                    population=static.population,
                    icu_beds=static.icu_beds,
                    hospital_beds=static.hospital_beds,
                    ventilators=static.ventilators,
                    age_over_50=static.age_over_50,
                )
            )
        days.append(row)
    return days
