"""Bundled synthetic five-state dataset.

The series are generated by the package's own compartmental integrator with
hand-picked per-region parameters, then rounded to whole people. The mix is
deliberately lopsided: one huge state with a young, fast-growing wave, one
mid-size state with a large active spike, two mild states, and one small
state whose epidemic is already burning out. Susceptible shares therefore
diverge sharply from active-infection shares, which is the property the
baseline comparison tests need.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import date as Date
from datetime import timedelta
from pathlib import Path

from .data_io import Snapshot, snapshot_from_texts
from .epi import CompartmentState, EpiParams, integrate

__all__ = [
    "FIXTURE_START",
    "FIXTURE_END",
    "fixture_series_csv",
    "fixture_statics_csv",
    "fixture_snapshot",
    "true_params",
    "write_fixture",
]

FIXTURE_START = Date(2020, 10, 15)
FIXTURE_END = Date(2020, 12, 31)


@dataclass(frozen=True)
class _RegionSpec:
    params: EpiParams
    confirmed0: float
    recovered0: float
    deaths0: float
    hospital_beds: float
    icu_beds: float
    ventilators: float
    age_over_50: float


_SPECS: dict[str, _RegionSpec] = {
    "Assam": _RegionSpec(
        params=EpiParams(0.145, 0.25, 0.10, 0.001, 31_200_000),
        confirmed0=215_000,
        recovered0=208_000,
        deaths0=1_500,
        hospital_beds=22_000,
        icu_beds=600,
        ventilators=300,
        age_over_50=4_500_000,
    ),
    # long infectious period, slightly subcritical: a big active pool that
    # decays slowly, so case counts alone overstate where doses help
    "Delhi": _RegionSpec(
        params=EpiParams(0.050, 0.30, 0.048, 0.002, 19_800_000),
        confirmed0=1_475_000,
        recovered0=550_000,
        deaths0=25_000,
        hospital_beds=42_000,
        icu_beds=3_200,
        ventilators=1_600,
        age_over_50=3_600_000,
    ),
    "Jharkhand": _RegionSpec(
        params=EpiParams(0.15, 0.22, 0.105, 0.0012, 38_600_000),
        confirmed0=160_000,
        recovered0=153_000,
        deaths0=1_500,
        hospital_beds=18_000,
        icu_beds=550,
        ventilators=280,
        age_over_50=5_200_000,
    ),
    # young wave in a huge population: small active pool at the end of the
    # series but the fastest growth, so susceptibility is where doses pay off
    "Maharashtra": _RegionSpec(
        params=EpiParams(0.19, 0.25, 0.075, 0.002, 114_200_000),
        confirmed0=45_000,
        recovered0=42_000,
        deaths0=900,
        hospital_beds=230_000,
        icu_beds=11_000,
        ventilators=5_500,
        age_over_50=22_000_000,
    ),
    "Nagaland": _RegionSpec(
        params=EpiParams(0.09, 0.25, 0.11, 0.002, 2_100_000),
        confirmed0=1_150_000,
        recovered0=1_050_000,
        deaths0=5_000,
        hospital_beds=1_800,
        icu_beds=60,
        ventilators=30,
        age_over_50=260_000,
    ),
}


def _initial_state(spec: _RegionSpec) -> CompartmentState:
    infected = spec.confirmed0 - spec.recovered0 - spec.deaths0
    exposed = infected  # same convention the fitter assumes
    susceptible = spec.params.population_n - exposed - spec.confirmed0
    return CompartmentState(susceptible, exposed, infected, spec.recovered0, spec.deaths0)


def fixture_series_csv() -> str:
    """Daily cumulative series for all five regions, model-generated."""
    horizon = (FIXTURE_END - FIXTURE_START).days
    out = io.StringIO()
    out.write("date,region,confirmed,recovered,deaths\n")
    for region in sorted(_SPECS):
        spec = _SPECS[region]
        traj = integrate(
            _initial_state(spec), spec.params, horizon=horizon, start_date=FIXTURE_START
        )
        for day in range(horizon + 1):
            state = traj.state_at_day(day)
            confirmed = round(state.infected + state.recovered + state.dead)
            out.write(
                f"{FIXTURE_START + timedelta(days=day)},{region},"
                f"{confirmed},{round(state.recovered)},{round(state.dead)}\n"
            )
    return out.getvalue()


def fixture_statics_csv() -> str:
    out = io.StringIO()
    out.write("region,population,hospital_beds,icu_beds,ventilators,age_over_50\n")
    for region in sorted(_SPECS):
        spec = _SPECS[region]
        out.write(
            f"{region},{round(spec.params.population_n)},{round(spec.hospital_beds)},"
            f"{round(spec.icu_beds)},{round(spec.ventilators)},{round(spec.age_over_50)}\n"
        )
    return out.getvalue()


def fixture_snapshot() -> Snapshot:
    return snapshot_from_texts(fixture_series_csv(), fixture_statics_csv())


def true_params() -> dict[str, EpiParams]:
    """The generating rate parameters, for tests that want to skip fitting."""
    return {region: spec.params for region, spec in _SPECS.items()}


def write_fixture(directory: str | Path) -> tuple[Path, Path]:
    """Write series.csv and statics.csv; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    series = directory / "series.csv"
    statics = directory / "statics.csv"
    series.write_text(fixture_series_csv(), encoding="utf-8")
    statics.write_text(fixture_statics_csv(), encoding="utf-8")
    return series, statics
