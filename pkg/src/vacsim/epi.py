"""Deterministic SEIRD dynamics: integration, parameter fitting and projection.

Compartments are Susceptible, Exposed, Infected, Recovered, Dead. All rates
are per day. The model supplies every "predicted" feature used downstream
(total predicted cases, death/recovery rates, susceptible counts).

Conventions:
    - total predicted cases = E + I + R + D (ever-infected) at the end of a
      trajectory,
    - integration is classical fixed-step 4th order (deterministic),
    - compartments are clamped at zero, clamped mass returned to susceptible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date as Date
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "CompartmentState",
    "EpiParams",
    "Trajectory",
    "ObservedSeries",
    "RateSummary",
    "FitResult",
    "EpiError",
    "FitError",
    "seird_derivative",
    "integrate",
    "fit_params",
    "derive_rates",
    "apply_vaccine",
]


class EpiError(ValueError):
    """Invalid epidemic-model input."""


class FitError(EpiError):
    """Parameter fitting failed (degenerate series or non-convergence)."""


@dataclass(frozen=True)
class CompartmentState:
    """Population counts for one region at one instant."""

    susceptible: float
    exposed: float
    infected: float
    recovered: float
    dead: float

    def __post_init__(self):
        for name in ("susceptible", "exposed", "infected", "recovered", "dead"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise EpiError(f"non-finite compartment {name}: {v}")
            if v < 0:
                raise EpiError(f"negative compartment {name}: {v}")

    @property
    def total(self) -> float:
        return self.susceptible + self.exposed + self.infected + self.recovered + self.dead

    @property
    def ever_infected(self) -> float:
        """Cumulative cases: everyone who left the susceptible pool."""
        return self.exposed + self.infected + self.recovered + self.dead

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.susceptible, self.exposed, self.infected, self.recovered, self.dead],
            dtype=float,
        )

    @staticmethod
    def from_array(a: Sequence[float]) -> "CompartmentState":
        return CompartmentState(*(float(x) for x in a))


@dataclass(frozen=True)
class EpiParams:
    """SEIRD rate parameters; all rates are 1/day."""

    transmission_rate_beta: float
    incubation_rate_sigma: float
    recovery_rate_gamma: float
    fatality_rate_mu: float
    population_n: float

    def __post_init__(self):
        for name in (
            "transmission_rate_beta",
            "incubation_rate_sigma",
            "recovery_rate_gamma",
            "fatality_rate_mu",
        ):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise EpiError(f"rate {name} must be finite and >= 0, got {v}")
        if not math.isfinite(self.population_n) or self.population_n <= 0:
            raise EpiError(f"population_n must be > 0, got {self.population_n}")


@dataclass(frozen=True)
class Trajectory:
    """States stored every `step_days` starting at `start_date`."""

    start_date: Date
    step_days: float
    states: tuple[CompartmentState, ...]

    def __post_init__(self):
        if not self.states:
            raise EpiError("trajectory must contain at least one state")
        if self.step_days <= 0:
            raise EpiError("step_days must be > 0")

    @property
    def final(self) -> CompartmentState:
        return self.states[-1]

    def state_at_day(self, day: float) -> CompartmentState:
        """State at `day` days after the start (nearest stored step)."""
        idx = int(round(day / self.step_days))
        if idx < 0 or idx >= len(self.states):
            raise EpiError(f"day {day} outside trajectory range")
        return self.states[idx]

    def up_to_day(self, day: float) -> "Trajectory":
        """Prefix of the trajectory ending at `day` (inclusive)."""
        idx = int(round(day / self.step_days))
        if idx < 0 or idx >= len(self.states):
            raise EpiError(f"day {day} outside trajectory range")
        return Trajectory(self.start_date, self.step_days, self.states[: idx + 1])

    def to_csv(self) -> str:
        """Serialize as `day,S,E,I,R,D` rows."""
        lines = ["day,S,E,I,R,D"]
        for i, s in enumerate(self.states):
            day = i * self.step_days
            lines.append(
                f"{day:g},{s.susceptible!r},{s.exposed!r},{s.infected!r},"
                f"{s.recovered!r},{s.dead!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ObservedSeries:
    """Cumulative confirmed/recovered/death counts for one region."""

    region: str
    rows: tuple[tuple[Date, float, float, float], ...]

    def __post_init__(self):
        prev_date = None
        prev = (-math.inf, -math.inf, -math.inf)
        for i, (d, c, r, x) in enumerate(self.rows):
            if prev_date is not None and d <= prev_date:
                raise EpiError(f"{self.region}: dates not strictly increasing at row {i}")
            for j, (name, cur, last) in enumerate(
                zip(("confirmed", "recovered", "deaths"), (c, r, x), prev)
            ):
                if cur < 0:
                    raise EpiError(f"{self.region}: negative {name} at row {i}")
                if cur < last:
                    raise EpiError(f"{self.region}: cumulative {name} decreases at row {i}")
            prev_date, prev = d, (c, r, x)

    @property
    def dates(self) -> list[Date]:
        return [d for d, *_ in self.rows]


@dataclass(frozen=True)
class RateSummary:
    """Projected death/recovery rates and case totals at trajectory end."""

    death_rate: float
    recovery_rate: float
    total_predicted_cases: float
    susceptible: float
    degenerate: bool = False


@dataclass(frozen=True)
class FitResult:
    params: EpiParams
    ssr: float
    iterations: int
    grid_best_ssr: float


def seird_derivative(state: CompartmentState, params: EpiParams) -> np.ndarray:
    """Per-day rate of change (dS, dE, dI, dR, dD). Components sum to zero."""
    n = params.population_n
    force = params.transmission_rate_beta * state.susceptible * state.infected / n
    incubation = params.incubation_rate_sigma * state.exposed
    recovery = params.recovery_rate_gamma * state.infected
    death = params.fatality_rate_mu * state.infected
    return np.array(
        [-force, force - incubation, incubation - recovery - death, recovery, death]
    )


def _rhs(y: np.ndarray, params: EpiParams) -> np.ndarray:
    # Raw array form of seird_derivative, used inside the integrator where the
    # intermediate stages may dip slightly negative.
    n = params.population_n
    s, e, i = y[0], y[1], y[2]
    force = params.transmission_rate_beta * s * i / n
    incubation = params.incubation_rate_sigma * e
    recovery = params.recovery_rate_gamma * i
    death = params.fatality_rate_mu * i
    return np.array([-force, force - incubation, incubation - recovery - death, recovery, death])


def integrate(
    initial: CompartmentState,
    params: EpiParams,
    horizon: float,
    dt: float = 0.25,
    start_date: Date = Date(2020, 12, 1),
) -> Trajectory:
    """Integrate the SEIRD system for `horizon` days with fixed step `dt`.

    Classical 4th-order stepping; every stored state conserves total
    population to within 1e-6*N. Negative excursions are clamped to zero with
    the clamped mass returned to the susceptible pool.
    """
    if not (horizon > 0):
        raise EpiError(f"horizon must be > 0, got {horizon}")
    if not (0 < dt <= 1):
        raise EpiError(f"dt must be in (0, 1], got {dt}")
    if not math.isfinite(horizon) or not math.isfinite(dt):
        raise EpiError("non-finite horizon or dt")

    n_steps = int(round(horizon / dt))
    if abs(n_steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        # keep the stored grid exact: horizon must be a whole number of steps
        n_steps = math.ceil(horizon / dt - 1e-12)

    total = initial.total
    y = initial.as_array()
    states = [initial]
    for _ in range(n_steps):
        k1 = _rhs(y, params)
        k2 = _rhs(y + 0.5 * dt * k1, params)
        k3 = _rhs(y + 0.5 * dt * k2, params)
        k4 = _rhs(y + dt * k3, params)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        negative = y < 0
        if negative.any():
            y[0] += y[negative].sum()
            y[negative] = 0.0
            if y[0] < 0:  # pathological parameters; keep conservation anyway
                y[0] = 0.0
                y *= total / y.sum()
        states.append(CompartmentState.from_array(y))
    return Trajectory(start_date=start_date, step_days=dt, states=tuple(states))


def derive_rates(traj: Trajectory) -> RateSummary:
    """Death/recovery percentages and case totals at the trajectory end.

    Rates are percentage ratios of final deaths/recoveries to the final
    ever-infected total. A trajectory with no cases yields zero rates and is
    flagged degenerate.
    """
    final = traj.final
    cases = final.ever_infected
    if cases <= 0:
        return RateSummary(0.0, 0.0, 0.0, final.susceptible, degenerate=True)
    return RateSummary(
        death_rate=100.0 * final.dead / cases,
        recovery_rate=100.0 * final.recovered / cases,
        total_predicted_cases=cases,
        susceptible=final.susceptible,
    )


def apply_vaccine(state: CompartmentState, doses: float, efficacy: float) -> CompartmentState:
    """Move min(doses*efficacy, susceptible) persons from susceptible to recovered.

    The vaccine is purely preventative: only the susceptible pool shrinks and
    no other compartment is touched, so totals are conserved.
    """
    if doses < 0:
        raise EpiError(f"doses must be >= 0, got {doses}")
    if not (0 <= efficacy <= 1):
        raise EpiError(f"efficacy must be in [0, 1], got {efficacy}")
    moved = min(doses * efficacy, state.susceptible)
    return replace(
        state,
        susceptible=state.susceptible - moved,
        recovered=state.recovered + moved,
    )


# -- parameter fitting -------------------------------------------------------

#: (lower, upper) per rate parameter, in the order beta, sigma, gamma, mu.
DEFAULT_BOUNDS: tuple[tuple[float, float], ...] = (
    (0.01, 2.0),
    (0.02, 1.0),
    (0.01, 1.0),
    (1e-4, 0.2),
)

_GRID_POINTS = 4
_MIN_ROWS = 14


def initial_state_from_row(
    row: tuple[Date, float, float, float], population: float
) -> CompartmentState:
    """Initial SEIRD state implied by one observed row.

    Active infections are confirmed minus resolved; the exposed pool is taken
    equal to the active pool (fixed convention, also used when synthesizing
    fixture data).
    """
    _, confirmed, recovered, deaths = row
    infected = max(confirmed - recovered - deaths, 0.0)
    exposed = infected
    susceptible = max(population - exposed - infected - recovered - deaths, 0.0)
    return CompartmentState(susceptible, exposed, infected, recovered, deaths)


def _model_cumulatives(
    theta: np.ndarray, initial: CompartmentState, population: float, n_days: int, dt: float
) -> np.ndarray:
    """Model-implied (confirmed, recovered, dead) cumulative curves, day grid.

    Cumulative confirmed is I+R+D: cases become countable once infectious.
    Runs the same RK4 scheme as `integrate` on plain floats; the fitter calls
    this thousands of times, so avoiding per-step state objects matters.
    """
    beta, sigma, gamma, mu = (float(v) for v in theta)
    n = float(population)
    s, e, i = initial.susceptible, initial.exposed, initial.infected
    r, d = initial.recovered, initial.dead
    loss = gamma + mu
    per_day = round(1.0 / dt)
    out = np.empty((n_days + 1, 3))
    out[0] = (i + r + d, r, d)
    for day in range(1, n_days + 1):
        for _ in range(per_day):
            f1 = beta * s * i / n
            k1 = (-f1, f1 - sigma * e, sigma * e - loss * i, gamma * i, mu * i)
            s2, e2, i2 = s + 0.5 * dt * k1[0], e + 0.5 * dt * k1[1], i + 0.5 * dt * k1[2]
            f2 = beta * s2 * i2 / n
            k2 = (-f2, f2 - sigma * e2, sigma * e2 - loss * i2, gamma * i2, mu * i2)
            s3, e3, i3 = s + 0.5 * dt * k2[0], e + 0.5 * dt * k2[1], i + 0.5 * dt * k2[2]
            f3 = beta * s3 * i3 / n
            k3 = (-f3, f3 - sigma * e3, sigma * e3 - loss * i3, gamma * i3, mu * i3)
            s4, e4, i4 = s + dt * k3[0], e + dt * k3[1], i + dt * k3[2]
            f4 = beta * s4 * i4 / n
            k4 = (-f4, f4 - sigma * e4, sigma * e4 - loss * i4, gamma * i4, mu * i4)
            w = dt / 6.0
            s += w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            e += w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            i += w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            r += w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
            d += w * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
            if s < 0 or e < 0 or i < 0 or r < 0 or d < 0:
                # same clamp rule as integrate(): return negative mass to S
                spill = min(e, 0.0) + min(i, 0.0) + min(r, 0.0) + min(d, 0.0)
                e, i, r, d = max(e, 0.0), max(i, 0.0), max(r, 0.0), max(d, 0.0)
                s = max(s + spill, 0.0)
        out[day] = (i + r + d, r, d)
    return out


def _series_ssr(
    theta: np.ndarray,
    initial: CompartmentState,
    population: float,
    observed: np.ndarray,
    dt: float,
) -> float:
    model = _model_cumulatives(theta, initial, population, observed.shape[0] - 1, dt)
    return float(((model - observed) ** 2).sum())


def fit_params(
    observed: ObservedSeries,
    population: float,
    bounds: Sequence[tuple[float, float]] = DEFAULT_BOUNDS,
    seed: int = 0,
    dt: float = 0.25,
    ssr_ceiling: float | None = None,
    restarts: int = 2,
) -> FitResult:
    """Fit SEIRD rates to observed cumulative curves by bounded least squares.

    Coarse log-spaced grid search over the bounds picks starting points, then
    a Nelder-Mead refinement minimizes the summed squared residuals of the
    cumulative confirmed / recovered / dead curves. Deterministic given the
    seed (the seed drives the extra restart starting points only).

    Raises FitError for short or signal-free series and, when `ssr_ceiling`
    is set, for fits that stall above it.
    """
    if len(observed.rows) < _MIN_ROWS:
        raise FitError(
            f"{observed.region}: need at least {_MIN_ROWS} rows, got {len(observed.rows)}"
        )
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if len(bounds) != 4 or any(not (0 <= lo < hi) for lo, hi in bounds):
        raise FitError("bounds must be four non-degenerate (lo, hi) intervals")

    dates = observed.dates
    day_gaps = {(b - a).days for a, b in zip(dates, dates[1:])}
    if day_gaps != {1}:
        raise FitError(f"{observed.region}: series must be daily with no gaps")

    target = np.array([[c, r, d] for _, c, r, d in observed.rows], dtype=float)
    if target[:, 0].max() <= 0 or target[-1, 0] <= target[0, 0]:
        raise FitError(f"{observed.region}: series carries no epidemic signal")

    initial = initial_state_from_row(observed.rows[0], population)
    if initial.infected <= 0:
        raise FitError(f"{observed.region}: first row implies zero active infections")

    axes = [np.geomspace(max(lo, 1e-6), hi, _GRID_POINTS) for lo, hi in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
    grid_ssr = np.array(
        [_series_ssr(theta, initial, population, target, dt) for theta in grid]
    )
    best_idx = int(np.argmin(grid_ssr))
    grid_best_ssr = float(grid_ssr[best_idx])

    rng = np.random.default_rng(seed)
    starts = [grid[best_idx]]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    for _ in range(restarts):
        u = rng.random(4)
        starts.append(np.exp(np.log(np.maximum(lo, 1e-6)) * (1 - u) + np.log(hi) * u))

    best_theta, best_ssr, total_iter = grid[best_idx], grid_best_ssr, 0
    for x0 in starts:
        res = minimize(
            _series_ssr,
            x0,
            args=(initial, population, target, dt),
            method="Nelder-Mead",
            bounds=bounds,
            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000},
        )
        total_iter += int(res.nit)
        if res.fun < best_ssr:
            best_ssr, best_theta = float(res.fun), np.asarray(res.x)

    if ssr_ceiling is not None and best_ssr > ssr_ceiling:
        raise FitError(
            f"{observed.region}: fit stalled at SSR {best_ssr:.3g} above ceiling {ssr_ceiling:.3g}"
        )

    params = EpiParams(
        transmission_rate_beta=float(best_theta[0]),
        incubation_rate_sigma=float(best_theta[1]),
        recovery_rate_gamma=float(best_theta[2]),
        fatality_rate_mu=float(best_theta[3]),
        population_n=float(population),
    )
    return FitResult(params=params, ssr=best_ssr, iterations=total_iter, grid_best_ssr=grid_best_ssr)


# -- CSV ingestion of observed series ----------------------------------------


def read_observed_csv(text: str) -> dict[str, ObservedSeries]:
    """Parse `date,region,confirmed,recovered,deaths` rows into per-region series."""
    reader = csv.DictReader(text.splitlines())
    expected = {"date", "region", "confirmed", "recovered", "deaths"}
    if reader.fieldnames is None or set(reader.fieldnames) != expected:
        raise EpiError(f"series header must be {sorted(expected)}, got {reader.fieldnames}")
    acc: dict[str, list[tuple[Date, float, float, float]]] = {}
    for i, row in enumerate(reader, start=2):
        try:
            d = Date.fromisoformat(row["date"])
            values = tuple(float(row[k]) for k in ("confirmed", "recovered", "deaths"))
        except (ValueError, TypeError) as exc:
            raise EpiError(f"series row {i}: {exc}") from exc
        acc.setdefault(row["region"], []).append((d, *values))
    return {
        region: ObservedSeries(region=region, rows=tuple(rows)) for region, rows in acc.items()
    }
