"""SEIRD engine: derivatives, integration, vaccination, fitting, CSV."""

import math
from datetime import date, timedelta

import numpy as np
import pytest

from vacsim.epi import (
    CompartmentState,
    EpiError,
    EpiParams,
    FitError,
    ObservedSeries,
    Trajectory,
    apply_vaccine,
    derive_rates,
    fit_params,
    initial_state_from_row,
    integrate,
    read_observed_csv,
    seird_derivative,
)

# analytic oracle: with beta=0, E0=0, mu=0 the infected pool decays as
# I(t) = I0 * exp(-gamma*t); frozen for gamma=0.1, t=10, I0=100
DECAY_I_AT_10 = 36.787944117144235


def test_derivative_no_infection_fixed_point():
    state = CompartmentState(1000, 0, 0, 0, 0)
    params = EpiParams(0.3, 0.2, 0.1, 0.01, 1000)
    assert np.allclose(seird_derivative(state, params), 0.0)


def test_derivative_linear_decay_term_only():
    state = CompartmentState(900, 0, 100, 0, 0)
    params = EpiParams(0.0, 0.0, 0.1, 0.0, 1000)
    d = seird_derivative(state, params)
    assert d[2] == pytest.approx(-10.0)
    assert d[3] == pytest.approx(10.0)


def test_derivative_hand_computed_force_and_incubation():
    state = CompartmentState(900, 50, 100, 0, 0)
    params = EpiParams(0.3, 0.2, 0.1, 0.0, 1000)
    d = seird_derivative(state, params)
    assert d[0] == pytest.approx(-27.0)  # -0.3*900*100/1000
    assert d[1] == pytest.approx(17.0)  # 27 - 0.2*50


def test_derivative_conserves_mass():
    rng = np.random.default_rng(7)
    for _ in range(50):
        s, e, i, r, dd = rng.uniform(0, 1e6, size=5)
        params = EpiParams(*rng.uniform(0.01, 1.0, size=4), s + e + i + r + dd)
        d = seird_derivative(CompartmentState(s, e, i, r, dd), params)
        assert abs(d.sum()) < 1e-6


def test_integrate_analytic_decay():
    init = CompartmentState(900, 0, 100, 0, 0)
    params = EpiParams(0.0, 0.2, 0.1, 0.0, 1000)
    traj = integrate(init, params, horizon=10, dt=0.25)
    assert traj.state_at_day(10).infected == pytest.approx(DECAY_I_AT_10, abs=0.01)


def test_integrate_step_count_contract():
    init = CompartmentState(900, 0, 100, 0, 0)
    params = EpiParams(0.1, 0.2, 0.1, 0.0, 1000)
    assert len(integrate(init, params, horizon=1, dt=1.0).states) == 2
    with pytest.raises(EpiError):
        integrate(init, params, horizon=0, dt=0.25)
    with pytest.raises(EpiError):
        integrate(init, params, horizon=10, dt=1.5)


@pytest.mark.parametrize(
    "params",
    [
        EpiParams(0.19, 0.25, 0.075, 0.002, 114_200_000),
        EpiParams(0.05, 0.30, 0.048, 0.002, 19_800_000),
        EpiParams(1.8, 0.9, 0.9, 0.19, 1_000),
    ],
)
def test_integrate_conserves_population(params):
    n = params.population_n
    init = CompartmentState(0.9 * n, 0.02 * n, 0.03 * n, 0.05 * n, 0.0)
    traj = integrate(init, params, horizon=45, dt=0.25)
    for s in traj.states:
        assert abs(s.total - n) <= 1e-6 * n
        assert min(s.susceptible, s.exposed, s.infected, s.recovered, s.dead) >= 0


def test_integrate_dt_halving_below_tenth_percent():
    init = CompartmentState(113_000_000, 500_000, 500_000, 200_000, 0)
    params = EpiParams(0.19, 0.25, 0.075, 0.002, 114_200_000)
    coarse = integrate(init, params, horizon=45, dt=0.5).final
    fine = integrate(init, params, horizon=45, dt=0.25).final
    for name in ("susceptible", "exposed", "infected", "recovered", "dead"):
        a, b = getattr(coarse, name), getattr(fine, name)
        assert abs(a - b) <= 1e-3 * max(abs(b), 1.0)


def test_state_validation_rejects_negative_and_nonfinite():
    with pytest.raises(EpiError):
        CompartmentState(-1, 0, 0, 0, 0)
    with pytest.raises(EpiError):
        CompartmentState(float("nan"), 0, 0, 0, 0)
    with pytest.raises(EpiError):
        EpiParams(0.1, 0.1, 0.1, 0.1, 0)


def test_apply_vaccine_examples():
    state = CompartmentState(1000, 10, 20, 30, 5)
    assert apply_vaccine(state, 0, 1.0) == state
    dosed = apply_vaccine(state, 500, 1.0)
    assert dosed.susceptible == 500 and dosed.recovered == 530
    capped = apply_vaccine(state, 2000, 0.8)
    assert capped.susceptible == 0 and capped.recovered == 1030
    assert capped.total == pytest.approx(state.total)
    with pytest.raises(EpiError):
        apply_vaccine(state, -1, 1.0)


def test_apply_vaccine_idempotent_at_saturation():
    state = CompartmentState(1000, 10, 20, 30, 5)
    once = apply_vaccine(state, 5000, 0.5)
    twice = apply_vaccine(once, 5000, 0.5)
    assert once == twice


def test_more_doses_never_more_infections():
    params = EpiParams(0.19, 0.25, 0.075, 0.002, 1_000_000)
    init = CompartmentState(950_000, 20_000, 20_000, 10_000, 0)
    outcomes = []
    for doses in (0, 50_000, 100_000, 200_000, 400_000, 800_000):
        dosed = apply_vaccine(init, doses, 1.0)
        vaccinated = init.susceptible - dosed.susceptible
        final = integrate(dosed, params, horizon=45, dt=0.25).final
        outcomes.append(final.ever_infected - vaccinated)
    assert all(a >= b - 1e-6 for a, b in zip(outcomes, outcomes[1:]))


def test_derive_rates_direct_ratio():
    traj = Trajectory(
        start_date=date(2020, 12, 1),
        step_days=1.0,
        states=(CompartmentState(900, 0, 0, 90, 10),),
    )
    rates = derive_rates(traj)
    assert rates.death_rate == pytest.approx(10.0)
    assert rates.recovery_rate == pytest.approx(90.0)
    assert rates.total_predicted_cases == pytest.approx(100.0)
    assert rates.susceptible == pytest.approx(900.0)
    assert not rates.degenerate


def test_derive_rates_degenerate_flag():
    traj = Trajectory(
        start_date=date(2020, 12, 1),
        step_days=1.0,
        states=(CompartmentState(1000, 0, 0, 0, 0),),
    )
    rates = derive_rates(traj)
    assert rates.degenerate
    assert (rates.death_rate, rates.recovery_rate) == (0.0, 0.0)
    assert rates.susceptible == 1000.0


def _synthetic_series(params: EpiParams, days: int = 60) -> ObservedSeries:
    init = CompartmentState(
        params.population_n - 3000, 1000, 1000, 900, 100
    )
    traj = integrate(init, params, horizon=days, dt=0.25, start_date=date(2020, 10, 1))
    rows = []
    for d in range(days + 1):
        s = traj.state_at_day(d)
        rows.append(
            (
                date(2020, 10, 1) + timedelta(days=d),
                s.infected + s.recovered + s.dead,
                s.recovered,
                s.dead,
            )
        )
    return ObservedSeries(region="synthetic", rows=tuple(rows))


def test_fit_recovers_known_parameters_within_5pct():
    true = EpiParams(0.25, 0.2, 0.1, 0.01, 1_000_000)
    series = _synthetic_series(true)
    result = fit_params(series, 1_000_000, seed=0, restarts=1)
    for name in (
        "transmission_rate_beta",
        "incubation_rate_sigma",
        "recovery_rate_gamma",
        "fatality_rate_mu",
    ):
        fitted, expected = getattr(result.params, name), getattr(true, name)
        assert abs(fitted - expected) <= 0.05 * expected, name
    assert result.ssr <= result.grid_best_ssr


def test_fit_is_deterministic():
    true = EpiParams(0.25, 0.2, 0.1, 0.01, 1_000_000)
    series = _synthetic_series(true, days=30)
    a = fit_params(series, 1_000_000, seed=3, restarts=1)
    b = fit_params(series, 1_000_000, seed=3, restarts=1)
    assert a.params == b.params and a.ssr == b.ssr


def test_fit_rejects_flat_series():
    rows = tuple(
        (date(2020, 10, 1) + timedelta(days=d), 0.0, 0.0, 0.0) for d in range(30)
    )
    with pytest.raises(FitError):
        fit_params(ObservedSeries(region="flat", rows=rows), 1_000_000)


def test_fit_rejects_short_series():
    rows = tuple(
        (date(2020, 10, 1) + timedelta(days=d), float(d + 1), 0.0, 0.0) for d in range(5)
    )
    with pytest.raises(FitError):
        fit_params(ObservedSeries(region="short", rows=rows), 1_000_000)


def test_observed_series_rejects_decreasing_cumulative():
    rows = (
        (date(2020, 10, 1), 10.0, 1.0, 0.0),
        (date(2020, 10, 2), 9.0, 1.0, 0.0),
    )
    with pytest.raises(EpiError, match="decreases at row 1"):
        ObservedSeries(region="x", rows=rows)


def test_read_observed_csv_round_trip_and_errors():
    text = (
        "date,region,confirmed,recovered,deaths\n"
        "2020-10-01,A,10,1,0\n"
        "2020-10-02,A,12,2,0\n"
        "2020-10-01,B,5,0,0\n"
    )
    series = read_observed_csv(text)
    assert set(series) == {"A", "B"}
    assert series["A"].rows[1] == (date(2020, 10, 2), 12.0, 2.0, 0.0)
    with pytest.raises(EpiError):
        read_observed_csv("date,confirmed\n2020-10-01,3\n")
    with pytest.raises(EpiError, match="row 2"):
        read_observed_csv("date,region,confirmed,recovered,deaths\nnot-a-date,A,1,0,0\n")


def test_trajectory_csv_layout():
    init = CompartmentState(900, 0, 100, 0, 0)
    params = EpiParams(0.0, 0.2, 0.1, 0.0, 1000)
    text = integrate(init, params, horizon=1, dt=0.5).to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "day,S,E,I,R,D"
    assert len(lines) == 4  # header + 3 states
    assert lines[1].startswith("0,900")


def test_initial_state_from_row_convention():
    state = initial_state_from_row((date(2020, 10, 1), 1000.0, 600.0, 50.0), 1_000_000)
    assert state.infected == 350.0
    assert state.exposed == 350.0  # exposed pool mirrors active infections
    assert state.recovered == 600.0 and state.dead == 50.0
    assert state.total == pytest.approx(1_000_000)
