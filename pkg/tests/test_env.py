"""Allocation environment: reward arithmetic, episode lifecycle, scaling."""

import math
from datetime import date

import numpy as np
import pytest

from vacsim.env import (
    FEATURE_NAMES,
    EnvConfig,
    EnvError,
    StateContext,
    VaccineDistributionEnv,
    contexts_from_csv,
    contexts_to_csv,
    scale_features,
    scaling_from_contexts,
)

DAY = date(2020, 12, 31)

# frozen oracle values for the reward exp(-(A-S)^2 / 1e-4)
REWARD_AT_001 = 0.36787944117144233  # |A-S| = 0.01
REWARD_AT_003 = 1.2340980408667956e-4  # |A-S| = 0.03


def make_context(region, susceptible, population=1_000_000.0, **overrides):
    kwargs = dict(
        region=region,
        date=DAY,
        total_predicted_cases=1000.0,
        predicted_death_rate=2.0,
        predicted_recovery_rate=90.0,
        susceptible=susceptible,
        population=population,
        icu_beds=10.0,
        hospital_beds=100.0,
        ventilators=5.0,
        age_over_50=1000.0,
    )
    kwargs.update(overrides)
    return StateContext(**kwargs)


def five_contexts(susceptibles=(100.0, 200.0, 300.0, 250.0, 150.0)):
    return [make_context(f"r{i}", s) for i, s in enumerate(susceptibles)]


def test_reward_peak_and_frozen_values():
    env = VaccineDistributionEnv(EnvConfig())
    env.reset(five_contexts((200.0, 200.0, 200.0, 200.0, 200.0)))  # each share 0.2
    assert env.step(200).reward == pytest.approx(1.0, abs=1e-12)
    assert env.step(210).reward == pytest.approx(REWARD_AT_001, abs=1e-9)
    assert env.step(230).reward == pytest.approx(REWARD_AT_003, abs=1e-9)


def test_reward_range_and_unimodality():
    contexts = five_contexts()
    rewards = []
    for a in range(1000):
        env = VaccineDistributionEnv(EnvConfig())
        env.reset(contexts)
        rewards.append(env.step(a).reward)
    peak = int(np.argmax(rewards))
    share = 100.0 / 1000.0  # recipient 0 of five_contexts
    assert all(0 <= r <= 1 for r in rewards)
    for a, r in enumerate(rewards):
        # strictly positive wherever exp() has a representable value
        if ((a / 1000 - share) ** 2) / 1e-4 < 700:
            assert r > 0
    assert all(rewards[i] >= rewards[i + 1] for i in range(peak, 999))
    assert all(rewards[i] <= rewards[i + 1] for i in range(peak))


def test_episode_lifecycle():
    env = VaccineDistributionEnv(EnvConfig())
    obs = env.reset(five_contexts())
    assert obs.shape == (9,)
    outcomes = [env.step(i) for i in range(5)]
    assert [o.done for o in outcomes] == [False, False, False, False, True]
    assert [o.info["recipient"] for o in outcomes] == [0, 1, 2, 3, 4]
    with pytest.raises(EnvError):
        env.step(0)


def test_reset_preconditions():
    env = VaccineDistributionEnv(EnvConfig())
    with pytest.raises(EnvError):
        env.reset(five_contexts()[:4])
    mixed = five_contexts()
    mixed[2] = make_context("r2", 300.0, date=date(2020, 12, 30))
    with pytest.raises(EnvError):
        env.reset(mixed)


def test_action_bounds():
    env = VaccineDistributionEnv(EnvConfig())
    env.reset(five_contexts())
    with pytest.raises(EnvError):
        env.step(-1)
    with pytest.raises(EnvError):
        env.step(1000)


def test_shares_sum_to_one():
    env = VaccineDistributionEnv(EnvConfig())
    env.reset(five_contexts((123.0, 456.0, 789.0, 12.0, 34.0)))
    assert sum(env.susceptible_share(i) for i in range(5)) == pytest.approx(1.0, abs=1e-9)


def test_optimal_action_examples_and_tie_rule():
    env = VaccineDistributionEnv(EnvConfig())
    env.reset(five_contexts((155.0, 845.0, 0.0, 0.0, 0.0)))
    assert env.optimal_action(0) == 155
    assert env.optimal_action(2) == 0  # boundary share 0
    env2 = VaccineDistributionEnv(EnvConfig(bucket_size=2, recipients_per_day=2))
    env2.reset([make_context("a", 100.0), make_context("b", 100.0)])
    assert env2.optimal_action(0) == 1  # share 0.5 ties upward


def test_optimal_action_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        bucket = int(rng.integers(2, 2000))
        shares = rng.dirichlet(np.ones(5))
        env = VaccineDistributionEnv(EnvConfig(bucket_size=bucket))
        env.reset(five_contexts(tuple(1e6 * shares)))
        idx = int(rng.integers(5))
        share = env.susceptible_share(idx)
        dist = np.abs(np.arange(bucket) / bucket - share)
        best = np.flatnonzero(dist == dist.min()).max()  # ties upward
        assert env.optimal_action(idx) == best


def test_scaling_from_contexts_and_clamping():
    contexts = five_contexts((100.0, 200.0, 300.0, 250.0, 150.0))
    scaling = scaling_from_contexts(contexts)
    sus_idx = FEATURE_NAMES.index("susceptible")
    assert scaling[sus_idx] == (100.0, 300.0)
    scaled = scale_features(contexts[0].features(), scaling)
    assert scaled[sus_idx] == pytest.approx(0.0)
    assert np.all((scaled >= 0.0) & (scaled <= 1.0))
    out_of_range = make_context("z", 900.0)
    assert scale_features(out_of_range.features(), scaling)[sus_idx] == 1.0
    # constant feature collapses to zero
    pop_idx = FEATURE_NAMES.index("population")
    assert scale_features(contexts[1].features(), scaling)[pop_idx] == 0.0


def test_observation_uses_scaling():
    contexts = five_contexts()
    scaling = scaling_from_contexts(contexts)
    env = VaccineDistributionEnv(EnvConfig(feature_scaling=scaling))
    obs = env.reset(contexts)
    assert np.allclose(obs, scale_features(contexts[0].features(), scaling))


def test_context_validation():
    with pytest.raises(EnvError):
        make_context("bad", 2_000_000.0)  # susceptible above population
    with pytest.raises(EnvError):
        make_context("bad", 100.0, predicted_death_rate=120.0)
    with pytest.raises(EnvError):
        make_context("bad", -1.0)


def test_contexts_csv_round_trip():
    days = [five_contexts(), [
        make_context(f"r{i}", 100.0 + i, date=date(2021, 1, 1)) for i in range(5)
    ]]
    days[1], days[0] = days[0], days[1]  # writer order should not matter for grouping
    text = contexts_to_csv(days)
    parsed = contexts_from_csv(text)
    assert len(parsed) == 2
    assert parsed[0][0].date == DAY
    assert parsed[0] == five_contexts()
    with pytest.raises(EnvError):
        contexts_from_csv("date,region\n2020-01-01,x\n")
    bad = text.replace("1000000.0", "not-a-number", 1)
    with pytest.raises(EnvError, match="row"):
        contexts_from_csv(bad)
