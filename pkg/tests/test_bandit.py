"""Logged-bandit regression, epsilon-greedy play, and regret bookkeeping."""

import json
import math
from datetime import date

import numpy as np
import pytest

from vacsim.bandit import (
    ActionBasis,
    BanditError,
    BanditExample,
    BanditModel,
    RegretRecord,
    act,
    examples_from_csv,
    examples_to_csv,
    predict,
    regret_update,
    run_online_rounds,
    train,
)

DAY = date(2020, 12, 31)
FEATURES = tuple(0.1 * (i + 1) for i in range(9))


def example(action, reward, *, bucket=6, probability=None, rnd=0, features=FEATURES):
    return BanditExample(
        round_index=rnd,
        date=DAY,
        region="reg",
        bucket_size=bucket,
        action=action,
        reward=reward,
        logging_probability=1.0 / bucket if probability is None else probability,
        features=features,
    )


# -- example validation ----------------------------------------------------------


def test_example_validation():
    example(3, 0.5)
    example(0, 0.0)  # rewards can underflow to exactly 0 far off-peak
    with pytest.raises(BanditError, match="action"):
        example(6, 0.5)
    with pytest.raises(BanditError, match="action"):
        example(-1, 0.5)
    with pytest.raises(BanditError, match="reward"):
        example(0, 1.5)
    with pytest.raises(BanditError, match="probability"):
        example(0, 0.5, probability=0.0)
    with pytest.raises(BanditError, match="probability"):
        example(0, 0.5, probability=1.2)
    with pytest.raises(BanditError, match="features"):
        example(0, 0.5, features=(0.1, 0.2))


def test_context_appends_bucket_fraction():
    ctx = example(0, 0.5, bucket=500).context()
    assert ctx.shape == (10,)
    assert ctx[-1] == 0.5
    assert tuple(ctx[:9]) == FEATURES


# -- training ---------------------------------------------------------------------


def test_train_rejects_empty_and_bad_passes():
    with pytest.raises(BanditError, match="empty"):
        train([])
    with pytest.raises(BanditError, match="passes"):
        train([example(0, 0.5)], passes=0)


def test_train_rejects_action_beyond_declared_range():
    with pytest.raises(BanditError, match="outside"):
        train([example(5, 0.5)], n_actions=4)


def test_train_infers_action_count_from_bucket_sizes():
    model = train([example(2, 0.5, bucket=6, rnd=0), example(1, 0.4, bucket=9, rnd=1)])
    assert model.n_actions == 9


def test_single_example_interpolated():
    e = example(3, 0.8)
    model = train([e], passes=200, learning_rate=2e-3)
    assert model.predicted_reward(e.context(), 3) == pytest.approx(0.8, abs=1e-3)


def test_distinctive_action_wins_argmax():
    # one context: action 3 always pays 1, every other logged action pays 0
    log = []
    for rnd in range(60):
        a = rnd % 6
        log.append(example(a, 1.0 if a == 3 else 0.0, rnd=rnd))
    model = train(log, passes=60, seed=4)
    action, scores = predict(model, log[0].context())
    assert action == 3
    assert len(scores) == 6
    assert scores[3] == max(scores)


def test_shuffled_log_trains_identically():
    rng = np.random.default_rng(11)
    log = [example(int(rng.integers(6)), float(rng.uniform(0.1, 1.0)), rnd=r) for r in range(40)]
    shuffled = list(log)
    np.random.default_rng(5).shuffle(shuffled)
    a = train(log, passes=10, seed=7)
    b = train(shuffled, passes=10, seed=7)
    assert np.array_equal(a.weights, b.weights)


def test_sharp_peak_recovered_within_ten_of_thousand():
    # rewards shaped like the env's: a narrow bump at share 0.155 of 1000 buckets
    rng = np.random.default_rng(3)
    log = []
    for rnd in range(2000):
        a = int(rng.integers(1000))
        r = math.exp(-((a / 1000 - 0.155) ** 2) / 1e-4)
        log.append(example(a, r, bucket=1000, probability=1.0 / 1000, rnd=rnd))
    model = train(log, passes=30, learning_rate=5e-3, seed=0)
    action, _ = predict(model, log[0].context())
    assert abs(action - 155) <= 10


# -- prediction and play ------------------------------------------------------------


def test_predict_single_action_and_zero_weight_ties():
    one = BanditModel(n_actions=1)
    assert predict(one, example(0, 0.5, bucket=1).context())[0] == 0
    zero = BanditModel(n_actions=8)
    action, scores = predict(zero, example(0, 0.5, bucket=8).context())
    assert action == 0  # all scores equal, ties go to the smallest index
    assert np.all(scores == 0.0)


def test_predict_dimension_mismatch():
    model = BanditModel(n_actions=4)
    with pytest.raises(BanditError, match="context"):
        predict(model, np.zeros(4))


def test_scores_shift_invariant_argmax():
    e = example(3, 0.9)
    model = train([e] + [example(1, 0.2, rnd=1)], passes=30, seed=1)
    ctx = e.context()
    before_action, before_scores = predict(model, ctx)
    shifted = model.copy()
    # intercept times the constant basis column adds the same amount everywhere
    shifted.weights[0, 0] += 5.0
    after_action, after_scores = predict(shifted, ctx)
    assert after_action == before_action
    assert np.allclose(after_scores - before_scores, 5.0, atol=1e-9)


def test_act_epsilon_zero_always_greedy():
    model = train([example(3, 0.9)], passes=50)
    ctx = example(3, 0.9).context()
    greedy, _ = predict(model, ctx)
    rng = np.random.default_rng(0)
    for _ in range(25):
        action, p = act(model, ctx, 0.0, rng)
        assert action == greedy
        assert p == 1.0


def test_act_epsilon_one_uniform_probability():
    model = BanditModel(n_actions=10)
    ctx = example(0, 0.5, bucket=10).context()
    rng = np.random.default_rng(1)
    for _ in range(25):
        _, p = act(model, ctx, 1.0, rng)
        assert p == pytest.approx(0.1, abs=1e-12)


def test_act_mixture_probability_value():
    model = train([example(2, 0.9, bucket=4)], passes=50)
    ctx = example(2, 0.9, bucket=4).context()
    greedy, _ = predict(model, ctx)
    rng = np.random.default_rng(2)
    seen = set()
    for _ in range(200):
        action, p = act(model, ctx, 0.2, rng)
        if action == greedy:
            assert p == pytest.approx(0.2 / 4 + 0.8, abs=1e-12)
        else:
            assert p == pytest.approx(0.05, abs=1e-12)
        seen.add(action)
    assert greedy in seen and len(seen) > 1


def test_act_empirical_distribution_matches_declared():
    model = train([example(1, 0.9, bucket=5)], passes=50)
    ctx = example(1, 0.9, bucket=5).context()
    greedy, _ = predict(model, ctx)
    epsilon = 0.5
    rng = np.random.default_rng(9)
    draws = 10_000
    counts = np.zeros(5)
    for _ in range(draws):
        action, _ = act(model, ctx, epsilon, rng)
        counts[action] += 1
    for a in range(5):
        p = epsilon / 5 + (1 - epsilon) * (1.0 if a == greedy else 0.0)
        sigma = math.sqrt(draws * p * (1 - p))
        assert abs(counts[a] - draws * p) <= 3 * sigma


def test_act_validates_epsilon():
    model = BanditModel(n_actions=3)
    with pytest.raises(BanditError, match="epsilon"):
        act(model, example(0, 0.5, bucket=3).context(), 1.5, np.random.default_rng(0))


# -- regret -------------------------------------------------------------------------


def test_regret_update_examples():
    record = RegretRecord()
    same = regret_update(record, 0.7, 0.7)  # chosen action is the optimum
    assert same.per_round == (0.0,)
    assert same.cumulative == 0.0
    step = regret_update(same, 1.0, 0.8)
    assert step.per_round[-1] == pytest.approx(0.2, abs=1e-12)
    assert step.cumulative == pytest.approx(0.2, abs=1e-12)
    summed = regret_update(regret_update(RegretRecord(), 1.0, 0.9), 1.0, 0.8)
    assert summed.cumulative == pytest.approx(0.3, abs=1e-12)


def test_regret_clamped_at_zero():
    record = regret_update(RegretRecord(), 0.5, 0.9)  # estimator overshoot
    assert record.per_round == (0.0,)


def test_regret_record_consistency_enforced():
    with pytest.raises(BanditError, match="cumulative"):
        RegretRecord(per_round=(0.1, 0.2), cumulative=0.5)


def test_online_rounds_regret_declines():
    share = 0.155
    ctx = example(0, 0.5, bucket=200).context()

    def reward_fn(_, action):
        return math.exp(-((action / 200 - share) ** 2) / 1e-4)

    model = BanditModel(n_actions=200)
    record = run_online_rounds(
        model, [ctx], reward_fn, rounds=5000, epsilon=0.3,
        learning_rate=5e-3, seed=6, p_star_fn=lambda _: 1.0,
    )
    assert len(record.per_round) == 5000
    assert all(z >= 0.0 for z in record.per_round)
    assert record.cumulative == pytest.approx(math.fsum(record.per_round), rel=1e-12)
    head = np.mean(record.per_round[:500])
    tail = np.mean(record.per_round[-500:])
    assert tail < head


def test_online_rounds_validation():
    model = BanditModel(n_actions=4)
    with pytest.raises(BanditError, match="rounds"):
        run_online_rounds(model, [np.zeros(10)], lambda c, a: 0.5, 0, 0.1, 1e-3, 0)


# -- persistence ---------------------------------------------------------------------


def test_examples_csv_round_trip():
    rng = np.random.default_rng(8)
    log = [
        example(int(rng.integers(6)), float(rng.uniform(0.0, 1.0)), rnd=r,
                probability=float(rng.uniform(0.01, 1.0)))
        for r in range(12)
    ]
    restored = examples_from_csv(examples_to_csv(log))
    assert restored == log


def test_examples_csv_errors():
    with pytest.raises(BanditError, match="empty"):
        examples_from_csv("")
    with pytest.raises(BanditError, match="header"):
        examples_from_csv("a,b,c\n1,2,3\n")
    good = examples_to_csv([example(1, 0.5)])
    header, row = good.splitlines()
    with pytest.raises(BanditError, match="row 2"):
        examples_from_csv(header + "\n" + ",".join(row.split(",")[:5]) + "\n")
    bad_value = row.split(",")
    bad_value[4] = "not-an-int"
    with pytest.raises(BanditError, match="row 3"):
        examples_from_csv(header + "\n" + row + "\n" + ",".join(bad_value) + "\n")


def test_model_json_round_trip():
    model = train([example(2, 0.7), example(4, 0.3, rnd=1)], passes=15, seed=2)
    restored = BanditModel.from_json(model.to_json())
    assert restored.n_actions == model.n_actions
    assert restored.epsilon == model.epsilon
    assert restored.basis == model.basis
    assert restored.ips_clip == model.ips_clip
    assert restored.update_count == model.update_count
    assert np.array_equal(restored.weights, model.weights)


def test_model_json_version_guard():
    doc = json.loads(BanditModel(n_actions=3).to_json())
    doc["format_version"] = 99
    with pytest.raises(BanditError, match="version"):
        BanditModel.from_json(json.dumps(doc))


def test_action_basis_validation():
    with pytest.raises(BanditError, match="kind"):
        ActionBasis(kind="fourier")
    with pytest.raises(BanditError, match="centers"):
        ActionBasis(rbf_centers=1)
    with pytest.raises(BanditError, match="width"):
        ActionBasis(rbf_width=0.0)
    assert ActionBasis(kind="poly3").size == 4
    assert ActionBasis(kind="poly3-rbf", rbf_centers=33).size == 37
