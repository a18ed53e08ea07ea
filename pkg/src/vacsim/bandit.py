"""Online allocation learner trained on logged (context, action, reward) rounds.

The reward model is linear in an outer-product feature map: an augmented
context vector (intercept + 9 scaled region features + bucket fraction)
crossed with an action basis over the normalized action index. The action
basis is a degree-3 polynomial optionally extended with a grid of Gaussian
bumps; the bumps let the regressor localize narrow reward peaks that a cubic
alone smears out. Training weighs examples by clipped inverse propensity.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from datetime import date as Date
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BanditError",
    "BanditExample",
    "ActionBasis",
    "BanditModel",
    "RegretRecord",
    "train",
    "predict",
    "act",
    "regret_update",
    "run_online_rounds",
    "examples_to_csv",
    "examples_from_csv",
]

MODEL_FORMAT_VERSION = 1
# bucket sizes enter the context as a fraction of this reference count
REFERENCE_BUCKET = 1000
CONTEXT_FEATURES = 9

LOG_HEADER = (
    "round",
    "date",
    "region",
    "bucket_size",
    "action",
    "reward",
    "probability",
    "f1",
    "f2",
    "f3",
    "f4",
    "f5",
    "f6",
    "f7",
    "f8",
    "f9",
)


class BanditError(ValueError):
    """Invalid bandit input or configuration."""


@dataclass(frozen=True)
class BanditExample:
    """One logged allocation round."""

    round_index: int
    date: Date
    region: str
    bucket_size: int
    action: int
    reward: float
    logging_probability: float
    features: tuple[float, ...]  # the 9 scaled region features

    def __post_init__(self):
        if self.bucket_size < 1:
            raise BanditError(f"bucket_size must be >= 1, got {self.bucket_size}")
        if not (0 <= self.action < self.bucket_size):
            raise BanditError(
                f"action {self.action} outside [0,{self.bucket_size}) for this round"
            )
        if not (0.0 <= self.reward <= 1.0):
            raise BanditError(f"reward must be in [0,1], got {self.reward}")
        if not (0.0 < self.logging_probability <= 1.0):
            raise BanditError(
                f"logging probability must be in (0,1], got {self.logging_probability}"
            )
        if len(self.features) != CONTEXT_FEATURES:
            raise BanditError(f"expected {CONTEXT_FEATURES} features, got {len(self.features)}")

    def context(self) -> np.ndarray:
        """Model input: scaled features plus the bucket-size fraction."""
        return np.array([*self.features, self.bucket_size / REFERENCE_BUCKET])


@dataclass(frozen=True)
class ActionBasis:
    """Encoding of a normalized action index into regression features."""

    kind: str = "poly3-rbf"  # "poly3" | "poly3-rbf"
    rbf_centers: int = 33
    rbf_width: float = 0.02

    def __post_init__(self):
        if self.kind not in ("poly3", "poly3-rbf"):
            raise BanditError(f"unknown action basis kind: {self.kind}")
        if self.kind == "poly3-rbf" and self.rbf_centers < 2:
            raise BanditError("need at least 2 bump centers")
        if self.rbf_width <= 0:
            raise BanditError("bump width must be positive")

    @property
    def size(self) -> int:
        return 4 + (self.rbf_centers if self.kind == "poly3-rbf" else 0)

    def encode(self, normalized: np.ndarray) -> np.ndarray:
        """Rows of basis values for normalized action positions in [0,1]."""
        x = np.atleast_1d(np.asarray(normalized, dtype=float))
        cols = [np.ones_like(x), x, x**2, x**3]
        if self.kind == "poly3-rbf":
            centers = np.linspace(0.0, 1.0, self.rbf_centers)
            cols.append(np.exp(-((x[:, None] - centers) ** 2) / (2.0 * self.rbf_width**2)))
        return np.column_stack(cols)

    def matrix(self, n_actions: int) -> np.ndarray:
        """Basis rows for every action index in [0, n_actions)."""
        return self.encode(np.arange(n_actions) / n_actions)


@dataclass
class BanditModel:
    """Linear reward regressor over context x action-basis crossed features."""

    n_actions: int
    epsilon: float = 0.10
    basis: ActionBasis = field(default_factory=ActionBasis)
    # (1 + CONTEXT_FEATURES + 1) x basis.size weight matrix
    weights: np.ndarray | None = None
    ips_clip: float = 10.0
    update_count: int = 0

    def __post_init__(self):
        if self.n_actions < 1:
            raise BanditError(f"n_actions must be >= 1, got {self.n_actions}")
        if not (0.0 <= self.epsilon <= 1.0):
            raise BanditError(f"epsilon must be in [0,1], got {self.epsilon}")
        if self.weights is None:
            self.weights = np.zeros((2 + CONTEXT_FEATURES, self.basis.size))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (2 + CONTEXT_FEATURES, self.basis.size):
            raise BanditError(f"weight shape {self.weights.shape} does not match basis")

    @staticmethod
    def _augment(context: np.ndarray) -> np.ndarray:
        c = np.asarray(context, dtype=float)
        if c.shape != (CONTEXT_FEATURES + 1,):
            raise BanditError(
                f"context must have {CONTEXT_FEATURES + 1} entries "
                f"(9 scaled features + bucket fraction), got shape {c.shape}"
            )
        return np.concatenate(([1.0], c))

    def scores(self, context: np.ndarray) -> np.ndarray:
        """Predicted reward for every action given one context."""
        row = self._augment(context) @ self.weights  # basis-space coefficients
        out = self.basis.matrix(self.n_actions) @ row
        if not np.all(np.isfinite(out)):
            raise BanditError("model produced non-finite predictions")
        return out

    def predicted_reward(self, context: np.ndarray, action: int) -> float:
        if not (0 <= action < self.n_actions):
            raise BanditError(f"action {action} outside [0,{self.n_actions})")
        basis_row = self.basis.encode(np.array([action / self.n_actions]))[0]
        return float(self._augment(context) @ self.weights @ basis_row)

    def update(self, example: BanditExample, learning_rate: float) -> None:
        """One weighted squared-error gradient step on a single example."""
        aug = self._augment(example.context())
        basis_row = self.basis.encode(np.array([example.action / self.n_actions]))[0]
        weight = min(1.0 / example.logging_probability, self.ips_clip)
        residual = float(aug @ self.weights @ basis_row) - example.reward
        self.weights -= learning_rate * weight * residual * np.outer(aug, basis_row)
        self.update_count += 1

    def copy(self) -> "BanditModel":
        return replace(self, weights=self.weights.copy())

    def to_json(self) -> str:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "n_actions": self.n_actions,
            "epsilon": self.epsilon,
            "basis": {
                "kind": self.basis.kind,
                "rbf_centers": self.basis.rbf_centers,
                "rbf_width": self.basis.rbf_width,
            },
            "weights": self.weights.ravel().tolist(),
            "ips_clip": self.ips_clip,
            "update_count": self.update_count,
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "BanditModel":
        doc = json.loads(text)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise BanditError(f"unsupported model version: {doc.get('format_version')}")
        basis = ActionBasis(
            kind=doc["basis"]["kind"],
            rbf_centers=doc["basis"]["rbf_centers"],
            rbf_width=doc["basis"]["rbf_width"],
        )
        weights = np.asarray(doc["weights"], dtype=float).reshape(
            2 + CONTEXT_FEATURES, basis.size
        )
        return BanditModel(
            n_actions=doc["n_actions"],
            epsilon=doc["epsilon"],
            basis=basis,
            weights=weights,
            ips_clip=doc["ips_clip"],
            update_count=doc["update_count"],
        )


def train(
    examples: Sequence[BanditExample],
    passes: int = 40,
    learning_rate: float = 2e-3,
    seed: int = 0,
    n_actions: int | None = None,
    epsilon: float = 0.10,
    basis: ActionBasis | None = None,
    ips_clip: float = 10.0,
) -> BanditModel:
    """Fit the reward regressor on a logged dataset.

    Examples are put in round order first (stable sort), so shuffled copies of
    the same log train identically; each pass then visits a seeded permutation.
    """
    if not examples:
        raise BanditError("cannot train on an empty log")
    if passes < 1:
        raise BanditError("passes must be >= 1")
    ordered = sorted(examples, key=lambda e: e.round_index)
    if n_actions is None:
        n_actions = max(e.bucket_size for e in ordered)
    for e in ordered:
        if not (0 <= e.action < n_actions):
            raise BanditError(
                f"round {e.round_index}: action {e.action} outside [0,{n_actions})"
            )
    model = BanditModel(
        n_actions=n_actions, epsilon=epsilon, basis=basis or ActionBasis(), ips_clip=ips_clip
    )
    rng = np.random.default_rng(seed)
    for _ in range(passes):
        for i in rng.permutation(len(ordered)):
            model.update(ordered[i], learning_rate)
    return model


def predict(model: BanditModel, context: np.ndarray) -> tuple[int, np.ndarray]:
    """Greedy action (ties to the smallest index) plus the full score vector."""
    scores = model.scores(context)
    return int(np.argmax(scores)), scores


def act(
    model: BanditModel, context: np.ndarray, epsilon: float, rng: np.random.Generator
) -> tuple[int, float]:
    """Epsilon-greedy draw; returns the exact sampling probability of the choice."""
    if not (0.0 <= epsilon <= 1.0):
        raise BanditError(f"epsilon must be in [0,1], got {epsilon}")
    greedy, _ = predict(model, context)
    n = model.n_actions
    if rng.random() < epsilon:
        action = int(rng.integers(n))
    else:
        action = greedy
    probability = epsilon / n + (1.0 - epsilon) * (1.0 if action == greedy else 0.0)
    return action, probability


@dataclass(frozen=True)
class RegretRecord:
    """Per-round regret Z and its running sum Z*."""

    per_round: tuple[float, ...] = ()
    cumulative: float = 0.0

    def __post_init__(self):
        total = math.fsum(self.per_round)
        if abs(total - self.cumulative) > 1e-9 * max(1.0, abs(total)):
            raise BanditError("cumulative regret does not match the per-round sum")


def regret_update(
    record: RegretRecord, p_star: float, expected_reward_of_chosen: float
) -> RegretRecord:
    """Append Z = max(0, p* - E(p|chosen)); Z* accumulates."""
    z = max(0.0, p_star - expected_reward_of_chosen)
    return RegretRecord(per_round=record.per_round + (z,), cumulative=record.cumulative + z)


def run_online_rounds(
    model: BanditModel,
    contexts: Sequence[np.ndarray],
    reward_fn: Callable[[np.ndarray, int], float],
    rounds: int,
    epsilon: float,
    learning_rate: float,
    seed: int,
    p_star_fn: Callable[[np.ndarray], float] | None = None,
) -> RegretRecord:
    """Online loop: act, observe the reward, update, and track regret.

    Z uses p* from `p_star_fn` when given (known-oracle evaluation), else the
    model's own best prediction (estimated regret); E(p|chosen) is always the
    model's prediction for the chosen action, taken before the update.
    """
    if rounds < 1:
        raise BanditError("rounds must be >= 1")
    rng = np.random.default_rng(seed)
    record = RegretRecord()
    for r in range(rounds):
        context = contexts[r % len(contexts)]
        action, probability = act(model, context, epsilon, rng)
        expected = model.predicted_reward(context, action)
        if p_star_fn is not None:
            p_star = p_star_fn(context)
        else:
            p_star = float(np.max(model.scores(context)))
        record = regret_update(record, p_star, expected)
        reward = reward_fn(context, action)
        example = BanditExample(
            round_index=r,
            date=Date(2020, 12, 1),
            region="online",
            bucket_size=model.n_actions,
            action=action,
            reward=reward,
            logging_probability=probability,
            features=tuple(float(v) for v in np.asarray(context)[:CONTEXT_FEATURES]),
        )
        model.update(example, learning_rate)
    return record


# -- log persistence -----------------------------------------------------------


def examples_to_csv(examples: Sequence[BanditExample]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LOG_HEADER)
    for e in examples:
        writer.writerow(
            [
                e.round_index,
                e.date.isoformat(),
                e.region,
                e.bucket_size,
                e.action,
                repr(float(e.reward)),
                repr(float(e.logging_probability)),
                *[repr(float(f)) for f in e.features],
            ]
        )
    return out.getvalue()


def examples_from_csv(text: str) -> list[BanditExample]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = tuple(next(reader))
    except StopIteration:
        raise BanditError("empty log file") from None
    if header != LOG_HEADER:
        raise BanditError(f"unexpected log header: {header}")
    examples = []
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(LOG_HEADER):
            raise BanditError(f"row {row_num}: expected {len(LOG_HEADER)} columns")
        try:
            examples.append(
                BanditExample(
                    round_index=int(row[0]),
                    date=Date.fromisoformat(row[1]),
                    region=row[2],
                    bucket_size=int(row[3]),
                    action=int(row[4]),
                    reward=float(row[5]),
                    logging_probability=float(row[6]),
                    features=tuple(float(v) for v in row[7:16]),
                )
            )
        except (ValueError, BanditError) as exc:
            raise BanditError(f"row {row_num}: {exc}") from exc
    return examples
