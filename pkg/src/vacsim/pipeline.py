"""Feed-forward run orchestration.

Order of stages: fit region parameters, build training contexts, train the
RL agent, replay it to produce the bandit log, train the bandit, then emit
normalized distribution sets per test day and bucket size. Every stage
failure is re-raised with the stage label so callers can report it.
"""

from __future__ import annotations

import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import date as Date
from datetime import timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bandit as bandit_mod
from .agents import A2CConfig, DQNConfig, PolicyArtifact, train_actor_critic, train_dqn
from .bandit import REFERENCE_BUCKET, ActionBasis, BanditExample, BanditModel
from .data_io import Snapshot, build_contexts
from .env import EnvConfig, StateContext, VaccineDistributionEnv, scale_features, scaling_from_contexts
from .epi import EpiParams, fit_params

__all__ = [
    "PipelineError",
    "DistributionSet",
    "RunConfig",
    "RunArtifact",
    "generate_log",
    "scale_bucket",
    "normalize",
    "run_vacsim",
    "bandit_context",
    "day_distribution",
    "greedy_distribution",
    "persist_run",
]

ARTIFACT_FORMAT_VERSION = 1
DEFAULT_REGIONS = ("Assam", "Delhi", "Jharkhand", "Maharashtra", "Nagaland")


class PipelineError(RuntimeError):
    """A stage failure carrying the stage label."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@contextmanager
def _stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc


@dataclass(frozen=True)
class DistributionSet:
    """Share of the day's vials per region, in percent."""

    date: Date
    bucket_size: int
    percentages: dict[str, float]

    def __post_init__(self):
        if not self.percentages:
            raise ValueError("empty distribution")
        for region, pct in self.percentages.items():
            if not math.isfinite(pct) or pct < 0:
                raise ValueError(f"{region}: percentage must be finite and >= 0, got {pct}")
        total = math.fsum(self.percentages.values())
        if abs(total - 100.0) > 1e-6:
            raise ValueError(f"percentages sum to {total}, expected 100")

    def as_vector(self, regions: Sequence[str]) -> np.ndarray:
        return np.array([self.percentages[r] for r in regions])


@dataclass(frozen=True)
class RunConfig:
    regions: tuple[str, ...] = DEFAULT_REGIONS
    train_start: Date = Date(2020, 12, 1)
    train_end: Date = Date(2020, 12, 26)
    test_start: Date = Date(2020, 12, 26)
    test_end: Date = Date(2020, 12, 31)
    distribution_date: Date = Date(2020, 12, 31)
    bucket_sweep: tuple[int, ...] = tuple(range(100, 1001, 100))
    agent_kind: str = "dqn"
    seed: int = 0
    dt: float = 0.25
    fit_restarts: int = 2
    env: EnvConfig = EnvConfig()
    dqn: DQNConfig = DQNConfig()
    a2c: A2CConfig = A2CConfig()
    bandit_passes: int = 40
    bandit_learning_rate: float = 2e-3
    bandit_epsilon: float = 0.10
    bandit_basis: ActionBasis = ActionBasis()

    def __post_init__(self):
        if not self.regions:
            raise ValueError("need at least one region")
        if len(set(self.regions)) != len(self.regions):
            raise ValueError("duplicate regions")
        if not (self.train_start <= self.train_end <= self.test_start <= self.test_end):
            raise ValueError("windows must be ordered: train before test")
        if not (self.test_start <= self.distribution_date <= self.test_end):
            raise ValueError("distribution date must fall inside the test window")
        if not self.bucket_sweep:
            raise ValueError("bucket sweep must be non-empty")
        if any(b < 2 for b in self.bucket_sweep):
            raise ValueError("bucket sizes must be >= 2")
        if self.agent_kind not in ("dqn", "actor-critic"):
            raise ValueError(f"unknown agent kind: {self.agent_kind}")
        if self.env.recipients_per_day != len(self.regions):
            raise ValueError(
                f"env recipients_per_day ({self.env.recipients_per_day}) must equal "
                f"the region count ({len(self.regions)})"
            )

    def to_dict(self) -> dict:
        return {
            "regions": list(self.regions),
            "train_start": self.train_start.isoformat(),
            "train_end": self.train_end.isoformat(),
            "test_start": self.test_start.isoformat(),
            "test_end": self.test_end.isoformat(),
            "distribution_date": self.distribution_date.isoformat(),
            "bucket_sweep": list(self.bucket_sweep),
            "agent_kind": self.agent_kind,
            "seed": self.seed,
            "dt": self.dt,
            "fit_restarts": self.fit_restarts,
            "env": {
                "bucket_size": self.env.bucket_size,
                "batch_size": self.env.batch_size,
                "recipients_per_day": self.env.recipients_per_day,
                "efficacy": self.env.efficacy,
                "reward_width": self.env.reward_width,
            },
            "dqn": {
                "discount_gamma": self.dqn.discount_gamma,
                "epsilon": self.dqn.epsilon,
                "epsilon_start": self.dqn.epsilon_start,
                "epsilon_end": self.dqn.epsilon_end,
                "learning_rate": self.dqn.learning_rate,
                "batch": self.dqn.batch,
                "target_sync_every": self.dqn.target_sync_every,
                "episodes": self.dqn.episodes,
                "buffer_capacity": self.dqn.buffer_capacity,
                "hidden_sizes": list(self.dqn.hidden_sizes),
                "update_every": self.dqn.update_every,
            },
            "a2c": {
                "exploration": self.a2c.exploration,
                "entropy_weight": self.a2c.entropy_weight,
                "discount": self.a2c.discount,
                "actor_learning_rate": self.a2c.actor_learning_rate,
                "critic_learning_rate": self.a2c.critic_learning_rate,
                "rollout_length": self.a2c.rollout_length,
                "episodes": self.a2c.episodes,
                "hidden_sizes": list(self.a2c.hidden_sizes),
                "behavior_mixing": self.a2c.behavior_mixing,
                "max_grad_norm": self.a2c.max_grad_norm,
            },
            "bandit": {
                "passes": self.bandit_passes,
                "learning_rate": self.bandit_learning_rate,
                "epsilon": self.bandit_epsilon,
                "basis_kind": self.bandit_basis.kind,
                "rbf_centers": self.bandit_basis.rbf_centers,
                "rbf_width": self.bandit_basis.rbf_width,
            },
        }

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        base = RunConfig()
        env_doc = doc.get("env", {})
        dqn_doc = doc.get("dqn", {})
        a2c_doc = doc.get("a2c", {})
        bandit_doc = doc.get("bandit", {})
        if "hidden_sizes" in dqn_doc:
            dqn_doc = {**dqn_doc, "hidden_sizes": tuple(dqn_doc["hidden_sizes"])}
        if "hidden_sizes" in a2c_doc:
            a2c_doc = {**a2c_doc, "hidden_sizes": tuple(a2c_doc["hidden_sizes"])}
        basis = ActionBasis(
            kind=bandit_doc.get("basis_kind", base.bandit_basis.kind),
            rbf_centers=bandit_doc.get("rbf_centers", base.bandit_basis.rbf_centers),
            rbf_width=bandit_doc.get("rbf_width", base.bandit_basis.rbf_width),
        )
        return RunConfig(
            regions=tuple(doc.get("regions", base.regions)),
            train_start=_parse_date(doc.get("train_start"), base.train_start),
            train_end=_parse_date(doc.get("train_end"), base.train_end),
            test_start=_parse_date(doc.get("test_start"), base.test_start),
            test_end=_parse_date(doc.get("test_end"), base.test_end),
            distribution_date=_parse_date(doc.get("distribution_date"), base.distribution_date),
            bucket_sweep=tuple(doc.get("bucket_sweep", base.bucket_sweep)),
            agent_kind=doc.get("agent_kind", base.agent_kind),
            seed=int(doc.get("seed", base.seed)),
            dt=float(doc.get("dt", base.dt)),
            fit_restarts=int(doc.get("fit_restarts", base.fit_restarts)),
            env=replace(base.env, **env_doc),
            dqn=replace(base.dqn, **dqn_doc),
            a2c=replace(base.a2c, **a2c_doc),
            bandit_passes=int(bandit_doc.get("passes", base.bandit_passes)),
            bandit_learning_rate=float(
                bandit_doc.get("learning_rate", base.bandit_learning_rate)
            ),
            bandit_epsilon=float(bandit_doc.get("epsilon", base.bandit_epsilon)),
            bandit_basis=basis,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def _parse_date(value, default: Date) -> Date:
    if value is None:
        return default
    if isinstance(value, Date):
        return value
    return Date.fromisoformat(value)


@dataclass(frozen=True)
class RunArtifact:
    run_id: str
    agent_kind: str
    policy: PolicyArtifact
    bandit: BanditModel
    log: tuple[BanditExample, ...]
    # bucket size -> one DistributionSet per test day, in date order
    distributions: dict[int, tuple[DistributionSet, ...]]
    distribution_date: Date
    fitted_params: dict[str, EpiParams]
    provenance: dict[str, str | int]

    def distribution_for(self, bucket: int, date: Date) -> DistributionSet:
        sets = self.distributions.get(bucket)
        if sets is None:
            raise KeyError(f"bucket {bucket} not in this run's sweep")
        for ds in sets:
            if ds.date == date:
                return ds
        raise KeyError(f"no distribution for {date} at bucket {bucket}")

    def to_json(self) -> str:
        doc = {
            "format_version": ARTIFACT_FORMAT_VERSION,
            "run_id": self.run_id,
            "agent_kind": self.agent_kind,
            "policy": json.loads(self.policy.to_json()),
            "bandit": json.loads(self.bandit.to_json()),
            "log_csv": bandit_mod.examples_to_csv(self.log),
            "distributions": {
                str(bucket): [
                    {
                        "date": ds.date.isoformat(),
                        "bucket_size": ds.bucket_size,
                        "percentages": ds.percentages,
                    }
                    for ds in sets
                ]
                for bucket, sets in sorted(self.distributions.items())
            },
            "distribution_date": self.distribution_date.isoformat(),
            "fitted_params": {
                region: {
                    "transmission_rate_beta": p.transmission_rate_beta,
                    "incubation_rate_sigma": p.incubation_rate_sigma,
                    "recovery_rate_gamma": p.recovery_rate_gamma,
                    "fatality_rate_mu": p.fatality_rate_mu,
                    "population_n": p.population_n,
                }
                for region, p in sorted(self.fitted_params.items())
            },
            "provenance": self.provenance,
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "RunArtifact":
        doc = json.loads(text)
        if doc.get("format_version") != ARTIFACT_FORMAT_VERSION:
            raise ValueError(f"unsupported artifact version: {doc.get('format_version')}")
        return RunArtifact(
            run_id=doc["run_id"],
            agent_kind=doc["agent_kind"],
            policy=PolicyArtifact.from_json(json.dumps(doc["policy"])),
            bandit=BanditModel.from_json(json.dumps(doc["bandit"])),
            log=tuple(bandit_mod.examples_from_csv(doc["log_csv"])),
            distributions={
                int(bucket): tuple(
                    DistributionSet(
                        date=Date.fromisoformat(d["date"]),
                        bucket_size=d["bucket_size"],
                        percentages=d["percentages"],
                    )
                    for d in sets
                )
                for bucket, sets in doc["distributions"].items()
            },
            distribution_date=Date.fromisoformat(doc["distribution_date"]),
            fitted_params={
                region: EpiParams(**p) for region, p in doc["fitted_params"].items()
            },
            provenance=doc["provenance"],
        )


# -- stage operations ----------------------------------------------------------


def generate_log(
    policy: PolicyArtifact,
    days: Sequence[Sequence[StateContext]],
    env: VaccineDistributionEnv,
    seed: int,
) -> list[BanditExample]:
    """Replay the trained policy's exploratory behavior and record every round."""
    if not days:
        raise ValueError("no context days to log")
    rng = np.random.default_rng(seed)
    examples: list[BanditExample] = []
    round_index = 0
    for day in days:
        obs = env.reset(day)
        done = False
        while not done:
            recipient = env.context(env.cursor)
            action, probability = policy.act(obs, rng)
            outcome = env.step(action)
            examples.append(
                BanditExample(
                    round_index=round_index,
                    date=recipient.date,
                    region=recipient.region,
                    bucket_size=env.action_count,
                    action=action,
                    reward=outcome.reward,
                    logging_probability=probability,
                    features=tuple(float(v) for v in obs),
                )
            )
            round_index += 1
            obs = outcome.observation
            done = outcome.done
    return examples


def scale_bucket(action: int, from_bucket: int, to_bucket: int) -> int:
    """Rescale an action index between bucket granularities (halves round up)."""
    if not (0 <= action < from_bucket):
        raise ValueError(f"action {action} outside [0,{from_bucket})")
    if to_bucket < 1:
        raise ValueError(f"to_bucket must be >= 1, got {to_bucket}")
    scaled = math.floor(action * to_bucket / from_bucket + 0.5)
    return max(0, min(scaled, to_bucket - 1))


def normalize(actions: dict[str, int], *, date: Date, bucket_size: int) -> DistributionSet:
    """Percentage shares of the summed unadjusted actions."""
    total = sum(actions.values())
    if total <= 0:
        raise ValueError("degenerate allocation: all actions are zero")
    return DistributionSet(
        date=date,
        bucket_size=bucket_size,
        percentages={region: 100.0 * a / total for region, a in actions.items()},
    )


def bandit_context(ctx: StateContext, scaling, bucket: int) -> np.ndarray:
    scaled = scale_features(ctx.features(), scaling)
    return np.concatenate([scaled, [bucket / REFERENCE_BUCKET]])


def day_distribution(
    model: BanditModel,
    day_contexts: Sequence[StateContext],
    scaling,
    bucket: int,
) -> DistributionSet:
    actions: dict[str, int] = {}
    for ctx in day_contexts:
        predicted, _ = bandit_mod.predict(model, bandit_context(ctx, scaling, bucket))
        actions[ctx.region] = scale_bucket(predicted, model.n_actions, bucket)
    return normalize(actions, date=day_contexts[0].date, bucket_size=bucket)


def greedy_distribution(
    policy: PolicyArtifact,
    day_contexts: Sequence[StateContext],
    env: VaccineDistributionEnv,
    bucket: int,
) -> DistributionSet:
    """Distribution read straight off the RL policy, skipping the bandit stage."""
    env.reset(day_contexts)
    actions: dict[str, int] = {}
    for i, ctx in enumerate(day_contexts):
        greedy = policy.greedy_action(env.observe(i))
        actions[ctx.region] = scale_bucket(greedy, env.action_count, bucket)
    return normalize(actions, date=day_contexts[0].date, bucket_size=bucket)


def run_vacsim(
    config: RunConfig, snapshot: Snapshot, runs_dir: str | Path | None = None
) -> RunArtifact:
    """Run the full feed-forward pipeline; optionally persist under runs/<id>/."""
    regions = sorted(config.regions)
    missing = sorted(set(regions) - set(snapshot.observed))
    if missing:
        raise PipelineError("ingest", f"snapshot lacks regions: {', '.join(missing)}")

    with _stage("fit"):
        fitted: dict[str, EpiParams] = {}
        for region in regions:
            fitted[region] = fit_params(
                snapshot.observed[region],
                snapshot.statics[region].population,
                seed=config.seed,
                dt=config.dt,
                restarts=config.fit_restarts,
            ).params

    with _stage("contexts"):
        sub = Snapshot(
            observed={r: snapshot.observed[r] for r in regions},
            statics={r: snapshot.statics[r] for r in regions},
            content_hash=snapshot.content_hash,
        )
        train_days = build_contexts(sub, fitted, (config.train_start, config.train_end), config.dt)
        test_days = build_contexts(sub, fitted, (config.test_start, config.test_end), config.dt)
        scaling = scaling_from_contexts([c for day in train_days for c in day])
        env = VaccineDistributionEnv(replace(config.env, feature_scaling=scaling))

    with _stage("train_agent"):
        if config.agent_kind == "dqn":
            policy = train_dqn(env, train_days, config.dqn, config.seed)
        else:
            policy = train_actor_critic(env, train_days, config.a2c, config.seed)

    with _stage("generate_log"):
        log = generate_log(policy, train_days, env, config.seed + 1)

    with _stage("train_bandit"):
        model = bandit_mod.train(
            log,
            passes=config.bandit_passes,
            learning_rate=config.bandit_learning_rate,
            seed=config.seed + 2,
            n_actions=env.action_count,
            epsilon=config.bandit_epsilon,
            basis=config.bandit_basis,
        )

    with _stage("predict"):
        distributions: dict[int, tuple[DistributionSet, ...]] = {}
        for bucket in config.bucket_sweep:
            distributions[bucket] = tuple(
                day_distribution(model, day, scaling, bucket) for day in test_days
            )

    provenance = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "snapshot_hash": snapshot.content_hash,
    }
    run_id = hashlib.sha256(
        f"{provenance['config_hash']}:{provenance['seed']}:{provenance['snapshot_hash']}".encode()
    ).hexdigest()[:16]
    artifact = RunArtifact(
        run_id=run_id,
        agent_kind=config.agent_kind,
        policy=policy,
        bandit=model,
        log=tuple(log),
        distributions=distributions,
        distribution_date=config.distribution_date,
        fitted_params=fitted,
        provenance=provenance,
    )
    if runs_dir is not None:
        persist_run(artifact, runs_dir)
    return artifact


def persist_run(artifact: RunArtifact, runs_dir: str | Path) -> Path:
    """Write the run directory: artifact, policy, bandit, log, distributions."""
    out = Path(runs_dir) / artifact.run_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "artifact.json").write_text(artifact.to_json(), encoding="utf-8")
    (out / "policy.json").write_text(artifact.policy.to_json(), encoding="utf-8")
    (out / "bandit.json").write_text(artifact.bandit.to_json(), encoding="utf-8")
    (out / "log.csv").write_text(bandit_mod.examples_to_csv(artifact.log), encoding="utf-8")
    for bucket, sets in sorted(artifact.distributions.items()):
        lines = ["date,region,percent"]
        for ds in sets:
            for region in sorted(ds.percentages):
                lines.append(f"{ds.date.isoformat()},{region},{repr(ds.percentages[region])}")
        (out / f"distribution_{bucket}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
