"""Route handlers for the allocation service."""

from __future__ import annotations

import math
import threading
from dataclasses import replace
from datetime import date as Date
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..bandit import BanditExample, BanditModel
from ..data_io import DataError, Snapshot, build_contexts
from ..env import FEATURE_NAMES, StateContext, scale_features
from ..epi import CompartmentState, EpiError, initial_state_from_row, integrate
from ..evaluation import (
    EvaluationError,
    ProjectionScenario,
    compare,
    naive_policy_from_states,
)
from ..pipeline import (
    PipelineError,
    RunConfig,
    day_distribution,
    run_vacsim,
)
from .schemas import (
    AllocationResponse,
    ComparisonBody,
    ErrorBody,
    FeedbackRequest,
    FeedbackResponse,
    RewardsResponse,
    ScenarioCreateRequest,
    ScenarioResponse,
    TrainResponse,
    WhatIfRequest,
    WhatIfResponse,
)
from .store import ScenarioStore, StoreError

API = "/api/v1"


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="vacsim allocation service", version="1.0")
    store = ScenarioStore(data_dir)
    app.state.store = store

    @app.exception_handler(StoreError)
    async def _store_error(_req: Request, exc: StoreError):
        body = ErrorBody(
            code=exc.code, stage=exc.stage, message=exc.message, location=exc.location
        )
        return JSONResponse(status_code=exc.status_code, content=body.model_dump())

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        location = ".".join(str(p) for p in first.get("loc", ()))
        body = ErrorBody(
            code="validation_error",
            stage="request",
            message=first.get("msg", "invalid request"),
            location=location or None,
        )
        return JSONResponse(status_code=422, content=body.model_dump())

    @app.exception_handler(PipelineError)
    async def _pipeline_error(_req: Request, exc: PipelineError):
        body = ErrorBody(code="pipeline_error", stage=exc.stage, message=exc.message)
        return JSONResponse(status_code=500, content=body.model_dump())

    # ---- scenario lifecycle ----

    @app.post(API + "/scenarios", status_code=201, response_model=ScenarioResponse)
    def create_scenario(body: ScenarioCreateRequest) -> ScenarioResponse:
        try:
            config = RunConfig.from_dict(body.config)
        except (ValueError, TypeError) as exc:
            raise StoreError(400, "invalid_config", "ingest", str(exc)) from exc
        try:
            record = store.create(body.series_csv, body.statics_csv, config)
        except (DataError, EpiError) as exc:
            raise StoreError(400, "invalid_snapshot", "ingest", str(exc)) from exc
        return _scenario_response(store, record)

    @app.post(API + "/scenarios/{scenario_id}/train", response_model=TrainResponse)
    def start_training(scenario_id: str) -> TrainResponse:
        with store.lock(scenario_id):
            record = store.record(scenario_id)
            if record["status"] != "draft":
                raise StoreError(
                    409,
                    "conflict",
                    "train",
                    f"scenario is {record['status']}; training starts from draft only",
                )
            store.set_status(scenario_id, "training")
        thread = threading.Thread(
            target=_training_job, args=(store, scenario_id), daemon=True
        )
        thread.start()
        return TrainResponse(id=scenario_id, status="training")

    @app.get(API + "/scenarios/{scenario_id}", response_model=ScenarioResponse)
    def get_scenario(scenario_id: str) -> ScenarioResponse:
        return _scenario_response(store, store.record(scenario_id))

    # ---- allocation and what-if ----

    @app.get(
        API + "/scenarios/{scenario_id}/allocation", response_model=AllocationResponse
    )
    def get_allocation(
        scenario_id: str,
        bucket: int = Query(default=1000, ge=2),
        date: str | None = Query(default=None),
    ) -> AllocationResponse:
        artifact = store.artifact(scenario_id)
        config = store.config(scenario_id)
        if bucket not in config.bucket_sweep:
            raise StoreError(
                400,
                "invalid_bucket",
                "allocation",
                f"bucket {bucket} not in the run's sweep {list(config.bucket_sweep)}",
            )
        day = _parse_iso(date, config.distribution_date, "date")
        _require_in_test_window(config, day)
        contexts = _contexts_for_date(store, scenario_id, day)
        version, model = store.latest_model(scenario_id)
        dist = day_distribution(model, contexts, artifact.policy.feature_scaling, bucket)
        return AllocationResponse(
            date=day.isoformat(),
            bucket_size=bucket,
            percentages=dist.percentages,
            model_version=version,
        )

    @app.post(API + "/scenarios/{scenario_id}/whatif", response_model=WhatIfResponse)
    def whatif(scenario_id: str, body: WhatIfRequest) -> WhatIfResponse:
        artifact = store.artifact(scenario_id)
        config = store.config(scenario_id)
        day = _parse_iso(body.date, config.distribution_date, "date")
        _require_in_test_window(config, day)
        if body.bucket_size < 2:
            raise StoreError(400, "invalid_bucket", "whatif", "bucket_size must be >= 2")
        if not (0.0 <= body.efficacy <= 1.0):
            raise StoreError(400, "invalid_efficacy", "whatif", "efficacy must be in [0,1]")
        doses = config.env.batch_size if body.doses is None else body.doses
        if doses < 0:
            raise StoreError(400, "invalid_doses", "whatif", "doses must be >= 0")

        contexts = _contexts_for_date(store, scenario_id, day)
        contexts = _apply_overrides(contexts, body.context_overrides)
        version, model = store.latest_model(scenario_id)
        dist = day_distribution(
            model, contexts, artifact.policy.feature_scaling, body.bucket_size
        )

        states = _states_for_date(store, scenario_id, day)
        try:
            scenario = ProjectionScenario(
                params_by_region=artifact.fitted_params,
                initial_states=states,
                doses=doses,
                efficacy=body.efficacy,
                start_date=day,
                case_mode=body.case_mode,
            )
            baseline = naive_policy_from_states(states, day)
            report = compare(dist, baseline, scenario)
        except (EvaluationError, EpiError) as exc:
            raise StoreError(400, "invalid_whatif", "evaluation", str(exc)) from exc
        return WhatIfResponse(
            allocation=AllocationResponse(
                date=day.isoformat(),
                bucket_size=body.bucket_size,
                percentages=dist.percentages,
                model_version=version,
            ),
            comparison=ComparisonBody(
                days=list(report.days),
                cases_naive=list(report.cases_baseline),
                cases_candidate=list(report.cases_candidate),
                difference=list(report.difference),
                cumulative_difference=report.cumulative_difference,
                case_mode=report.case_mode,
            ),
        )

    # ---- feedback ----

    @app.post(API + "/scenarios/{scenario_id}/feedback", response_model=FeedbackResponse)
    def submit_feedback(scenario_id: str, body: FeedbackRequest) -> FeedbackResponse:
        with store.lock(scenario_id):
            artifact = store.artifact(scenario_id)
            config = store.config(scenario_id)
            day = _parse_iso(body.date, None, "date")
            events = store.feedback_events(scenario_id)
            if events:
                last = Date.fromisoformat(events[-1]["date"])
                if day <= last:
                    raise StoreError(
                        409,
                        "out_of_order",
                        "feedback",
                        f"event date {day} does not follow the last event {last}",
                    )
            regions = sorted(config.regions)
            for name, mapping in (("chosen", body.chosen), ("susceptible_change", body.susceptible_change)):
                if sorted(mapping) != regions:
                    raise StoreError(
                        400,
                        "invalid_regions",
                        "feedback",
                        f"{name} must cover exactly the scenario regions {regions}",
                    )
            if any(v < 0 for v in body.susceptible_change.values()):
                raise StoreError(
                    400, "invalid_feedback", "feedback", "susceptible changes must be >= 0"
                )
            total_change = sum(body.susceptible_change.values())
            if total_change <= 0:
                raise StoreError(
                    400, "invalid_feedback", "feedback", "total susceptible change must be > 0"
                )

            version, model = store.latest_model(scenario_id)
            contexts = _contexts_for_date(store, scenario_id, day)
            examples = feedback_examples(
                event={
                    "date": day.isoformat(),
                    "bucket_size": body.bucket_size,
                    "chosen": body.chosen,
                    "susceptible_change": body.susceptible_change,
                },
                contexts=contexts,
                scaling=artifact.policy.feature_scaling,
                model=model,
                reward_width=config.env.reward_width,
                round_start=len(artifact.log) + len(events) * len(regions),
            )
            for example in examples:
                model.update(example, config.bandit_learning_rate)
            new_version = store.append_model(scenario_id, model)
            store.append_feedback(
                scenario_id,
                {
                    "date": day.isoformat(),
                    "bucket_size": body.bucket_size,
                    "chosen": body.chosen,
                    "susceptible_change": body.susceptible_change,
                },
            )
        return FeedbackResponse(id=scenario_id, model_version=new_version)

    # ---- training telemetry ----

    @app.get(
        API + "/scenarios/{scenario_id}/runs/{run_id}/rewards",
        response_model=RewardsResponse,
    )
    def get_rewards(scenario_id: str, run_id: str) -> RewardsResponse:
        artifact = store.artifact(scenario_id)
        if artifact.run_id != run_id:
            raise StoreError(404, "not_found", "rewards", f"unknown run {run_id}")
        return RewardsResponse(
            run_id=run_id,
            agent_kind=artifact.agent_kind,
            reward_curve=list(artifact.policy.reward_curve),
        )

    return app


# -- helpers shared with tests ----------------------------------------------------


def _training_job(store: ScenarioStore, scenario_id: str) -> None:
    try:
        config = store.config(scenario_id)
        snapshot = store.snapshot(scenario_id)
        artifact = run_vacsim(config, snapshot, runs_dir=store.runs_dir(scenario_id))
        with store.lock(scenario_id):
            store.append_model(scenario_id, artifact.bandit)
            store.set_status(scenario_id, "ready", run_id=artifact.run_id)
    except PipelineError as exc:
        with store.lock(scenario_id):
            store.set_status(
                scenario_id,
                "failed",
                error={"code": "pipeline_error", "stage": exc.stage, "message": exc.message},
            )
    except Exception as exc:  # noqa: BLE001 - job boundary
        with store.lock(scenario_id):
            store.set_status(
                scenario_id,
                "failed",
                error={"code": "internal", "stage": "train", "message": str(exc)},
            )


def _scenario_response(store: ScenarioStore, record: dict) -> ScenarioResponse:
    versions = store.model_versions(record["id"])
    error = record.get("error")
    return ScenarioResponse(
        id=record["id"],
        status=record["status"],
        snapshot_hash=record["snapshot_hash"],
        run_id=record.get("run_id"),
        model_version=versions[-1] if versions else None,
        error=ErrorBody(**error) if error else None,
        config=record.get("config"),
    )


def _parse_iso(value: str | None, default: Date | None, field: str) -> Date:
    if value is None:
        if default is None:
            raise StoreError(400, "invalid_date", "request", f"{field} is required")
        return default
    try:
        return Date.fromisoformat(value)
    except ValueError as exc:
        raise StoreError(400, "invalid_date", "request", f"bad {field}: {value}") from exc


def _require_in_test_window(config: RunConfig, day: Date) -> None:
    if not (config.test_start <= day <= config.test_end):
        raise StoreError(
            400,
            "date_out_of_window",
            "request",
            f"{day} outside the test window {config.test_start}..{config.test_end}",
        )


def _restricted_snapshot(snapshot: Snapshot, regions: tuple[str, ...]) -> Snapshot:
    return Snapshot(
        observed={r: snapshot.observed[r] for r in regions},
        statics={r: snapshot.statics[r] for r in regions},
        content_hash=snapshot.content_hash,
    )


def _contexts_for_date(store: ScenarioStore, scenario_id: str, day: Date) -> list[StateContext]:
    config = store.config(scenario_id)
    artifact = store.artifact(scenario_id)
    snapshot = _restricted_snapshot(store.snapshot(scenario_id), tuple(sorted(config.regions)))
    days = build_contexts(snapshot, artifact.fitted_params, (day, day), config.dt)
    return days[0]


def _states_for_date(
    store: ScenarioStore, scenario_id: str, day: Date
) -> dict[str, CompartmentState]:
    config = store.config(scenario_id)
    artifact = store.artifact(scenario_id)
    snapshot = store.snapshot(scenario_id)
    states: dict[str, CompartmentState] = {}
    for region in sorted(config.regions):
        series = snapshot.observed[region]
        first_day = series.rows[0][0]
        offset = (day - first_day).days
        traj = integrate(
            initial_state_from_row(series.rows[0], snapshot.statics[region].population),
            artifact.fitted_params[region],
            horizon=max(offset, 1),
            dt=config.dt,
            start_date=first_day,
        )
        states[region] = traj.state_at_day(offset)
    return states


def _apply_overrides(
    contexts: list[StateContext], overrides: dict[str, dict[str, float]]
) -> list[StateContext]:
    if not overrides:
        return contexts
    by_region = {c.region: c for c in contexts}
    unknown = sorted(set(overrides) - set(by_region))
    if unknown:
        raise StoreError(
            400, "invalid_overrides", "whatif", f"unknown regions: {', '.join(unknown)}"
        )
    out = []
    for ctx in contexts:
        edits = overrides.get(ctx.region)
        if edits:
            bad = sorted(set(edits) - set(FEATURE_NAMES))
            if bad:
                raise StoreError(
                    400,
                    "invalid_overrides",
                    "whatif",
                    f"{ctx.region}: unknown features: {', '.join(bad)}",
                )
            try:
                ctx = replace(ctx, **edits)
            except ValueError as exc:
                raise StoreError(400, "invalid_overrides", "whatif", str(exc)) from exc
        out.append(ctx)
    return out


def feedback_examples(
    event: dict,
    contexts: list[StateContext],
    scaling,
    model: BanditModel,
    reward_width: float,
    round_start: int,
) -> list[BanditExample]:
    """Turn one feedback event into logged bandit rounds.

    The chosen percentages are mapped onto the model's own action grid (the
    event's bucket size only labels the stored record), the observed
    susceptible drop per region is normalized into shares, and each region's
    reward is the allocation objective evaluated at the chosen action against
    that observed share. Probability is 1: the event records what happened.
    """
    total_change = sum(event["susceptible_change"].values())
    day = Date.fromisoformat(event["date"])
    examples = []
    for i, ctx in enumerate(sorted(contexts, key=lambda c: c.region)):
        percent = event["chosen"][ctx.region]
        action = round(percent / 100.0 * model.n_actions)
        action = max(0, min(action, model.n_actions - 1))
        allocated = action / model.n_actions
        observed_share = event["susceptible_change"][ctx.region] / total_change
        reward = math.exp(-((allocated - observed_share) ** 2) / reward_width)
        examples.append(
            BanditExample(
                round_index=round_start + i,
                date=day,
                region=ctx.region,
                bucket_size=model.n_actions,
                action=action,
                reward=reward,
                logging_probability=1.0,
                features=tuple(scale_features(ctx.features(), scaling)),
            )
        )
    return examples
