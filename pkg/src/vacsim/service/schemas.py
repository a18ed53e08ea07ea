"""Request and response bodies for the allocation service."""

from __future__ import annotations

from pydantic import BaseModel, Field

__all__ = [
    "ErrorBody",
    "ScenarioCreateRequest",
    "ScenarioResponse",
    "TrainResponse",
    "AllocationResponse",
    "WhatIfRequest",
    "ComparisonBody",
    "WhatIfResponse",
    "FeedbackRequest",
    "FeedbackResponse",
    "RewardsResponse",
]


class ErrorBody(BaseModel):
    code: str
    stage: str
    message: str
    location: str | None = None


class ScenarioCreateRequest(BaseModel):
    series_csv: str
    statics_csv: str
    config: dict = Field(default_factory=dict)


class ScenarioResponse(BaseModel):
    id: str
    status: str
    snapshot_hash: str
    run_id: str | None = None
    model_version: int | None = None
    error: ErrorBody | None = None
    # resolved run configuration, echoed so clients can rebuild their views
    # (bucket choices, window bounds, dose defaults) from server state alone
    config: dict | None = None


class TrainResponse(BaseModel):
    id: str
    status: str


class AllocationResponse(BaseModel):
    date: str
    bucket_size: int
    percentages: dict[str, float]
    model_version: int


class WhatIfRequest(BaseModel):
    date: str | None = None
    bucket_size: int = 1000
    doses: float | None = None
    efficacy: float = 1.0
    case_mode: str = "cumulative"
    # region -> feature name -> replacement value
    context_overrides: dict[str, dict[str, float]] = Field(default_factory=dict)


class ComparisonBody(BaseModel):
    days: list[int]
    cases_naive: list[float]
    cases_candidate: list[float]
    difference: list[float]
    cumulative_difference: float
    case_mode: str


class WhatIfResponse(BaseModel):
    allocation: AllocationResponse
    comparison: ComparisonBody


class FeedbackRequest(BaseModel):
    date: str
    bucket_size: int = 1000
    # region -> chosen percentage (the distribution actually applied)
    chosen: dict[str, float]
    # region -> next-day drop in susceptible count (the observed outcome)
    susceptible_change: dict[str, float]


class FeedbackResponse(BaseModel):
    id: str
    model_version: int


class RewardsResponse(BaseModel):
    run_id: str
    agent_kind: str
    reward_curve: list[float]
