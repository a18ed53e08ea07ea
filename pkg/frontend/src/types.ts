// Shapes mirror the service JSON bodies field-for-field. The console never
// invents numeric fields of its own; everything displayed traces back to one
// of these.

export interface ErrorBody {
  code: string;
  stage: string;
  message: string;
  location?: string | null;
}

export interface EnvConfigDoc {
  bucket_size: number;
  batch_size: number;
  recipients_per_day: number;
  efficacy: number;
  reward_width: number;
}

export interface RunConfigDoc {
  regions: string[];
  train_start: string;
  train_end: string;
  test_start: string;
  test_end: string;
  distribution_date: string;
  bucket_sweep: number[];
  agent_kind: string;
  seed: number;
  env: EnvConfigDoc;
  [extra: string]: unknown;
}

export type ScenarioStatus = "draft" | "training" | "ready" | "failed";

export interface ScenarioDoc {
  id: string;
  status: ScenarioStatus;
  snapshot_hash: string;
  run_id: string | null;
  model_version: number | null;
  error: ErrorBody | null;
  config: RunConfigDoc | null;
}

export interface TrainDoc {
  id: string;
  status: string;
}

export interface AllocationDoc {
  date: string;
  bucket_size: number;
  percentages: Record<string, number>;
  model_version: number;
}

export interface ComparisonDoc {
  days: number[];
  cases_naive: number[];
  cases_candidate: number[];
  difference: number[];
  cumulative_difference: number;
  case_mode: string;
}

export interface WhatIfDoc {
  allocation: AllocationDoc;
  comparison: ComparisonDoc;
}

export interface WhatIfRequest {
  date?: string;
  bucket_size?: number;
  doses?: number;
  efficacy?: number;
  case_mode?: string;
  context_overrides?: Record<string, Record<string, number>>;
}

export interface FeedbackRequest {
  date: string;
  bucket_size: number;
  chosen: Record<string, number>;
  susceptible_change: Record<string, number>;
}

export interface FeedbackDoc {
  id: string;
  model_version: number;
}

export interface RewardsDoc {
  run_id: string;
  agent_kind: string;
  reward_curve: number[];
}

export interface ScenarioCreateRequest {
  series_csv: string;
  statics_csv: string;
  config: Record<string, unknown>;
}
