// Pure builders from service response bodies to display structures.
//
// Contract: every number carried by a view model is copied verbatim from a
// response body. Selection (sorting, Math.min/Math.max over a response
// array, picking first/last) is allowed; arithmetic that would manufacture
// a new number is not. Rendering turns these values into text with
// String(value), so the displayed digits are exactly the JSON's.

import type {
  AllocationDoc,
  ErrorBody,
  RewardsDoc,
  ScenarioDoc,
  WhatIfDoc,
} from "./types.js";

export interface AllocationRow {
  region: string;
  percent: number;
}

export interface AllocationView {
  date: string;
  bucket: number;
  modelVersion: number;
  rows: AllocationRow[];
}

export function allocationView(doc: AllocationDoc): AllocationView {
  const rows = Object.entries(doc.percentages)
    .map(([region, percent]) => ({ region, percent }))
    .sort((a, b) => (a.region < b.region ? -1 : 1));
  return {
    date: doc.date,
    bucket: doc.bucket_size,
    modelVersion: doc.model_version,
    rows,
  };
}

export interface ScenarioView {
  id: string;
  status: string;
  snapshotHash: string;
  runId: string | null;
  modelVersion: number | null;
  regions: string[];
  buckets: number[];
  testStart: string | null;
  testEnd: string | null;
  distributionDate: string | null;
  dosesDefault: number | null;
  banner: ErrorBody | null;
}

export function scenarioView(doc: ScenarioDoc): ScenarioView {
  const config = doc.config;
  return {
    id: doc.id,
    status: doc.status,
    snapshotHash: doc.snapshot_hash,
    runId: doc.run_id,
    modelVersion: doc.model_version,
    regions: config ? [...config.regions].sort() : [],
    buckets: config ? config.bucket_sweep : [],
    testStart: config ? config.test_start : null,
    testEnd: config ? config.test_end : null,
    distributionDate: config ? config.distribution_date : null,
    dosesDefault: config ? config.env.batch_size : null,
    banner: doc.error,
  };
}

export interface WhatIfChart {
  days: number[];
  naive: number[];
  candidate: number[];
  difference: number[];
  caseMode: string;
  cumulativeDifference: number;
  // axis extremes are picked from the series, never computed
  dayFirst: number | undefined;
  dayLast: number | undefined;
  diffMin: number;
  diffMax: number;
}

export interface WhatIfView {
  allocation: AllocationView;
  chart: WhatIfChart;
}

export function whatifView(doc: WhatIfDoc): WhatIfView {
  const c = doc.comparison;
  return {
    allocation: allocationView(doc.allocation),
    chart: {
      days: c.days,
      naive: c.cases_naive,
      candidate: c.cases_candidate,
      difference: c.difference,
      caseMode: c.case_mode,
      cumulativeDifference: c.cumulative_difference,
      dayFirst: c.days[0],
      dayLast: c.days[c.days.length - 1],
      diffMin: Math.min(...c.difference),
      diffMax: Math.max(...c.difference),
    },
  };
}

export interface RewardsView {
  runId: string;
  agentKind: string;
  curve: number[];
  rewardMin: number;
  rewardMax: number;
}

export function rewardsView(doc: RewardsDoc): RewardsView {
  return {
    runId: doc.run_id,
    agentKind: doc.agent_kind,
    curve: doc.reward_curve,
    rewardMin: Math.min(...doc.reward_curve),
    rewardMax: Math.max(...doc.reward_curve),
  };
}

/** Verbatim text for a response number; the only number-to-string path. */
export function displayNumber(value: number): string {
  return String(value);
}
