import type {
  AllocationDoc,
  ErrorBody,
  FeedbackDoc,
  FeedbackRequest,
  RewardsDoc,
  ScenarioCreateRequest,
  ScenarioDoc,
  TrainDoc,
  WhatIfDoc,
  WhatIfRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

const API_PREFIX = "/api/v1";

/** Thin typed wrapper over the service HTTP API; one instance per base URL. */
export class VacsimClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {
    this.base = baseUrl.replace(/\/+$/, "") + API_PREFIX;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchFn(this.base + path, init);
    const doc = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, doc as ErrorBody);
    }
    return doc as T;
  }

  createScenario(body: ScenarioCreateRequest): Promise<ScenarioDoc> {
    return this.request("POST", "/scenarios", body);
  }

  getScenario(id: string): Promise<ScenarioDoc> {
    return this.request("GET", `/scenarios/${id}`);
  }

  startTraining(id: string): Promise<TrainDoc> {
    return this.request("POST", `/scenarios/${id}/train`);
  }

  getAllocation(
    id: string,
    opts: { bucket?: number; date?: string } = {},
  ): Promise<AllocationDoc> {
    const params = new URLSearchParams();
    if (opts.bucket !== undefined) params.set("bucket", String(opts.bucket));
    if (opts.date !== undefined) params.set("date", opts.date);
    const qs = params.toString();
    return this.request("GET", `/scenarios/${id}/allocation${qs ? "?" + qs : ""}`);
  }

  whatIf(id: string, body: WhatIfRequest): Promise<WhatIfDoc> {
    return this.request("POST", `/scenarios/${id}/whatif`, body);
  }

  submitFeedback(id: string, body: FeedbackRequest): Promise<FeedbackDoc> {
    return this.request("POST", `/scenarios/${id}/feedback`, body);
  }

  getRewards(id: string, runId: string): Promise<RewardsDoc> {
    return this.request("GET", `/scenarios/${id}/runs/${runId}/rewards`);
  }
}
