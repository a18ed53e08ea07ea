// Controller: owns the session state, talks to the service, re-renders the
// whole view from state after every change. All state is server state; a
// page refresh followed by openScenario(id) rebuilds the same view.

import { ApiError, VacsimClient } from "./api.js";
import {
  renderAllocationTable,
  renderBucketSelector,
  renderErrorBanner,
  renderRewardsPanel,
  renderStatus,
  renderWhatIfPanel,
} from "./render.js";
import { debounce, pollEvery, type Debounced } from "./timing.js";
import type {
  AllocationDoc,
  ErrorBody,
  FeedbackRequest,
  RewardsDoc,
  ScenarioCreateRequest,
  ScenarioDoc,
  WhatIfDoc,
  WhatIfRequest,
} from "./types.js";
import { allocationView, rewardsView, scenarioView, whatifView } from "./viewmodels.js";

export interface ConsoleOptions {
  pollIntervalMs?: number;
  whatifDebounceMs?: number;
}

export class ConsoleApp {
  private scenario: ScenarioDoc | null = null;
  private allocation: AllocationDoc | null = null;
  private allocationStale = false;
  private rewards: RewardsDoc | null = null;
  private whatif: WhatIfDoc | null = null;
  private inlineError: ErrorBody | null = null;
  private versionBadge: number | null = null;

  private readonly pollIntervalMs: number;
  private readonly whatifDebounced: Debounced<[WhatIfRequest]>;
  private poller: { stop(): void; done: Promise<void> } | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: VacsimClient,
    options: ConsoleOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 2000;
    this.whatifDebounced = debounce(
      (body: WhatIfRequest) => void this.runWhatIf(body),
      options.whatifDebounceMs ?? 300,
    );
  }

  // -- scenario lifecycle ----------------------------------------------------

  async createScenario(body: ScenarioCreateRequest): Promise<ScenarioDoc> {
    const doc = await this.client.createScenario(body);
    this.resetFor(doc);
    this.render();
    return doc;
  }

  async openScenario(id: string): Promise<void> {
    const doc = await this.client.getScenario(id);
    this.resetFor(doc);
    this.render();
    if (doc.status === "ready") {
      await this.loadReadyArtifacts();
    }
  }

  /** Kick off training and poll status every pollIntervalMs until settled. */
  async train(): Promise<void> {
    if (!this.scenario) throw new Error("no scenario open");
    const id = this.scenario.id;
    await this.client.startTraining(id);
    this.scenario = { ...this.scenario, status: "training" };
    this.render();
    this.poller = pollEvery(this.pollIntervalMs, async () => {
      const doc = await this.client.getScenario(id);
      this.scenario = doc;
      this.render();
      return doc.status === "ready" || doc.status === "failed";
    });
    await this.poller.done;
    this.poller = null;
    if (this.scenario?.status === "ready") {
      await this.loadReadyArtifacts();
    }
  }

  private resetFor(doc: ScenarioDoc): void {
    this.scenario = doc;
    this.allocation = null;
    this.allocationStale = false;
    this.rewards = null;
    this.whatif = null;
    this.inlineError = null;
    this.versionBadge = doc.model_version;
  }

  private async loadReadyArtifacts(): Promise<void> {
    if (!this.scenario) return;
    const sweep = this.scenario.config?.bucket_sweep ?? [];
    const bucket = sweep[0];
    this.allocation = await this.client.getAllocation(
      this.scenario.id,
      bucket === undefined ? {} : { bucket },
    );
    this.versionBadge = this.allocation.model_version;
    if (this.scenario.run_id) {
      this.rewards = await this.client.getRewards(this.scenario.id, this.scenario.run_id);
    }
    this.render();
  }

  // -- allocation ------------------------------------------------------------

  async selectBucket(bucket: number): Promise<void> {
    if (!this.scenario) throw new Error("no scenario open");
    try {
      this.allocation = await this.client.getAllocation(this.scenario.id, { bucket });
      this.versionBadge = this.allocation.model_version;
      this.inlineError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.inlineError = err.body;
    }
    this.render();
  }

  // -- what-if ---------------------------------------------------------------

  /** Debounced entry point for slider/input changes. */
  whatIfChanged(body: WhatIfRequest): void {
    this.whatifDebounced(body);
  }

  async runWhatIf(body: WhatIfRequest): Promise<void> {
    if (!this.scenario) throw new Error("no scenario open");
    try {
      this.whatif = await this.client.whatIf(this.scenario.id, body);
      this.inlineError = null;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.inlineError = err.body;
    }
    this.render();
  }

  // -- feedback --------------------------------------------------------------

  /**
   * Submit one day of observed outcomes. `chosen` is the allocation the
   * operator actually applied: the currently displayed percentages, passed
   * through unchanged.
   */
  async submitFeedback(date: string, observed: Record<string, number>): Promise<void> {
    if (!this.scenario) throw new Error("no scenario open");
    if (!this.allocation) throw new Error("no allocation loaded");
    const body: FeedbackRequest = {
      date,
      bucket_size: this.allocation.bucket_size,
      chosen: this.allocation.percentages,
      susceptible_change: observed,
    };
    try {
      const result = await this.client.submitFeedback(this.scenario.id, body);
      this.versionBadge = result.model_version;
      this.inlineError = null;
      // stale-while-revalidate: keep showing the old table, flagged, until
      // the refreshed allocation arrives
      this.allocationStale = true;
      this.render();
      this.allocation = await this.client.getAllocation(this.scenario.id, {
        bucket: this.allocation.bucket_size,
      });
      this.versionBadge = this.allocation.model_version;
      this.allocationStale = false;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.inlineError = err.body;
    }
    this.render();
  }

  // -- rendering ---------------------------------------------------------------

  render(): void {
    this.root.replaceChildren();
    if (!this.scenario) return;

    const sv = scenarioView(this.scenario);
    if (this.versionBadge !== null && this.versionBadge !== sv.modelVersion) {
      sv.modelVersion = this.versionBadge;
    }
    this.root.append(renderStatus(sv));

    if (this.inlineError) {
      const inline = renderErrorBanner(this.inlineError);
      inline.setAttribute("data-testid", "inline-error");
      this.root.append(inline);
    }

    if (this.scenario.status !== "ready") return;

    if (this.allocation) {
      this.root.append(
        renderBucketSelector(sv.buckets, this.allocation.bucket_size, (bucket) => {
          void this.selectBucket(bucket);
        }),
      );
      this.root.append(
        renderAllocationTable(allocationView(this.allocation), this.allocationStale),
      );
    }

    if (this.whatif) {
      this.root.append(renderWhatIfPanel(whatifView(this.whatif)));
    }

    if (this.rewards) {
      this.root.append(renderRewardsPanel(rewardsView(this.rewards)));
    }
  }
}
