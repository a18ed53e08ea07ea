// DOM renderers. Numeric text always goes through displayNumber (verbatim
// String of the response value); SVG coordinates are presentation geometry
// and never appear as text.

import type { ErrorBody } from "./types.js";
import {
  displayNumber,
  type AllocationView,
  type RewardsView,
  type ScenarioView,
  type WhatIfView,
} from "./viewmodels.js";

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderErrorBanner(error: ErrorBody): HTMLElement {
  const banner = el("div", { class: "banner error", "data-testid": "error-banner" });
  banner.append(
    el("span", { class: "stage", "data-testid": "error-stage" }, error.stage),
    el("span", { class: "message", "data-testid": "error-message" }, error.message),
  );
  return banner;
}

export function renderStatus(view: ScenarioView): HTMLElement {
  const box = el("section", { class: "status", "data-testid": "scenario-status" });
  box.append(
    el("h2", {}, `Scenario ${view.id}`),
    el("span", { class: "badge", "data-testid": "status-badge" }, view.status),
  );
  if (view.modelVersion !== null) {
    box.append(
      el(
        "span",
        { class: "badge", "data-testid": "version-badge" },
        `model v${displayNumber(view.modelVersion)}`,
      ),
    );
  }
  if (view.runId) {
    box.append(el("span", { class: "run", "data-testid": "run-id" }, view.runId));
  }
  if (view.banner) {
    box.append(renderErrorBanner(view.banner));
  }
  return box;
}

export function renderBucketSelector(
  buckets: number[],
  selected: number,
  onSelect: (bucket: number) => void,
): HTMLElement {
  const wrap = el("div", { class: "buckets", "data-testid": "bucket-selector" });
  for (const bucket of buckets) {
    const button = el(
      "button",
      {
        "data-testid": `bucket-${displayNumber(bucket)}`,
        "data-bucket": displayNumber(bucket),
        class: bucket === selected ? "selected" : "",
      },
      displayNumber(bucket),
    );
    button.addEventListener("click", () => onSelect(bucket));
    wrap.append(button);
  }
  return wrap;
}

export function renderAllocationTable(view: AllocationView, stale = false): HTMLElement {
  const section = el("section", { class: "allocation", "data-testid": "allocation" });
  section.append(
    el("h3", {}, `Allocation for ${view.date}`),
    el(
      "span",
      { class: "badge", "data-testid": "allocation-version" },
      `model v${displayNumber(view.modelVersion)}`,
    ),
  );
  const table = el("table", { "data-testid": "allocation-table" });
  if (stale) table.setAttribute("data-stale", "true");
  const head = el("tr");
  head.append(el("th", {}, "region"), el("th", {}, "percent"));
  table.append(head);
  for (const row of view.rows) {
    const tr = el("tr", { "data-region": row.region });
    tr.append(
      el("td", {}, row.region),
      el("td", { "data-testid": `percent-${row.region}` }, displayNumber(row.percent)),
    );
    table.append(tr);
  }
  section.append(table);

  // horizontal bars: a percentage is already 0..100, so it is used directly
  // as the bar width, no rescaling
  const bars = el("div", { class: "bars", "data-testid": "allocation-bars" });
  for (const row of view.rows) {
    const bar = el("div", {
      class: "bar",
      "data-region": row.region,
      style: `width: ${displayNumber(row.percent)}%`,
    });
    bars.append(bar);
  }
  section.append(bars);
  return section;
}

function polylinePoints(values: number[], width: number, height: number): string {
  if (values.length === 0) return "";
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (hi === lo) {
    lo -= 1;
    hi += 1;
  }
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  return values
    .map((v, i) => `${(i * step).toFixed(2)},${(height - ((v - lo) / (hi - lo)) * height).toFixed(2)}`)
    .join(" ");
}

function renderLineChart(
  series: { name: string; values: number[] }[],
  testId: string,
): SVGSVGElement {
  const width = 360;
  const height = 120;
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("data-testid", testId);
  for (const s of series) {
    const line = document.createElementNS(SVG_NS, "polyline");
    line.setAttribute("fill", "none");
    line.setAttribute("class", `series-${s.name}`);
    line.setAttribute("data-series", s.name);
    line.setAttribute("points", polylinePoints(s.values, width, height));
    svg.append(line);
  }
  return svg;
}

export function renderWhatIfPanel(view: WhatIfView): HTMLElement {
  const section = el("section", { class: "whatif", "data-testid": "whatif" });
  section.append(el("h3", {}, "What-if projection"));

  const chart = view.chart;
  section.append(
    renderLineChart(
      [
        { name: "difference", values: chart.difference },
        { name: "naive", values: chart.naive },
        { name: "candidate", values: chart.candidate },
      ],
      "whatif-chart",
    ),
  );

  const legend = el("dl", { class: "legend" });
  legend.append(
    el("dt", {}, "case mode"),
    el("dd", { "data-testid": "case-mode" }, chart.caseMode),
    el("dt", {}, "days"),
    el(
      "dd",
      { "data-testid": "day-span" },
      chart.dayFirst === undefined || chart.dayLast === undefined
        ? ""
        : `${displayNumber(chart.dayFirst)} to ${displayNumber(chart.dayLast)}`,
    ),
    el("dt", {}, "difference range"),
    el(
      "dd",
      { "data-testid": "difference-range" },
      `${displayNumber(chart.diffMin)} to ${displayNumber(chart.diffMax)}`,
    ),
    el("dt", {}, "cases averted at horizon"),
    el(
      "dd",
      { "data-testid": "cumulative-difference" },
      displayNumber(chart.cumulativeDifference),
    ),
  );
  section.append(legend, renderAllocationTable(view.allocation));
  return section;
}

export function renderRewardsPanel(view: RewardsView): HTMLElement {
  const section = el("section", { class: "rewards", "data-testid": "rewards" });
  section.append(
    el("h3", {}, `Training rewards (${view.agentKind})`),
    el("span", { class: "run", "data-testid": "rewards-run-id" }, view.runId),
    renderLineChart([{ name: "reward", values: view.curve }], "reward-chart"),
    el(
      "span",
      { "data-testid": "reward-range" },
      `episode mean reward ${displayNumber(view.rewardMin)} to ${displayNumber(view.rewardMax)}`,
    ),
  );
  return section;
}
