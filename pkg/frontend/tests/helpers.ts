// Shared plumbing: the recorded-fixture loader, a fake fetch that replays
// recorded exchanges (and checks the console sends the recorded requests),
// and the number-extraction helpers behind the verbatim contract.

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { expect } from "vitest";
import type { FetchLike } from "../src/api.js";

export interface Exchange {
  method: string;
  path: string;
  request: unknown;
  status: number;
  body: unknown;
}

export interface Recorded {
  scenario_id: string;
  exchanges: Record<string, Exchange | Exchange[]>;
}

let cached: Recorded | undefined;

export function loadRecorded(): Recorded {
  if (!cached) {
    const raw = readFileSync(join(process.cwd(), "tests", "fixtures", "recorded.json"), "utf-8");
    cached = JSON.parse(raw) as Recorded;
  }
  return cached;
}

export function exchange(name: string): Exchange {
  const e = loadRecorded().exchanges[name];
  if (!e || Array.isArray(e)) throw new Error(`no single exchange named ${name}`);
  return e;
}

export function statusSequence(): Exchange[] {
  const e = loadRecorded().exchanges["status_sequence"];
  if (!Array.isArray(e)) throw new Error("status_sequence fixture missing");
  return e;
}

export const BASE = "http://svc.test";

/**
 * Replays recorded exchanges keyed by "METHOD path". Multiple exchanges on
 * one key are served in order (the last repeats). When an exchange recorded
 * a request body, the fake asserts the console sent exactly that body.
 */
export class FakeServer {
  private readonly queues = new Map<string, Exchange[]>();
  private readonly lastServed = new Map<string, Exchange>();
  readonly calls: { method: string; path: string; body: unknown }[] = [];

  add(...exchanges: Exchange[]): this {
    for (const ex of exchanges) {
      const key = `${ex.method} ${ex.path}`;
      const queue = this.queues.get(key);
      if (queue) queue.push(ex);
      else this.queues.set(key, [ex]);
    }
    return this;
  }

  readonly fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    if (!url.startsWith(BASE)) throw new Error(`unexpected URL ${url}`);
    const path = url.slice(BASE.length);
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    this.calls.push({ method, path, body });

    const key = `${method} ${path}`;
    const ex = this.queues.get(key)?.shift() ?? this.lastServed.get(key);
    if (!ex) {
      throw new Error(`no recorded exchange for ${key}`);
    }
    this.lastServed.set(key, ex);
    if (ex.request !== null && ex.request !== undefined) {
      expect(body).toEqual(ex.request);
    }
    return new Response(JSON.stringify(ex.body), {
      status: ex.status,
      headers: { "content-type": "application/json" },
    });
  };
}

/** String(n) for every number anywhere in a JSON document. */
export function numbersIn(doc: unknown, out = new Set<string>()): Set<string> {
  if (typeof doc === "number") {
    out.add(String(doc));
  } else if (Array.isArray(doc)) {
    for (const v of doc) numbersIn(v, out);
  } else if (doc && typeof doc === "object") {
    for (const v of Object.values(doc)) numbersIn(v, out);
  }
  return out;
}

/** Every string value anywhere in a JSON document. */
export function stringsIn(doc: unknown, out: string[] = []): string[] {
  if (typeof doc === "string") {
    out.push(doc);
  } else if (Array.isArray(doc)) {
    for (const v of doc) stringsIn(v, out);
  } else if (doc && typeof doc === "object") {
    for (const v of Object.values(doc)) stringsIn(v, out);
  }
  return out;
}

const NUMBER_TOKEN = /-?\d+(?:\.\d+)?(?:e[+-]?\d+)?/gi;

/**
 * All numeric-looking tokens in the rendered text of a DOM subtree. Tokens
 * are extracted per text node: concatenating the whole subtree would glue
 * digits from adjacent elements into numbers nobody displayed.
 */
export function domNumericTokens(root: Element): string[] {
  const tokens: string[] = [];
  const walk = (node: Node): void => {
    if (node.nodeType === 3) {
      tokens.push(...((node.textContent ?? "").match(NUMBER_TOKEN) ?? []));
      return;
    }
    for (const child of Array.from(node.childNodes)) walk(child);
  };
  walk(root);
  return tokens;
}

/**
 * The verbatim contract: every numeric token displayed must be a number
 * from one of the captured responses (exact shortest-representation match)
 * or appear inside one of their string values (ids, dates, hashes).
 */
export function assertVerbatim(root: Element, capturedBodies: unknown[]): void {
  const numbers = new Set<string>();
  const strings: string[] = [];
  for (const body of capturedBodies) {
    numbersIn(body, numbers);
    stringsIn(body, strings);
  }
  for (const token of domNumericTokens(root)) {
    const traceable =
      numbers.has(token) || strings.some((s) => s.includes(token));
    expect(traceable, `displayed number ${token} not found in any captured response`).toBe(true);
  }
}
