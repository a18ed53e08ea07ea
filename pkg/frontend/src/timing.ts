// Timer helpers; both use global timers so test runners can fake the clock.

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
}

/** Collapse calls within `waitMs` into one trailing invocation. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let handle: ReturnType<typeof setTimeout> | undefined;
  const wrapped = (...args: A) => {
    if (handle !== undefined) clearTimeout(handle);
    handle = setTimeout(() => {
      handle = undefined;
      fn(...args);
    }, waitMs);
  };
  wrapped.cancel = () => {
    if (handle !== undefined) clearTimeout(handle);
    handle = undefined;
  };
  return wrapped;
}

/** Call `tick` every `intervalMs` until it reports done or throws. */
export function pollEvery(
  intervalMs: number,
  tick: () => Promise<boolean>,
): { stop(): void; done: Promise<void> } {
  let stopped = false;
  let handle: ReturnType<typeof setTimeout> | undefined;
  const done = new Promise<void>((resolve, reject) => {
    const step = () => {
      handle = setTimeout(() => {
        tick().then(
          (finished) => {
            if (stopped) return resolve();
            if (finished) return resolve();
            step();
          },
          (err) => reject(err),
        );
      }, intervalMs);
    };
    step();
  });
  return {
    stop() {
      stopped = true;
      if (handle !== undefined) clearTimeout(handle);
    },
    done,
  };
}
