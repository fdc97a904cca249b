/** Trailing-edge debounce with an injectable clock so tests can run it
 * synchronously. Only the last call in a burst fires. */

export interface Clock {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export const realClock: Clock = {
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h as ReturnType<typeof setTimeout>),
};

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
  clock: Clock = realClock,
): (...args: A) => void {
  let handle: unknown;
  return (...args: A) => {
    if (handle !== undefined) clock.clearTimeout(handle);
    handle = clock.setTimeout(() => {
      handle = undefined;
      fn(...args);
    }, ms);
  };
}

/** Manual clock for tests: timers fire when `advance` passes their due time. */
export class FakeClock implements Clock {
  private now = 0;
  private timers = new Map<number, { due: number; fn: () => void }>();
  private nextId = 1;

  setTimeout(fn: () => void, ms: number): unknown {
    const id = this.nextId++;
    this.timers.set(id, { due: this.now + ms, fn });
    return id;
  }

  clearTimeout(handle: unknown): void {
    this.timers.delete(handle as number);
  }

  advance(ms: number): void {
    this.now += ms;
    const due = [...this.timers.entries()]
      .filter(([, t]) => t.due <= this.now)
      .sort((a, b) => a[1].due - b[1].due);
    for (const [id, t] of due) {
      this.timers.delete(id);
      t.fn();
    }
  }

  pending(): number {
    return this.timers.size;
  }
}
