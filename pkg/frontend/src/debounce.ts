/** Trailing debounce with an injectable clock (for deterministic tests).
 *
 * During a continuous stream of calls the wrapped function fires at most
 * once per `waitMs` window; the last pending call always runs, so the UI
 * settles on the final slider position.
 */

export interface Clock {
  now(): number;
  setTimeout(fn: () => void, ms: number): number;
  clearTimeout(id: number): void;
}

export const realClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms) as unknown as number,
  clearTimeout: (id) => clearTimeout(id),
};

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
  clock: Clock = realClock,
): (...args: A) => void {
  let lastFire = -Infinity;
  let timer: number | null = null;
  let pending: A | null = null;

  const fire = () => {
    timer = null;
    if (pending === null) return;
    const args = pending;
    pending = null;
    lastFire = clock.now();
    fn(...args);
  };

  return (...args: A) => {
    pending = args;
    if (timer !== null) return;
    const elapsed = clock.now() - lastFire;
    const delay = Math.max(0, waitMs - elapsed);
    timer = clock.setTimeout(fire, delay);
  };
}
