/** Panel-order shuffling and shuffle correction.
 *
 * Screen slot i shows body[order[i]]. The permutation stays on the client
 * side of the submission: the server only ever receives true body indices.
 */

export function isPermutation(order: number[]): boolean {
  const seen = new Set(order);
  return (
    seen.size === order.length &&
    order.every((v) => Number.isInteger(v) && v >= 0 && v < order.length)
  );
}

/** Fisher-Yates shuffle of [0, n). Fallback when the service provides no
 * display order; `random` is injectable for deterministic tests. */
export function shuffledOrder(n: number, random: () => number = Math.random): number[] {
  const order = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(random() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

/** True body index of the panel at a screen position. */
export function screenToBody(order: number[], screenIndex: number): number {
  if (!isPermutation(order)) {
    throw new Error(`display order ${JSON.stringify(order)} is not a permutation`);
  }
  if (screenIndex < 0 || screenIndex >= order.length) {
    throw new Error(`screen index ${screenIndex} out of range 0..${order.length - 1}`);
  }
  return order[screenIndex];
}

/** Screen position showing a given body index (inverse of screenToBody). */
export function bodyToScreen(order: number[], bodyIndex: number): number {
  const pos = order.indexOf(bodyIndex);
  if (pos < 0) {
    throw new Error(`body index ${bodyIndex} not present in display order`);
  }
  return pos;
}
