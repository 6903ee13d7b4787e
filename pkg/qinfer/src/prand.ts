/**
 * Counter-based randomness matching the training-side dropout source.
 *
 * Every draw is a pure function of (seed, step, unit): one SplitMix64
 * scramble per counter component, then the top 53 bits as a uniform in
 * [0, 1). BigInt keeps the 64-bit arithmetic exact.
 */

const M64 = 0xffffffffffffffffn;
const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

/** One SplitMix64 scramble of a 64-bit integer. */
export function splitmix64(z: bigint): bigint {
  z = (z + GAMMA) & M64;
  z = ((z ^ (z >> 30n)) * MIX1) & M64;
  z = ((z ^ (z >> 27n)) * MIX2) & M64;
  return z ^ (z >> 31n);
}

/** 64-bit hash of the (seed, step, unit) counter triple. */
export function counterU64(seed: bigint, step: number, unit: number): bigint {
  let h = splitmix64(seed & M64);
  h = splitmix64(h ^ BigInt(step));
  return splitmix64(h ^ BigInt(unit));
}

/** Uniform float64 in [0, 1) from the counter triple. */
export function counterUniform(seed: bigint, step: number, unit: number): number {
  return Number(counterU64(seed, step, unit) >> 11n) / 2 ** 53;
}

/** Whether dropout keeps unit `unit` at step `step` (true = keep). */
export function dropoutKeep(seed: bigint, step: number, unit: number, rate: number): boolean {
  return counterUniform(seed, step, unit) >= rate;
}
