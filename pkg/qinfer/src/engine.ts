/**
 * Bit-exact quantized inference.
 *
 * Mirrors the reference arithmetic exactly: integer matrix-vector products
 * accumulated in ascending index order, float64 elementwise math, 256-entry
 * sigmoid/tanh lookup tables over [-8, 8], counter-seeded dropout, and a
 * binary16 round of the GRU hidden state after every write. Outputs are
 * integer stalls in [0, p_max].
 */

import type { LoadedBundle } from "./bundle.js";
import { roundToF16 } from "./half.js";
import { dropoutKeep } from "./prand.js";

const LUT_LO = -8.0;
const LUT_HI = 8.0;
const LUT_IDX_SCALE = 255 / (LUT_HI - LUT_LO);

export const MAX_INPUT = 2 ** 31; // inputs are integer latencies in [0, 2^31)

export interface StreamState {
  buffer: number[]; // last historyLen raw samples, oldest first
  hidden: number[]; // each value exactly representable in binary16
  step: number;
  seed: bigint;
}

export function freshState(bundle: LoadedBundle, seed: bigint): StreamState {
  return {
    buffer: new Array<number>(bundle.historyLen).fill(0),
    hidden: new Array<number>(bundle.hidden).fill(0),
    step: 0,
    seed,
  };
}

/** Round half up (toward +inf), the quantization rounding rule. */
function rhu(v: number): number {
  return Math.floor(v + 0.5);
}

function lutIndex(v: number): number {
  const t = (v - LUT_LO) * LUT_IDX_SCALE;
  if (t <= 0) return 0;
  if (t >= 255) return 255;
  return Math.floor(t + 0.5);
}

function quantAct(values: number[], scale: number): number[] {
  return values.map((v) => Math.max(-127, Math.min(127, rhu(v / scale))));
}

/** rows x cols int8 weights times an int vector, plus int32 bias; exact. */
function matvecI32(
  w: Int8Array,
  rows: number,
  cols: number,
  q: number[],
  b: Int32Array,
): number[] {
  const out = new Array<number>(rows);
  for (let i = 0; i < rows; i++) {
    let acc = b[i];
    const base = i * cols;
    for (let j = 0; j < cols; j++) acc += w[base + j] * q[j];
    out[i] = acc;
  }
  return out;
}

/** One inference step; returns the integer stall and the advanced state. */
export function quantizedStep(
  bundle: LoadedBundle,
  state: StreamState,
  xT: number,
): [number, StreamState] {
  if (!Number.isInteger(xT) || xT < 0 || xT >= MAX_INPUT) {
    throw new Error(`input out of range [0, 2^31): ${xT}`);
  }
  const hN = bundle.hidden;
  const buf = state.buffer.slice(1);
  buf.push(xT);

  const xn = buf.map((v) => v * bundle.inputScale);
  const qX = quantAct(xn, bundle.sIn);
  const m1 = bundle.sIn * bundle.sWIn;
  const acc1 = matvecI32(bundle.wIn, hN, bundle.historyLen, qX, bundle.bIn);
  let a1 = acc1.map((a) => Math.max(a * m1, 0));
  if (bundle.dropoutRate > 0) {
    const inv = 1 / (1 - bundle.dropoutRate);
    a1 = a1.map((a, i) =>
      dropoutKeep(state.seed, state.step, i, bundle.dropoutRate) ? a * inv : 0,
    );
  }

  const qA1 = quantAct(a1, bundle.sA1);
  const qH = quantAct(state.hidden, bundle.sH);
  const mIh = bundle.sA1 * bundle.sWIh;
  const mHh = bundle.sH * bundle.sWHh;
  const gi = matvecI32(bundle.wIh, 3 * hN, hN, qA1, bundle.bIh).map((a) => a * mIh);
  const gh = matvecI32(bundle.wHh, 3 * hN, hN, qH, bundle.bHh).map((a) => a * mHh);

  const sig = bundle.lutSigmoid;
  const tanh = bundle.lutTanh;
  const hNew = new Array<number>(hN);
  for (let i = 0; i < hN; i++) {
    const r = sig[lutIndex(gi[i] + gh[i])];
    const z = sig[lutIndex(gi[hN + i] + gh[hN + i])];
    const n = tanh[lutIndex(gi[2 * hN + i] + r * gh[2 * hN + i])];
    hNew[i] = roundToF16((1 - z) * n + z * state.hidden[i]);
  }

  const qH2 = quantAct(hNew, bundle.sH);
  const mO = bundle.sH * bundle.sWOut;
  const o = matvecI32(bundle.wOut, 1, hN, qH2, bundle.bOut)[0] * mO;
  const p = Math.max(0, Math.min(bundle.pMax, rhu(Math.max(o, 0))));
  return [p, { buffer: buf, hidden: hNew, step: state.step + 1, seed: state.seed }];
}

export interface StreamSample {
  streamId: number; // core / trace identifier; stream seed = seed + streamId
  input: number;
}

export interface StreamOutput {
  streamId: number;
  step: number;
  input: number;
  output: number;
}

/**
 * Run an (arbitrarily interleaved) multi-stream sample sequence. Each stream
 * gets an independent state seeded seed + streamId, so interleaving cannot
 * change any output.
 */
export function inferStream(
  bundle: LoadedBundle,
  samples: StreamSample[],
  seed: bigint,
): StreamOutput[] {
  const states = new Map<number, StreamState>();
  return samples.map(({ streamId, input }) => {
    let state = states.get(streamId) ?? freshState(bundle, seed + BigInt(streamId));
    const step = state.step;
    let output: number;
    [output, state] = quantizedStep(bundle, state, input);
    states.set(streamId, state);
    return { streamId, step, input, output };
  });
}
