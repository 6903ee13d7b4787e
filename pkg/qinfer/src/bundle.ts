/**
 * Weight-bundle parsing and validation.
 *
 * A bundle is a self-describing UTF-8 text document: header fields, two
 * 256-entry activation lookup tables, eight tensors (INT8 weights with a
 * FP32 scale, INT32 biases), and a trailing CRC32 over everything before
 * the checksum line. Values are written as exact decimal representations,
 * so re-parsing loses nothing.
 */

import { readFileSync } from "node:fs";
import { crc32 } from "node:zlib";

export const BUNDLE_VERSION = 1;
export const LUT_SIZE = 256;

export interface LoadedBundle {
  channel: string;
  historyLen: number;
  hidden: number;
  dropoutRate: number;
  pMax: number;
  inputScale: number; // exact float32 value held in a float64
  sIn: number;
  sA1: number;
  sH: number;
  sWIn: number;
  sWIh: number;
  sWHh: number;
  sWOut: number;
  wIn: Int8Array; // (hidden, historyLen) row-major
  bIn: Int32Array;
  wIh: Int8Array; // (3*hidden, hidden), gate order r, z, n
  bIh: Int32Array;
  wHh: Int8Array;
  bHh: Int32Array;
  wOut: Int8Array; // (1, hidden)
  bOut: Int32Array;
  lutSigmoid: Float64Array;
  lutTanh: Float64Array;
}

/** Exact float32 value of a decimal string, held in a float64. */
function parseF32(text: string): number {
  return Math.fround(Number(text));
}

function parseIntStrict(text: string, what: string): number {
  const v = Number(text);
  if (!Number.isInteger(v)) throw new Error(`${what}: expected integer, got ${text}`);
  return v;
}

/** Parse and validate bundle text; throws on checksum or shape mismatches. */
export function parseBundle(text: string): LoadedBundle {
  const lines = text.split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  if (lines.length === 0 || !lines[lines.length - 1].startsWith("checksum ")) {
    throw new Error("missing checksum line");
  }
  const body = lines.slice(0, -1).map((ln) => ln + "\n").join("");
  const stated = parseInt(lines[lines.length - 1].split(" ")[1], 16);
  const computed = crc32(Buffer.from(body, "utf-8")) >>> 0;
  if (stated !== computed) {
    throw new Error(
      `checksum mismatch: stated ${stated.toString(16)}, computed ${computed.toString(16)}`,
    );
  }

  const header = new Map<string, string>();
  const luts = new Map<string, Float64Array>();
  const tensors = new Map<string, Int8Array | Int32Array>();
  const scales = new Map<string, number>();
  for (let i = 0; i < lines.length - 1; i++) {
    const space = lines[i].indexOf(" ");
    const key = space < 0 ? lines[i] : lines[i].slice(0, space);
    const rest = space < 0 ? "" : lines[i].slice(space + 1);
    if (key === "lut_sigmoid" || key === "lut_tanh") {
      luts.set(key, Float64Array.from(rest.split(" "), Number));
    } else if (key === "tensor") {
      const parts = rest.split(" ");
      const [name, dtype] = parts;
      const shape = parts.slice(2, -1).map((s) => parseIntStrict(s, `tensor ${name} shape`));
      if (parts[parts.length - 1] !== "-") scales.set(name, parseF32(parts[parts.length - 1]));
      i += 1;
      const vals = lines[i].split(" ").map((v) => parseIntStrict(v, `tensor ${name}`));
      const size = shape.reduce((a, b) => a * b, 1);
      if (vals.length !== size) {
        throw new Error(`tensor ${name}: ${vals.length} values for shape ${shape.join("x")}`);
      }
      tensors.set(name, dtype === "int8" ? Int8Array.from(vals) : Int32Array.from(vals));
    } else {
      header.set(key, rest);
    }
  }

  const need = (key: string): string => {
    const v = header.get(key);
    if (v === undefined) throw new Error(`missing header field ${key}`);
    return v;
  };
  if (parseIntStrict(need("format_version"), "format_version") !== BUNDLE_VERSION) {
    throw new Error(`unsupported format_version ${header.get("format_version")}`);
  }
  const hidden = parseIntStrict(need("hidden"), "hidden");
  const historyLen = parseIntStrict(need("history_len"), "history_len");
  const expected: Record<string, number> = {
    w_in: hidden * historyLen,
    b_in: hidden,
    w_ih: 3 * hidden * hidden,
    b_ih: 3 * hidden,
    w_hh: 3 * hidden * hidden,
    b_hh: 3 * hidden,
    w_out: hidden,
    b_out: 1,
  };
  for (const [name, size] of Object.entries(expected)) {
    const t = tensors.get(name);
    if (t === undefined) throw new Error(`missing tensor ${name}`);
    if (t.length !== size) throw new Error(`tensor ${name}: ${t.length} values, expected ${size}`);
  }
  for (const name of ["w_in", "w_ih", "w_hh", "w_out"]) {
    if (!scales.has(name)) throw new Error(`missing scale for tensor ${name}`);
  }
  for (const name of ["lut_sigmoid", "lut_tanh"]) {
    if ((luts.get(name)?.length ?? 0) !== LUT_SIZE) {
      throw new Error(`${name} must have ${LUT_SIZE} entries`);
    }
  }

  return {
    channel: need("channel"),
    historyLen,
    hidden,
    dropoutRate: Number(need("dropout_rate")),
    pMax: parseIntStrict(need("p_max"), "p_max"),
    inputScale: parseF32(need("input_scale")),
    sIn: parseF32(need("s_in")),
    sA1: parseF32(need("s_a1")),
    sH: parseF32(need("s_h")),
    sWIn: scales.get("w_in")!,
    sWIh: scales.get("w_ih")!,
    sWHh: scales.get("w_hh")!,
    sWOut: scales.get("w_out")!,
    wIn: tensors.get("w_in") as Int8Array,
    bIn: tensors.get("b_in") as Int32Array,
    wIh: tensors.get("w_ih") as Int8Array,
    bIh: tensors.get("b_ih") as Int32Array,
    wHh: tensors.get("w_hh") as Int8Array,
    bHh: tensors.get("b_hh") as Int32Array,
    wOut: tensors.get("w_out") as Int8Array,
    bOut: tensors.get("b_out") as Int32Array,
    lutSigmoid: luts.get("lut_sigmoid")!,
    lutTanh: luts.get("lut_tanh")!,
  };
}

/** Read and parse a bundle file. */
export function loadBundle(path: string): LoadedBundle {
  return parseBundle(readFileSync(path, "utf-8"));
}
