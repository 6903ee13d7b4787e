#!/usr/bin/env node
/**
 * qinfer --bundle <file> --input <csv> --seed <n> --out <csv>
 *
 * Input CSV: trace_id,step,input[,output] rows (header required); rows may
 * interleave traces but must be in step order within each trace. Output CSV
 * uses the golden-vector schema trace_id,step,input,output.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { loadBundle } from "./bundle.js";
import { inferStream, type StreamSample } from "./engine.js";

function parseInputCsv(text: string): StreamSample[] {
  const lines = text.trim().split("\n");
  const header = lines[0].split(",");
  if (header[0] !== "trace_id" || header[1] !== "step" || header[2] !== "input") {
    throw new Error(`unexpected input CSV header: ${lines[0]}`);
  }
  return lines.slice(1).map((ln) => {
    const cols = ln.split(",");
    return { streamId: Number(cols[0]), input: Number(cols[2]) };
  });
}

export function main(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      bundle: { type: "string" },
      input: { type: "string" },
      seed: { type: "string", default: "0" },
      out: { type: "string" },
    },
  });
  if (!values.bundle || !values.input || !values.out) {
    console.error("usage: qinfer --bundle <file> --input <csv> --seed <n> --out <csv>");
    return 2;
  }

  const bundle = loadBundle(values.bundle);
  const samples = parseInputCsv(readFileSync(values.input, "utf-8"));
  const seed = BigInt(values.seed);

  const t0 = performance.now();
  const outputs = inferStream(bundle, samples, seed);
  const elapsed = (performance.now() - t0) / 1000;

  const rows = outputs.map((o) => `${o.streamId},${o.step},${o.input},${o.output}`);
  writeFileSync(values.out, "trace_id,step,input,output\n" + rows.join("\n") + "\n");
  console.error(
    `${outputs.length} steps in ${elapsed.toFixed(3)}s ` +
      `(${Math.round(outputs.length / Math.max(elapsed, 1e-9))} steps/s)`,
  );
  return 0;
}

import { fileURLToPath } from "node:url";
if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  }
}
