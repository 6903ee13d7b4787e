export { BUNDLE_VERSION, LUT_SIZE, loadBundle, parseBundle } from "./bundle.js";
export type { LoadedBundle } from "./bundle.js";
export {
  MAX_INPUT,
  freshState,
  inferStream,
  quantizedStep,
} from "./engine.js";
export type { StreamOutput, StreamSample, StreamState } from "./engine.js";
export { f16BitsToF64, f64ToF16Bits, roundToF16 } from "./half.js";
export { counterU64, counterUniform, dropoutKeep, splitmix64 } from "./prand.js";
