/**
 * binary16 emulation: round a float64 to the nearest half-precision value
 * (round-to-nearest-even) and back, without native half support.
 *
 * The conversion works on the raw float64 bits so there is no intermediate
 * float32 step (double rounding would diverge from a direct f64 -> f16 cast
 * on ties).
 */

const buf = new ArrayBuffer(8);
const f64View = new DataView(buf);

/** Raw bits of a float64 as a BigInt. */
export function f64ToBits(value: number): bigint {
  f64View.setFloat64(0, value);
  return f64View.getBigUint64(0);
}

/** Convert a float64 to binary16 bits with round-to-nearest-even. */
export function f64ToF16Bits(value: number): number {
  if (Number.isNaN(value)) return 0x7e00;
  const bits = f64ToBits(value);
  const sign = Number(bits >> 63n) << 15;
  const exp = Number((bits >> 52n) & 0x7ffn);
  const mant = bits & 0xfffffffffffffn;

  if (exp === 0x7ff) return sign | 0x7c00; // infinity (NaN handled above)
  if (exp === 0) return sign; // f64 subnormals are far below half range

  const unbiased = exp - 1023;
  let halfExp = unbiased + 15;
  if (halfExp >= 31) return sign | 0x7c00; // >= 2^16 overflows past 65504

  // full 53-bit significand with the implicit leading one
  const frac53 = (1n << 52n) | mant;
  // normals keep 10 mantissa bits; subnormals lose one more per exponent step
  const shift = BigInt(42 + (halfExp <= 0 ? 1 - halfExp : 0));
  if (shift > 53n) return sign; // underflows to zero even after rounding
  let candidate = frac53 >> shift;
  const rem = frac53 & ((1n << shift) - 1n);
  const halfPoint = 1n << (shift - 1n);
  if (rem > halfPoint || (rem === halfPoint && (candidate & 1n) === 1n)) {
    candidate += 1n; // carry may roll into the exponent, including to infinity
  }
  if (halfExp <= 0) return sign | Number(candidate);
  // candidate = 1.xxxxxxxxxx in 11 bits; strip the implicit one via the bias below
  return sign | (((halfExp - 1) << 10) + Number(candidate));
}

/** Exact float64 value of binary16 bits. */
export function f16BitsToF64(bits: number): number {
  const sign = (bits & 0x8000) !== 0 ? -1 : 1;
  const exp = (bits >>> 10) & 0x1f;
  const frac = bits & 0x03ff;
  if (exp === 0) return sign * Math.pow(2, -14) * (frac / 1024);
  if (exp === 0x1f) return frac === 0 ? sign * Infinity : NaN;
  return sign * Math.pow(2, exp - 15) * (1 + frac / 1024);
}

/** Round a float64 to the nearest representable binary16 value. */
export function roundToF16(value: number): number {
  return f16BitsToF64(f64ToF16Bits(value));
}
