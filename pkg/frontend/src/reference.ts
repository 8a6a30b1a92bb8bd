// Pinned reference prediction for cross-implementation conformance: every
// operation is exact or correctly rounded in float32, so any IEEE-754
// implementation reproduces the bytes exactly.
//   eps = 0.5*x_t (+ 0.25*condition) + (t mod 7)*0.125 - 0.25

export function referenceEps(
  xT: Float32Array,
  t: number,
  condition: Float32Array | null = null,
): Float32Array {
  const out = new Float32Array(xT.length);
  const bias = Math.fround(Math.fround((t % 7) * 0.125) - 0.25);
  for (let i = 0; i < xT.length; i++) {
    let v = Math.fround(0.5 * xT[i]);
    if (condition !== null) {
      v = Math.fround(v + Math.fround(0.25 * condition[i]));
    }
    out[i] = Math.fround(v + bias);
  }
  return out;
}

/** The integer-derived input pattern used by the recorded test vectors. */
export function referenceInputs(height: number, width: number, phase: number): Float32Array {
  const out = new Float32Array(height * width);
  const scale = Math.fround(0.01);
  const shift = Math.fround(phase);
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.fround(Math.fround(i * scale) - shift);
  }
  return out;
}
