// Linear variance schedule matching the reconstruction package: arrays have
// length T + 1 and are indexed by timestep directly, with alphaBar[0] = 1.

export interface Schedule {
  T: number;
  betaStart: number;
  betaEnd: number;
  beta: Float64Array;
  alpha: Float64Array;
  alphaBar: Float64Array;
}

export function buildLinearSchedule(T: number, betaStart = 1e-4, betaEnd = 0.02): Schedule {
  if (!Number.isInteger(T) || T < 2) {
    throw new Error(`T must be an integer >= 2, got ${T}`);
  }
  if (!(betaStart > 0 && betaStart <= betaEnd && betaEnd < 1)) {
    throw new Error(`need 0 < betaStart <= betaEnd < 1, got (${betaStart}, ${betaEnd})`);
  }
  const beta = new Float64Array(T + 1);
  for (let t = 1; t <= T; t++) {
    beta[t] = betaStart + ((betaEnd - betaStart) * (t - 1)) / (T - 1);
  }
  const alpha = new Float64Array(T + 1);
  const alphaBar = new Float64Array(T + 1);
  alpha[0] = 1;
  alphaBar[0] = 1;
  for (let t = 1; t <= T; t++) {
    alpha[t] = 1 - beta[t];
    alphaBar[t] = alphaBar[t - 1] * alpha[t];
  }
  return { T, betaStart, betaEnd, beta, alpha, alphaBar };
}

/** x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, written into out. */
export function forwardDiffuse(
  schedule: Schedule,
  x0: Float64Array,
  t: number,
  eps: Float64Array,
  out: Float64Array,
): void {
  const a = Math.sqrt(schedule.alphaBar[t]);
  const b = Math.sqrt(1 - schedule.alphaBar[t]);
  for (let i = 0; i < x0.length; i++) {
    out[i] = a * x0[i] + b * eps[i];
  }
}
