// Training loop for the toy eps-network: sample a timestep, diffuse a clean
// phantom forward, regress the injected noise conditioned on the companion
// image. Checkpoints carry the schedule parameters so the serving side can
// surface mismatches against what the sampler expects.

import * as fs from "node:fs";
import * as path from "node:path";
import { createHash } from "node:crypto";

import { buildLinearSchedule, forwardDiffuse, Schedule } from "./schedule.js";
import { loadImage } from "./io.js";
import { Adam, DEFAULT_DIMS, EpsNet, NetDims, ParamDict, Tensor } from "./net.js";
import { Rng } from "./rng.js";

export interface TrainConfig {
  imageSize: number;
  T: number;
  betaStart: number;
  betaEnd: number;
  epochs: number;
  learningRate: number;
  batchSize: number;
  seed: number;
  checkpointPath: string;
  dataDir: string;
  dims?: NetDims;
}

export const TRAIN_DEFAULTS = {
  imageSize: 64,
  T: 200,
  betaStart: 1e-4,
  betaEnd: 0.02,
  epochs: 30,
  learningRate: 1e-4,
  batchSize: 4,
  seed: 0,
};

export function loadTrainConfig(configPath: string): TrainConfig {
  const raw = JSON.parse(fs.readFileSync(configPath, "utf-8"));
  if (typeof raw.dataDir !== "string" || typeof raw.checkpointPath !== "string") {
    throw new Error("config must set dataDir and checkpointPath");
  }
  const cfg: TrainConfig = { ...TRAIN_DEFAULTS, ...raw };
  if (!Number.isInteger(cfg.T) || cfg.T < 1) {
    throw new Error(`T must be a positive integer, got ${cfg.T}`);
  }
  if (!Number.isInteger(cfg.epochs) || cfg.epochs < 1) {
    throw new Error(`epochs must be a positive integer, got ${cfg.epochs}`);
  }
  if (!(cfg.learningRate > 0)) {
    throw new Error(`learning rate must be positive, got ${cfg.learningRate}`);
  }
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${cfg.batchSize}`);
  }
  return cfg;
}

export interface Sample {
  x0: Float64Array;
  condition: Float64Array;
  size: number;
}

/** Reads img_*.f32 / cond_*.f32 pairs produced by the phantom CLI. */
export function loadDataset(dataDir: string): Sample[] {
  const names = fs.readdirSync(dataDir).filter(
    (n) => n.startsWith("img_") && n.endsWith(".f32"));
  names.sort();
  if (names.length === 0) {
    throw new Error(`no img_*.f32 files in ${dataDir}`);
  }
  const samples: Sample[] = [];
  for (const name of names) {
    const condName = "cond_" + name.slice("img_".length);
    const condPath = path.join(dataDir, condName);
    if (!fs.existsSync(condPath)) {
      throw new Error(`missing condition file ${condName} for ${name}`);
    }
    const img = loadImage(path.join(dataDir, name));
    const cond = loadImage(condPath);
    if (cond.size !== img.size) {
      throw new Error(
        `${condName} is ${cond.size}x${cond.size} but ${name} is ${img.size}x${img.size}`);
    }
    samples.push({ x0: img.pixels, condition: cond.pixels, size: img.size });
  }
  const size = samples[0].size;
  for (const s of samples) {
    if (s.size !== size) {
      throw new Error("dataset images must share one size");
    }
  }
  return samples;
}

export interface Checkpoint {
  version: number;
  dims: NetDims;
  imageSize: number;
  schedule: { T: number; betaStart: number; betaEnd: number };
  scheduleHash: string;
  weights: { [name: string]: { shape: number[]; data: number[] } };
}

export function scheduleHash(T: number, betaStart: number, betaEnd: number): string {
  return createHash("sha256").update(`${T}:${betaStart}:${betaEnd}`).digest("hex");
}

export function saveCheckpoint(ckptPath: string, net: EpsNet, cfg: TrainConfig): void {
  const weights: Checkpoint["weights"] = {};
  for (const [name, t] of Object.entries(net.params)) {
    weights[name] = { shape: [...t.shape], data: Array.from(t.data) };
  }
  const ckpt: Checkpoint = {
    version: 1,
    dims: net.dims,
    imageSize: cfg.imageSize,
    schedule: { T: cfg.T, betaStart: cfg.betaStart, betaEnd: cfg.betaEnd },
    scheduleHash: scheduleHash(cfg.T, cfg.betaStart, cfg.betaEnd),
    weights,
  };
  fs.mkdirSync(path.dirname(path.resolve(ckptPath)), { recursive: true });
  fs.writeFileSync(ckptPath, JSON.stringify(ckpt) + "\n");
}

export function loadCheckpoint(ckptPath: string): { net: EpsNet; checkpoint: Checkpoint } {
  const ckpt: Checkpoint = JSON.parse(fs.readFileSync(ckptPath, "utf-8"));
  if (ckpt.version !== 1) {
    throw new Error(`unsupported checkpoint version ${ckpt.version}`);
  }
  const params: ParamDict = {};
  for (const [name, t] of Object.entries(ckpt.weights)) {
    const tens: Tensor = { shape: [...t.shape], data: Float64Array.from(t.data) };
    params[name] = tens;
  }
  const net = new EpsNet(ckpt.dims ?? DEFAULT_DIMS, params);
  return { net, checkpoint: ckpt };
}

export interface TrainResult {
  net: EpsNet;
  lossHistory: number[];
  firstWindowMean: number;
  lastWindowMean: number;
}

function windowMean(values: number[], lo: number, hi: number): number {
  let acc = 0;
  for (let i = lo; i < hi; i++) acc += values[i];
  return acc / (hi - lo);
}

export function train(
  cfg: TrainConfig,
  dataset: Sample[],
  onEpoch: (line: string) => void = () => {},
): TrainResult {
  if (dataset.length === 0) {
    throw new Error("dataset is empty");
  }
  const size = dataset[0].size;
  const n = size * size;
  const schedule = buildLinearSchedule(cfg.T, cfg.betaStart, cfg.betaEnd);
  const net = new EpsNet(cfg.dims ?? DEFAULT_DIMS, undefined, cfg.seed);
  const opt = new Adam(cfg.learningRate);
  const rng = new Rng(cfg.seed);

  const order = new Int32Array(dataset.length);
  for (let i = 0; i < order.length; i++) order[i] = i;

  const eps = new Float64Array(n);
  const xT = new Float64Array(n);
  const lossHistory: number[] = [];
  let step = 0;
  for (let epoch = 1; epoch <= cfg.epochs; epoch++) {
    rng.shuffle(order);
    let epochLoss = 0;
    let epochBatches = 0;
    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const end = Math.min(start + cfg.batchSize, order.length);
      const grads = net.zeroGrads();
      let batchLoss = 0;
      for (let k = start; k < end; k++) {
        const sample = dataset[order[k]];
        const t = rng.int(cfg.T) + 1;
        rng.fillGauss(eps);
        forwardDiffuse(schedule, sample.x0, t, eps, xT);
        const cache: any[] = [];
        const pred = net.forward(xT, sample.condition, t, size, size, cache);
        const dOut = new Float64Array(n);
        let loss = 0;
        for (let i = 0; i < n; i++) {
          const r = pred[i] - eps[i];
          loss += r * r;
          dOut[i] = (2 * r) / (n * (end - start));
        }
        loss /= n;
        batchLoss += loss;
        net.backward(cache[0], dOut, grads);
      }
      batchLoss /= end - start;
      step += 1;
      if (!Number.isFinite(batchLoss)) {
        throw new Error(
          `training diverged: loss ${batchLoss} at epoch ${epoch} step ${step} ` +
          `(lr ${cfg.learningRate}, batch ${end - start})`);
      }
      opt.update(net.params, grads);
      lossHistory.push(batchLoss);
      epochLoss += batchLoss;
      epochBatches += 1;
    }
    onEpoch(`epoch ${epoch}/${cfg.epochs}: loss ${(epochLoss / epochBatches).toFixed(6)}`);
  }

  const window = Math.max(1, Math.floor(lossHistory.length / 10));
  return {
    net,
    lossHistory,
    firstWindowMean: windowMean(lossHistory, 0, window),
    lastWindowMean: windowMean(lossHistory, lossHistory.length - window, lossHistory.length),
  };
}

/** Deterministic eps-regression error on a dataset, optionally blanking the condition. */
export function evalEpsMse(
  net: EpsNet,
  dataset: Sample[],
  schedule: Schedule,
  seed: number,
  useCondition: boolean,
  drawsPerSample = 4,
): number {
  const size = dataset[0].size;
  const n = size * size;
  const rng = new Rng(seed);
  const eps = new Float64Array(n);
  const xT = new Float64Array(n);
  let total = 0;
  let count = 0;
  for (const sample of dataset) {
    for (let d = 0; d < drawsPerSample; d++) {
      const t = rng.int(schedule.T) + 1;
      rng.fillGauss(eps);
      forwardDiffuse(schedule, sample.x0, t, eps, xT);
      const cond = useCondition ? sample.condition : null;
      const pred = net.forward(xT, cond, t, size, size);
      let loss = 0;
      for (let i = 0; i < n; i++) {
        const r = pred[i] - eps[i];
        loss += r * r;
      }
      total += loss / n;
      count += 1;
    }
  }
  return total / count;
}
