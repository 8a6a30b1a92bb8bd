import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import { saveArray } from "../src/io.js";
import { EpsNet } from "../src/net.js";
import { Rng } from "../src/rng.js";
import { buildLinearSchedule, forwardDiffuse } from "../src/schedule.js";
import {
  evalEpsMse,
  loadCheckpoint,
  loadDataset,
  Sample,
  saveCheckpoint,
  train,
  TrainConfig,
} from "../src/train.js";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-test-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

function smoothImage(rng: Rng, size: number): Float64Array {
  // sum of a few random low-frequency bumps, clipped to [0, 1]
  const img = new Float64Array(size * size);
  for (let b = 0; b < 3; b++) {
    const cy = rng.next() * size;
    const cx = rng.next() * size;
    const s = size * (0.15 + 0.2 * rng.next());
    const amp = 0.3 + 0.5 * rng.next();
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        const d2 = (y - cy) ** 2 + (x - cx) ** 2;
        img[y * size + x] += amp * Math.exp(-d2 / (2 * s * s));
      }
    }
  }
  for (let i = 0; i < img.length; i++) {
    img[i] = Math.min(1, img[i]);
  }
  return img;
}

function makeSamples(count: number, size: number, seed: number): Sample[] {
  const rng = new Rng(seed);
  const samples: Sample[] = [];
  for (let k = 0; k < count; k++) {
    const x0 = smoothImage(rng, size);
    samples.push({ x0, condition: Float64Array.from(x0), size });
  }
  return samples;
}

function baseConfig(overrides: Partial<TrainConfig>): TrainConfig {
  return {
    imageSize: 16,
    T: 50,
    betaStart: 1e-4,
    betaEnd: 0.02,
    epochs: 1,
    learningRate: 1e-4,
    batchSize: 1,
    seed: 0,
    checkpointPath: path.join(tmp, "ckpt.json"),
    dataDir: tmp,
    ...overrides,
  };
}

describe("training loop", () => {
  it("takes one finite step with nonzero gradients on one sample", () => {
    const dataset = makeSamples(1, 16, 3);
    const result = train(baseConfig({}), dataset);
    expect(result.lossHistory.length).toBe(1);
    expect(Number.isFinite(result.lossHistory[0])).toBe(true);

    const net = new EpsNet(undefined, undefined, 0);
    const schedule = buildLinearSchedule(50);
    const eps = new Float64Array(256);
    const xT = new Float64Array(256);
    new Rng(1).fillGauss(eps);
    forwardDiffuse(schedule, dataset[0].x0, 25, eps, xT);
    const cache: any[] = [];
    const pred = net.forward(xT, dataset[0].condition, 25, 16, 16, cache);
    const dOut = new Float64Array(256);
    for (let i = 0; i < 256; i++) {
      dOut[i] = (2 * (pred[i] - eps[i])) / 256;
    }
    const grads = net.zeroGrads();
    net.backward(cache[0], dOut, grads);
    for (const name of ["conv1_w", "conv2_w", "conv3_w", "conv4_w", "tmlp_w2"]) {
      let norm = 0;
      for (const g of grads[name].data) norm += g * g;
      expect(norm, `gradient of ${name}`).toBeGreaterThan(0);
    }
  });

  it("reproduces the loss curve for a fixed seed", () => {
    const dataset = makeSamples(6, 16, 9);
    const cfg = baseConfig({ epochs: 3, batchSize: 2, seed: 42 });
    const a = train(cfg, dataset);
    const b = train(cfg, dataset);
    expect(a.lossHistory).toEqual(b.lossHistory);
  });

  it("aborts with diagnostics when the data poisons the loss", () => {
    // relu branches swallow a lone NaN pixel, an infinity survives to the loss
    const dataset = makeSamples(2, 16, 5);
    dataset[1].x0[7] = Number.POSITIVE_INFINITY;
    expect(() => train(baseConfig({ epochs: 1 }), dataset)).toThrow(/diverged/);
  });

  it("round-trips a checkpoint to an identical forward pass", () => {
    const dataset = makeSamples(4, 16, 11);
    const cfg = baseConfig({ epochs: 2, seed: 7, checkpointPath: path.join(tmp, "rt.json") });
    const result = train(cfg, dataset);
    saveCheckpoint(cfg.checkpointPath, result.net, cfg);
    const { net: reloaded, checkpoint } = loadCheckpoint(cfg.checkpointPath);
    expect(checkpoint.schedule).toEqual({ T: 50, betaStart: 1e-4, betaEnd: 0.02 });
    expect(checkpoint.scheduleHash).toMatch(/^[0-9a-f]{64}$/);

    const probe = new Float32Array(256);
    for (let i = 0; i < 256; i++) probe[i] = Math.fround(Math.sin(i * 0.37));
    const before = result.net.predict(probe, 13, 16, 16, null);
    const after = reloaded.predict(probe, 13, 16, 16, null);
    expect(Array.from(after)).toEqual(Array.from(before));
  });

  it("does worse when the condition channel is blanked", () => {
    // condition equals the clean image here, so a trained net must lose
    // accuracy when it is replaced by zeros
    const dataset = makeSamples(16, 16, 21);
    const cfg = baseConfig({ epochs: 40, learningRate: 3e-3, seed: 1 });
    const result = train(cfg, dataset);
    const schedule = buildLinearSchedule(cfg.T, cfg.betaStart, cfg.betaEnd);
    const withCond = evalEpsMse(result.net, dataset, schedule, 77, true);
    const without = evalEpsMse(result.net, dataset, schedule, 77, false);
    expect(withCond).toBeLessThan(without);
  });
});

describe("dataset loading", () => {
  it("pairs image and condition files and validates shape", () => {
    const dir = fs.mkdtempSync(path.join(tmp, "data-"));
    const rng = new Rng(2);
    for (let k = 0; k < 3; k++) {
      const img = smoothImage(rng, 8);
      saveArray(path.join(dir, `img_${String(k).padStart(3, "0")}.f32`), img,
                { shape: [8, 8], kind: "image" });
      saveArray(path.join(dir, `cond_${String(k).padStart(3, "0")}.f32`), img,
                { shape: [8, 8], kind: "image" });
    }
    const samples = loadDataset(dir);
    expect(samples.length).toBe(3);
    expect(samples[0].size).toBe(8);

    fs.rmSync(path.join(dir, "cond_001.f32"));
    expect(() => loadDataset(dir)).toThrow(/missing condition/);
  });
});
