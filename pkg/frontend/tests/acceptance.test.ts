// Acceptance gate for the trainer package. Each test prints one PASS/FAIL
// line with the measured numbers. The reconstruction CLI from the parent
// package must be installed (`pip install -e .` at the repo root).

import * as fs from "node:fs";
import * as net from "node:net";
import * as os from "node:os";
import * as path from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, describe, expect, it } from "vitest";

import { createProtocolServer } from "../src/serve.js";
import { referenceEps } from "../src/reference.js";
import { loadDataset, saveCheckpoint, train, TrainConfig } from "../src/train.js";
import { connect, nsmi, startServer } from "./helpers.js";

const here = path.dirname(fileURLToPath(import.meta.url));
const work = fs.mkdtempSync(path.join(os.tmpdir(), "trainer-acceptance-"));
const ckptPath = path.join(work, "model.json");

afterAll(() => fs.rmSync(work, { recursive: true, force: true }));

function report(ok: boolean, name: string, detail: string): void {
  console.log(`${ok ? "PASS" : "FAIL"} ${name}: ${detail}`);
}

function listen(server: net.Server): Promise<number> {
  return new Promise((resolve) =>
    server.listen(0, "127.0.0.1", () =>
      resolve((server.address() as net.AddressInfo).port)));
}

function makePairs(dir: string, count: number, seedBase: number): void {
  fs.mkdirSync(dir, { recursive: true });
  for (let k = 0; k < count; k++) {
    const tag = String(k).padStart(3, "0");
    nsmi([
      "phantom", "--size", "64", "--seed", String(seedBase + k),
      "--condition-out", path.join(dir, `cond_${tag}.f32`),
      "-o", path.join(dir, `img_${tag}.f32`),
    ]);
  }
}

function evaluatePsnr(truth: string, recon: string): number {
  const out = nsmi(["evaluate", "--truth", truth, "--recon", recon]);
  const match = out.match(/psnr ([-\d.]+) dB/);
  if (!match) {
    throw new Error(`no psnr in evaluate output: ${out}`);
  }
  return Number(match[1]);
}

describe("trainer acceptance", () => {
  it("training smoke: loss drops 30% over 30 epochs on 200 pairs", () => {
    const dataDir = path.join(work, "pairs");
    makePairs(dataDir, 200, 1000);
    const dataset = loadDataset(dataDir);
    expect(dataset.length).toBe(200);

    const cfg: TrainConfig = {
      imageSize: 64, T: 200, betaStart: 1e-4, betaEnd: 0.02,
      epochs: 30, learningRate: 1e-4, batchSize: 1, seed: 0,
      checkpointPath: ckptPath, dataDir,
    };
    const started = Date.now();
    const result = train(cfg, dataset);
    const seconds = (Date.now() - started) / 1000;
    saveCheckpoint(ckptPath, result.net, cfg);

    const drop = 1 - result.lastWindowMean / result.firstWindowMean;
    const ok = drop >= 0.3 && seconds < 900;
    report(ok, "training smoke",
           `loss ${result.firstWindowMean.toFixed(4)} -> ${result.lastWindowMean.toFixed(4)} ` +
           `(${(100 * drop).toFixed(1)}% drop) in ${seconds.toFixed(0)} s`);
    expect(drop).toBeGreaterThanOrEqual(0.3);
    expect(seconds).toBeLessThan(900);
  }, 2_400_000);

  it("protocol conformance: recorded vectors replay byte-exactly", async () => {
    const started = Date.now();
    const doc = JSON.parse(
      fs.readFileSync(path.join(here, "data", "reference_vectors.json"), "utf-8"));
    expect(doc.protocol_version).toBe(1);
    const server = createProtocolServer(
      (req) => referenceEps(req.xT, req.t, req.condition));
    const port = await listen(server);
    let mismatches = 0;
    for (const vec of doc.vectors) {
      const request = Buffer.from(vec.request, "hex");
      const expected = Buffer.from(vec.response, "hex");
      const { sock, reader } = await connect(port);
      sock.write(request);
      const got = await reader.read(expected.length);
      sock.destroy();
      if (!got.equals(expected)) mismatches += 1;
    }
    server.close();
    const seconds = (Date.now() - started) / 1000;
    const ok = mismatches === 0 && seconds < 60;
    report(ok, "protocol conformance",
           `${doc.vectors.length} vectors, ${mismatches} mismatches, ${seconds.toFixed(1)} s`);
    expect(mismatches).toBe(0);
    expect(seconds).toBeLessThan(60);
  }, 120_000);

  it("learned prior beats the flat gaussian prior at 20 projections", async () => {
    const started = Date.now();
    // a separate process: execFileSync below would starve an in-process server
    const cliPath = path.join(here, "..", "dist", "cli.js");
    const { proc, endpoint } = await startServer(
      cliPath, ["--checkpoint", ckptPath, "--listen", "127.0.0.1:0"]);

    const externalPsnr: number[] = [];
    const gaussianPsnr: number[] = [];
    try {
      for (let seed = 500; seed <= 504; seed++) {
        const truth = path.join(work, `truth_${seed}.f32`);
        const cond = path.join(work, `cond_${seed}.f32`);
        const sino = path.join(work, `sino_${seed}.f32`);
        nsmi(["phantom", "--size", "64", "--seed", String(seed),
              "--condition-out", cond, "-o", truth]);
        nsmi(["project", "--angles", "20", "-i", truth, "-o", sino]);
        for (const [denoiser, out] of [
          ["external", path.join(work, `ext_${seed}.f32`)],
          ["gaussian", path.join(work, `gau_${seed}.f32`)],
        ] as const) {
          const args = [
            "reconstruct", "--method", "ddmm", "--mode", "noiseless",
            "--stepper", "ddim", "--steps", "50", "--T", "200", "--seed", "1",
            "--denoiser", denoiser, "--condition", cond, "-i", sino, "-o", out,
          ];
          if (denoiser === "external") {
            args.push("--endpoint", endpoint);
          }
          nsmi(args);
          const psnr = evaluatePsnr(truth, out);
          (denoiser === "external" ? externalPsnr : gaussianPsnr).push(psnr);
        }
      }
    } finally {
      proc.kill("SIGTERM");
    }

    const mean = (xs: number[]) => xs.reduce((a, b) => a + b, 0) / xs.length;
    const meanExt = mean(externalPsnr);
    const meanGau = mean(gaussianPsnr);
    const seconds = (Date.now() - started) / 1000;
    const ok = meanExt > meanGau && seconds < 1800;
    report(ok, "learned-prior benefit",
           `external ${meanExt.toFixed(2)} dB vs gaussian ${meanGau.toFixed(2)} dB ` +
           `over 5 held-out phantoms, ${seconds.toFixed(0)} s`);
    expect(meanExt).toBeGreaterThan(meanGau);
    expect(seconds).toBeLessThan(1800);
  }, 2_400_000);
});
