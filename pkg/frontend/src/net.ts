// Toy conditional eps-network: a two-level convolutional encoder-decoder
// with a sinusoidal timestep embedding driving per-channel feature
// modulation, and the condition image concatenated as a second input
// channel.  Small enough to train on CPU in minutes; makes no claim of
// architectural fidelity to anything larger.

import { Rng } from "./rng.js";

export interface Tensor {
  shape: number[];
  data: Float64Array;
}

export type ParamDict = { [name: string]: Tensor };

export interface NetDims {
  c1: number;
  c2: number;
  embedDim: number;
  hidden: number;
}

export const DEFAULT_DIMS: NetDims = { c1: 8, c2: 16, embedDim: 16, hidden: 32 };

function tensor(shape: number[], data?: Float64Array): Tensor {
  const count = shape.reduce((a, b) => a * b, 1);
  return { shape, data: data ?? new Float64Array(count) };
}

function heInit(rng: Rng, shape: number[], fanIn: number): Tensor {
  const t = tensor(shape);
  const std = Math.sqrt(2 / fanIn);
  for (let i = 0; i < t.data.length; i++) {
    t.data[i] = std * rng.gauss();
  }
  return t;
}

/** out[co] = bias[co] + sum_ci,ky,kx w[co,ci,ky,kx] * in[ci, y+ky-1, x+kx-1], zero padded. */
function conv3x3(
  inp: Float64Array, cin: number, h: number, w: number,
  weight: Float64Array, bias: Float64Array, cout: number, out: Float64Array,
): void {
  const plane = h * w;
  for (let co = 0; co < cout; co++) {
    out.fill(bias[co], co * plane, (co + 1) * plane);
  }
  for (let co = 0; co < cout; co++) {
    const outBase = co * plane;
    for (let ci = 0; ci < cin; ci++) {
      const inBase = ci * plane;
      for (let ky = 0; ky < 3; ky++) {
        for (let kx = 0; kx < 3; kx++) {
          const wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
          if (wv === 0) continue;
          const dy = ky - 1;
          const dx = kx - 1;
          const y0 = Math.max(0, -dy);
          const y1 = Math.min(h, h - dy);
          const x0 = Math.max(0, -dx);
          const x1 = Math.min(w, w - dx);
          for (let y = y0; y < y1; y++) {
            const o = outBase + y * w;
            const s = inBase + (y + dy) * w + dx;
            for (let x = x0; x < x1; x++) {
              out[o + x] += wv * inp[s + x];
            }
          }
        }
      }
    }
  }
}

/** Accumulates dW/dB and (when dIn is given) the input gradient. */
function conv3x3Backward(
  inp: Float64Array, cin: number, h: number, w: number,
  weight: Float64Array, cout: number, dOut: Float64Array,
  dW: Float64Array, dB: Float64Array, dIn: Float64Array | null,
): void {
  const plane = h * w;
  for (let co = 0; co < cout; co++) {
    const outBase = co * plane;
    let acc = 0;
    for (let i = 0; i < plane; i++) {
      acc += dOut[outBase + i];
    }
    dB[co] += acc;
    for (let ci = 0; ci < cin; ci++) {
      const inBase = ci * plane;
      for (let ky = 0; ky < 3; ky++) {
        for (let kx = 0; kx < 3; kx++) {
          const dy = ky - 1;
          const dx = kx - 1;
          const y0 = Math.max(0, -dy);
          const y1 = Math.min(h, h - dy);
          const x0 = Math.max(0, -dx);
          const x1 = Math.min(w, w - dx);
          let wGrad = 0;
          for (let y = y0; y < y1; y++) {
            const o = outBase + y * w;
            const s = inBase + (y + dy) * w + dx;
            for (let x = x0; x < x1; x++) {
              wGrad += dOut[o + x] * inp[s + x];
            }
          }
          const wIdx = ((co * cin + ci) * 3 + ky) * 3 + kx;
          dW[wIdx] += wGrad;
          if (dIn !== null) {
            const wv = weight[wIdx];
            if (wv === 0) continue;
            for (let y = y0; y < y1; y++) {
              const o = outBase + y * w;
              const s = inBase + (y + dy) * w + dx;
              for (let x = x0; x < x1; x++) {
                dIn[s + x] += wv * dOut[o + x];
              }
            }
          }
        }
      }
    }
  }
}

export function timestepEmbedding(t: number, dim: number): Float64Array {
  const half = dim / 2;
  const emb = new Float64Array(dim);
  for (let i = 0; i < half; i++) {
    const freq = Math.exp((-Math.log(10000) * i) / (half - 1));
    emb[2 * i] = Math.sin(t * freq);
    emb[2 * i + 1] = Math.cos(t * freq);
  }
  return emb;
}

interface Cache {
  h: number;
  w: number;
  input: Float64Array;
  emb: Float64Array;
  mlpZ: Float64Array;
  mlpA: Float64Array;
  film: Float64Array;
  conv1Out: Float64Array;
  f1: Float64Array;
  pooled: Float64Array;
  conv2Out: Float64Array;
  f2: Float64Array;
  z3: Float64Array;
  h3: Float64Array;
  cat: Float64Array;
}

export class EpsNet {
  dims: NetDims;
  params: ParamDict;

  constructor(dims: NetDims = DEFAULT_DIMS, params?: ParamDict, seed = 0) {
    this.dims = dims;
    if (params) {
      this.params = params;
      return;
    }
    const rng = new Rng(seed ^ 0x9e3779b9);
    const { c1, c2, embedDim, hidden } = dims;
    const filmDim = 2 * c1 + 2 * c2;
    this.params = {
      conv1_w: heInit(rng, [c1, 2, 3, 3], 2 * 9),
      conv1_b: tensor([c1]),
      conv2_w: heInit(rng, [c2, c1, 3, 3], c1 * 9),
      conv2_b: tensor([c2]),
      conv3_w: heInit(rng, [c1, c2, 3, 3], c2 * 9),
      conv3_b: tensor([c1]),
      conv4_w: heInit(rng, [1, 2 * c1, 3, 3], 2 * c1 * 9),
      conv4_b: tensor([1]),
      tmlp_w1: heInit(rng, [hidden, embedDim], embedDim),
      tmlp_b1: tensor([hidden]),
      // zero so feature modulation starts as the identity
      tmlp_w2: tensor([filmDim, hidden]),
      tmlp_b2: tensor([filmDim]),
    };
  }

  /** Flat gradient buffers matching the parameter layout. */
  zeroGrads(): ParamDict {
    const grads: ParamDict = {};
    for (const name of Object.keys(this.params)) {
      grads[name] = tensor([...this.params[name].shape]);
    }
    return grads;
  }

  forward(xT: Float64Array, condition: Float64Array | null, t: number,
          h: number, w: number, cache?: Cache[]): Float64Array {
    if (h % 2 !== 0 || w % 2 !== 0 || h < 2 || w < 2) {
      throw new Error(`image dimensions must be even and >= 2, got ${h}x${w}`);
    }
    if (xT.length !== h * w) {
      throw new Error(`x_t has ${xT.length} values for ${h}x${w}`);
    }
    const { c1, c2, embedDim, hidden } = this.dims;
    const p = this.params;
    const plane = h * w;
    const half = (h / 2) * (w / 2);

    const input = new Float64Array(2 * plane);
    input.set(xT, 0);
    if (condition !== null) {
      input.set(condition, plane);
    }

    // timestep MLP -> per-channel scales and biases
    const emb = timestepEmbedding(t, embedDim);
    const mlpZ = new Float64Array(hidden);
    for (let i = 0; i < hidden; i++) {
      let acc = p.tmlp_b1.data[i];
      for (let j = 0; j < embedDim; j++) {
        acc += p.tmlp_w1.data[i * embedDim + j] * emb[j];
      }
      mlpZ[i] = acc;
    }
    const mlpA = new Float64Array(hidden);
    for (let i = 0; i < hidden; i++) {
      mlpA[i] = mlpZ[i] > 0 ? mlpZ[i] : 0;
    }
    const filmDim = 2 * c1 + 2 * c2;
    const film = new Float64Array(filmDim);
    for (let i = 0; i < filmDim; i++) {
      let acc = p.tmlp_b2.data[i];
      for (let j = 0; j < hidden; j++) {
        acc += p.tmlp_w2.data[i * hidden + j] * mlpA[j];
      }
      film[i] = acc;
    }
    const scale1 = film.subarray(0, c1);
    const bias1 = film.subarray(c1, 2 * c1);
    const scale2 = film.subarray(2 * c1, 2 * c1 + c2);
    const bias2 = film.subarray(2 * c1 + c2, filmDim);

    // encoder level 0
    const conv1Out = new Float64Array(c1 * plane);
    conv3x3(input, 2, h, w, p.conv1_w.data, p.conv1_b.data, c1, conv1Out);
    const f1 = new Float64Array(c1 * plane);
    for (let c = 0; c < c1; c++) {
      const s = 1 + scale1[c];
      const b = bias1[c];
      for (let i = 0; i < plane; i++) {
        const v = conv1Out[c * plane + i] * s + b;
        f1[c * plane + i] = v > 0 ? v : 0;
      }
    }

    // encoder level 1 (2x mean pooled)
    const pooled = new Float64Array(c1 * half);
    const hw2 = w / 2;
    for (let c = 0; c < c1; c++) {
      for (let y = 0; y < h / 2; y++) {
        for (let x = 0; x < hw2; x++) {
          const s = c * plane + 2 * y * w + 2 * x;
          pooled[c * half + y * hw2 + x] =
            0.25 * (f1[s] + f1[s + 1] + f1[s + w] + f1[s + w + 1]);
        }
      }
    }
    const conv2Out = new Float64Array(c2 * half);
    conv3x3(pooled, c1, h / 2, w / 2, p.conv2_w.data, p.conv2_b.data, c2, conv2Out);
    const f2 = new Float64Array(c2 * half);
    for (let c = 0; c < c2; c++) {
      const s = 1 + scale2[c];
      const b = bias2[c];
      for (let i = 0; i < half; i++) {
        const v = conv2Out[c * half + i] * s + b;
        f2[c * half + i] = v > 0 ? v : 0;
      }
    }

    // decoder: conv at low resolution, upsample, skip concat, project
    const z3 = new Float64Array(c1 * half);
    conv3x3(f2, c2, h / 2, w / 2, p.conv3_w.data, p.conv3_b.data, c1, z3);
    const h3 = new Float64Array(c1 * half);
    for (let i = 0; i < h3.length; i++) {
      h3[i] = z3[i] > 0 ? z3[i] : 0;
    }
    const cat = new Float64Array(2 * c1 * plane);
    for (let c = 0; c < c1; c++) {
      for (let y = 0; y < h; y++) {
        const sy = y >> 1;
        for (let x = 0; x < w; x++) {
          cat[c * plane + y * w + x] = h3[c * half + sy * hw2 + (x >> 1)];
        }
      }
    }
    cat.set(f1, c1 * plane);
    const out = new Float64Array(plane);
    conv3x3(cat, 2 * c1, h, w, p.conv4_w.data, p.conv4_b.data, 1, out);

    if (cache) {
      cache.push({ h, w, input, emb, mlpZ, mlpA, film, conv1Out, f1, pooled,
                   conv2Out, f2, z3, h3, cat });
    }
    return out;
  }

  /** Accumulates parameter gradients for one sample given dLoss/dOut. */
  backward(cache: Cache, dOut: Float64Array, grads: ParamDict): void {
    const { c1, c2, embedDim, hidden } = this.dims;
    const p = this.params;
    const { h, w } = cache;
    const plane = h * w;
    const half = (h / 2) * (w / 2);
    const hw2 = w / 2;
    const filmDim = 2 * c1 + 2 * c2;
    const scale1 = cache.film.subarray(0, c1);
    const scale2 = cache.film.subarray(2 * c1, 2 * c1 + c2);

    const dCat = new Float64Array(2 * c1 * plane);
    conv3x3Backward(cache.cat, 2 * c1, h, w, p.conv4_w.data, 1, dOut,
                    grads.conv4_w.data, grads.conv4_b.data, dCat);

    // upsampled branch: fold the 2x2 blocks back down, then relu'
    const dZ3 = new Float64Array(c1 * half);
    for (let c = 0; c < c1; c++) {
      for (let y = 0; y < h; y++) {
        const sy = y >> 1;
        for (let x = 0; x < w; x++) {
          dZ3[c * half + sy * hw2 + (x >> 1)] += dCat[c * plane + y * w + x];
        }
      }
    }
    for (let i = 0; i < dZ3.length; i++) {
      if (cache.z3[i] <= 0) dZ3[i] = 0;
    }
    const dF2 = new Float64Array(c2 * half);
    conv3x3Backward(cache.f2, c2, h / 2, w / 2, p.conv3_w.data, c1, dZ3,
                    grads.conv3_w.data, grads.conv3_b.data, dF2);

    // film2 + relu'
    const dFilm = new Float64Array(filmDim);
    const dConv2Out = new Float64Array(c2 * half);
    for (let c = 0; c < c2; c++) {
      const s = 1 + scale2[c];
      let dS = 0;
      let dB = 0;
      for (let i = 0; i < half; i++) {
        const idx = c * half + i;
        if (cache.f2[idx] <= 0) continue;
        const g = dF2[idx];
        dS += g * cache.conv2Out[idx];
        dB += g;
        dConv2Out[idx] = g * s;
      }
      dFilm[2 * c1 + c] += dS;
      dFilm[2 * c1 + c2 + c] += dB;
    }
    const dPooled = new Float64Array(c1 * half);
    conv3x3Backward(cache.pooled, c1, h / 2, w / 2, p.conv2_w.data, c2, dConv2Out,
                    grads.conv2_w.data, grads.conv2_b.data, dPooled);

    // skip branch plus unpooled branch join at f1
    const dF1 = new Float64Array(c1 * plane);
    dF1.set(dCat.subarray(c1 * plane));
    for (let c = 0; c < c1; c++) {
      for (let y = 0; y < h; y++) {
        const sy = y >> 1;
        for (let x = 0; x < w; x++) {
          dF1[c * plane + y * w + x] += 0.25 * dPooled[c * half + sy * hw2 + (x >> 1)];
        }
      }
    }
    const dConv1Out = new Float64Array(c1 * plane);
    for (let c = 0; c < c1; c++) {
      const s = 1 + scale1[c];
      let dS = 0;
      let dB = 0;
      for (let i = 0; i < plane; i++) {
        const idx = c * plane + i;
        if (cache.f1[idx] <= 0) continue;
        const g = dF1[idx];
        dS += g * cache.conv1Out[idx];
        dB += g;
        dConv1Out[idx] = g * s;
      }
      dFilm[c] += dS;
      dFilm[c1 + c] += dB;
    }
    conv3x3Backward(cache.input, 2, h, w, p.conv1_w.data, c1, dConv1Out,
                    grads.conv1_w.data, grads.conv1_b.data, null);

    // timestep MLP
    const dA = new Float64Array(hidden);
    for (let i = 0; i < filmDim; i++) {
      const g = dFilm[i];
      if (g === 0) continue;
      grads.tmlp_b2.data[i] += g;
      for (let j = 0; j < hidden; j++) {
        grads.tmlp_w2.data[i * hidden + j] += g * cache.mlpA[j];
        dA[j] += p.tmlp_w2.data[i * hidden + j] * g;
      }
    }
    for (let j = 0; j < hidden; j++) {
      if (cache.mlpZ[j] <= 0) continue;
      const g = dA[j];
      grads.tmlp_b1.data[j] += g;
      for (let k = 0; k < embedDim; k++) {
        grads.tmlp_w1.data[j * embedDim + k] += g * cache.emb[k];
      }
    }
  }

  /** Serving entry point: float32 in, float32 out, deterministic. */
  predict(xT: Float32Array, t: number, h: number, w: number,
          condition: Float32Array | null): Float32Array {
    const x = Float64Array.from(xT);
    const cond = condition === null ? null : Float64Array.from(condition);
    const out = this.forward(x, cond, t, h, w);
    const eps = new Float32Array(out.length);
    for (let i = 0; i < out.length; i++) {
      eps[i] = Math.fround(out[i]);
    }
    return eps;
  }
}

export class Adam {
  private m: { [name: string]: Float64Array } = {};
  private v: { [name: string]: Float64Array } = {};
  private step = 0;

  constructor(
    public lr: number,
    public beta1 = 0.9,
    public beta2 = 0.999,
    public eps = 1e-8,
  ) {}

  update(params: ParamDict, grads: ParamDict): void {
    this.step += 1;
    const bc1 = 1 - Math.pow(this.beta1, this.step);
    const bc2 = 1 - Math.pow(this.beta2, this.step);
    for (const name of Object.keys(params)) {
      const p = params[name].data;
      const g = grads[name].data;
      if (!(name in this.m)) {
        this.m[name] = new Float64Array(p.length);
        this.v[name] = new Float64Array(p.length);
      }
      const m = this.m[name];
      const v = this.v[name];
      for (let i = 0; i < p.length; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g[i] * g[i];
        p[i] -= (this.lr * (m[i] / bc1)) / (Math.sqrt(v[i] / bc2) + this.eps);
      }
    }
  }
}
