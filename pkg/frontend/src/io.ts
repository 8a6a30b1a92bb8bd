// On-disk array format shared with the reconstruction package: raw
// little-endian float32 payload at <path>, JSON sidecar at <path>.json with
// shape and kind metadata.

import * as fs from "node:fs";

export interface ArrayMeta {
  shape: number[];
  kind: "image" | "sinogram";
  angles?: number[];
  range?: string;
  created?: string;
}

export interface LoadedArray {
  values: Float64Array;
  meta: ArrayMeta;
}

export function sidecarPath(path: string): string {
  return `${path}.json`;
}

export function loadArray(path: string): LoadedArray {
  if (!fs.existsSync(path)) {
    throw new Error(`missing data file ${path}`);
  }
  const sidecar = sidecarPath(path);
  if (!fs.existsSync(sidecar)) {
    throw new Error(`missing sidecar ${sidecar}`);
  }
  const meta = JSON.parse(fs.readFileSync(sidecar, "utf-8")) as ArrayMeta;
  if (!Array.isArray(meta.shape) || meta.kind === undefined) {
    throw new Error(`sidecar ${sidecar} lacks shape/kind`);
  }
  const count = meta.shape.reduce((a, b) => a * b, 1);
  const raw = fs.readFileSync(path);
  if (raw.length !== count * 4) {
    throw new Error(`${path} holds ${raw.length} bytes, expected ${count * 4}`);
  }
  const view = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
  const values = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    values[i] = view.getFloat32(i * 4, true);
  }
  return { values, meta };
}

export function saveArray(path: string, values: ArrayLike<number>, meta: ArrayMeta): void {
  const count = meta.shape.reduce((a, b) => a * b, 1);
  if (values.length !== count) {
    throw new Error(`got ${values.length} values for shape ${meta.shape}`);
  }
  const buf = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) {
    buf.writeFloatLE(Math.fround(values[i]), i * 4);
  }
  fs.writeFileSync(path, buf);
  fs.writeFileSync(sidecarPath(path), `${JSON.stringify(meta, null, 2)}\n`);
}

/** Load a square image; throws if the file holds anything else. */
export function loadImage(path: string): { pixels: Float64Array; size: number } {
  const { values, meta } = loadArray(path);
  if (meta.kind !== "image") {
    throw new Error(`${path} holds a ${meta.kind}, expected an image`);
  }
  if (meta.shape.length !== 2 || meta.shape[0] !== meta.shape[1]) {
    throw new Error(`${path} is not square: shape ${meta.shape}`);
  }
  return { pixels: values, size: meta.shape[0] };
}
