/**
 * File codecs shared with the depth toolkit.
 *
 * Depth grids travel as grayscale PFM: header `Pf\n{width} {height}\n-1.0\n`
 * (the negative scale marks little-endian), then float32 rows stored
 * bottom-to-top.  Depth files use -1.0 as the invalid-pixel sentinel; raw
 * grids (gradients) carry arbitrary finite values with no sentinel.
 * Images travel as binary PPM, maxval 255, half-up quantisation.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { EndogeoError } from "./errors.js";

/** Row-major (height x width) float64 grid; mask entry 0 marks an invalid pixel. */
export interface GridView {
  data: Float64Array;
  height: number;
  width: number;
  mask?: Uint8Array;
}

/** Row-major (height x width x 3) RGB values in [0, 1]. */
export interface ImageView {
  data: Float64Array;
  height: number;
  width: number;
}

const MASK_SENTINEL = -1.0;

function checkGrid(view: GridView): void {
  const n = view.height * view.width;
  if (view.height < 1 || view.width < 1 || view.data.length !== n) {
    throw new EndogeoError(
      "ShapeMismatch",
      `grid view claims ${view.height}x${view.width} but holds ${view.data.length} values`,
    );
  }
  if (view.mask !== undefined && view.mask.length !== n) {
    throw new EndogeoError(
      "ShapeMismatch",
      `mask holds ${view.mask.length} entries, expected ${n}`,
    );
  }
}

/** Write a depth grid as PFM; masked pixels become the -1.0 sentinel. */
export function writeDepthPfm(view: GridView, path: string): void {
  checkGrid(view);
  const { height: h, width: w, data, mask } = view;
  const header = Buffer.from(`Pf\n${w} ${h}\n-1.0\n`, "ascii");
  const body = Buffer.allocUnsafe(h * w * 4);
  let offset = 0;
  for (let r = h - 1; r >= 0; r--) {
    for (let c = 0; c < w; c++) {
      const i = r * w + c;
      const valid = mask === undefined || mask[i] !== 0;
      body.writeFloatLE(valid ? data[i] : MASK_SENTINEL, offset);
      offset += 4;
    }
  }
  writeFileSync(path, Buffer.concat([header, body]));
}

/** Read a raw grayscale PFM grid (no sentinel semantics, e.g. gradients). */
export function readPfmGrid(path: string): GridView {
  const blob = readFileSync(path);
  const fields: string[] = [];
  let cursor = 0;
  for (let i = 0; i < 3; i++) {
    const nl = blob.indexOf(0x0a, cursor);
    if (nl < 0) {
      throw new EndogeoError("MalformedHeader", `${path}: truncated PFM header`);
    }
    fields.push(blob.subarray(cursor, nl).toString("ascii"));
    cursor = nl + 1;
  }
  if (fields[0] !== "Pf") {
    throw new EndogeoError("MalformedHeader", `${path}: bad magic ${JSON.stringify(fields[0])}`);
  }
  const dims = fields[1].split(/\s+/).map(Number);
  const scale = Number(fields[2]);
  if (dims.length !== 2 || !dims.every(Number.isInteger) || Number.isNaN(scale)) {
    throw new EndogeoError("MalformedHeader", `${path}: unparseable dimensions or scale`);
  }
  const [w, h] = dims;
  if (w < 1 || h < 1) {
    throw new EndogeoError("MalformedHeader", `${path}: bad dimensions ${w}x${h}`);
  }
  if (scale >= 0.0) {
    throw new EndogeoError("MalformedHeader", `${path}: only little-endian (negative scale) supported`);
  }
  const body = blob.subarray(cursor);
  if (body.length !== w * h * 4) {
    throw new EndogeoError(
      "MalformedHeader",
      `${path}: payload holds ${body.length} bytes, expected ${w * h * 4}`,
    );
  }
  const data = new Float64Array(h * w);
  let offset = 0;
  for (let r = h - 1; r >= 0; r--) {
    for (let c = 0; c < w; c++) {
      data[r * w + c] = body.readFloatLE(offset);
      offset += 4;
    }
  }
  return { data, height: h, width: w };
}

/** Write an RGB image as binary PPM, quantising by floor(v * 255 + 0.5). */
export function writeRgbPpm(view: ImageView, path: string): void {
  const n = view.height * view.width * 3;
  if (view.height < 1 || view.width < 1 || view.data.length !== n) {
    throw new EndogeoError(
      "ShapeMismatch",
      `image view claims ${view.height}x${view.width}x3 but holds ${view.data.length} values`,
    );
  }
  const header = Buffer.from(`P6\n${view.width} ${view.height}\n255\n`, "ascii");
  const body = Buffer.allocUnsafe(n);
  for (let i = 0; i < n; i++) {
    const q = Math.floor(view.data[i] * 255.0 + 0.5);
    body[i] = Math.min(255, Math.max(0, q));
  }
  writeFileSync(path, Buffer.concat([header, body]));
}
