/**
 * Bridge to the depth toolkit for TypeScript callers.
 *
 * The toolkit is consumed strictly through its public surface: depth maps
 * and images are serialised to PFM/PPM in a scratch directory, the CLI
 * runs on them, and its `key=value` output (plus the exported gradient
 * file) is parsed back.  Caller buffers are never mutated.
 */

import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { numberField, parseKeyValues, runCli } from "./cli.js";
import {
  GridView,
  ImageView,
  readPfmGrid,
  writeDepthPfm,
  writeRgbPpm,
} from "./formats.js";
import { EndogeoError } from "./errors.js";

export { EndogeoError } from "./errors.js";
export { GridView, ImageView, readPfmGrid, writeDepthPfm, writeRgbPpm } from "./formats.js";

/** Matches the toolkit's version. */
export const version = "0.1.0";

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export interface LossWeights {
  lambda1: number;
  lambda2: number;
  lambda3: number;
}

export type GridResolution = [number, number, number];

export interface LossTerms {
  depth: number;
  smooth: number;
  grad: number;
  normal: number;
  sdf: number;
  total: number;
}

export interface LossResult {
  terms: LossTerms;
  /** d(total)/d(pred), float32 precision (it round-trips through a PFM). */
  gradient: GridView;
}

export interface MetricsResult {
  rmse: number;
  rmse_log: number;
  abs_rel: number;
  sq_rel: number;
  a1: number;
  a2: number;
  a3: number;
  n_valid: number;
}

const DEFAULT_WEIGHTS: LossWeights = { lambda1: 1.0, lambda2: 0.5, lambda3: 0.1 };
const DEFAULT_GRID: GridResolution = [16, 16, 16];

function withScratchDir<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "endogeo-bridge-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function requireSameShape(pred: GridView, gt: GridView): void {
  if (pred.height !== gt.height || pred.width !== gt.width) {
    throw new EndogeoError(
      "ShapeMismatch",
      `pred is ${pred.height}x${pred.width}, gt is ${gt.height}x${gt.width}`,
    );
  }
}

function intrinsicsFlags(intrinsics?: Intrinsics): string[] {
  if (intrinsics === undefined) return [];
  return [
    "--fx", String(intrinsics.fx),
    "--fy", String(intrinsics.fy),
    "--cx", String(intrinsics.cx),
    "--cy", String(intrinsics.cy),
  ];
}

/**
 * Evaluate the full loss suite between two depth maps.
 *
 * Returns every term plus the weighted total and the gradient of the total
 * with respect to the prediction.  Equals a by-hand `endogeo loss` run on
 * the same data.
 */
export function bridgeLossTotal(
  pred: GridView,
  gt: GridView,
  image: ImageView,
  intrinsics?: Intrinsics,
  weights: LossWeights = DEFAULT_WEIGHTS,
  grid: GridResolution = DEFAULT_GRID,
): LossResult {
  requireSameShape(pred, gt);
  return withScratchDir((dir) => {
    const predPath = join(dir, "pred.pfm");
    const gtPath = join(dir, "gt.pfm");
    const imagePath = join(dir, "image.ppm");
    const gradPath = join(dir, "grad.pfm");
    writeDepthPfm(pred, predPath);
    writeDepthPfm(gt, gtPath);
    writeRgbPpm(image, imagePath);

    const stdout = runCli([
      "loss",
      "--pred", predPath,
      "--gt", gtPath,
      "--image", imagePath,
      "--lambda1", String(weights.lambda1),
      "--lambda2", String(weights.lambda2),
      "--lambda3", String(weights.lambda3),
      "--grid", grid.join(","),
      "--grad-out", gradPath,
      ...intrinsicsFlags(intrinsics),
    ]);
    const fields = parseKeyValues(stdout);
    return {
      terms: {
        depth: numberField(fields, "depth"),
        smooth: numberField(fields, "smooth"),
        grad: numberField(fields, "grad"),
        normal: numberField(fields, "normal"),
        sdf: numberField(fields, "sdf"),
        total: numberField(fields, "total"),
      },
      gradient: readPfmGrid(gradPath),
    };
  });
}

/**
 * Depth evaluation metrics between two maps, optionally after rescaling
 * the prediction by the median ground-truth/prediction ratio.
 */
export function bridgeMetrics(
  pred: GridView,
  gt: GridView,
  medianScale = false,
): MetricsResult {
  requireSameShape(pred, gt);
  return withScratchDir((dir) => {
    const predPath = join(dir, "pred.pfm");
    const gtPath = join(dir, "gt.pfm");
    writeDepthPfm(pred, predPath);
    writeDepthPfm(gt, gtPath);

    const args = ["eval", "--pred", predPath, "--gt", gtPath];
    if (medianScale) args.push("--median-scale");
    const fields = parseKeyValues(runCli(args));
    return {
      rmse: numberField(fields, "rmse"),
      rmse_log: numberField(fields, "rmse_log"),
      abs_rel: numberField(fields, "abs_rel"),
      sq_rel: numberField(fields, "sq_rel"),
      a1: numberField(fields, "a1"),
      a2: numberField(fields, "a2"),
      a3: numberField(fields, "a3"),
      n_valid: numberField(fields, "n_valid"),
    };
  });
}

export const bridge_loss_total = bridgeLossTotal;
export const bridge_metrics = bridgeMetrics;
