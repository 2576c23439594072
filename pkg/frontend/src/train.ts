/** Training specs and fixture export for the verification toolkit. */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

import { Dataset, loadIris, syntheticPair } from "./data.js";
import { MinMaxScaler, Mlp } from "./mlp.js";
import { modelToBinary, modelToJson, queriesToJson, sidecarToJson } from "./serialize.js";

export interface TrainSpec {
  dataset: "iris" | "synthetic-2d-pair";
  epochs: number;
  lr: number;
  momentum: number;
  seed: number;
  accuracyFloor: number;
}

export const IRIS_SPEC: TrainSpec = {
  dataset: "iris",
  epochs: 800,
  lr: 0.5,
  momentum: 0.9,
  seed: 2024,
  accuracyFloor: 0.9,
};

export const PAIR_SPEC: TrainSpec = {
  dataset: "synthetic-2d-pair",
  epochs: 600,
  lr: 0.5,
  momentum: 0,
  seed: 7,
  accuracyFloor: 0.9,
};

export interface TrainedModel {
  mlp: Mlp;
  accuracy: number;
  losses: number[];
  queries: number[][];
  labels: number[];
  logits: number[][];
  scaler: MinMaxScaler;
}

function fit(
  mlp: Mlp,
  xs: number[][],
  labels: number[],
  spec: TrainSpec,
): { accuracy: number; losses: number[] } {
  const losses: number[] = [];
  for (let e = 0; e < spec.epochs; e++)
    losses.push(mlp.trainEpoch(xs, labels, spec.lr, spec.momentum));
  // export precision is float32; accuracy and logits are reported after rounding
  mlp.roundToF32();
  const accuracy = mlp.accuracy(xs, labels);
  if (accuracy < spec.accuracyFloor) {
    throw new Error(
      `train accuracy ${accuracy.toFixed(3)} below floor ${spec.accuracyFloor}`,
    );
  }
  return { accuracy, losses };
}

export function trainIris(spec: TrainSpec = IRIS_SPEC): TrainedModel {
  const data = loadIris();
  const scaler = new MinMaxScaler().fit(data.features);
  const xs = scaler.transform(data.features).map((row) => row.map(Math.fround));
  const mlp = new Mlp({
    layerWidths: [4, 64, 32, 3],
    activations: ["relu", "relu", "identity"],
    seed: spec.seed,
  });
  const { accuracy, losses } = fit(mlp, xs, data.labels, spec);
  return {
    mlp,
    accuracy,
    losses,
    queries: xs,
    labels: data.labels,
    logits: xs.map((x) => mlp.logits(x)),
    scaler,
  };
}

export function trainPair(spec: TrainSpec = PAIR_SPEC): [TrainedModel, TrainedModel] {
  const pair = syntheticPair(spec.seed);
  const out: TrainedModel[] = [];
  for (const bSide of [pair.bForA, pair.bForB]) {
    const features = pair.shared.concat(bSide);
    const labels = pair.shared.map(() => 0).concat(bSide.map(() => 1));
    const scaler = new MinMaxScaler().fit(features);
    const xs = scaler.transform(features).map((row) => row.map(Math.fround));
    const mlp = new Mlp({
      layerWidths: [2, 16, 16, 2],
      activations: ["relu", "relu", "identity"],
      seed: spec.seed + out.length,
    });
    const { accuracy, losses } = fit(mlp, xs, labels, spec);
    out.push({
      mlp,
      accuracy,
      losses,
      queries: xs,
      labels,
      logits: xs.map((x) => mlp.logits(x)),
      scaler,
    });
  }
  return [out[0], out[1]];
}

function writeModelBundle(dir: string, name: string, trained: TrainedModel, seed: number) {
  writeFileSync(join(dir, `${name}_model.json`), modelToJson(trained.mlp));
  writeFileSync(join(dir, `${name}_model.bin`), modelToBinary(trained.mlp));
  writeFileSync(join(dir, `${name}_queries.json`), queriesToJson(trained.queries));
  writeFileSync(
    join(dir, `${name}_logits.json`),
    sidecarToJson({
      logits: trained.logits,
      trainAccuracy: trained.accuracy,
      scalerMin: trained.scaler.min,
      scalerMax: trained.scaler.max,
      seed,
      labels: trained.labels,
    }),
  );
}

export function exportIris(outDir: string, spec: TrainSpec = IRIS_SPEC): TrainedModel {
  mkdirSync(outDir, { recursive: true });
  const trained = trainIris(spec);
  writeModelBundle(outDir, "iris", trained, spec.seed);
  return trained;
}

export function exportPair(outDir: string, spec: TrainSpec = PAIR_SPEC): [TrainedModel, TrainedModel] {
  mkdirSync(outDir, { recursive: true });
  const [a, b] = trainPair(spec);
  writeModelBundle(outDir, "pair_a", a, spec.seed);
  writeModelBundle(outDir, "pair_b", b, spec.seed + 1);
  return [a, b];
}
