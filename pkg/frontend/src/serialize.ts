/**
 * Writers for the canonical model file formats the verification toolkit
 * consumes: the self-describing JSON text form and the binary form (magic
 * VINF-MDL, little-endian float32 matrices, row-major).
 */

import { Mlp } from "./mlp.js";

export function modelToJson(mlp: Mlp, outFn: "identity" | "softmax" = "identity"): string {
  const doc = {
    version: 1,
    layer_widths: mlp.layerWidths,
    activation: mlp.layers.map((l) => l.activation),
    out_fn: outFn,
    has_bias: true,
    layers: mlp.layers.map((l) => ({
      weights: l.weights.map((row) => row.map((v) => Math.fround(v))),
      bias: l.bias.map((v) => Math.fround(v)),
    })),
  };
  return JSON.stringify(doc, null, 1);
}

export function modelToBinary(mlp: Mlp, outFn: "identity" | "softmax" = "identity"): Buffer {
  const widths = mlp.layerWidths;
  const L = widths.length - 1;
  const actCode = { identity: 0, relu: 1, sigmoid: 2 } as const;

  const chunks: Buffer[] = [];
  chunks.push(Buffer.from("VINF-MDL", "ascii"));
  const head = Buffer.alloc(8);
  head.writeUInt32LE(1, 0);
  head.writeUInt32LE(L, 4);
  chunks.push(head);
  const wbuf = Buffer.alloc(8 * widths.length);
  widths.forEach((w, i) => wbuf.writeBigUInt64LE(BigInt(w), i * 8));
  chunks.push(wbuf);
  chunks.push(Buffer.from(mlp.layers.map((l) => actCode[l.activation])));
  chunks.push(Buffer.from([outFn === "softmax" ? 1 : 0, 1]));

  for (const layer of mlp.layers) {
    const flat = new Float32Array(layer.weights.length * layer.weights[0].length);
    let k = 0;
    for (const row of layer.weights) for (const v of row) flat[k++] = v;
    chunks.push(Buffer.from(flat.buffer.slice(0)));
    chunks.push(Buffer.from(new Float32Array(layer.bias).buffer.slice(0)));
  }
  return Buffer.concat(chunks);
}

export function queriesToJson(queries: number[][]): string {
  return JSON.stringify({
    version: 1,
    queries: queries.map((q) => q.map((v) => Math.fround(v))),
  });
}

/** Sidecar with the trainer's own logits plus provenance for cross-checks. */
export function sidecarToJson(fields: {
  logits: number[][];
  trainAccuracy?: number;
  scalerMin?: number[];
  scalerMax?: number[];
  seed: number;
  labels?: number[];
}): string {
  return JSON.stringify(
    {
      version: 1,
      logits: fields.logits,
      train_accuracy: fields.trainAccuracy,
      scaler: fields.scalerMin ? { min: fields.scalerMin, max: fields.scalerMax } : null,
      seed: fields.seed,
      labels: fields.labels,
    },
    null,
    1,
  );
}
