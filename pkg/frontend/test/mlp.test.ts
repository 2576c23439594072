import { describe, expect, it } from "vitest";

import { MinMaxScaler, Mlp } from "../src/mlp.js";
import { Rng } from "../src/rng.js";

describe("rng", () => {
  it("is deterministic per seed", () => {
    const a = new Rng(5);
    const b = new Rng(5);
    const c = new Rng(6);
    const seqA = Array.from({ length: 10 }, () => a.next());
    const seqB = Array.from({ length: 10 }, () => b.next());
    const seqC = Array.from({ length: 10 }, () => c.next());
    expect(seqA).toEqual(seqB);
    expect(seqA).not.toEqual(seqC);
  });

  it("normal has roughly unit scale", () => {
    const rng = new Rng(1);
    const xs = Array.from({ length: 4000 }, () => rng.normal());
    const mean = xs.reduce((a, b) => a + b, 0) / xs.length;
    const varc = xs.reduce((a, b) => a + (b - mean) ** 2, 0) / xs.length;
    expect(Math.abs(mean)).toBeLessThan(0.1);
    expect(Math.abs(varc - 1)).toBeLessThan(0.15);
  });
});

describe("scaler", () => {
  it("maps fitted data to [0, 1]", () => {
    const xs = [
      [1, 10],
      [3, 20],
      [2, 15],
    ];
    const scaled = new MinMaxScaler().fit(xs).transform(xs);
    for (const row of scaled) for (const v of row) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
    expect(scaled[0]).toEqual([0, 0]);
    expect(scaled[1]).toEqual([1, 1]);
  });

  it("is idempotent on [0, 1]-ranged data", () => {
    const xs = [
      [0, 0.5],
      [1, 0],
      [0.25, 1],
    ];
    const once = new MinMaxScaler().fit(xs).transform(xs);
    const twice = new MinMaxScaler().fit(once).transform(once);
    expect(twice).toEqual(once);
  });
});

describe("mlp", () => {
  it("forward matches a hand computation on a 1-1 identity net", () => {
    const mlp = new Mlp({ layerWidths: [1, 1], activations: ["identity"], seed: 0 });
    mlp.layers[0].weights = [[2]];
    mlp.layers[0].bias = [0.5];
    expect(mlp.logits([3])[0]).toBeCloseTo(6.5, 12);
  });

  it("relu clamps", () => {
    const mlp = new Mlp({ layerWidths: [1, 1], activations: ["relu"], seed: 0 });
    mlp.layers[0].weights = [[1]];
    mlp.layers[0].bias = [0];
    expect(mlp.logits([-2])[0]).toBe(0);
  });

  it("training reduces the loss on a toy separable problem", () => {
    const xs = [
      [0, 0],
      [0, 1],
      [1, 0],
      [1, 1],
    ];
    const labels = [0, 0, 1, 1];
    const mlp = new Mlp({
      layerWidths: [2, 8, 2],
      activations: ["relu", "identity"],
      seed: 3,
    });
    const first = mlp.trainEpoch(xs, labels, 0.5);
    let last = first;
    for (let i = 0; i < 300; i++) last = mlp.trainEpoch(xs, labels, 0.5);
    expect(last).toBeLessThan(first / 4);
    expect(mlp.accuracy(xs, labels)).toBe(1);
  });

  it("same seed trains to identical weights", () => {
    const make = () => {
      const mlp = new Mlp({
        layerWidths: [2, 4, 2],
        activations: ["relu", "identity"],
        seed: 11,
      });
      for (let i = 0; i < 50; i++)
        mlp.trainEpoch([[0.1, 0.9], [0.8, 0.2]], [0, 1], 0.3);
      mlp.roundToF32();
      return mlp.layers.map((l) => l.weights.flat().concat(l.bias)).flat();
    };
    expect(make()).toEqual(make());
  });
});
