/**
 * Minimal dense MLP with softmax cross-entropy training, full batch gradient
 * descent. Weights live in plain number[][] (row = input index, col = output
 * neuron), matching the layout the verification toolkit commits to.
 */

import { Rng } from "./rng.js";

export type Activation = "relu" | "sigmoid" | "identity";

export interface MlpSpec {
  layerWidths: number[]; // d_0..d_L
  activations: Activation[]; // per weighted layer; last is usually identity
  seed: number;
}

export interface Layer {
  weights: number[][]; // d_{l-1} x d_l
  bias: number[]; // d_l
  activation: Activation;
}

export class Mlp {
  readonly layers: Layer[];
  readonly layerWidths: number[];
  private velocity: { w: number[][]; b: number[] }[] | null = null;

  constructor(spec: MlpSpec) {
    if (spec.activations.length !== spec.layerWidths.length - 1) {
      throw new Error("need one activation per weighted layer");
    }
    const rng = new Rng(spec.seed);
    this.layerWidths = spec.layerWidths.slice();
    this.layers = [];
    for (let l = 1; l < spec.layerWidths.length; l++) {
      const dIn = spec.layerWidths[l - 1];
      const dOut = spec.layerWidths[l];
      const scale = Math.sqrt(2.0 / dIn); // He init for the ReLU stacks
      const weights = Array.from({ length: dIn }, () =>
        Array.from({ length: dOut }, () => rng.normal() * scale),
      );
      const bias = new Array(dOut).fill(0);
      this.layers.push({ weights, bias, activation: spec.activations[l - 1] });
    }
  }

  private act(z: number, kind: Activation): number {
    if (kind === "relu") return z > 0 ? z : 0;
    if (kind === "sigmoid") return 1 / (1 + Math.exp(-z));
    return z;
  }

  private actGrad(z: number, a: number, kind: Activation): number {
    if (kind === "relu") return z > 0 ? 1 : 0;
    if (kind === "sigmoid") return a * (1 - a);
    return 1;
  }

  /** Forward pass; returns activations per layer (index 0 = input). */
  forwardFull(x: number[]): { acts: number[][]; pre: number[][] } {
    const acts: number[][] = [x.slice()];
    const pre: number[][] = [[]];
    for (const layer of this.layers) {
      const prev = acts[acts.length - 1];
      const z = layer.bias.slice();
      for (let i = 0; i < layer.weights.length; i++) {
        const a = prev[i];
        const row = layer.weights[i];
        for (let j = 0; j < row.length; j++) z[j] += a * row[j];
      }
      pre.push(z);
      acts.push(z.map((v) => this.act(v, layer.activation)));
    }
    return { acts, pre };
  }

  logits(x: number[]): number[] {
    const { acts } = this.forwardFull(x);
    return acts[acts.length - 1];
  }

  predict(x: number[]): number {
    const out = this.logits(x);
    let best = 0;
    for (let i = 1; i < out.length; i++) if (out[i] > out[best]) best = i;
    return best;
  }

  accuracy(xs: number[][], labels: number[]): number {
    let hit = 0;
    for (let i = 0; i < xs.length; i++) if (this.predict(xs[i]) === labels[i]) hit++;
    return hit / xs.length;
  }

  /**
   * One full-batch epoch of softmax cross-entropy gradient descent, with
   * optional heavy-ball momentum. Returns the mean loss before the update.
   */
  trainEpoch(xs: number[][], labels: number[], lr: number, momentum = 0): number {
    const gw = this.layers.map((l) =>
      l.weights.map((row) => new Array(row.length).fill(0)),
    );
    const gb = this.layers.map((l) => new Array(l.bias.length).fill(0));
    let totalLoss = 0;
    const n = xs.length;

    for (let s = 0; s < n; s++) {
      const { acts, pre } = this.forwardFull(xs[s]);
      const out = acts[acts.length - 1];
      // softmax + CE
      const m = Math.max(...out);
      const exps = out.map((v) => Math.exp(v - m));
      const Z = exps.reduce((a, b) => a + b, 0);
      const probs = exps.map((e) => e / Z);
      totalLoss += -Math.log(Math.max(probs[labels[s]], 1e-12));

      // delta at the logits
      let delta = probs.map((p, j) => (p - (j === labels[s] ? 1 : 0)) / n);
      for (let l = this.layers.length - 1; l >= 0; l--) {
        const layer = this.layers[l];
        const aPrev = acts[l];
        const dz = delta.map(
          (d, j) => d * this.actGrad(pre[l + 1][j], acts[l + 1][j], layer.activation),
        );
        for (let i = 0; i < layer.weights.length; i++) {
          const gRow = gw[l][i];
          const a = aPrev[i];
          for (let j = 0; j < dz.length; j++) gRow[j] += a * dz[j];
        }
        for (let j = 0; j < dz.length; j++) gb[l][j] += dz[j];
        if (l > 0) {
          const next = new Array(aPrev.length).fill(0);
          for (let i = 0; i < aPrev.length; i++) {
            const row = this.layers[l].weights[i];
            let acc = 0;
            for (let j = 0; j < dz.length; j++) acc += row[j] * dz[j];
            next[i] = acc;
          }
          delta = next;
        }
      }
    }

    if (momentum > 0 && this.velocity === null) {
      this.velocity = this.layers.map((l) => ({
        w: l.weights.map((row) => new Array(row.length).fill(0)),
        b: new Array(l.bias.length).fill(0),
      }));
    }
    for (let l = 0; l < this.layers.length; l++) {
      const layer = this.layers[l];
      for (let i = 0; i < layer.weights.length; i++)
        for (let j = 0; j < layer.weights[i].length; j++) {
          let step = gw[l][i][j];
          if (momentum > 0) {
            const v = this.velocity![l].w[i];
            v[j] = momentum * v[j] + step;
            step = v[j];
          }
          layer.weights[i][j] -= lr * step;
        }
      for (let j = 0; j < layer.bias.length; j++) {
        let step = gb[l][j];
        if (momentum > 0) {
          const v = this.velocity![l].b;
          v[j] = momentum * v[j] + step;
          step = v[j];
        }
        layer.bias[j] -= lr * step;
      }
    }
    return totalLoss / n;
  }

  /** Round every parameter to float32, the canonical export precision. */
  roundToF32(): void {
    for (const layer of this.layers) {
      for (const row of layer.weights)
        for (let j = 0; j < row.length; j++) row[j] = Math.fround(row[j]);
      for (let j = 0; j < layer.bias.length; j++)
        layer.bias[j] = Math.fround(layer.bias[j]);
    }
  }
}

/** Per-feature min-max scaler to [0, 1]. */
export class MinMaxScaler {
  min: number[] = [];
  max: number[] = [];

  fit(xs: number[][]): this {
    const d = xs[0].length;
    this.min = new Array(d).fill(Infinity);
    this.max = new Array(d).fill(-Infinity);
    for (const x of xs)
      for (let i = 0; i < d; i++) {
        if (x[i] < this.min[i]) this.min[i] = x[i];
        if (x[i] > this.max[i]) this.max[i] = x[i];
      }
    return this;
  }

  transform(xs: number[][]): number[][] {
    return xs.map((x) =>
      x.map((v, i) => {
        const span = this.max[i] - this.min[i];
        return span > 0 ? (v - this.min[i]) / span : 0;
      }),
    );
  }
}
