/** Bundled iris data plus the seeded synthetic two-classifier design:
 * both models share the class-A sample set and differ on class B. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { Rng } from "./rng.js";

const HERE = dirname(fileURLToPath(import.meta.url));

export interface Dataset {
  features: number[][];
  labels: number[];
}

export function loadIris(): Dataset {
  const raw = JSON.parse(
    readFileSync(join(HERE, "..", "data", "iris.json"), "utf-8"),
  );
  return { features: raw.features, labels: raw.labels };
}

function blob(rng: Rng, cx: number, cy: number, n: number, sigma = 0.08): number[][] {
  return Array.from({ length: n }, () => [cx + rng.normal() * sigma, cy + rng.normal() * sigma]);
}

export interface SyntheticPair {
  shared: number[][]; // class A, used by both models
  bForA: number[][]; // class B samples for the first model
  bForB: number[][]; // class B samples for the second model
}

export function syntheticPair(seed: number, perClass = 120): SyntheticPair {
  const rng = new Rng(seed);
  return {
    shared: blob(rng, 0.25, 0.3, perClass),
    bForA: blob(rng, 0.75, 0.7, perClass),
    bForB: blob(rng, 0.7, 0.2, perClass),
  };
}
