/** Usage: node dist/cli.js <iris|pair|all> [--out-dir DIR] [--seed N]
 *         [--epochs N] [--lr X]
 * Exit 1 when training misses the accuracy floor. */

import { exportIris, exportPair, IRIS_SPEC, PAIR_SPEC, TrainSpec } from "./train.js";

function parseArgs(argv: string[]): { cmd: string; outDir: string; overrides: Partial<TrainSpec> } {
  const cmd = argv[0] ?? "all";
  let outDir = "out";
  const overrides: Partial<TrainSpec> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const val = argv[i + 1];
    if (key === "--out-dir") outDir = val;
    else if (key === "--seed") overrides.seed = Number(val);
    else if (key === "--epochs") overrides.epochs = Number(val);
    else if (key === "--lr") overrides.lr = Number(val);
    else if (key === "--momentum") overrides.momentum = Number(val);
    else throw new Error(`unknown flag ${key}`);
  }
  return { cmd, outDir, overrides };
}

function main(): number {
  const { cmd, outDir, overrides } = parseArgs(process.argv.slice(2));
  try {
    if (cmd === "iris" || cmd === "all") {
      const trained = exportIris(outDir, { ...IRIS_SPEC, ...overrides });
      console.log(
        JSON.stringify({ dataset: "iris", accuracy: trained.accuracy, outDir }),
      );
    }
    if (cmd === "pair" || cmd === "all") {
      const [a, b] = exportPair(outDir, { ...PAIR_SPEC, ...overrides });
      console.log(
        JSON.stringify({
          dataset: "synthetic-2d-pair",
          accuracy: [a.accuracy, b.accuracy],
          outDir,
        }),
      );
    }
    if (!["iris", "pair", "all"].includes(cmd)) {
      console.error(JSON.stringify({ error: `unknown command ${cmd}` }));
      return 2;
    }
    return 0;
  } catch (err) {
    console.error(JSON.stringify({ error: String(err) }));
    return 1;
  }
}

process.exit(main());
