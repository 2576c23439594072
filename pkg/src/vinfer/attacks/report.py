"""Pass-rate tables: for each layer statistic and threshold, the percentage
of attack attempts whose separation falls at or under the threshold, plus the
simultaneous all-layers row."""

import csv
from dataclasses import dataclass

from ..errors import VinferError

DEFAULT_THRESHOLDS = (1e-6, 6.7e-5, 4.6e-3, 0.308)
INVERSE_THRESHOLDS = (1e-4, 1e-3, 1e-2, 0.1)
METRICS = ("min", "mean", "max")


@dataclass
class PassRateTable:
    thresholds: tuple
    metrics: tuple
    num_layers: int
    rows: dict  # (metric, layer) -> [pct per threshold]; layer None = all-layers

    def pass_rate(self, metric, layer, threshold):
        return self.rows[(metric, layer)][self.thresholds.index(threshold)]

    def all_layers(self, metric, threshold):
        return self.pass_rate(metric, None, threshold)

    def render(self):
        widths = [max(10, len(f"{t:g}") + 2) for t in self.thresholds]
        head = "Metric  Layer      " + "".join(
            f"{t:>{w}g}" for t, w in zip(self.thresholds, widths)
        )
        lines = [head, "-" * len(head)]
        for metric in self.metrics:
            for layer in list(range(1, self.num_layers + 1)) + [None]:
                name = f"L{layer}" if layer else "All Layers"
                cells = "".join(
                    f"{v:>{w}.1f}" for v, w in zip(self.rows[(metric, layer)], widths)
                )
                lines.append(f"{metric:<7} {name:<10} {cells}")
            lines.append("")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "layer"] + [f"{t:g}" for t in self.thresholds])
            for (metric, layer), vals in sorted(
                self.rows.items(), key=lambda kv: (kv[0][0], kv[0][1] or 10**9)
            ):
                w.writerow([metric, f"L{layer}" if layer else "all"] + list(vals))


def pass_rate_table(results, thresholds=DEFAULT_THRESHOLDS, metrics=METRICS):
    usable = [r for r in results if r.per_layer]
    if not usable:
        raise VinferError("no attack results to tabulate")
    num_layers = len(usable[0].per_layer)
    thresholds = tuple(thresholds)
    rows = {}
    for metric in metrics:
        per_attempt = [[s.metric(metric) for s in r.per_layer] for r in usable]
        for layer in range(1, num_layers + 1):
            vals = [a[layer - 1] for a in per_attempt]
            rows[(metric, layer)] = [
                100.0 * sum(v <= t for v in vals) / len(vals) for t in thresholds
            ]
        rows[(metric, None)] = [
            100.0 * sum(all(v <= t for v in a) for a in per_attempt) / len(per_attempt)
            for t in thresholds
        ]
    return PassRateTable(thresholds, tuple(metrics), num_layers, rows)


def write_results_csv(results, path):
    """Raw per-attempt rows: (input id, round, layer, min, mean, max)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_id", "round", "layer", "min", "mean", "max"])
        for r in results:
            for layer, s in enumerate(r.per_layer, start=1):
                w.writerow([r.input_id, r.round_id, layer, s.minimum, s.mean, s.maximum])
