#!/usr/bin/env python3
"""Writes the synthetic 123-region carbon-intensity fixture.

Region averages span 14.96 to 947 gCO2eq/kWh with a mean of 369.74. Each
region gets 72 hourly samples arranged in +/- pairs around its average, so
the arithmetic mean of every file equals its average exactly (values carry
two decimals).
"""

import argparse
import math
import pathlib
import random
from datetime import datetime, timedelta, timezone

REGIONS = 123
MIN_CENTI = 1496
MAX_CENTI = 94700
MEAN_CENTI = 36974
HOURS = 72


def region_averages(rng):
    total = MEAN_CENTI * REGIONS - MIN_CENTI - MAX_CENTI
    raw = [2000 + 88000 * (i / (REGIONS - 1)) ** 1.35 for i in range(1, REGIONS - 1)]
    scale = total / sum(raw)
    interior = [round(v * scale) for v in raw]
    # Put the rounding residual on the middle regions one centi-unit at a time.
    residual = total - sum(interior)
    i = len(interior) // 2
    while residual != 0:
        step = 1 if residual > 0 else -1
        interior[i] += step
        residual -= step
        i = (i + 1) % len(interior)
    assert all(MIN_CENTI < v < MAX_CENTI for v in interior)
    values = [MIN_CENTI, MAX_CENTI] + interior
    rng.shuffle(values)
    return values


def trace_rows(avg_centi, phase, start):
    half = HOURS // 2
    deltas = [round(0.25 * avg_centi * math.sin(2 * math.pi * h / 24 + phase)) for h in range(half)]
    samples = [avg_centi + d for d in deltas] + [avg_centi - d for d in deltas]
    for h, centi in enumerate(samples):
        stamp = (start + timedelta(hours=h)).strftime("%Y-%m-%dT%H:%M:%SZ")
        yield f"{stamp},{centi // 100}.{centi % 100:02d}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=pathlib.Path, help="output directory")
    parser.add_argument("--seed", type=int, default=2021)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    start = datetime(2021, 3, 1, tzinfo=timezone.utc)
    for idx, avg in enumerate(region_averages(rng), start=1):
        phase = rng.uniform(0, 2 * math.pi)
        rows = "\n".join(["timestamp,intensity", *trace_rows(avg, phase, start)])
        (args.out / f"zone_{idx:03d}.csv").write_text(rows + "\n")


if __name__ == "__main__":
    main()
