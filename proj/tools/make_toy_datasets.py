"""Regenerate the bundled toy evaluation datasets in data/toy (deterministic)."""
import json
import math
import random
from datetime import datetime
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "toy"

# name, freq, seasonal period of the signal, prediction length, context length, start
SPECS = [
    ("toy_hourly", "1H", 24, 24, 400, datetime(2021, 3, 1)),
    ("toy_daily", "1D", 7, 30, 300, datetime(2019, 1, 1)),
    ("toy_business", "1B", 5, 30, 250, datetime(2018, 1, 1)),
    ("toy_weekly", "1W", 52, 8, 160, datetime(2015, 1, 4)),
    ("toy_monthly", "1M", 12, 12, 120, datetime(2005, 1, 1)),
    ("toy_quarterly", "3M", 4, 8, 60, datetime(1995, 1, 1)),
]


def main():
    rng = random.Random(20240601)
    OUT.mkdir(parents=True, exist_ok=True)
    meta = {"datasets": []}
    for name, freq, period, horizon, n, start in SPECS:
        meta["datasets"].append({"name": name, "freq": freq, "prediction_length": horizon})
        with open(OUT / f"{name}.jsonl", "w") as f:
            for k in range(8):
                level = rng.uniform(5, 50)
                amp = rng.uniform(0.1, 0.5) * level
                slope = rng.uniform(-0.002, 0.004) * level
                phase = rng.uniform(0, 2 * math.pi)
                noise = rng.uniform(0.0, 0.08) * level
                vals = []
                for t in range(n + horizon):
                    v = level + slope * t + amp * math.sin(2 * math.pi * t / period + phase) + rng.gauss(0, noise)
                    vals.append(round(v, 4))
                rec = {"start": start.strftime("%Y-%m-%d %H:%M:%S"), "freq": freq, "target": vals, "item_id": f"{name}_{k}"}
                f.write(json.dumps(rec) + "\n")
    json.dump(meta, open(OUT / "meta.json", "w"), indent=2)


if __name__ == "__main__":
    main()
