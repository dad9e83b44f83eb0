#!/usr/bin/env python3
"""Recount a run directory's summary from its per-frame log.

usage: recount.py RUN_DIR

Exits 0 when summary.json agrees with frames.csv, 1 otherwise.
"""

import csv
import json
import sys
from collections import Counter
from pathlib import Path


def recount(run_dir):
    with open(run_dir / "frames.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    n = len(rows)
    reliable = sum(1 for r in rows if r["reliable"] == "1")
    return {
        "frames": n,
        "reliable_frames": reliable,
        "reliability_pct": 100.0 * reliable / n if n else 0.0,
        "avg_pq": sum(float(r["quality"]) for r in rows) / n if n else 0.0,
        "avg_recon_s": sum(float(r["recon_s"]) for r in rows) / n if n else 0.0,
        "avg_total_s": sum(float(r["total_s"]) for r in rows) / n if n else 0.0,
        "camera_subset_histogram": dict(Counter(r["mask"] for r in rows)),
        "server_histogram": {k: v for k, v in Counter(r["server"] for r in rows).items()},
    }


def main():
    run_dir = Path(sys.argv[1])
    summary = json.loads((run_dir / "summary.json").read_text())
    mine = recount(run_dir)
    problems = []
    for key in ("frames", "reliable_frames"):
        if summary[key] != mine[key]:
            problems.append(f"{key}: summary {summary[key]} recount {mine[key]}")
    for key in ("reliability_pct", "avg_pq", "avg_recon_s", "avg_total_s"):
        if abs(summary[key] - mine[key]) > 1e-9 * max(1.0, abs(mine[key])):
            problems.append(f"{key}: summary {summary[key]} recount {mine[key]}")
    for key in ("camera_subset_histogram", "server_histogram"):
        theirs = {str(k): v for k, v in summary[key].items()}
        if theirs != mine[key]:
            problems.append(f"{key} differs")
    if problems:
        print("\n".join(problems))
        return 1
    print(f"ok: {mine['reliable_frames']}/{mine['frames']} reliable ({mine['reliability_pct']:.2f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
