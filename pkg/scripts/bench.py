"""Time and memory of joint vertex-edge training and inference versus n.

Writes a CSV with columns n_verts, train_time_s, train_mem_gb, infer_time_s,
infer_mem_gb and prints it. Memory is the tracemalloc peak of one step.

    python3 scripts/bench.py --n 100,200,300,400 --out runs/bench.csv
"""

from __future__ import annotations

import argparse
from pathlib import Path

from scanmesh.train import bench_scaling, write_bench_csv


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="100,200,300,400")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--batch-size", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/bench.csv"))
    args = ap.parse_args(argv)
    rows = bench_scaling([int(x) for x in args.n.split(",")], args.batch_size, args.repeats, args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    print(write_bench_csv(rows, args.out).read_text(), end="")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
