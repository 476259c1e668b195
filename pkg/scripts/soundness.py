"""Random fixed-state instances: MILP verdict vs the oracle.

Uses the generator and comparison from tests/ (random boxes and formulas,
states on a half grid so no predicate sits on its boundary).

    python scripts/soundness.py --n 500 --seed 2024
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from harness import compare, valid_instances  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--max-agents", type=int, default=3)
    ap.add_argument("--max-horizon", type=int, default=6)
    ap.add_argument("--depth", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    insts = valid_instances(args.seed, args.n, max_agents=args.max_agents,
                            max_H=args.max_horizon, depth=args.depth)
    bad = [i for i, inst in enumerate(insts) if not compare(inst)]
    print(f"{args.n - len(bad)}/{args.n} agree  ({time.perf_counter() - t0:.1f} s)")
    for i in bad:
        print(f"  mismatch: instance {i}")
    sys.exit(1 if bad else 0)


if __name__ == "__main__":
    main()
