"""Model size against the horizon for a fixed task structure.

Prints binaries / variables / constraints per H and a least-squares line
through the binary counts.

    python scripts/horizon_sweep.py scenarios/example1_case1.yaml 9 30 --step 3
"""

import argparse

from syncstl.cli import run_inspect
from syncstl.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario")
    ap.add_argument("first", type=int)
    ap.add_argument("last", type=int)
    ap.add_argument("--step", type=int, default=1)
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    rep = run_inspect(sc, horizons=range(args.first, args.last + 1, args.step))
    print(f"{'H':>4} {'binaries':>9} {'variables':>10} {'constraints':>12}")
    for r in rep["sweep"]["rows"]:
        print(f"{r['horizon']:>4} {r['binaries']:>9} {r['variables']:>10} {r['constraints']:>12}")
    fit = rep["sweep"].get("fit")
    if fit:
        print(f"binaries ~ {fit['slope']:.2f} H + {fit['intercept']:.1f}   (R^2 = {fit['r2']:.6f})")


if __name__ == "__main__":
    main()
