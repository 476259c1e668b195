"""Plan one or more scenarios and print a one-line result per run.

    python scripts/run_case.py scenarios/desk.yaml
    python scripts/run_case.py scenarios/example1_case*.yaml --time-limit 600 --out runs
"""

import argparse
from pathlib import Path

from syncstl.cli import run_plan
from syncstl.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenarios", nargs="+")
    ap.add_argument("--time-limit", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="runs", help="parent directory for run outputs")
    args = ap.parse_args()

    print(f"{'scenario':<18} {'status':<10} {'obj':>8} {'gap':>8} {'rho':>4} "
          f"{'start':>5} {'dur':>4} {'solve s':>8}")
    for path in args.scenarios:
        sc = load_scenario(path)
        o = run_plan(sc, Path(args.out) / sc.name, time_limit=args.time_limit, seed=args.seed)
        rep = o.report
        solver = rep.get("solver", {})
        sync = next(iter(rep.get("oracle", {}).get("sync", {}).values()), {})
        obj, gap = solver.get("objective", "-"), solver.get("gap", "-")
        fmt = lambda v: f"{v:.4g}" if isinstance(v, float) else str(v)
        print(f"{sc.name:<18} {o.status:<10} {fmt(obj):>8} {fmt(gap):>8} "
              f"{str(rep.get('rho_global', '-')):>4} {str(sync.get('start', '-')):>5} "
              f"{str(sync.get('duration', '-')):>4} {rep['timing'].get('solve', 0.0):>8.1f}")
        for msg in rep.get("diagnostics", []) + rep.get("failures", []):
            print(f"    ! {msg}")


if __name__ == "__main__":
    main()
