"""Command-line HiGHS runner writing the plain ``name value`` solution format.

    python -m syncstl.highs_runner MODEL.lp SOLUTION.txt [TIME_LIMIT]
"""

import math
import sys
import time

from syncstl.solver import HIGHS_PRESOLVE_RULE_OFF


def main(argv=None):
    import highspy

    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print(__doc__, file=sys.stderr)
        return 2
    model_path, solution_path = argv[0], argv[1]
    time_limit = float(argv[2]) if len(argv) > 2 else math.inf
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("presolve_rule_off", HIGHS_PRESOLVE_RULE_OFF)
    if math.isfinite(time_limit):
        h.setOptionValue("time_limit", time_limit)
    if h.readModel(model_path) != highspy.HighsStatus.kOk:
        print(f"cannot read {model_path}", file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    h.run()
    elapsed = time.perf_counter() - t0
    status = h.modelStatusToString(h.getModelStatus())
    info = h.getInfo()
    lines = [f"# status {status}", f"# time {elapsed:.6f}"]
    if info.primal_solution_status == 2:
        lines.append(f"# objective {info.objective_function_value!r}")
        lines.append(f"# gap {info.mip_gap!r}")
        lp = h.getLp()
        for name, v in zip(lp.col_names_, h.getSolution().col_value):
            lines.append(f"{name} {v!r}")
    with open(solution_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
