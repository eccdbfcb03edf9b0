"""Reference external solver: ``python -m stlpde.milp.highs_runner LP SOL [TIME]``.

Reads a CPLEX-LP file with the package's own parser, solves it with the HiGHS
MILP solver bundled in SciPy and writes a solution file in the format read by
:func:`stlpde.milp.solve.read_solution`.
"""

from __future__ import annotations

import sys
import warnings

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from stlpde.milp.lpfile import read_lp
from stlpde.milp.model import EQ, GE, LE

RUNNER_CMD = f"{sys.executable} -m stlpde.milp.highs_runner {{lp}} {{sol}} {{time}}"


def run(lp_path: str, sol_path: str, time_limit: float | None = None) -> int:
    with open(lp_path) as fh:
        m = read_lp(fh.read())
    A = m.row_matrix()
    lo = np.array([r.rhs if r.sense in (EQ, GE) else -np.inf for r in m.rows])
    hi = np.array([r.rhs if r.sense in (EQ, LE) else np.inf for r in m.rows])
    c = m.objective_vector() * (-1.0 if m.maximize else 1.0)
    # scipy forwards the tolerance keys to HiGHS unchanged but warns about them
    options = {"mip_rel_gap": 1e-12, "primal_feasibility_tolerance": 1e-10, "mip_feasibility_tolerance": 1e-10}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    constraints = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Unrecognized options")
        res = milp(c, constraints=constraints, integrality=np.array(m.binary, dtype=int),
                   bounds=Bounds(m.lb, m.ub), options=options)
    lines = []
    if res.status == 0:
        lines.append("status optimal")
    elif res.status == 1 and res.x is not None:
        lines.append("status timelimit")
    elif res.status == 2:
        lines.append("status infeasible")
    elif res.x is None:
        print(res.message, file=sys.stderr)
        return 1
    if res.x is not None:
        obj = float(m.objective_vector() @ res.x)
        lines.append(f"objective {obj!r}")
        gap = getattr(res, "mip_gap", None)
        if gap is not None:
            lines.append(f"gap {float(gap)!r}")
        lines += [f"{name} {float(v)!r}" for name, v in zip(m.names, res.x)]
    with open(sol_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) not in (2, 3):
        print("usage: highs_runner LP SOL [TIME]", file=sys.stderr)
        return 2
    return run(argv[0], argv[1], float(argv[2]) if len(argv) == 3 else None)


if __name__ == "__main__":
    sys.exit(main())
