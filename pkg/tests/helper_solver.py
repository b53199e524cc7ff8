"""Stand-in external solver for adapter tests.

Usage: python helper_solver.py <mps> <sol> <tl> [mode]

Modes: ``solve`` (default) brute-forces the sub-problem exactly, ``echo``
writes back the fixed-variable warm values with zeros elsewhere, ``fail``
exits nonzero, ``garbage`` writes an unusable file.
"""

import sys

import numpy as np

from lnsip.core import evaluate, is_feasible
from lnsip.mps import read_mps


def main():
    mps_path, sol_path = sys.argv[1], sys.argv[2]
    mode = sys.argv[4] if len(sys.argv) > 4 else "solve"
    if mode == "fail":
        print("simulated solver crash", file=sys.stderr)
        return 3
    instance, fixings = read_mps(mps_path)
    if mode == "garbage":
        with open(sol_path, "w") as fh:
            fh.write("!!! not a solution\n")
        return 0

    n = instance.n_vars
    values = np.zeros(n)
    for j, v in fixings.items():
        values[j] = v
    if mode == "solve":
        free = sorted(set(range(n)) - set(fixings))
        best, best_obj = values.copy(), None
        for code in range(1 << len(free)):
            for b, j in enumerate(free):
                values[j] = (code >> b) & 1
            if is_feasible(instance, values):
                obj = evaluate(instance, values)
                if best_obj is None or obj < best_obj:
                    best_obj, best = obj, values.copy()
        values = best
    with open(sol_path, "w") as fh:
        fh.write(f"objective {evaluate(instance, values)}\n")
        for j in range(n):
            fh.write(f"x{j} {int(values[j])}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
