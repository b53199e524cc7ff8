"""MPS reader/writer and the plain-text solution format.

The writer emits fixed-format MPS (ROWS / COLUMNS / RHS / BOUNDS) with all
binary variables declared through BV bound entries.  Sub-problem exports pin
variables with FX bounds.  Numbers are printed with the shortest decimal
that round-trips to the same float, so write-then-read reproduces every
coefficient exactly.

Only the subset of MPS needed for binary "<=" programs is supported: N/L/G
row types (G rows are negated into L at load), BV/FX/UP/LO bounds.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .core import IpInstance, Solution
from .errors import ContractError

OBJ_ROW = "OBJ"


def _num(v: float) -> str:
    s = "%.12g" % v
    if float(s) != v:
        s = repr(float(v))
    return s


def var_name(j: int) -> str:
    return f"x{j}"


def write_mps(instance: IpInstance, path, fixings: dict[int, int] | None = None) -> None:
    """Write ``instance`` to ``path``; ``fixings`` pin variables via FX bounds."""
    fixings = fixings or {}
    csc = instance.matrix_csc
    lines = [f"NAME          {instance.name}", "ROWS", f" N  {OBJ_ROW}"]
    for i in range(instance.n_cons):
        lines.append(f" L  c{i}")
    lines.append("COLUMNS")
    for j in range(instance.n_vars):
        entries = []
        if instance.objective[j] != 0.0:
            entries.append((OBJ_ROW, instance.objective[j]))
        start, end = csc.indptr[j], csc.indptr[j + 1]
        entries.extend(
            (f"c{csc.indices[k]}", csc.data[k]) for k in range(start, end)
        )
        name = var_name(j)
        # two (row, value) pairs per line, standard MPS layout
        for k in range(0, len(entries), 2):
            chunk = entries[k : k + 2]
            parts = [f"    {name:<10}"]
            for row, val in chunk:
                parts.append(f"{row:<10}{_num(val):<15}")
            lines.append("".join(parts).rstrip())
    lines.append("RHS")
    for i in range(0, instance.n_cons, 2):
        parts = ["    RHS       "]
        for ii in range(i, min(i + 2, instance.n_cons)):
            parts.append(f"c{ii:<9}{_num(instance.rhs[ii]):<15}")
        lines.append("".join(parts).rstrip())
    lines.append("BOUNDS")
    for j in range(instance.n_vars):
        if j in fixings:
            lines.append(f" FX BND       {var_name(j):<10}{_num(float(fixings[j]))}")
        else:
            lines.append(f" BV BND       {var_name(j)}")
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mps(path) -> tuple[IpInstance, dict[int, int]]:
    """Parse an MPS file written by :func:`write_mps` (or compatible).

    Returns the instance plus the FX fixings found in BOUNDS.  G rows are
    negated into "<=" form; E rows are rejected (out of model class).
    """
    name = "unnamed"
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    col_order: list[str] = []
    col_index: dict[str, int] = {}
    obj_coef: dict[int, float] = {}
    entries: list[tuple[str, int, float]] = []  # (row, col, coef)
    rhs: dict[str, float] = {}
    fixings: dict[int, int] = {}

    def col_id(cname: str) -> int:
        if cname not in col_index:
            col_index[cname] = len(col_order)
            col_order.append(cname)
        return col_index[cname]

    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("*"):
                continue
            head = line[0] not in (" ", "\t")
            tok = line.split()
            if head:
                key = tok[0].upper()
                if key == "NAME":
                    name = tok[1] if len(tok) > 1 else name
                    continue
                if key in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "RANGES", "ENDATA"):
                    section = key
                    if key == "RANGES":
                        raise ContractError("RANGES sections are not supported")
                    continue
                raise ContractError(f"unrecognized MPS section line: {line!r}")
            if section == "ROWS":
                sense, rname = tok[0].upper(), tok[1]
                if sense == "N":
                    if obj_row is None:
                        obj_row = rname
                    continue
                if sense == "E":
                    raise ContractError("equality rows are outside the model class")
                if sense not in ("L", "G"):
                    raise ContractError(f"unsupported row sense {sense!r}")
                row_sense[rname] = sense
                row_order.append(rname)
            elif section == "COLUMNS":
                if "'MARKER'" in line:
                    continue  # INTORG/INTEND markers: all variables are binary anyway
                cname = tok[0]
                j = col_id(cname)
                for rname, val in zip(tok[1::2], tok[2::2]):
                    v = float(val)
                    if rname == obj_row:
                        obj_coef[j] = obj_coef.get(j, 0.0) + v
                    else:
                        entries.append((rname, j, v))
            elif section == "RHS":
                for rname, val in zip(tok[1::2], tok[2::2]):
                    if rname != obj_row:
                        rhs[rname] = float(val)
            elif section == "BOUNDS":
                btype = tok[0].upper()
                cname = tok[2]
                j = col_id(cname)
                if btype == "BV":
                    continue
                if btype == "FX":
                    v = float(tok[3])
                    if v not in (0.0, 1.0):
                        raise ContractError("FX bound outside {0,1}")
                    fixings[j] = int(v)
                elif btype == "UP":
                    if float(tok[3]) != 1.0:
                        raise ContractError("only binary upper bounds supported")
                elif btype in ("LO", "MI", "BN"):
                    pass
                else:
                    raise ContractError(f"unsupported bound type {btype!r}")
            elif section == "ENDATA":
                break

    n_vars = len(col_order)
    n_cons = len(row_order)
    row_id = {r: i for i, r in enumerate(row_order)}
    sign = np.array([1.0 if row_sense[r] == "L" else -1.0 for r in row_order])
    data, rows, cols = [], [], []
    for rname, j, v in entries:
        i = row_id[rname]
        data.append(sign[i] * v)
        rows.append(i)
        cols.append(j)
    matrix = sp.csr_matrix(
        (data, (rows, cols)), shape=(n_cons, n_vars), dtype=np.float64
    )
    b = np.array([sign[row_id[r]] * rhs.get(r, 0.0) for r in row_order])
    objective = np.zeros(n_vars)
    for j, v in obj_coef.items():
        objective[j] = v
    return IpInstance(name, objective, matrix, b), fixings


def write_solution(path, solution: Solution, objective_first: bool = True) -> None:
    """Write a solution as ``name value`` pairs, preceded by the objective."""
    with open(path, "w") as fh:
        if objective_first:
            fh.write(f"objective {_num(solution.objective_value)}\n")
        for j, v in enumerate(solution.values):
            fh.write(f"{var_name(j)} {int(v)}\n")


def read_solution(path) -> tuple[float | None, dict[str, float]]:
    """Parse a solution file: optional leading objective line, then pairs."""
    objective = None
    values: dict[str, float] = {}
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0].lower() in ("objective", "=obj=", "obj") and len(tok) >= 2:
                objective = float(tok[1])
                continue
            if len(tok) >= 2:
                values[tok[0]] = float(tok[1])
    return objective, values
