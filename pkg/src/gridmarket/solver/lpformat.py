"""CPLEX-LP text export of a :class:`~gridmarket.solver.LinearProgram`.

The file can be handed to any solver that reads the LP format. Names are
sanitized to ``[A-Za-z0-9_]`` and made unique.
"""
from __future__ import annotations

import re

import numpy as np

_BAD = re.compile(r"[^A-Za-z0-9_]")


def sanitize(name):
    """Replace characters outside ``[A-Za-z0-9_]``; prefix names that start with a digit.

    >>> sanitize("G[p1,0]")
    'G_p1_0_'
    >>> sanitize("3x")
    'n3x'
    """
    out = _BAD.sub("_", str(name)) or "v"
    if out[0].isdigit():
        out = "n" + out
    return out


def _unique(names):
    seen, out = {}, []
    for name in names:
        base = sanitize(name)
        k = seen.get(base, 0)
        seen[base] = k + 1
        out.append(base if k == 0 else f"{base}_{k}")
    return out


def _num(v):
    return repr(float(v))


def _terms(names, index, coef):
    parts = []
    for j, a in zip(index, coef):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(text, width=200):
    lines, line = [], ""
    for token in text.split(" "):
        if len(line) + len(token) + 1 > width and line:
            lines.append(line)
            line = "  " + token
        else:
            line = f"{line} {token}" if line else token
    lines.append(line)
    return "\n".join(lines)


def to_lp_string(lp) -> str:
    names = _unique(lp.names)
    rows = _unique(lp.row_names)
    cost = np.asarray(lp.cost, float)
    obj = _terms(names, np.flatnonzero(cost), cost[cost != 0]) if np.any(cost) else f"0 {names[0]}"
    out = ["\\ exported by gridmarket", "Minimize", _wrap(" obj: " + obj), "Subject To"]
    op = {"<=": "<=", ">=": ">=", "=": "="}
    for name, idx, coef, sense, rhs in zip(rows, lp.row_index, lp.row_coef, lp.senses, lp.rhs):
        out.append(_wrap(f" {name}: {_terms(names, idx, coef)} {op[sense]} {_num(rhs)}"))
    out.append("Bounds")
    for name, lo, hi in zip(names, lp.lower, lp.upper):
        if lo == -np.inf and hi == np.inf:
            out.append(f" {name} free")
        elif lo == hi:
            out.append(f" {name} = {_num(lo)}")
        else:
            left = "-inf" if lo == -np.inf else _num(lo)
            right = "+inf" if hi == np.inf else _num(hi)
            out.append(f" {left} <= {name} <= {right}")
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(lp, path):
    """Write ``lp`` in CPLEX-LP format to ``path``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(to_lp_string(lp))
    return path
