"""Regenerate the bundled Matpower case fixtures from PYPOWER's public case data.

Only needed when the fixtures change; requires ``pip install pypower``.

Quadratic cost curves are linearized at half of Pmax (slope c1 + c2*Pmax) so
the resulting files contain linear costs only. The 118-bus case ships with
placeholder ratings (9900 MVA); those are replaced by ratings derived from
the case's own dispatch: 1.1 x the worst single-outage flow, floored at 50 MW.
"""
import sys
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "gridmarket" / "data"


def linear_costs(ppc):
    gc = ppc["gencost"]
    out = []
    for row, gen in zip(gc, ppc["gen"]):
        n = int(row[3])
        coeffs = row[4:4 + n]
        c1 = coeffs[-2] if n >= 2 else 0.0
        c2 = coeffs[-3] if n >= 3 else 0.0
        out.append(round(float(c1 + c2 * gen[8]), 4))
    return out


def n1_ratings(ppc):
    bus, branch, gen = ppc["bus"], ppc["branch"], ppc["gen"]
    ids = {int(b): k for k, b in enumerate(bus[:, 0])}
    nb, nl = len(bus), len(branch)
    A = np.zeros((nl, nb))
    for k, br in enumerate(branch):
        A[k, ids[int(br[0])]] = 1.0
        A[k, ids[int(br[1])]] = -1.0
    bvec = 1.0 / branch[:, 3]
    slack = int(np.flatnonzero(bus[:, 1] == 3)[0])
    keep = [i for i in range(nb) if i != slack]

    def ptdf(mask):
        Am = A[mask]
        B = Am.T @ (bvec[mask, None] * Am)
        X = np.zeros((nb, nb))
        X[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
        return bvec[mask, None] * Am @ X

    inj = -bus[:, 2].copy()
    pg = gen[:, 1].copy()
    pg *= bus[:, 2].sum() / pg.sum()
    for g, p in zip(gen, pg):
        inj[ids[int(g[0])]] += p
    worst = np.abs(ptdf(np.ones(nl, bool)) @ inj)
    for k in range(nl):
        mask = np.ones(nl, bool)
        mask[k] = False
        try:
            flows = ptdf(mask) @ inj
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(flows)) or np.abs(flows).max() > 1e6:
            continue
        worst[mask] = np.maximum(worst[mask], np.abs(flows))
    return np.maximum(50.0, np.ceil(1.1 * worst / 10.0) * 10.0)


def write_case(name, ppc, ratings=None):
    branch = ppc["branch"].copy()
    if ratings is not None:
        branch[:, 5] = ratings
    costs = linear_costs(ppc)
    lines = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {ppc['baseMVA']:g};", "",
             "%% bus data", "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
             "mpc.bus = ["]
    lines += ["\t" + "\t".join(f"{v:g}" for v in row) + ";" for row in ppc["bus"]]
    lines += ["];", "", "%% generator data", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin",
              "mpc.gen = ["]
    lines += ["\t" + "\t".join(f"{v:g}" for v in row[:10]) + ";" for row in ppc["gen"]]
    lines += ["];", "", "%% branch data",
              "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
              "mpc.branch = ["]
    lines += ["\t" + "\t".join(f"{v:g}" for v in row) + ";" for row in branch]
    lines += ["];", "", "%% generator cost data", "%\t2\tstartup\tshutdown\tn\tc1\tc0", "mpc.gencost = ["]
    lines += [f"\t2\t0\t0\t2\t{c:g}\t0;" for c in costs]
    lines += ["];", ""]
    (OUT / f"{name}.m").write_text("\n".join(lines))


if __name__ == "__main__":
    sys.path.insert(0, sys.argv[1] if len(sys.argv) > 1 else ".")
    from pypower.case9 import case9
    from pypower.case30 import case30
    from pypower.case118 import case118

    write_case("case9", case9())
    write_case("case30", case30())
    p118 = case118()
    write_case("case118", p118, n1_ratings(p118))
