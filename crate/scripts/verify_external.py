"""Solve an exported model with cvxpy: a JSON model (linear, SOC and PSD
content only) or an SDPA sparse file (extension .dat-s).

Polynomial JSON models (e.g. voltage_only) can be solved locally with
scipy instead by passing NLP as the solver; the start is flat voltages.

Usage: python3 scripts/verify_external.py model.json|model.dat-s [solver|NLP]
"""
import json
import sys

import cvxpy as cp
import numpy as np


def affine(terms, x):
    expr = 0.0
    for coef, mono in terms:
        if len(mono) == 0:
            expr = expr + coef
        elif len(mono) == 1:
            expr = expr + coef * x[mono[0]]
        else:
            raise ValueError("nonlinear term in model")
    return expr


def solve_sdpa(path, solver):
    lines = [l for l in open(path) if not l.startswith("*")]
    m = int(lines[0].split()[0])
    sizes = [int(s) for s in lines[2].split()]
    c = np.array([float(v) for v in lines[3].split()])
    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for l in lines[4:]:
        k, b, i, j, v = l.split()
        k, b, i, j = int(k), int(b) - 1, int(i) - 1, int(j) - 1
        mats[k][b][i, j] = float(v)
        mats[k][b][j, i] = float(v)
    x = cp.Variable(m)
    cons = []
    for b, s in enumerate(sizes):
        expr = -mats[0][b]
        for k in range(m):
            if np.any(mats[k + 1][b]):
                expr = expr + mats[k + 1][b] * x[k]
        if s < 0:
            cons.append(cp.diag(expr) >= 0)
        else:
            cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=solver)
    print(f"sdpa {prob.status} {prob.value:.10f} (plus objective constant)")


def poly_fn(terms):
    coefs = np.array([t[0] for t in terms])
    monos = [t[1] for t in terms]

    def f(x):
        return sum(c * np.prod(x[m]) if m else c for c, m in zip(coefs, monos))

    return f


def solve_nlp(doc):
    from scipy.optimize import minimize

    names = [v["name"] for v in doc["variables"]]
    x0 = np.array([1.0 if n.startswith("V[") and n.endswith(".re") else 0.0 for n in names])
    bounds = [(v["lb"], v["ub"]) for v in doc["variables"]]
    x0 = np.array([min(max(x, lo if lo is not None else -np.inf), hi if hi is not None else np.inf)
                   for x, (lo, hi) in zip(x0, bounds)])
    cons = []
    for c in doc["constraints"]:
        if c["kind"] != "poly":
            raise ValueError("NLP mode takes polynomial models only")
        g = poly_fn(c["terms"])
        rhs = c["rhs"]
        if c["sense"] == "eq":
            cons.append({"type": "eq", "fun": lambda x, g=g, r=rhs: g(x) - r})
        elif c["sense"] == "le":
            cons.append({"type": "ineq", "fun": lambda x, g=g, r=rhs: r - g(x)})
        else:
            cons.append({"type": "ineq", "fun": lambda x, g=g, r=rhs: g(x) - r})
    obj = poly_fn(doc["objective"])
    res = minimize(obj, x0, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"maxiter": 1000, "ftol": 1e-12})
    viol = max([abs(c["fun"](res.x)) if c["type"] == "eq" else max(0.0, -c["fun"](res.x)) for c in cons] + [0.0])
    print(f"{doc['metadata']['kind']} nlp {res.message} {res.fun:.10f} violation {viol:.2e}")


def main():
    solver = sys.argv[2] if len(sys.argv) > 2 else "CLARABEL"
    if sys.argv[1].endswith(".dat-s"):
        solve_sdpa(sys.argv[1], solver)
        return
    doc = json.load(open(sys.argv[1]))
    if solver == "NLP":
        solve_nlp(doc)
        return
    n = len(doc["variables"])
    x = cp.Variable(n)
    cons = []
    for i, v in enumerate(doc["variables"]):
        if v["lb"] is not None:
            cons.append(x[i] >= v["lb"])
        if v["ub"] is not None:
            cons.append(x[i] <= v["ub"])
    for c in doc["constraints"]:
        if c["kind"] == "poly":
            lhs = affine(c["terms"], x)
            cons.append({"eq": lhs == c["rhs"], "le": lhs <= c["rhs"], "ge": lhs >= c["rhs"]}[c["sense"]])
        elif c["kind"] == "soc":
            m = [affine(t, x) for t in c["members"]]
            t = affine(c["t"], x)
            if c["w"] is None:
                cons.append(cp.SOC(t, cp.hstack(m)))
            else:
                w = affine(c["w"], x)
                cons.append(cp.SOC(t + w, cp.hstack([t - w] + [2 * e for e in m])))
        else:
            d = c["dim"]
            rows = []
            k = 0
            entries = {}
            for i in range(d):
                for j in range(i, d):
                    entries[(i, j)] = affine(c["entries"][k], x)
                    k += 1
            for i in range(d):
                rows.append(cp.hstack([entries[(min(i, j), max(i, j))] for j in range(d)]))
            mat = cp.vstack(rows)
            cons.append(-mat >> 0 if c["negative"] else mat >> 0)
    obj = affine(doc["objective"], x)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=solver)
    print(f"{doc['metadata']['kind']} {prob.status} {prob.value:.10f}")


if __name__ == "__main__":
    main()
