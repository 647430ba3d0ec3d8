#!/usr/bin/env python3
"""Regenerate crates/core/fixtures/three_unit_posterior.json.

Brute-force enumeration of the joint posterior over (theta, types) for the
committed three-unit dataset and four-point theta grid, written with the
standard library only so it shares no code with the Rust crate.
"""
import csv
import itertools
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
FIX = os.path.join(HERE, "..", "crates", "core", "fixtures")

TYPES = ("nt", "co", "at")


def receipt(t, z):
    return {"nt": 0, "co": z, "at": 1}[t]


def normal_logpdf(x, m, s):
    return -0.5 * math.log(2 * math.pi) - math.log(s) - 0.5 * ((x - m) / s) ** 2


def type_probs(th, x):
    def lin(g):
        return g[0] + sum(a * b for a, b in zip(g[1:], x))

    e = {"nt": math.exp(lin(th["gamma_nt"])), "co": 1.0, "at": math.exp(lin(th["gamma_at"]))}
    s = sum(e.values())
    return {k: v / s for k, v in e.items()}


def x2_mean(th, t, x, w1):
    a = th["alpha"]
    p = len(x)
    return (a[0] + sum(ai * xi for ai, xi in zip(a[1 : p + 1], x)) + a[p + 1] * w1
            + a[p + 2] * (t == "at") + a[p + 3] * (t == "nt"))


def y_mean(th, t, x, x2, w1, w2):
    b = th["beta"]
    p = len(x)
    return (b[0] + sum(bi * xi for bi, xi in zip(b[1 : p + 1], x)) + b[p + 1] * x2
            + b[p + 2] * w1 + b[p + 3] * w2 + b[p + 4] * w1 * w2
            + b[p + 5] * (t == "at") + b[p + 6] * (t == "nt"))


def unit_weight(th, t, u):
    if receipt(t, u["z1"]) != u["w1"] or receipt(t, u["z2"]) != u["w2"]:
        return 0.0
    lp = math.log(type_probs(th, u["x"])[t])
    lp += normal_logpdf(u["x2"], x2_mean(th, t, u["x"], u["w1"]), th["sigma_x"])
    lp += normal_logpdf(u["y"], y_mean(th, t, u["x"], u["x2"], u["w1"], u["w2"]), th["sigma_y"])
    return math.exp(lp)


def complier_effect(th, u):
    """Y(1,1) - Y(0,0) with unobserved cells at their conditional means."""
    x2 = {u["w1"]: u["x2"], 1 - u["w1"]: x2_mean(th, "co", u["x"], 1 - u["w1"])}

    def y(w1, w2):
        if (w1, w2) == (u["w1"], u["w2"]):
            return u["y"]
        return y_mean(th, "co", u["x"], x2[w1], w1, w2)

    return y(1, 1) - y(0, 0)


def main():
    with open(os.path.join(FIX, "three_unit.csv")) as f:
        rows = list(csv.DictReader(f))
    units = []
    for r in rows:
        p = len([k for k in r if k.startswith("x1_")])
        units.append({
            "x": [float(r[f"x1_{j}"]) for j in range(p)],
            "z1": int(r["z1"]), "w1": int(r["w1"]), "x2": float(r["x2"]),
            "z2": int(r["z2"]), "w2": int(r["w2"]), "y": float(r["y"]),
        })
    with open(os.path.join(FIX, "theta_grid.json")) as f:
        grid = json.load(f)

    total = 0.0
    theta_mass = [0.0] * len(grid["theta_grid"])
    unit_mass = [[0.0] * 3 for _ in units]
    no_co = 0.0
    late_w = 0.0
    for k, (th, pw) in enumerate(zip(grid["theta_grid"], grid["weights"])):
        for cfg in itertools.product(TYPES, repeat=len(units)):
            w = pw
            for t, u in zip(cfg, units):
                w *= unit_weight(th, t, u)
            if w == 0.0:
                continue
            total += w
            theta_mass[k] += w
            for i, t in enumerate(cfg):
                unit_mass[i][TYPES.index(t)] += w
            eff = [complier_effect(th, u) for t, u in zip(cfg, units) if t == "co"]
            if eff:
                late_w += w * sum(eff) / len(eff)
            else:
                no_co += w

    out = {
        "theta_posterior": [m / total for m in theta_mass],
        "unit_marginals": [[m / total for m in row] for row in unit_mass],
        "log_evidence": math.log(total),
        "prob_no_compliers": no_co / total,
        "late_mean": late_w / (total - no_co),
    }
    with open(os.path.join(FIX, "three_unit_posterior.json"), "w") as f:
        json.dump(out, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
