"""Independent dense grid-search evaluation of the T2 constant.

Minimises C_B/(e1(1-e1-e2)) * exp((e2+C1^2) K2+ T / ((1-e1-e2) e2)) directly in
(e1, e2) coordinates: a 1000x1000 grid (e1 linear, e2 logarithmic), then a
1000x1000 zoom on the best cell neighbourhood, then a second zoom.  Writes the
frozen reference values consumed by the Rust acceptance tests.
"""
import json
import sys

import numpy as np


def objective(e1, e2, T, K2, CB, C1):
    rest = 1.0 - e1 - e2
    kappa = max(K2, 0.0) * T
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        val = CB / (e1 * rest) * np.exp((e2 + C1 ** 2) * kappa / (rest * e2))
    return np.where((e1 > 0) & (e2 > 0) & (rest > 0), val, np.inf)


def grid_min(T, K2, CB, C1):
    e1 = np.linspace(1e-4, 1 - 1e-4, 1000)
    le2 = np.linspace(np.log(1e-7), np.log(1 - 1e-4), 1000)
    for _ in range(3):
        E1, LE2 = np.meshgrid(e1, le2, indexing="ij")
        vals = objective(E1, np.exp(LE2), T, K2, CB, C1)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = vals[i, j]
        d1 = 2 * (e1[1] - e1[0])
        d2 = 2 * (le2[1] - le2[0])
        e1 = np.linspace(max(e1[i] - d1, 1e-300), e1[i] + d1, 1000)
        le2 = np.linspace(le2[j] - d2, le2[j] + d2, 1000)
    return float(best)


def main(path):
    rng = np.random.default_rng(20240611)
    cases = [dict(T=1.0, K2=1.0, C_B=1.0, C1=2.0)]
    for _ in range(10):
        cases.append(
            dict(
                T=float(np.round(rng.uniform(0.2, 3.0), 6)),
                K2=float(np.round(rng.uniform(0.05, 3.0), 6)),
                C_B=float(np.round(rng.uniform(0.1, 3.0), 6)),
                C1=float(np.round(rng.uniform(0.5, 3.0), 6)),
            )
        )
    for c in cases:
        c["value"] = grid_min(c["T"], c["K2"], c["C_B"], c["C1"])
    with open(path, "w") as f:
        json.dump(cases, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
