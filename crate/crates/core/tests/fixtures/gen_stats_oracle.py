"""Regenerates stats_oracle.json. Kruskal-Wallis comes from scipy; Dunn and
Cliff's delta are brute-force numpy implementations kept apart from the Rust code."""
import itertools
import json

import numpy as np
from scipy import stats


def dunn_bonferroni(groups):
    pooled = np.concatenate(groups)
    ranks = stats.rankdata(pooled)
    n = len(pooled)
    _, counts = np.unique(pooled, return_counts=True)
    tie = np.sum(counts**3 - counts) / (12.0 * (n - 1))
    bounds = np.cumsum([0] + [len(g) for g in groups])
    means = [ranks[bounds[i]:bounds[i + 1]].mean() for i in range(len(groups))]
    k = len(groups)
    pairs = k * (k - 1) // 2
    z = np.zeros((k, k))
    p = np.ones((k, k))
    for i, j in itertools.combinations(range(k), 2):
        se = np.sqrt((n * (n + 1) / 12.0 - tie) * (1.0 / len(groups[i]) + 1.0 / len(groups[j])))
        zij = abs(means[i] - means[j]) / se
        z[i, j] = z[j, i] = zij
        p[i, j] = p[j, i] = min(1.0, 2.0 * stats.norm.sf(zij) * pairs)
    return z.tolist(), p.tolist()


def cliffs(a, b):
    gt = sum(1 for x in a for y in b if x > y)
    lt = sum(1 for x in a for y in b if x < y)
    return (gt - lt) / (len(a) * len(b))


def main():
    rng = np.random.default_rng(20240611)
    cases = []
    for case in range(24):
        k = int(rng.integers(2, 7))
        groups = []
        for g in range(k):
            size = int(rng.integers(3, 31))
            shift = rng.normal(0.0, 1.0)
            if case % 3 == 0:
                values = rng.integers(0, 6, size) + (g % 2)
            else:
                values = np.round(rng.normal(shift, 1.0, size), 2)
            groups.append([float(v) for v in values])
        h, p = stats.kruskal(*groups)
        z, dunn_p = dunn_bonferroni([np.array(g) for g in groups])
        deltas = [[cliffs(a, b) for b in groups] for a in groups]
        cases.append({"groups": groups, "h": float(h), "p": float(p), "dunn_z": z, "dunn_p": dunn_p, "delta": deltas})
    with open("stats_oracle.json", "w") as fh:
        json.dump(cases, fh, indent=1)


if __name__ == "__main__":
    main()
