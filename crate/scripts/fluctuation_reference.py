"""Reference size simulation for the fluctuation test.

Draws i.i.d. standard normal loss differentials (equal predictive ability),
computes the rolling Diebold-Mariano statistic with a Bartlett HAC variance
and records how often the two-sided critical value is exceeded, both at any
point of the path (familywise) and averaged over windows (pointwise).
"""
import argparse
import json

import numpy as np


def rolling_dm(d, m, lags):
    """DM statistic for every window of m consecutive rows of d (runs x P)."""
    runs, p = d.shape
    zero = np.zeros((runs, 1))
    c1 = np.concatenate([zero, np.cumsum(d, axis=1)], axis=1)
    c2 = np.concatenate([zero, np.cumsum(d * d, axis=1)], axis=1)
    w = p - m + 1
    s1 = c1[:, m:] - c1[:, :w]
    mean = s1 / m
    lrv = (c2[:, m:] - c2[:, :w]) / m - mean**2
    for j in range(1, lags + 1):
        prod = d[:, j:] * d[:, :-j]
        cp = np.concatenate([zero, np.cumsum(prod, axis=1)], axis=1)
        # window starting at s covers lag products t = s+j .. s+m-1
        cross = cp[:, m - j : m - j + w] - cp[:, :w]
        head = c1[:, j : j + w] - c1[:, :w]
        tail = c1[:, m : m + w] - c1[:, m - j : m - j + w]
        lead = s1 - head  # d_t for t = s+j .. s+m-1
        lagged = s1 - tail  # d_{t-j} for the same t
        acov = (cross - mean * (lead + lagged) + (m - j) * mean**2) / m
        lrv += 2.0 * (1.0 - j / (lags + 1.0)) * acov
    return mean / np.sqrt(lrv / m)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-of-sample", type=int, default=586)
    ap.add_argument("--mu", type=float, default=0.30)
    ap.add_argument("--hac-lags", type=int, default=1)
    ap.add_argument("--critical-value", type=float, default=3.012)
    ap.add_argument("--runs", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=586175)
    ap.add_argument("--out", default="crates/spreadcast/tests/fixtures/fluctuation_reference.json")
    args = ap.parse_args()

    p = args.out_of_sample
    m = int(np.floor(args.mu * p + 1e-9))
    rng = np.random.default_rng(args.seed)
    hits_any = 0
    hits_point = 0.0
    chunk = 1000
    done = 0
    while done < args.runs:
        n = min(chunk, args.runs - done)
        stat = rolling_dm(rng.standard_normal((n, p)), m, args.hac_lags)
        exceed = np.abs(stat) > args.critical_value
        hits_any += int(exceed.any(axis=1).sum())
        hits_point += float(exceed.mean(axis=1).sum())
        done += n
    fw = hits_any / args.runs
    ref = {
        "out_of_sample": p,
        "window": m,
        "mu": args.mu,
        "hac_lags": args.hac_lags,
        "critical_value": args.critical_value,
        "runs": args.runs,
        "seed": args.seed,
        "familywise_rate": round(fw, 5),
        "familywise_se": round(float(np.sqrt(fw * (1 - fw) / args.runs)), 5),
        "pointwise_rate": round(hits_point / args.runs, 5),
    }
    with open(args.out, "w") as f:
        json.dump(ref, f, indent=2)
        f.write("\n")
    print(json.dumps(ref, indent=2))


if __name__ == "__main__":
    main()
