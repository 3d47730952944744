"""Writes the 12-feature funnel fixture and its expected outcome.

The expected outcome is computed here with a direct implementation of the
funnel rules so the Rust pipeline can be checked against it.
"""
import json
import math
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("crates/spreadcast/tests/fixtures")
N = 40
rng = np.random.default_rng(20240611)

days = []
d = date(2021, 3, 1)
while len(days) < N:
    if d.weekday() < 5:
        days.append(d)
    d += timedelta(days=1)

articles = rng.integers(20, 41, size=N)

def per_article(mean, sd):
    return np.clip(rng.normal(mean, sd, size=N), 0.05, None)

def counts(rate):
    return [int(round(r * a)) for r, a in zip(rate, articles)]

cols = {}
cols["gcam:c3.5"] = counts(per_article(3.0, 1.0))
c2_1 = counts(per_article(2.0, 0.8))
cols["gcam:c2.1"] = [None if i < 14 else v for i, v in enumerate(c2_1)]
wb_x = counts(per_article(1.5, 0.6))
gaps = set(rng.choice(np.arange(14, N), size=8, replace=False).tolist())
cols["wb:WB_9999_TEST_THEME"] = [None if i in gaps else v for i, v in enumerate(wb_x)]
cols["loc:FR"] = rng.integers(0, 4, size=N).tolist()
cols["person:jane doe"] = rng.integers(0, 3, size=N).tolist()
neg = per_article(4.0, 1.2)
cols["gcam:c2.168"] = counts(neg)
c57 = counts(neg + rng.normal(0, 0.15, size=N))
holes = set(rng.choice(np.arange(14, N), size=2, replace=False).tolist())
cols["gcam:c5.7"] = [None if i in holes else v for i, v in enumerate(c57)]
pos = per_article(2.5, 0.9)
cols["gcam:c1.2"] = counts(pos)
cols["theme:EPU_POLICY_UNCERTAINTY"] = counts(pos + rng.normal(0, 0.12, size=N))
cols["org:european central bank"] = counts(per_article(1.2, 0.5))
cols["loc:IT"] = counts(per_article(3.5, 1.1))
cols["wb:WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT"] = counts(per_article(2.0, 0.7))

keys = list(cols)
priority = ["gcam", "wb", "theme", "loc", "person", "org"]

def category(k):
    return k.split(":", 1)[0]

# funnel
dropped = {}
alive = []
for k in keys:
    if category(k) == "gcam" and k.split(":", 1)[1].startswith("c3."):
        dropped[k] = "excluded-dictionary"
    else:
        alive.append(k)
initial = math.ceil(0.33 * N - 1e-9)
stage = []
for k in alive:
    c = cols[k]
    if all(v is None for v in c[:initial]):
        dropped[k] = "all-missing-initial"
    elif sum(v is not None for v in c) + 1e-9 < 0.9 * N:
        dropped[k] = "low-availability"
    else:
        stage.append(k)
alive = []
for k in stage:
    seen = np.array([v for v in cols[k] if v is not None], dtype=float)
    if seen.std() > 5.0:
        alive.append(k)
    else:
        dropped[k] = "low-variance"
norm = {k: [None if v is None else v / a for v, a in zip(cols[k], articles)] for k in alive}
pairs = []
for i, a in enumerate(alive):
    for b in alive[i + 1:]:
        xs = [(x, y) for x, y in zip(norm[a], norm[b]) if x is not None and y is not None]
        x, y = np.array(xs).T
        rho = float(np.corrcoef(x, y)[0, 1])
        if abs(rho) > 0.7:
            pairs.append((rho, a, b))
pairs.sort(key=lambda t: (-abs(t[0]), alive.index(t[1]), alive.index(t[2])))
decisions = []
gone = set()
for rho, a, b in pairs:
    if a in gone or b in gone:
        continue
    ma = sum(v is None for v in cols[a])
    mb = sum(v is None for v in cols[b])
    if ma != mb:
        keep_a, rule = ma < mb, "fewer-missing"
    else:
        ra, rb = priority.index(category(a)), priority.index(category(b))
        assert ra != rb, "fixture must not need the random rule"
        keep_a, rule = ra < rb, "category-priority"
    k, dr = (a, b) if keep_a else (b, a)
    gone.add(dr)
    dropped[dr] = "correlated-out"
    decisions.append({"kept": k, "dropped": dr, "rule": rule})
kept = [k for k in alive if k not in gone]

OUT.mkdir(parents=True, exist_ok=True)
with open(OUT / "funnel_features.csv", "w") as f:
    f.write(",".join(["trading_day", "article_count"] + keys) + "\n")
    for i in range(N):
        row = [days[i].isoformat(), str(articles[i])]
        row += ["" if cols[k][i] is None else str(cols[k][i]) for k in keys]
        f.write(",".join(row) + "\n")
expected = {
    "drop_gcam_codes": ["c3.*"],
    "kept": kept,
    "dropped": dict(sorted(dropped.items())),
    "decisions": decisions,
}
(OUT / "funnel_expected.json").write_text(json.dumps(expected, indent=2) + "\n")
print(json.dumps(expected, indent=2))
