"""Writes a 200-line GKG 2.1 fixture with realistic field layouts."""
import random
import sys
random.seed(20190301)
outlets = ["ilsole24ore.com", "corriere.it", "repubblica.it", "milanofinanza.it", "ansa.it",
           "reuters.com", "ft.com", "bloomberg.com", "lastampa.it", "ilfattoquotidiano.it"]
themes = [("WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT", 0.9), ("WB_439_MACROECONOMIC_AND_STRUCTURAL_POLICIES", 0.6),
          ("EPU_POLICY", 0.5), ("EPU_ECONOMY_HISTORIC", 0.4), ("TAX_FNCACT_MINISTER", 0.5), ("ECON_DEBT", 0.6),
          ("WB_442_INFLATION", 0.3), ("ECON_STOCKMARKET", 0.3), ("LEADER", 0.3), ("ELECTION", 0.2)]
locs = [("1#Italy#IT#IT#42.8333#12.8333#IT", "IT"), ("1#Germany#GM#GM#51.5#10.5#GM", "GM"),
        ("4#Rome, Lazio, Italy#IT#IT07#41.9#12.4833#-126693", "IT"), ("1#France#FR#FR#46#2#FR", "FR"),
        ("4#Frankfurt, Hessen, Germany#GM#GM05#50.1167#8.6833#-1771148", "GM"),
        ("4#Brussels, Bruxelles-Capitale, Belgium#BE#BE11#50.8333#4.3333#-1955538", "BE")]
persons = ["mario draghi", "giuseppe conte", "giovanni tria", "matteo salvini", "luigi di maio", "jens weidmann"]
orgs = ["european central bank", "european commission", "bank of italy", "international monetary fund", "moody"]
gcam_codes = ["c1.1", "c1.2", "c2.14", "c2.39", "c2.168", "c3.1", "c5.7", "c6.4", "c9.9", "c12.1", "c12.10", "c15.3", "c16.47"]
score_codes = ["v10.1", "v19.1", "v21.1"]

lines = []
for i in range(200):
    day = 1 + (i * 11) // 200
    hh, mm, ss = random.randrange(24), random.randrange(0, 60, 15), 0
    stamp = f"201903{day:02d}{hh:02d}{mm:02d}{ss:02d}"
    rid = f"{stamp}-{i}"
    outlet = random.choice(outlets)
    doc = f"https://www.{outlet}/economia/2019/03/{day:02d}/spread-btp-bund-{i}.html"
    chosen = [t for t, p in themes if random.random() < p]
    if not chosen:
        chosen = ["ECON_DEBT"]
    v1themes = "".join(t + ";" for t in chosen)
    mentions = []
    for t in chosen:
        reps = random.randint(4, 7) if t.startswith("WB_1104") else random.randint(1, 3)
        for _ in range(reps):
            mentions.append((t, random.randrange(20, 5000)))
    mentions.sort(key=lambda m: m[1])
    # offsets are unique per theme in real files; keep them unique here
    seen = set(); uniq = []
    for t, o in mentions:
        if (t, o) not in seen:
            seen.add((t, o)); uniq.append((t, o))
    v2themes = "".join(f"{t},{o};" for t, o in uniq)
    ls = random.sample(locs, random.randint(1, 3))
    v1locs = ";".join(l for l, _ in ls)
    v2locs = ";".join(f"{l}#{random.randrange(50, 4000)}" for l, _ in ls)
    ps = random.sample(persons, random.randint(0, 3))
    os_ = random.sample(orgs, random.randint(0, 2))
    v2ps = ";".join(f"{p.title()},{random.randrange(10, 4000)}" for p in ps)
    v2os = ";".join(f"{o.title()},{random.randrange(10, 4000)}" for o in os_)
    wc = random.randrange(150, 1800)
    tone = [round(random.uniform(-6, 2), 6), round(random.uniform(0, 4), 6), round(random.uniform(0, 8), 6)]
    tone_s = f"{tone[0]},{tone[1]},{tone[2]},{round(tone[1]+tone[2],6)},{round(random.uniform(15,25),6)},{round(random.uniform(0,2),6)},{wc}"
    gcam = [f"wc:{wc}"]
    for c in random.sample(gcam_codes, random.randint(4, len(gcam_codes))):
        gcam.append(f"{c}:{random.randrange(1, max(2, wc // 40))}")
    for v in random.sample(score_codes, random.randint(1, 3)):
        gcam.append(f"{v}:{round(random.uniform(-3, 6), 6)}")
    counts = f"ECON_DEBT#{random.randrange(1, 40)}##1#Italy#IT#IT#42.8333#12.8333#IT#{random.randrange(50, 900)};" if random.random() < 0.4 else ""
    v1counts = counts.rsplit("#", 1)[0] + ";" if counts else ""
    cols = [
        rid, stamp, "1", outlet, doc,
        v1counts, counts,
        v1themes, v2themes,
        v1locs, v2locs,
        ";".join(ps), v2ps,
        ";".join(os_), v2os,
        tone_s,
        f"1#3#{day}#2019#{random.randrange(100, 900)}" if random.random() < 0.3 else "",
        ",".join(gcam),
        f"https://www.{outlet}/img/{i}.jpg" if random.random() < 0.5 else "",
        "", "", "",
        f"{random.randrange(100, 900)}|{random.randrange(20, 90)}||Lo spread resta sotto osservazione" if random.random() < 0.3 else "",
        ";".join(f"{p.title()},{random.randrange(10, 4000)}" for p in ps),
        f"{random.randrange(1, 400)},basis points,{random.randrange(10, 4000)};" if random.random() < 0.5 else "",
        "srclc:ita;eng:GT-ITA 1.0" if outlet.endswith(".it") else "",
        f"<PAGE_TITLE>Spread Btp-Bund, seduta del {day} marzo</PAGE_TITLE>",
    ]
    assert len(cols) == 27
    lines.append("\t".join(cols))
open(sys.argv[1] if len(sys.argv) > 1 else "crates/spreadcast/tests/fixtures/gkg_200.csv", "w").write("\n".join(lines) + "\n")
