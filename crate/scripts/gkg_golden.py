"""Extracts the consumed fields of a GKG 2.1 file into a JSON golden file."""
import json
import sys

src = sys.argv[1] if len(sys.argv) > 1 else "crates/spreadcast/tests/fixtures/gkg_200.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "crates/spreadcast/tests/fixtures/gkg_200_expected.json"


def items(field, sep=";"):
    return [x.strip() for x in field.split(sep) if x.strip()]


records = []
with open(src) as f:
    for line in f:
        line = line.rstrip("\n")
        if not line:
            continue
        c = line.split("\t")
        assert len(c) == 27
        themes = items(c[7])
        gcam = {}
        wc = None
        for pair in items(c[17], ","):
            code, value = pair.split(":", 1)
            if code == "wc":
                wc = int(value)
            elif code.startswith("c"):
                gcam[code] = int(value)
            else:
                gcam[code] = float(value)
        records.append({
            "record_id": c[0],
            "date": c[1],
            "outlet": c[3],
            "document_id": c[4],
            "wb_themes": [t for t in themes if t.startswith("WB_")],
            "gdelt_themes": [t for t in themes if not t.startswith("WB_")],
            "theme_mentions": [[m.rsplit(",", 1)[0], int(m.rsplit(",", 1)[1])] for m in items(c[8])],
            "locations": [loc.split("#")[2] for loc in items(c[9])],
            "persons": items(c[11]),
            "organizations": items(c[13]),
            "gcam": dict(sorted(gcam.items())),
            "word_count": wc,
        })

with open(dst, "w") as f:
    f.write("[\n" + ",\n".join(json.dumps(r) for r in records) + "\n]\n")
print(f"{len(records)} records")
