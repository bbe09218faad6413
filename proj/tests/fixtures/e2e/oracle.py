#!/usr/bin/env python3
"""Brute-force expected adoption table for the end-to-end fixture.

Reads only ground_truth.json (never the rendered HTML, scripts or manifest)
and recomputes, by direct enumeration:
  - which captures a crawler keeps (status 200, calendar year, the capture
    closest to 1 Jan and to 1 Jul within 183 days, fetch succeeded, not an
    archive error page),
  - which Pixel IDs each site-year shows (commented-out code ignored,
    semiannual snapshots unioned),
  - which configurations attach to which site-years (same calendar year,
    Pixel ID present in that year's HTML),
  - per (cohort, year, feature): n, n_with_pixel, adopters, p, t-based margin,
    pooled two-proportion z, two-sided p-value and |Cohen's h|.
Statistics come from scipy. Writes expected_adoption.csv.
"""

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path

from scipy import stats

HERE = Path(__file__).resolve().parent
MAX_DIST = 183 * 86400
MATCH_CODES = ["em", "ph", "fn", "ln", "ge", "db", "ct", "st", "zp", "country", "external_id"]


def epoch(ts):
    return datetime.strptime(ts, "%Y%m%d%H%M%S").replace(tzinfo=timezone.utc).timestamp()


def semiannual(caps, year):
    """Indices of kept captures among `caps` (all from `year`)."""
    chosen = []
    for month in (1, 7):
        anchor = datetime(year, month, 1, tzinfo=timezone.utc).timestamp()
        best = None
        for i, c in enumerate(caps):
            d = abs(epoch(c["timestamp"]) - anchor)
            if d > MAX_DIST:
                continue
            key = (d, c["timestamp"])
            if best is None or key < best[0]:
                best = (key, i)
        if best is not None and best[1] not in chosen:
            chosen.append(best[1])
    return [caps[i] for i in chosen]


def features(cfg):
    o = cfg["opt_ins"]
    f = {
        "AutomaticSetup": o["AutomaticSetup"],
        "InferredEvents": o["InferredEvents"],
        "FirstPartyCookies": o["FirstPartyCookies"],
        "AutomaticMatching": o["AutomaticMatching"],
        "UnwantedData": o["UnwantedData"],
        "CoreSetup": o["ProtectedDataMode"],
        "EventSetupTool": len(cfg["est_rules"]) > 0,
        "UnwantedData.has_blacklisted": any(r["cd"] or r["url"] for r in cfg["blacklisted"].values()),
        "UnwantedData.has_sensitive": any(r["cd"] or r["url"] for r in cfg["sensitive"].values()),
    }
    for code in MATCH_CODES:
        f["AAM." + code] = o["AutomaticMatching"] and code in cfg["match_keys"]
    return f


def main():
    world = json.loads((HERE / "ground_truth.json").read_text())
    years = world["years"]

    # Site-year Pixel IDs.
    html = {}  # (cohort, domain, year) -> set of pixel ids
    for s in world["sites"]:
        for y in years:
            caps = [c for c in s["captures"]
                    if not c.get("other_page") and c["status"] == 200 and c["timestamp"][:4] == str(y)]
            kept = [c for c in semiannual(caps, y) if c["outcome"] in ("ok", "transient_then_ok")]
            if not kept:
                continue
            ids = set()
            for c in kept:
                ids |= set(c["pixels"])
            for cohort in s["cohorts"]:
                html[(cohort, s["domain"], y)] = ids

    # Configuration captures the crawler keeps, per Pixel ID seen anywhere.
    seen_ids = set().union(*html.values()) if html else set()
    kept_configs = []
    for p in sorted(seen_ids):
        for y in years:
            caps = [c for c in world["configs"]
                    if c["pixel_id"] == p and c["status"] == 200 and c["timestamp"][:4] == str(y)]
            kept_configs += [c for c in semiannual(caps, y) if c["parseable"]]

    # Attribution and per-site-year OR merge.
    site_features = {}
    for key, ids in html.items():
        cohort, domain, y = key
        vecs = [features(c["config"]) for c in kept_configs
                if c["pixel_id"] in ids and c["timestamp"][:4] == str(y)]
        merged = None
        if vecs:
            merged = {k: any(v[k] for v in vecs) for k in vecs[0]}
        site_features[key] = (bool(ids), merged)

    feature_names = sorted(features({"opt_ins": {k: False for k in [
        "AutomaticSetup", "InferredEvents", "FirstPartyCookies", "AutomaticMatching", "UnwantedData",
        "ProtectedDataMode"]}, "est_rules": [], "blacklisted": {}, "sensitive": {}, "match_keys": []}).keys())

    cells = {}
    for (cohort, domain, y), (has_pixel, merged) in site_features.items():
        cell = cells.setdefault((cohort, y), {"n": 0, "with_pixel": 0, "adopters": {f: 0 for f in feature_names}})
        if has_pixel or merged is not None:
            cell["with_pixel"] += 1
        if merged is None:
            continue
        cell["n"] += 1
        for f in feature_names:
            cell["adopters"][f] += int(merged[f])

    rows = []
    for (cohort, y) in sorted(cells):
        cell = cells[(cohort, y)]
        other = cells.get(("health" if cohort == "control" else "control", y))
        for f in feature_names:
            n, x = cell["n"], cell["adopters"][f]
            p = x / n if n else 0.0
            margin = stats.t.ppf(0.975, n - 1) * math.sqrt(p * (1 - p) / n) * 100 if n >= 2 else None
            z = pv = h = None
            if n > 0 and other and other["n"] > 0:
                n2, x2 = other["n"], other["adopters"][f]
                p2 = x2 / n2
                h = abs(2 * math.asin(math.sqrt(p)) - 2 * math.asin(math.sqrt(p2)))
                pooled = (x + x2) / (n + n2)
                if 0 < pooled < 1:
                    z = (p - p2) / math.sqrt(pooled * (1 - pooled) * (1 / n + 1 / n2))
                    pv = 2 * stats.norm.sf(abs(z))
            rows.append([cohort, y, f, n, cell["with_pixel"], x, repr(p),
                         "" if margin is None else repr(float(margin)),
                         "" if z is None else repr(z), "" if pv is None else repr(float(pv)),
                         "" if h is None else repr(h)])

    with open(HERE / "expected_adoption.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cohort", "year", "feature", "n", "n_with_pixel", "adopters", "p", "margin", "z",
                    "p_value", "cohens_h"])
        w.writerows(rows)

    attributed = sum(1 for v in site_features.values() if v[1] is not None)
    print(f"site-years {len(site_features)}, with config {attributed}, kept configs {len(kept_configs)}, "
          f"rows {len(rows)}")


if __name__ == "__main__":
    main()
