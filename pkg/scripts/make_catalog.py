"""Regenerate the packaged Kawamachi spot catalog.

The catalog is synthetic but not arbitrary: the demo dialogue and several
tests rely on structural properties this script guarantees and verifies:

* kw001..kw004 are the only spots tagged Playing/stargazing, so a
  stargazing preference surfaces exactly those four, in id order;
* kw001 -> kw003 is a walkable ~1.56 km and kw001 -> kw004 a ~7.8 km
  transit hop, giving stable 20 min / 25 min route legs;
* "Seeing" is the first vocabulary category and its two most frequent
  values are "temple" then "garden" (the elicitation line quotes them);
* the full vocabulary prompt fits the default 4000-character budget.

Run from the repo root:  python scripts/make_catalog.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from asyncdial.nlu import PromptBudget, build_nlu_prompt  # noqa: E402
from asyncdial.rtdb import ingest_catalog  # noqa: E402
from asyncdial.scenario import haversine_m  # noqa: E402

OUT = os.path.join(
    os.path.dirname(__file__), "..", "src", "asyncdial", "data",
    "spots_kawamachi.jsonl",
)

EARTH_RADIUS_M = 6371000.0
BASE_LAT, BASE_LON = 35.0, 135.0

# (category, value, count over the 116 generated spots)
TOKEN_PLAN = [
    ("Seeing", "temple", 26),
    ("Seeing", "garden", 22),
    ("Seeing", "castle", 14),
    ("Seeing", "museum", 11),
    ("Seeing", "viewpoint", 8),
    ("Seeing", "bridge", 8),
    ("Seeing", "shrine", 8),
    ("Seeing", "old town", 4),
    ("Seeing", "lighthouse", 3),
    ("Playing", "hiking", 16),
    ("Playing", "cycling", 14),
    ("Playing", "boating", 12),
    ("Playing", "picnic", 10),
    ("Playing", "fishing", 8),
    ("Playing", "kayaking", 6),
    ("Eating", "ramen", 18),
    ("Eating", "sushi", 14),
    ("Eating", "tempura", 12),
    ("Eating", "bakery", 10),
    ("Eating", "dumplings", 8),
    ("Eating", "tea house", 8),
    ("Eating", "street food", 6),
    ("Buying", "pottery", 12),
    ("Buying", "textiles", 10),
    ("Buying", "antiques", 8),
    ("Buying", "market", 8),
    ("Buying", "woodcraft", 6),
    ("Healing", "hot spring", 12),
    ("Healing", "riverside", 10),
    ("Healing", "forest bath", 8),
    ("Healing", "meditation", 6),
    ("Healing", "massage", 6),
]

CATEGORY_ORDER = ["Seeing", "Playing", "Eating", "Buying", "Healing"]

DISTRICTS = [
    "Aoi", "Kita", "Minami", "Higashi", "Nishi", "Sakura",
    "Momiji", "Tsuki", "Kaze", "Yuki", "Hana", "Sora",
]
PLACES = [
    "Garden", "Market", "Temple Walk", "Museum", "Park", "Teahouse",
    "Bathhouse", "Workshop", "Hall", "Promenade",
]


def northward(lat, lon, meters):
    return lat + math.degrees(meters / EARTH_RADIUS_M), lon


def eastward(lat, lon, meters):
    half = math.sin(meters / (2 * EARTH_RADIUS_M)) / math.cos(math.radians(lat))
    return lat, lon + math.degrees(2 * math.asin(half))


def quartet():
    """The stargazing spots, with pinned route geometry."""
    lat3, lon3 = northward(BASE_LAT, BASE_LON, 1560.0)
    lat4, lon4 = eastward(BASE_LAT, BASE_LON, 7800.0)
    lat2, lon2 = eastward(BASE_LAT, BASE_LON, 620.0)
    return [
        {
            "spot_id": "kw001",
            "name": "Hoshizora Hill Observatory",
            "description": "A hilltop deck prized for clear night skies",
            "metadata": {"Seeing": ["viewpoint"], "Playing": ["stargazing", "hiking"]},
            "location": {"lat": round(BASE_LAT, 6), "lon": round(BASE_LON, 6)},
        },
        {
            "spot_id": "kw002",
            "name": "Riverbank Star Park",
            "description": "An open riverside lawn that dims its lamps after dusk",
            "metadata": {"Playing": ["stargazing", "picnic"], "Healing": ["riverside"]},
            "location": {"lat": round(lat2, 6), "lon": round(lon2, 6)},
        },
        {
            "spot_id": "kw003",
            "name": "Kawamachi Planetarium Lawn",
            "description": "A planetarium garden with telescopes on loan",
            "metadata": {"Seeing": ["museum"], "Playing": ["stargazing"]},
            "location": {"lat": round(lat3, 6), "lon": round(lon3, 6)},
        },
        {
            "spot_id": "kw004",
            "name": "Mount Kago Night Gate",
            "description": "A mountain gate trail famous for summit stars",
            "metadata": {"Seeing": ["viewpoint"], "Playing": ["stargazing", "hiking"]},
            "location": {"lat": round(lat4, 6), "lon": round(lon4, 6)},
        },
    ]


def generated_spots():
    """116 further spots; value tokens dealt cyclically, collision-free."""
    count = 116
    stream = []
    for cat, value, n in TOKEN_PLAN:
        stream.extend([(cat, value)] * n)
    assigned = [dict() for _ in range(count)]
    for i, (cat, value) in enumerate(stream):
        slot = assigned[i % count].setdefault(cat, [])
        assert value not in slot, "token plan dealt a duplicate"
        slot.append(value)
    spots = []
    for i in range(count):
        idx = i + 5
        district = DISTRICTS[i % len(DISTRICTS)]
        place = PLACES[(i // len(DISTRICTS)) % len(PLACES)]
        metadata = {
            cat: sorted(assigned[i][cat])
            for cat in CATEGORY_ORDER
            if cat in assigned[i]
        }
        if not metadata:
            metadata = {"Seeing": ["old town"]}
        flat = [v for vals in metadata.values() for v in vals]
        desc = "A local favourite for " + " and ".join(flat[:2])
        lat = round(34.96 + (i % 13) * 0.0065, 6)
        lon = round(134.94 + (i // 13) * 0.0110, 6)
        spots.append(
            {
                "spot_id": "kw%03d" % idx,
                "name": "%s %s" % (district, place),
                "description": desc,
                "metadata": metadata,
                "location": {"lat": lat, "lon": lon},
            }
        )
    return spots


def main():
    spots = quartet() + generated_spots()
    names = [s["name"] for s in spots]
    assert len(set(names)) == len(names), "duplicate spot names"

    with open(OUT, "w", encoding="utf-8") as fh:
        for spot in spots:
            fh.write(json.dumps(spot, ensure_ascii=False) + "\n")

    catalog = ingest_catalog(OUT)
    assert len(catalog.spots) == 120

    stargazers = [
        sid for sid, s in catalog.spots.items()
        if "stargazing" in s.metadata.get("Playing", frozenset())
    ]
    assert sorted(stargazers) == ["kw001", "kw002", "kw003", "kw004"], stargazers

    d13 = haversine_m(
        catalog.get("kw001").lat, catalog.get("kw001").lon,
        catalog.get("kw003").lat, catalog.get("kw003").lon,
    )
    d14 = haversine_m(
        catalog.get("kw001").lat, catalog.get("kw001").lon,
        catalog.get("kw004").lat, catalog.get("kw004").lon,
    )
    assert 1520 < d13 <= 1600, d13
    assert 7600 < d14 <= 8000, d14

    vocab = catalog.vocabulary
    assert vocab.categories[0].name == "Seeing"
    seeing = vocab.categories[0]
    assert [v.value for v in seeing.values[:2]] == ["temple", "garden"], seeing.values
    assert seeing.values[0].frequency > seeing.values[1].frequency
    assert seeing.values[1].frequency > seeing.values[2].frequency

    prompt = build_nlu_prompt(vocab, "x" * 120, PromptBudget())
    assert len(prompt) <= 4000, len(prompt)

    print("wrote %s (%d spots; d13=%.1f m, d14=%.1f m, prompt=%d chars)" % (
        OUT, len(spots), d13, d14, len(prompt)))


if __name__ == "__main__":
    main()
