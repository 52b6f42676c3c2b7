"""Recommend-target database: the spot catalog and slot-overlap ranking.

The catalog is ingested once from a strict JSONL file (one spot per line)
and is immutable afterwards; the metadata vocabulary, including value
frequencies, is derived during ingest. Ranking a spot against the dialogue
state is a plain intersection count per category, which keeps the search an
exact, fully auditable function of the accumulated slots.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from .dst import DSTState
from .nlu import MetadataVocabulary

logger = logging.getLogger(__name__)

_SPOT_FIELDS = {"spot_id", "name", "description", "metadata", "location"}


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class SpotRecord:
    spot_id: str
    name: str
    description: str
    metadata: "dict[str, frozenset[str]]"
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise CatalogError("spot %r: lat %r out of range" % (self.spot_id, self.lat))
        if not -180.0 <= self.lon <= 180.0:
            raise CatalogError("spot %r: lon %r out of range" % (self.spot_id, self.lon))


@dataclass(frozen=True)
class RankedSpots:
    """Search result ordered by (score desc, spot_id asc)."""

    entries: tuple[tuple[str, int], ...]
    dst_version: int

    def spot_ids(self) -> list[str]:
        return [spot_id for spot_id, _ in self.entries]


class SpotCatalog:
    def __init__(self, spots: Iterable[SpotRecord]):
        self.spots: dict[str, SpotRecord] = {}
        order: list[str] = []
        counts: dict[str, dict[str, int]] = {}
        for spot in spots:
            if spot.spot_id in self.spots:
                raise CatalogError("duplicate spot_id %r" % spot.spot_id)
            self.spots[spot.spot_id] = spot
            order.append(spot.spot_id)
            for cat, values in spot.metadata.items():
                bucket = counts.setdefault(cat, {})
                for value in values:
                    bucket[value] = bucket.get(value, 0) + 1
        self.order = order
        self.vocabulary = MetadataVocabulary.from_counts(counts)

    def __len__(self) -> int:
        return len(self.spots)

    def get(self, spot_id: str) -> SpotRecord:
        try:
            return self.spots[spot_id]
        except KeyError:
            raise CatalogError("unknown spot_id %r" % spot_id) from None


def _parse_record(rec: dict, lineno: int) -> SpotRecord:
    if not isinstance(rec, dict):
        raise CatalogError("line %d: record must be an object" % lineno)
    unknown = set(rec.keys()) - _SPOT_FIELDS
    if unknown:
        raise CatalogError("line %d: unknown field(s) %s" % (lineno, sorted(unknown)))
    missing = _SPOT_FIELDS - set(rec.keys())
    if missing:
        raise CatalogError("line %d: missing field(s) %s" % (lineno, sorted(missing)))
    location = rec["location"]
    if not isinstance(location, dict) or set(location.keys()) != {"lat", "lon"}:
        raise CatalogError("line %d: location must be {lat, lon}" % lineno)
    metadata_raw = rec["metadata"]
    if not isinstance(metadata_raw, dict):
        raise CatalogError("line %d: metadata must be an object" % lineno)
    metadata: dict[str, frozenset[str]] = {}
    for cat, values in metadata_raw.items():
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise CatalogError(
                "line %d: metadata[%r] must be a list of strings" % (lineno, cat)
            )
        metadata[cat] = frozenset(values)
    for field_name in ("spot_id", "name", "description"):
        if not isinstance(rec[field_name], str) or not rec[field_name]:
            raise CatalogError("line %d: %s must be a non-empty string" % (lineno, field_name))
    return SpotRecord(
        spot_id=rec["spot_id"],
        name=rec["name"],
        description=rec["description"],
        metadata=metadata,
        lat=float(location["lat"]),
        lon=float(location["lon"]),
    )


def ingest_catalog(path: str) -> SpotCatalog:
    """Load a JSONL spot file; any structural problem is a hard error."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CatalogError("line %d: invalid JSON (%s)" % (lineno, exc)) from None
            records.append(_parse_record(rec, lineno))
    catalog = SpotCatalog(records)
    logger.info("ingested %d spots from %s", len(catalog), path)
    return catalog


def score_spot(spot: SpotRecord, dst: DSTState) -> int:
    """Overlap between the spot's metadata and the accumulated slots."""
    total = 0
    for cat, wanted in dst.slots.items():
        have = spot.metadata.get(cat)
        if have:
            total += len(have & wanted)
    return total


def search(
    catalog: SpotCatalog,
    dst: DSTState,
    k: int,
    exclude: "frozenset[str] | set[str]" = frozenset(),
) -> RankedSpots:
    """Top-k spots by (score desc, spot_id asc), skipping excluded ids."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [
        (spot_id, score_spot(spot, dst))
        for spot_id, spot in catalog.spots.items()
        if spot_id not in exclude
    ]
    scored.sort(key=lambda e: (-e[1], e[0]))
    return RankedSpots(tuple(scored[:k]), dst_version=dst.version)
