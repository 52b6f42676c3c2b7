"""Intent understanding: vocabulary-grounded prompts and slot extraction.

A :class:`MetadataVocabulary` is derived from the spot catalog (category ->
values with occurrence frequencies). The NLU prompt embeds that vocabulary,
truncated round-robin across categories to fit a character budget, so large
catalogs never overflow the model's input. The backend reply is parsed from
a fixed JSON wire shape into a validated :class:`SlotSet`; anything outside
the vocabulary is dropped (and counted), never guessed at.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Iterable, Mapping

logger = logging.getLogger(__name__)

WIRE_EMPTY = '{"slots":[]}'

# Line markers the rendered prompt is guaranteed to carry. Offline backends
# parse the vocabulary and utterance back out of the prompt through these.
VOCAB_HEADER = "Known categories and values:"
UTTERANCE_PREFIX = "Utterance: "


class ParseError(ValueError):
    """Backend reply was not parseable JSON."""

    def __init__(self, raw: str):
        super().__init__("unparseable slot response: %r" % raw[:200])
        self.raw = raw


class SchemaError(ValueError):
    """Backend reply was JSON but not the slot wire shape."""


class PromptBudgetError(ValueError):
    """Budget cannot fit the prompt skeleton plus one value per category."""


def normalize_value(text: str) -> str:
    """Canonical matching form: whitespace-trimmed and case-folded."""
    return text.strip().casefold()


@dataclass(frozen=True)
class SlotSet:
    """Validated user-intent slots: category name -> set of values."""

    slots: Mapping[str, frozenset[str]] = field(default_factory=dict)

    @staticmethod
    def of(mapping: Mapping[str, Iterable[str]]) -> "SlotSet":
        out = {}
        for cat, vals in mapping.items():
            frozen = frozenset(vals)
            if frozen:
                out[cat] = frozen
        return SlotSet(out)

    def is_empty(self) -> bool:
        return not self.slots

    def value_count(self) -> int:
        return sum(len(v) for v in self.slots.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SlotSet):
            return NotImplemented
        return dict(self.slots) == dict(other.slots)

    def __hash__(self):  # pragma: no cover - not used as dict key
        return hash(frozenset((c, v) for c, v in self.slots.items()))


@dataclass(frozen=True)
class VocabValue:
    value: str
    frequency: int


@dataclass(frozen=True)
class VocabCategory:
    name: str
    values: tuple[VocabValue, ...]


class MetadataVocabulary:
    """Ordered categories and values drawn from catalog metadata.

    Category order is first appearance in the catalog; values within a
    category are ordered by descending frequency, ties broken alphabetically.
    Lookups are case-insensitive and whitespace-insensitive, resolving to the
    canonical catalog spelling.
    """

    def __init__(self, categories: Iterable[VocabCategory]):
        self.categories: tuple[VocabCategory, ...] = tuple(categories)
        seen = set()
        for cat in self.categories:
            if cat.name in seen:
                raise ValueError("duplicate vocabulary category %r" % cat.name)
            seen.add(cat.name)
            vals = [v.value for v in cat.values]
            if len(vals) != len(set(vals)):
                raise ValueError("duplicate values in category %r" % cat.name)
            for v in cat.values:
                if v.frequency < 1:
                    raise ValueError(
                        "frequency < 1 for %r in %r" % (v.value, cat.name)
                    )
        self._cat_by_norm = {normalize_value(c.name): c.name for c in self.categories}
        self._val_by_norm = {
            c.name: {normalize_value(v.value): v.value for v in c.values}
            for c in self.categories
        }

    @staticmethod
    def from_counts(counts: Mapping[str, Mapping[str, int]]) -> "MetadataVocabulary":
        """Build from {category: {value: frequency}} preserving category order."""
        cats = []
        for name, vals in counts.items():
            ordered = sorted(vals.items(), key=lambda kv: (-kv[1], kv[0]))
            cats.append(
                VocabCategory(name, tuple(VocabValue(v, f) for v, f in ordered))
            )
        return MetadataVocabulary(cats)

    def category_names(self) -> list[str]:
        return [c.name for c in self.categories]

    def canonical(self, category: str, value: str) -> tuple[str, str] | None:
        """Resolve a (category, value) pair to catalog spelling, or None."""
        cat = self._cat_by_norm.get(normalize_value(category))
        if cat is None:
            return None
        val = self._val_by_norm[cat].get(normalize_value(value))
        if val is None:
            return None
        return cat, val

    def __eq__(self, other) -> bool:
        if not isinstance(other, MetadataVocabulary):
            return NotImplemented
        return self.categories == other.categories


@dataclass(frozen=True)
class PromptBudget:
    max_chars: int = 4000

    def __post_init__(self):
        if self.max_chars < 1:
            raise ValueError("max_chars must be positive")


def _load_template(name: str) -> Template:
    text = resources.files("asyncdial").joinpath("templates", name).read_text("utf-8")
    return Template(text)


_NLU_TEMPLATE = _load_template("nlu_prompt.txt")
for _marker in (VOCAB_HEADER, UTTERANCE_PREFIX):
    if _marker.rstrip() not in _NLU_TEMPLATE.template:
        raise RuntimeError("nlu template is missing marker %r" % _marker)


def _render_prompt(included: "dict[str, list[str]]", user_text: str) -> str:
    lines = ["- %s: %s" % (cat, ", ".join(vals)) for cat, vals in included.items()]
    return _NLU_TEMPLATE.substitute(
        vocabulary="\n".join(lines), utterance=user_text
    ).rstrip("\n")


def build_nlu_prompt(
    vocab: MetadataVocabulary, user_text: str, budget: PromptBudget
) -> str:
    """Render the slot-extraction prompt within `budget.max_chars`.

    Every category name appears. Values are admitted round-robin across
    categories, each category yielding its values in descending-frequency
    order, until the first value that would overflow the budget; inclusion
    therefore forms a prefix of a fixed sequence, so a larger budget can only
    extend the surviving set (never reshuffle it).
    """
    if not vocab.categories:
        return _render_prompt({}, user_text)
    included: dict[str, list[str]] = {c.name: [] for c in vocab.categories}
    # round zero: one value per category is mandatory
    for cat in vocab.categories:
        included[cat.name].append(cat.values[0].value)
    base = _render_prompt(included, user_text)
    if len(base) > budget.max_chars:
        raise PromptBudgetError(
            "budget of %d chars cannot fit the prompt skeleton plus one value "
            "per category (%d chars needed)" % (budget.max_chars, len(base))
        )
    rank = 1
    while True:
        progressed = False
        for cat in vocab.categories:
            if rank >= len(cat.values):
                continue
            progressed = True
            included[cat.name].append(cat.values[rank].value)
            if len(_render_prompt(included, user_text)) > budget.max_chars:
                included[cat.name].pop()
                return _render_prompt(included, user_text)
        if not progressed:
            return _render_prompt(included, user_text)
        rank += 1


@dataclass(frozen=True)
class ParsedSlots:
    """Outcome of parsing one backend reply."""

    slots: SlotSet
    dropped: int = 0


def parse_slot_response(raw: str, vocab: MetadataVocabulary) -> ParsedSlots:
    """Parse the slot wire shape and validate every pair against the vocabulary.

    Raises ParseError for non-JSON input and SchemaError for JSON that is not
    exactly {"slots": [{"category": str, "value": str}, ...]}. Pairs outside
    the vocabulary are dropped and counted, not errors.
    """
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        raise ParseError(raw) from None
    if not isinstance(data, dict) or set(data.keys()) != {"slots"}:
        raise SchemaError("expected a single top-level 'slots' list")
    items = data["slots"]
    if not isinstance(items, list):
        raise SchemaError("'slots' must be a list")
    collected: dict[str, set[str]] = {}
    dropped = 0
    for item in items:
        if (
            not isinstance(item, dict)
            or set(item.keys()) != {"category", "value"}
            or not isinstance(item.get("category"), str)
            or not isinstance(item.get("value"), str)
        ):
            raise SchemaError("each slot must be {'category': str, 'value': str}")
        resolved = vocab.canonical(item["category"], item["value"])
        if resolved is None:
            dropped += 1
            continue
        cat, val = resolved
        collected.setdefault(cat, set()).add(val)
    return ParsedSlots(SlotSet.of(collected), dropped)


@dataclass(frozen=True)
class ExtractResult:
    slots: SlotSet
    degraded: bool = False
    retries: int = 0
    dropped: int = 0
    latency_injected: float = 0.0


def extract_slots(
    user_text: str,
    vocab: MetadataVocabulary,
    backend,
    budget: PromptBudget,
    session_id: str = "",
    turn_id: int = 0,
) -> ExtractResult:
    """Run the backend over the NLU prompt and return validated slots.

    A parse failure is retried exactly once with the same prompt; a second
    failure (or a transport error) degrades to an empty SlotSet so path B can
    never take the turn down with it.
    """
    from .backends import BackendRequest, Purpose, TransportError

    prompt = build_nlu_prompt(vocab, user_text, budget)
    request = BackendRequest(Purpose.NLU, prompt, session_id, turn_id)
    latency = 0.0
    for attempt in (0, 1):
        try:
            response = backend.complete(request)
        except TransportError as exc:
            logger.warning("NLU backend transport failure (attempt %d): %s", attempt, exc)
            latency += getattr(exc, "latency_injected", 0.0)
            continue
        latency += response.latency_injected
        try:
            parsed = parse_slot_response(response.text, vocab)
        except (ParseError, SchemaError) as exc:
            logger.warning("NLU reply rejected (attempt %d): %s", attempt, exc)
            continue
        return ExtractResult(
            parsed.slots, retries=attempt, dropped=parsed.dropped, latency_injected=latency
        )
    return ExtractResult(SlotSet(), degraded=True, retries=1, latency_injected=latency)
