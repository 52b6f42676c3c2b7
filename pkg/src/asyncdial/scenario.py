"""Travel-agency dialogue flow: phases, per-turn action planning, and routes.

The flow is a strict forward progression: Welcome -> Recommend -> Choose ->
Route -> Qa -> End. While recommending, the system either elicits an
uncovered preference category or, once at least four spots score positively
under the latest search, presents the top four and asks the user to pick
two. A valid pick immediately yields a transportation plan (Route is passed
through within that turn) and the dialogue moves on to questions.

Planning is split from application: ``plan_turn`` computes the action and
the state delta without mutating anything, so a failed reply generation
leaves the session exactly as it was; ``apply_plan`` commits the delta.
``next_action`` combines both for direct use.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .dst import DSTState
from .nlu import MetadataVocabulary
from .rtdb import RankedSpots, SpotCatalog, SpotRecord

logger = logging.getLogger(__name__)

PRESENT_COUNT = 4
CHOICE_COUNT = 2
MIN_POSITIVE_CANDIDATES = 4

WALK_MAX_METERS = 2000.0
WALK_METERS_PER_MIN = 80.0
TRANSIT_METERS_PER_MIN = 400.0
TRANSIT_OVERHEAD_MIN = 5

EARTH_RADIUS_M = 6371000.0

_FAREWELL_RE = re.compile(r"\b(bye|goodbye|farewell)\b", re.IGNORECASE)


class DialoguePhase(str, Enum):
    WELCOME = "Welcome"
    RECOMMEND = "Recommend"
    CHOOSE = "Choose"
    ROUTE = "Route"
    QA = "Qa"
    END = "End"


_PHASE_ORDER = [
    DialoguePhase.WELCOME,
    DialoguePhase.RECOMMEND,
    DialoguePhase.CHOOSE,
    DialoguePhase.ROUTE,
    DialoguePhase.QA,
    DialoguePhase.END,
]


class TravelMode(str, Enum):
    WALK = "Walk"
    TRANSIT = "Transit"


class ChoiceError(ValueError):
    """User selection rejected; carries the re-prompt reason."""


class RouteUnavailableError(RuntimeError):
    """The route provider failed; the dialogue degrades but survives."""


@dataclass(frozen=True)
class RouteLeg:
    from_spot_id: str
    to_spot_id: str
    mode: TravelMode
    distance_m: float
    duration_min: int


@dataclass(frozen=True)
class RoutePlan:
    legs: tuple[RouteLeg, ...]

    def is_empty(self) -> bool:
        return not self.legs


@dataclass(frozen=True)
class CandidateCard:
    spot_id: str
    name: str
    description: str
    matched: tuple[str, ...]
    score: int


# -- dialogue actions ---------------------------------------------------------


@dataclass(frozen=True)
class WelcomeAction:
    goal = "welcome"


@dataclass(frozen=True)
class ElicitAction:
    goal = "elicit"
    category: str = ""
    examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class PresentAction:
    goal = "present"
    cards: tuple[CandidateCard, ...] = ()


@dataclass(frozen=True)
class RepromptAction:
    goal = "reprompt"
    reason: str = ""


@dataclass(frozen=True)
class RouteAction:
    goal = "route"
    summary: str = ""
    plan: RoutePlan = RoutePlan(())
    chosen_names: tuple[str, ...] = ()


@dataclass(frozen=True)
class AnswerAction:
    goal = "answer"
    plan_context: str = ""


@dataclass(frozen=True)
class CloseAction:
    goal = "close"


DialogueAction = (
    WelcomeAction
    | ElicitAction
    | PresentAction
    | RepromptAction
    | RouteAction
    | AnswerAction
    | CloseAction
)


@dataclass
class ScenarioState:
    """Per-session flow state; mutated only through apply_plan/advance."""

    phase: DialoguePhase = DialoguePhase.WELCOME
    presented: tuple[CandidateCard, ...] = ()
    presented_ever: set = field(default_factory=set)
    chosen: tuple[str, ...] = ()
    plan: RoutePlan | None = None
    plan_summary: str = ""
    phase_history: list = field(default_factory=list)

    def __post_init__(self):
        self.phase_history.append(self.phase)

    def advance(self, new_phase: DialoguePhase) -> None:
        if _PHASE_ORDER.index(new_phase) < _PHASE_ORDER.index(self.phase):
            raise ValueError(
                "phase cannot move backwards: %s -> %s" % (self.phase, new_phase)
            )
        if new_phase != self.phase:
            self.phase = new_phase
            self.phase_history.append(new_phase)


@dataclass(frozen=True)
class TurnPlan:
    """Planned action plus the state delta to commit once the reply exists."""

    action: DialogueAction
    phases: tuple[DialoguePhase, ...] = ()
    present: tuple[CandidateCard, ...] | None = None
    choose: tuple[str, ...] | None = None
    plan: RoutePlan | None = None
    plan_summary: str | None = None


# -- route provider -----------------------------------------------------------


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


class MockRouteProvider:
    """Deterministic offline routing from straight-line distance.

    Walk when the distance is at most 2 km, at 80 m/min; otherwise transit at
    400 m/min plus a 5 min overhead. Durations round up to whole minutes with
    a 1 min floor.
    """

    def leg(self, a: SpotRecord, b: SpotRecord) -> RouteLeg:
        distance = haversine_m(a.lat, a.lon, b.lat, b.lon)
        if distance <= WALK_MAX_METERS:
            mode = TravelMode.WALK
            duration = math.ceil(distance / WALK_METERS_PER_MIN)
        else:
            mode = TravelMode.TRANSIT
            duration = math.ceil(distance / TRANSIT_METERS_PER_MIN) + TRANSIT_OVERHEAD_MIN
        return RouteLeg(a.spot_id, b.spot_id, mode, distance, max(1, duration))


class FailingRouteProvider:
    """Provider stub that always fails (degradation tests)."""

    def leg(self, a: SpotRecord, b: SpotRecord) -> RouteLeg:
        raise RouteUnavailableError("route provider unreachable")


def build_route(a: SpotRecord, b: SpotRecord, provider) -> RoutePlan:
    """Single-leg plan between two distinct spots."""
    if a.spot_id == b.spot_id:
        raise ValueError("route endpoints must differ")
    try:
        return RoutePlan((provider.leg(a, b),))
    except RouteUnavailableError:
        raise
    except Exception as exc:
        raise RouteUnavailableError(str(exc)) from exc


def summarize_route(plan: RoutePlan, names: Mapping[str, str]) -> str:
    """Leg-by-leg plain sentences; no ids, no coordinates, no raw data dumps."""
    if plan is None or plan.is_empty():
        return (
            "I could not prepare the travel route this time, so let us sort out "
            "the travel details on the day."
        )
    sentences = []
    for leg in plan.legs:
        verb = "walk" if leg.mode is TravelMode.WALK else "take transit"
        sentences.append(
            "From %s, %s about %d min to %s."
            % (names[leg.from_spot_id], verb, leg.duration_min, names[leg.to_spot_id])
        )
    return " ".join(sentences)


# -- choice handling ----------------------------------------------------------


def parse_choice(text: str, presented: Sequence[CandidateCard]) -> list[str]:
    """Map a free-text selection onto presented spot ids.

    Accepts option numbers ("1 and 3") or spot-name mentions; returns the
    claimed ids in mention order without validating the count (that is
    register_choice's job). Unknown references simply do not match.
    """
    ids: list[str] = []
    for token in re.findall(r"\d+", text):
        idx = int(token)
        if 1 <= idx <= len(presented):
            spot_id = presented[idx - 1].spot_id
            if spot_id not in ids:
                ids.append(spot_id)
    if ids:
        return ids
    lowered = text.casefold()
    for card in presented:
        if card.name.casefold() in lowered and card.spot_id not in ids:
            ids.append(card.spot_id)
    return ids


def register_choice(state: ScenarioState, chosen: Sequence[str]) -> None:
    """Record exactly two distinct presented spots; advance to Route."""
    if state.phase is not DialoguePhase.CHOOSE:
        raise ChoiceError("not currently choosing")
    _validate_choice(state, chosen)
    state.chosen = tuple(chosen)
    state.advance(DialoguePhase.ROUTE)


# -- per-turn planning --------------------------------------------------------


def _candidate_cards(
    catalog: SpotCatalog, dst: DSTState, ranked: RankedSpots
) -> list[CandidateCard]:
    cards = []
    for spot_id, score in ranked.entries:
        if score < 1:
            continue
        spot = catalog.get(spot_id)
        matched = []
        for cat in sorted(spot.metadata.keys()):
            wanted = dst.slots.get(cat)
            if wanted:
                matched.extend(sorted(spot.metadata[cat] & wanted))
        cards.append(
            CandidateCard(spot_id, spot.name, spot.description, tuple(matched), score)
        )
    return cards


def _elicit(vocab: MetadataVocabulary, dst: DSTState) -> ElicitAction:
    covered = dst.covered_categories()
    target = None
    for cat in vocab.categories:
        if cat.name not in covered:
            target = cat
            break
    if target is None:
        target = vocab.categories[0]
    examples = tuple(v.value for v in target.values[:2])
    return ElicitAction(category=target.name, examples=examples)


def plan_turn(
    state: ScenarioState,
    catalog: SpotCatalog,
    vocab: MetadataVocabulary,
    dst: DSTState,
    ranked: RankedSpots | None,
    user_text: str,
    route_provider,
) -> TurnPlan:
    """Decide the turn's action and state delta without mutating anything."""
    phase = state.phase
    if phase is DialoguePhase.END:
        raise ValueError("dialogue already ended")
    if phase is DialoguePhase.WELCOME:
        return TurnPlan(WelcomeAction(), phases=(DialoguePhase.RECOMMEND,))
    if phase is DialoguePhase.RECOMMEND:
        if ranked is not None:
            cards = _candidate_cards(catalog, dst, ranked)
            if len(cards) >= MIN_POSITIVE_CANDIDATES:
                top = tuple(cards[:PRESENT_COUNT])
                return TurnPlan(
                    PresentAction(cards=top),
                    phases=(DialoguePhase.CHOOSE,),
                    present=top,
                )
        return TurnPlan(_elicit(vocab, dst))
    if phase is DialoguePhase.CHOOSE:
        claimed = parse_choice(user_text, state.presented)
        try:
            _validate_choice(state, claimed)
        except ChoiceError as exc:
            return TurnPlan(RepromptAction(reason=str(exc)))
        a, b = (catalog.get(claimed[0]), catalog.get(claimed[1]))
        try:
            plan = build_route(a, b, route_provider)
        except RouteUnavailableError as exc:
            logger.warning("route unavailable for %s-%s: %s", a.spot_id, b.spot_id, exc)
            plan = RoutePlan(())
        names = {s.spot_id: s.name for s in (a, b)}
        summary = summarize_route(plan, names)
        return TurnPlan(
            RouteAction(summary=summary, plan=plan, chosen_names=(a.name, b.name)),
            phases=(DialoguePhase.ROUTE, DialoguePhase.QA),
            choose=tuple(claimed),
            plan=plan,
            plan_summary=summary,
        )
    if phase is DialoguePhase.QA:
        if _FAREWELL_RE.search(user_text):
            return TurnPlan(CloseAction(), phases=(DialoguePhase.END,))
        context = state.plan_summary or "No route is planned yet."
        return TurnPlan(AnswerAction(plan_context=context))
    raise ValueError("no user turns are planned in phase %s" % phase)  # Route


def _validate_choice(state: ScenarioState, chosen: Sequence[str]) -> None:
    if len(chosen) != len(set(chosen)):
        raise ChoiceError("the two picks must be different spots")
    if len(chosen) != CHOICE_COUNT:
        raise ChoiceError("please pick exactly two of the presented spots")
    presented_ids = {card.spot_id for card in state.presented}
    for spot_id in chosen:
        if spot_id not in presented_ids:
            raise ChoiceError("pick from the presented spots only")


def apply_plan(state: ScenarioState, plan: TurnPlan) -> None:
    """Commit a planned turn's state delta."""
    if plan.present is not None:
        state.presented = plan.present
        state.presented_ever.update(card.spot_id for card in plan.present)
    if plan.choose is not None:
        state.chosen = plan.choose
    if plan.plan is not None:
        state.plan = plan.plan
    if plan.plan_summary is not None:
        state.plan_summary = plan.plan_summary
    for phase in plan.phases:
        state.advance(phase)


def next_action(
    state: ScenarioState,
    catalog: SpotCatalog,
    vocab: MetadataVocabulary,
    dst: DSTState,
    ranked: RankedSpots | None,
    user_text: str = "",
    route_provider=None,
) -> DialogueAction:
    """Plan and immediately apply one turn's action."""
    provider = route_provider if route_provider is not None else MockRouteProvider()
    plan = plan_turn(state, catalog, vocab, dst, ranked, user_text, provider)
    apply_plan(state, plan)
    return plan.action
