import math

import pytest

from asyncdial.dst import empty_state, merge_slots
from asyncdial.nlu import SlotSet
from asyncdial.rtdb import search
from asyncdial.scenario import (
    AnswerAction,
    CandidateCard,
    ChoiceError,
    CloseAction,
    DialoguePhase,
    ElicitAction,
    FailingRouteProvider,
    MockRouteProvider,
    PresentAction,
    RepromptAction,
    RouteAction,
    RoutePlan,
    RouteUnavailableError,
    ScenarioState,
    TravelMode,
    WelcomeAction,
    build_route,
    haversine_m,
    next_action,
    parse_choice,
    plan_turn,
    register_choice,
    summarize_route,
)


def dst_with(**cats):
    return merge_slots(empty_state("s"), SlotSet.of(cats), 1)


def test_haversine_known_distances(catalog):
    a = catalog.get("kw001")
    c = catalog.get("kw003")
    d = catalog.get("kw004")
    assert haversine_m(a.lat, a.lon, c.lat, c.lon) == pytest.approx(1560.0, abs=0.5)
    assert haversine_m(a.lat, a.lon, d.lat, d.lon) == pytest.approx(7800.0, abs=0.5)
    assert haversine_m(a.lat, a.lon, a.lat, a.lon) == 0.0


def test_route_provider_walk_and_transit(catalog):
    provider = MockRouteProvider()
    walk = provider.leg(catalog.get("kw001"), catalog.get("kw003"))
    assert walk.mode is TravelMode.WALK
    assert walk.duration_min == 20  # ceil(1560 / 80)

    transit = provider.leg(catalog.get("kw001"), catalog.get("kw004"))
    assert transit.mode is TravelMode.TRANSIT
    assert transit.duration_min == 25  # ceil(7800 / 400) + 5


def _spot_at(spot_id, lat, lon):
    from asyncdial.rtdb import SpotRecord

    return SpotRecord(spot_id, "N" + spot_id, "d", {"Seeing": frozenset(["temple"])}, lat, lon)


def test_route_provider_mode_boundary():
    provider = MockRouteProvider()
    origin = _spot_at("o", 35.0, 135.0)
    # pick offsets just inside / outside the 2 km walking limit
    lat_for = lambda meters: 35.0 + math.degrees(meters / 6371000.0)
    inside = provider.leg(origin, _spot_at("i", lat_for(1999.0), 135.0))
    outside = provider.leg(origin, _spot_at("u", lat_for(2001.0), 135.0))
    assert inside.mode is TravelMode.WALK and inside.duration_min == 25
    assert outside.mode is TravelMode.TRANSIT
    assert outside.duration_min == math.ceil(outside.distance_m / 400.0) + 5

    nearby = provider.leg(origin, _spot_at("n", lat_for(10.0), 135.0))
    assert nearby.duration_min == 1  # floor of one minute


def test_build_route_rejects_same_endpoints(catalog):
    a = catalog.get("kw001")
    with pytest.raises(ValueError):
        build_route(a, a, MockRouteProvider())


def test_build_route_wraps_provider_failures(catalog):
    a, b = catalog.get("kw001"), catalog.get("kw003")
    with pytest.raises(RouteUnavailableError):
        build_route(a, b, FailingRouteProvider())

    class Broken:
        def leg(self, a, b):
            raise OSError("socket closed")

    with pytest.raises(RouteUnavailableError):
        build_route(a, b, Broken())


def test_summarize_route_sentences(catalog):
    a, c = catalog.get("kw001"), catalog.get("kw003")
    names = {s.spot_id: s.name for s in (a, c)}
    plan = build_route(a, c, MockRouteProvider())
    text = summarize_route(plan, names)
    assert text == (
        "From Hoshizora Hill Observatory, walk about 20 min to "
        "Kawamachi Planetarium Lawn."
    )
    assert "kw00" not in text  # no raw ids leak into speech

    fallback = summarize_route(RoutePlan(()), names)
    assert "could not prepare the travel route" in fallback


CARDS = tuple(
    CandidateCard("c%d" % i, "Name %d" % i, "desc", ("temple",), 1) for i in (1, 2, 3, 4)
)


def test_parse_choice_numbers_names_and_noise():
    assert parse_choice("1 and 3", CARDS) == ["c1", "c3"]
    assert parse_choice("let's do 4 then 2", CARDS) == ["c4", "c2"]
    assert parse_choice("1, 1 and 3", CARDS) == ["c1", "c3"]  # dupes collapse
    assert parse_choice("9 and 1", CARDS) == ["c1"]  # out of range ignored
    assert parse_choice("Name 2 and Name 3 please", CARDS) == ["c2", "c3"]
    assert parse_choice("whatever sounds good", CARDS) == []


def test_register_choice_validation():
    state = ScenarioState()
    state.advance(DialoguePhase.RECOMMEND)
    state.advance(DialoguePhase.CHOOSE)
    state.presented = CARDS

    with pytest.raises(ChoiceError):
        register_choice(state, ["c1"])
    with pytest.raises(ChoiceError):
        register_choice(state, ["c1", "c1"])
    with pytest.raises(ChoiceError):
        register_choice(state, ["c1", "zz"])
    register_choice(state, ["c1", "c3"])
    assert state.chosen == ("c1", "c3")
    assert state.phase is DialoguePhase.ROUTE

    fresh = ScenarioState()
    with pytest.raises(ChoiceError):
        register_choice(fresh, ["c1", "c3"])


def test_phase_can_never_move_backwards():
    state = ScenarioState()
    state.advance(DialoguePhase.CHOOSE)
    with pytest.raises(ValueError):
        state.advance(DialoguePhase.RECOMMEND)
    assert state.phase_history == [DialoguePhase.WELCOME, DialoguePhase.CHOOSE]


def test_plan_welcome_turn(five_catalog):
    state = ScenarioState()
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, empty_state("s"), None, "", MockRouteProvider()
    )
    assert isinstance(plan.action, WelcomeAction)
    assert plan.phases == (DialoguePhase.RECOMMEND,)
    assert state.phase is DialoguePhase.WELCOME  # planning never mutates


def test_plan_elicit_targets_first_uncovered_category(five_catalog):
    state = ScenarioState()
    state.advance(DialoguePhase.RECOMMEND)
    vocab = five_catalog.vocabulary

    plan = plan_turn(state, five_catalog, vocab, empty_state("s"), None, "hi", MockRouteProvider())
    assert isinstance(plan.action, ElicitAction)
    assert plan.action.category == "Seeing"
    assert plan.action.examples == ("temple", "garden")
    assert plan.phases == ()

    covered = dst_with(Seeing=["bridge"])
    plan = plan_turn(state, five_catalog, vocab, covered, None, "hi", MockRouteProvider())
    assert plan.action.category == "Eating"
    assert plan.action.examples == ("sushi", "ramen")

    all_covered = merge_slots(
        dst_with(Seeing=["bridge"], Eating=["sushi"]),
        SlotSet.of({"Healing": ["hot spring"]}),
        2,
    )
    plan = plan_turn(state, five_catalog, vocab, all_covered, None, "hi", MockRouteProvider())
    assert plan.action.category == "Seeing"  # fallback when everything is covered


def test_plan_elicit_when_too_few_positive_candidates(five_catalog):
    state = ScenarioState()
    state.advance(DialoguePhase.RECOMMEND)
    dst = dst_with(Healing=["hot spring"])  # only t03 scores
    ranked = search(five_catalog, dst, k=4)
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, dst, ranked, "hi", MockRouteProvider()
    )
    assert isinstance(plan.action, ElicitAction)


def test_plan_present_when_four_positive_candidates(five_catalog):
    state = ScenarioState()
    state.advance(DialoguePhase.RECOMMEND)
    dst = dst_with(Seeing=["temple", "garden", "bridge"], Eating=["sushi"])
    ranked = search(five_catalog, dst, k=4)
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, dst, ranked, "hi", MockRouteProvider()
    )
    assert isinstance(plan.action, PresentAction)
    assert plan.phases == (DialoguePhase.CHOOSE,)
    cards = plan.action.cards
    assert len(cards) == 4
    # t01 and t04 score 2; ids break the tie; t02 scores 2 as well
    assert [c.spot_id for c in cards] == ["t01", "t02", "t04", "t03"]
    by_id = {c.spot_id: c for c in cards}
    assert by_id["t01"].matched == ("garden", "temple")
    assert by_id["t02"].matched == ("sushi", "bridge") or by_id["t02"].matched == ("bridge", "sushi")
    assert by_id["t03"].score == 1

    apply_state = ScenarioState()
    apply_state.advance(DialoguePhase.RECOMMEND)
    from asyncdial.scenario import apply_plan

    apply_plan(apply_state, plan)
    assert apply_state.phase is DialoguePhase.CHOOSE
    assert apply_state.presented == cards
    assert apply_state.presented_ever == {"t01", "t02", "t03", "t04"}


def _choose_state(five_catalog):
    state = ScenarioState()
    state.advance(DialoguePhase.RECOMMEND)
    state.advance(DialoguePhase.CHOOSE)
    dst = dst_with(Seeing=["temple", "garden", "bridge"], Eating=["sushi"])
    ranked = search(five_catalog, dst, k=4)
    cards = []
    for sid, score in ranked.entries:
        spot = five_catalog.get(sid)
        cards.append(CandidateCard(sid, spot.name, spot.description, (), score))
    state.presented = tuple(cards)
    return state, dst


def test_plan_choose_builds_route(five_catalog):
    state, dst = _choose_state(five_catalog)
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, dst, None, "1 and 3", MockRouteProvider()
    )
    assert isinstance(plan.action, RouteAction)
    assert plan.phases == (DialoguePhase.ROUTE, DialoguePhase.QA)
    assert plan.choose == ("t01", "t04")
    assert not plan.action.plan.is_empty()
    assert plan.action.chosen_names == ("Willow Temple", "Stone Garden Hall")
    assert plan.action.summary.startswith("From Willow Temple")


def test_plan_choose_invalid_reprompts(five_catalog):
    state, dst = _choose_state(five_catalog)
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, dst, None, "just 2", MockRouteProvider()
    )
    assert isinstance(plan.action, RepromptAction)
    assert plan.phases == ()
    assert "exactly two" in plan.action.reason


def test_plan_choose_survives_route_failure(five_catalog):
    state, dst = _choose_state(five_catalog)
    plan = plan_turn(
        state, five_catalog, five_catalog.vocabulary, dst, None, "1 and 2", FailingRouteProvider()
    )
    assert isinstance(plan.action, RouteAction)
    assert plan.action.plan.is_empty()
    assert "could not prepare the travel route" in plan.action.summary
    assert plan.phases == (DialoguePhase.ROUTE, DialoguePhase.QA)


def test_plan_qa_answers_then_closes(five_catalog):
    state = ScenarioState()
    for phase in (DialoguePhase.RECOMMEND, DialoguePhase.CHOOSE, DialoguePhase.ROUTE, DialoguePhase.QA):
        state.advance(phase)
    state.plan_summary = "From A, walk about 5 min to B."
    vocab = five_catalog.vocabulary

    plan = plan_turn(state, five_catalog, vocab, empty_state("s"), None, "how far is it?", MockRouteProvider())
    assert isinstance(plan.action, AnswerAction)
    assert plan.action.plan_context == "From A, walk about 5 min to B."
    assert plan.phases == ()

    plan = plan_turn(state, five_catalog, vocab, empty_state("s"), None, "thanks, goodbye!", MockRouteProvider())
    assert isinstance(plan.action, CloseAction)
    assert plan.phases == (DialoguePhase.END,)

    # farewell matching is word-bounded
    plan = plan_turn(state, five_catalog, vocab, empty_state("s"), None, "is there a goodbyeish gift shop", MockRouteProvider())
    assert isinstance(plan.action, AnswerAction)


def test_plan_rejects_finished_dialogue(five_catalog):
    state = ScenarioState()
    for phase in (DialoguePhase.RECOMMEND, DialoguePhase.CHOOSE, DialoguePhase.ROUTE, DialoguePhase.QA, DialoguePhase.END):
        state.advance(phase)
    with pytest.raises(ValueError):
        plan_turn(state, five_catalog, five_catalog.vocabulary, empty_state("s"), None, "hi", MockRouteProvider())


def test_next_action_plans_and_applies(five_catalog):
    state = ScenarioState()
    action = next_action(state, five_catalog, five_catalog.vocabulary, empty_state("s"), None)
    assert isinstance(action, WelcomeAction)
    assert state.phase is DialoguePhase.RECOMMEND
