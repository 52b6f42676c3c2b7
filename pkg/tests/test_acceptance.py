"""End-to-end property gate: one test per headline guarantee.

Every expected number here is either closed-form arithmetic over the fixed
latency profile or an independent oracle recomputed inside the test; nothing
is copied from engine output.
"""

import itertools
import json
import random
import time

import pytest

from asyncdial.dst import DSTStore, StoreLoadError
from asyncdial.nlu import (
    MetadataVocabulary,
    PromptBudget,
    SlotSet,
    build_nlu_prompt,
)
from asyncdial.orchestrator import TaskKind, validate_trace
from asyncdial.rtdb import SpotCatalog, SpotRecord, search
from asyncdial.scenario import DialoguePhase, TravelMode
from asyncdial.sim import (
    compare_modes,
    render_comparison,
    render_sim_report,
    run_session,
    run_simulation,
    script_from_dict,
)

from conftest import load_persona, random_catalog


def sweep_script(seed: int) -> dict:
    base = load_persona("happy")
    return {
        "name": "sweep-%d" % seed,
        "utterances": base["utterances"],
        "latency_config": {
            "respond": {"kind": "uniform", "lo": 0.2, "hi": 2.0},
            "nlu": {"kind": "uniform", "lo": 0.2, "hi": 2.0},
            "search": {"kind": "uniform", "lo": 0.2, "hi": 2.0},
        },
        "timing": {"chars_per_second": 8.0, "user_gap_seconds": 1.0},
        "seed": seed,
    }


def test_latency_hiding_closed_form(catalog, happy_script):
    """Fixed 1.2/0.9/0.05 s latencies: async hides B entirely, so the mean
    perceived gap is exactly the reply latency; the serial baseline stacks
    all three. Exact to the microsecond, and fast in wall time."""
    t0 = time.perf_counter()
    report = compare_modes(happy_script, catalog)
    elapsed = time.perf_counter() - t0

    assert report.async_report.mean_gap_us == 1_200_000
    assert report.sync_report.mean_gap_us == 2_150_000
    assert report.sync_report.mean_gap_us - report.async_report.mean_gap_us == 950_000
    assert [r.gap_async_us for r in report.per_turn] == [1_200_000] * 5
    assert [r.gap_sync_us for r in report.per_turn] == [2_150_000] * 5
    assert report.async_report.mean_gap == 1.2
    assert report.sync_report.mean_gap == 2.15
    assert elapsed < 1.0


def test_dominance_sweep_async_never_slower(catalog):
    """100 paired random-latency runs: the dual-path turn can never show a
    longer gap than the serial baseline on the same draws."""
    checked = 0
    for seed in range(100):
        script = script_from_dict(sweep_script(seed))
        report = compare_modes(script, catalog)  # raises if async is slower on average
        for row in report.per_turn:
            assert row.gap_async_us <= row.gap_sync_us, (
                "seed %d turn %d" % (seed, row.turn_id)
            )
            checked += 1
    assert checked == 500


def test_barrier_timeout_marks_stale_and_late_commit_lands(catalog, stale_script):
    """A 10 s understanding stage against a 2 s grace: the affected turns wait
    out the full grace (gap 1.2 + 2.0 s), run on the stale state, and the
    late commit becomes visible at the second barrier after its launch."""
    session = run_session(stale_script, "async", catalog)
    turns = {t.turn_id: t for t in session.traces if t.turn_id >= 1}

    assert [turns[i].stale for i in range(1, 6)] == [False, True, True, False, False]
    for turn_id in (2, 3):
        assert turns[turn_id].gap_us() == 3_200_000
        assert turns[turn_id].barrier_wait_us() == 2_000_000
    for turn_id in (1, 4, 5):
        assert turns[turn_id].gap_us() == 1_200_000

    # launch at turn 1, invisible at turn 2's barrier, visible at turn 3's
    assert turns[2].dst_version_used == 0
    assert turns[3].dst_version_used == 1
    replies = {u.turn_id: u.text for u in session.transcript if u.speaker.value == "System"}
    assert "I found four spots" not in replies[2]
    assert "I found four spots" in replies[3]


def test_fanout_and_span_invariants_hold_everywhere(catalog, happy_script, stale_script):
    """Every trace from the virtual-clock end-to-end runs passes the span
    checks: simultaneous fan-out on dual-path turns, commit after NLU,
    search after commit, no negative spans."""
    traces = []
    for script in (happy_script, stale_script):
        for mode in ("async", "sync"):
            traces.extend(run_session(script, mode, catalog).traces)
    for seed in range(10):
        script = script_from_dict(sweep_script(seed))
        for mode in ("async", "sync"):
            traces.extend(run_session(script, mode, catalog).traces)

    assert len(traces) == 144  # 24 runs x 6 turns
    dual = 0
    for trace in traces:
        validate_trace(trace)
        if trace.span(TaskKind.BARRIER_WAIT) is not None and trace.span(TaskKind.NLU):
            dual += 1
            assert (
                trace.span(TaskKind.RESPOND).start_us
                == trace.span(TaskKind.NLU).start_us
            )
    assert dual == 60  # 12 async runs x 5 user turns


def test_dst_union_oracle_and_order_independence():
    """1000 random commit sequences fold to exactly the plain set union of
    their parts, and permuting a sequence never changes the aggregate."""
    rng = random.Random(414243)
    cats = ["Seeing", "Eating", "Playing", "Healing"]
    vals = ["temple", "garden", "ramen", "sushi", "hiking", "onsen", "market"]
    for trial in range(1000):
        parts = []
        oracle: dict[str, set[str]] = {}
        for _ in range(rng.randint(1, 7)):
            picked = {}
            for cat in rng.sample(cats, rng.randint(0, len(cats))):
                chosen = rng.sample(vals, rng.randint(1, 3))
                picked[cat] = chosen
                oracle.setdefault(cat, set()).update(chosen)
            parts.append(SlotSet.of(picked))
        oracle = {c: v for c, v in oracle.items() if v}

        store = DSTStore()
        store.create_session("s")
        for turn, part in enumerate(parts, start=1):
            store.commit("s", part, turn)
        state = store.get_snapshot("s")
        assert {c: set(v) for c, v in state.slots.items()} == oracle
        assert state.version == len(parts)

        if trial % 20 == 0:
            shuffled = parts[:]
            rng.shuffle(shuffled)
            other = DSTStore()
            other.create_session("s")
            for turn, part in enumerate(shuffled, start=1):
                other.commit("s", part, turn)
            assert other.get_snapshot("s").slots == state.slots


def test_search_matches_bruteforce_oracle():
    """200 random (catalog, state, k) instances: ranked search equals an
    independent full rescoring with the same (score desc, id asc) tie-break."""
    rng = random.Random(515253)
    pool = ["temple", "garden", "castle", "museum", "bridge", "ramen", "sushi",
            "bakery", "tempura", "hiking", "boating", "cycling"]
    for trial in range(200):
        catalog = random_catalog(rng, max_spots=200)
        picked = {}
        for cat in ("Seeing", "Eating", "Playing"):
            if rng.random() < 0.8:
                picked[cat] = frozenset(rng.sample(pool, rng.randint(1, 4)))
        from asyncdial.dst import empty_state, merge_slots

        dst = (
            merge_slots(empty_state("s"), SlotSet.of(picked), 1)
            if picked
            else empty_state("s")
        )
        k = rng.randint(1, len(catalog))
        ranked = search(catalog, dst, k=k)

        oracle = []
        for sid in catalog.spots:
            rec = catalog.spots[sid]
            score = 0
            for cat, wanted in dst.slots.items():
                for value in rec.metadata.get(cat, ()):
                    if value in wanted:
                        score += 1
            oracle.append((sid, score))
        oracle.sort(key=lambda e: (-e[1], e[0]))
        assert list(ranked.entries) == oracle[:k]


def test_scenario_end_to_end_with_route_arithmetic(catalog, happy_script):
    """Full scripted dialogue against the 120-spot city: four candidates
    offered, two accepted, and the travel legs match hand arithmetic for
    both the walking pair (1.56 km) and the transit pair (7.8 km)."""
    session = run_session(happy_script, "async", catalog)
    assert session.phase is DialoguePhase.END
    state = session.scenario
    assert len(state.presented) == 4
    assert sorted(state.presented_ever) == ["kw001", "kw002", "kw003", "kw004"]
    assert state.chosen == ("kw001", "kw003")
    assert len(state.plan.legs) == 1
    leg = state.plan.legs[0]
    assert leg.mode is TravelMode.WALK
    assert leg.distance_m == pytest.approx(1560.0, abs=0.5)
    assert leg.duration_min == 20  # ceil(1560 m / 80 m per min)
    assert state.plan_summary == (
        "From Hoshizora Hill Observatory, walk about 20 min to "
        "Kawamachi Planetarium Lawn."
    )
    assert state.plan_summary.count(".") == len(state.plan.legs)
    assert "kw0" not in state.plan_summary

    far = load_persona("happy")
    far["name"] = "happy-transit"
    far["utterances"] = list(far["utterances"])
    far["utterances"][2] = "Let us go with 1 and 4."
    far_session = run_session(script_from_dict(far), "async", catalog)
    assert far_session.phase is DialoguePhase.END
    far_state = far_session.scenario
    assert far_state.chosen == ("kw001", "kw004")
    far_leg = far_state.plan.legs[0]
    assert far_leg.mode is TravelMode.TRANSIT
    assert far_leg.distance_m == pytest.approx(7800.0, abs=0.5)
    assert far_leg.duration_min == 25  # ceil(7800 / 400) + 5 overhead
    assert far_state.plan_summary == (
        "From Hoshizora Hill Observatory, take transit about 25 min to "
        "Mount Kago Night Gate."
    )


def synthetic_catalog(n_spots: int) -> SpotCatalog:
    """Catalog whose vocabulary grows with the spot count, to stress the
    prompt budget: 5000 spots yield far more value text than 4000 chars."""
    cats = ["Seeing", "Eating", "Playing", "Healing", "Buying"]
    spots = []
    for i in range(n_spots):
        cat = cats[i % len(cats)]
        spots.append(
            SpotRecord(
                spot_id="s%05d" % i,
                name="Spot %d" % i,
                description="synthetic",
                metadata={cat: frozenset(["%s-value-%04d" % (cat.lower(), i // 7)])},
                lat=0.0,
                lon=0.0,
            )
        )
    return SpotCatalog(spots)


def rr_oracle_prompt(vocab: MetadataVocabulary, user_text: str, budget: int):
    """Longest budget-fitting prefix of the round-robin dealing order."""
    from asyncdial.nlu import _render_prompt

    dealing = []
    rank = 0
    while True:
        row = [
            (cat.name, cat.values[rank].value)
            for cat in vocab.categories
            if rank < len(cat.values)
        ]
        if not row:
            break
        dealing.extend(row)
        rank += 1

    def render(cut):
        included = {c.name: [] for c in vocab.categories}
        for cat, val in dealing[:cut]:
            included[cat].append(val)
        return _render_prompt(included, user_text)

    best = None
    for cut in range(len(vocab.categories), len(dealing) + 1):
        if len(render(cut)) <= budget:
            best = cut
        else:
            break
    assert best is not None
    return set(dealing[:best]), render(best)


def test_prompt_budget_never_exceeded(catalog):
    """10-, 120- and 5000-spot vocabularies all render within 4000 chars,
    and the survivor set on the small case equals the independent
    round-robin truncation oracle."""
    budget = PromptBudget(4000)
    utterance = "We want temples, gardens and a quiet dinner afterwards."

    small = synthetic_catalog(10)
    medium = catalog  # the packaged 120-spot city
    large = synthetic_catalog(5000)

    full_large_text = sum(
        len(v.value) + 2 for c in large.vocabulary.categories for v in c.values
    )
    assert full_large_text > 4000  # truncation genuinely has to act

    for cat in (small, medium, large):
        prompt = build_nlu_prompt(cat.vocabulary, utterance, budget)
        assert len(prompt) <= 4000

    for tight in (4000, 400, 300):
        try:
            prompt = build_nlu_prompt(small.vocabulary, utterance, PromptBudget(tight))
        except Exception:
            continue
        survivors, oracle_prompt = rr_oracle_prompt(
            small.vocabulary, utterance, tight
        )
        included = set()
        for line in prompt.splitlines():
            if line.startswith("- "):
                cat_name, _, rest = line[2:].partition(": ")
                for val in rest.split(", "):
                    included.add((cat_name, val))
        assert included == survivors
        assert prompt == oracle_prompt


def test_reports_are_byte_identical_across_runs(tmp_path, catalog, happy_script, stale_script):
    """Same (script, seed, mode) rendered twice gives byte-equal files."""
    for script in (happy_script, stale_script):
        for mode in ("async", "sync"):
            first = render_sim_report(run_simulation(script, mode, catalog))
            second = render_sim_report(run_simulation(script, mode, catalog))
            a = tmp_path / ("a-%s-%s.json" % (script.name, mode))
            b = tmp_path / ("b-%s-%s.json" % (script.name, mode))
            a.write_text(first, encoding="utf-8")
            b.write_text(second, encoding="utf-8")
            assert a.read_bytes() == b.read_bytes()
            json.loads(first)

    cmp1 = render_comparison(compare_modes(happy_script, catalog))
    cmp2 = render_comparison(compare_modes(happy_script, catalog))
    assert cmp1.encode() == cmp2.encode()


def test_dst_persistence_round_trip_and_corruption(tmp_path):
    """Two sessions, five commits each: persist + load reproduces the store
    exactly; any corrupted line refuses to load at all."""
    store = DSTStore()
    rng = random.Random(7)
    cats = ["Seeing", "Eating", "Playing"]
    vals = ["temple", "garden", "ramen", "sushi", "hiking"]
    for sid in ("alpha", "beta"):
        store.create_session(sid)
        for turn in range(1, 6):
            picked = {
                cat: rng.sample(vals, rng.randint(1, 2))
                for cat in rng.sample(cats, rng.randint(0, 2))
            }
            store.commit(sid, SlotSet.of(picked), turn)
    path = str(tmp_path / "store.jsonl")
    store.persist(path)

    loaded = DSTStore.load(path)
    assert loaded == store
    for sid in ("alpha", "beta"):
        assert loaded.get_snapshot(sid).version == 5
        assert loaded.get_snapshot(sid) == store.get_snapshot(sid)

    lines = open(path, encoding="utf-8").read().splitlines()
    corruptions = [
        lines[:3] + ["{truncated"] ,
        lines[:5] + ['{"session_id":"alpha","version":99,"turn_id":9,"slots":{}}'],
        [lines[1]] + lines[2:],  # drops a session declaration
    ]
    for broken in corruptions:
        bad_path = tmp_path / "broken.jsonl"
        bad_path.write_text("\n".join(broken) + "\n", encoding="utf-8")
        with pytest.raises(StoreLoadError):
            DSTStore.load(str(bad_path))
