import itertools
import random

import pytest

from asyncdial.dst import (
    DSTStore,
    DuplicateTurnError,
    StoreLoadError,
    UnknownSessionError,
    empty_state,
    merge_slots,
)
from asyncdial.nlu import SlotSet


def slots(**kwargs):
    return SlotSet.of(kwargs)


def test_empty_state_is_version_zero():
    state = empty_state("s")
    assert state.version == 0
    assert state.slots == {}
    assert state.history == ()


def test_merge_unions_and_bumps_version():
    state = empty_state("s")
    state = merge_slots(state, slots(Seeing=["temple"]), turn_id=1)
    assert state.version == 1
    assert state.slots == {"Seeing": frozenset({"temple"})}
    state = merge_slots(state, slots(Seeing=["garden"], Eating=["ramen"]), turn_id=2)
    assert state.version == 2
    assert state.slots == {
        "Seeing": frozenset({"temple", "garden"}),
        "Eating": frozenset({"ramen"}),
    }
    assert state.covered_categories() == {"Seeing", "Eating"}


def test_merge_is_idempotent_in_content():
    state = merge_slots(empty_state("s"), slots(Seeing=["temple"]), 1)
    again = merge_slots(state, slots(Seeing=["temple"]), 2)
    assert again.slots == state.slots
    assert again.version == 2


def test_empty_commit_still_bumps_version():
    state = merge_slots(empty_state("s"), SlotSet(), 1)
    assert state.version == 1
    assert state.slots == {}


def test_duplicate_turn_id_rejected():
    state = merge_slots(empty_state("s"), slots(Seeing=["temple"]), 1)
    with pytest.raises(DuplicateTurnError):
        merge_slots(state, slots(Eating=["ramen"]), 1)


def test_store_commit_and_snapshot_versions():
    store = DSTStore()
    store.create_session("s")
    assert store.current_version("s") == 0
    assert store.commit("s", slots(Seeing=["temple"]), 1) == 1
    assert store.commit("s", slots(Eating=["ramen"]), 2) == 2

    v0 = store.get_snapshot("s", 0)
    assert v0.slots == {} and v0.version == 0
    v1 = store.get_snapshot("s", 1)
    assert v1.slots == {"Seeing": frozenset({"temple"})}
    latest = store.get_snapshot("s")
    assert latest.version == 2
    with pytest.raises(ValueError):
        store.get_snapshot("s", 3)
    with pytest.raises(ValueError):
        store.get_snapshot("s", -1)


def test_snapshots_are_frozen_against_later_commits():
    store = DSTStore()
    store.create_session("s")
    store.commit("s", slots(Seeing=["temple"]), 1)
    snap = store.get_snapshot("s")
    store.commit("s", slots(Seeing=["garden"]), 2)
    assert snap.slots == {"Seeing": frozenset({"temple"})}
    assert snap.version == 1


def test_unknown_session_raises():
    store = DSTStore()
    with pytest.raises(UnknownSessionError):
        store.commit("nope", SlotSet(), 1)
    with pytest.raises(UnknownSessionError):
        store.get_snapshot("nope")
    store.create_session("s")
    with pytest.raises(ValueError):
        store.create_session("s")


def test_union_fold_matches_oracle_for_random_sequences():
    """Aggregate after n commits must equal a plain dict-of-sets union."""
    rng = random.Random(11)
    cats = ["Seeing", "Eating", "Playing"]
    vals = ["temple", "garden", "ramen", "sushi", "hiking", "boating"]
    for trial in range(50):
        store = DSTStore()
        store.create_session("s")
        oracle: dict[str, set[str]] = {}
        for turn in range(1, rng.randint(2, 8)):
            picked = {}
            for cat in rng.sample(cats, rng.randint(0, len(cats))):
                chosen = rng.sample(vals, rng.randint(1, 3))
                picked[cat] = chosen
                oracle.setdefault(cat, set()).update(chosen)
            store.commit("s", SlotSet.of(picked), turn)
        state = store.get_snapshot("s")
        assert {c: set(v) for c, v in state.slots.items()} == oracle


def test_commit_order_does_not_change_aggregate():
    parts = [
        slots(Seeing=["temple", "garden"]),
        slots(Eating=["ramen"]),
        slots(Seeing=["castle"], Eating=["sushi"]),
    ]
    aggregates = set()
    for perm in itertools.permutations(range(3)):
        store = DSTStore()
        store.create_session("s")
        for turn, idx in enumerate(perm, start=1):
            store.commit("s", parts[idx], turn)
        state = store.get_snapshot("s")
        aggregates.add(tuple(sorted((c, tuple(sorted(v))) for c, v in state.slots.items())))
    assert len(aggregates) == 1


def test_persist_and_load_roundtrip(tmp_path):
    store = DSTStore()
    for sid in ("a", "b"):
        store.create_session(sid)
    store.commit("a", slots(Seeing=["temple"]), 1)
    store.commit("a", slots(Eating=["ramen", "sushi"]), 2)
    store.commit("b", SlotSet(), 1)
    path = str(tmp_path / "dst.jsonl")
    store.persist(path)

    loaded = DSTStore.load(path)
    assert loaded == store
    assert loaded.get_snapshot("a").version == 2
    assert loaded.get_snapshot("b").slots == {}


def test_load_rejects_corrupt_lines(tmp_path):
    store = DSTStore()
    store.create_session("a")
    store.commit("a", slots(Seeing=["temple"]), 1)
    path = str(tmp_path / "dst.jsonl")
    store.persist(path)

    good = open(path, encoding="utf-8").read().splitlines()

    def write(lines):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    write(good + ["{broken"])
    with pytest.raises(StoreLoadError):
        DSTStore.load(path)

    write(good + ['{"session_id":"a","version":9,"turn_id":7,"slots":{}}'])
    with pytest.raises(StoreLoadError):
        DSTStore.load(path)

    write(good[1:])  # commit to an undeclared session
    with pytest.raises(StoreLoadError):
        DSTStore.load(path)

    write(good + [""])
    with pytest.raises(StoreLoadError):
        DSTStore.load(path)
