"""Completion backends behind one small contract.

Three implementations ship:

* MockBackend: fully offline and deterministic. Replies are a pure
  function of (purpose, prompt). The slot-extraction path re-reads the
  vocabulary and utterance straight out of the rendered prompt, so prompt
  truncation really does limit what the mock can extract. The reply path
  reads the goal directive and payload the prompt carries.
* ScriptedBackend: replays canned texts per (session, purpose) in file
  order. Used to pin exact wire bytes in tests.
* HttpBackend: optional chat-completion-style client for live demos.
  Excluded from the test suite.

Backends never sleep. Latency is data: ``with_latency`` attaches a
sampled delay to the response and the orchestrator decides how (and on
which clock) that delay elapses.
"""

from __future__ import annotations

import json
import os
import random
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Protocol

from . import nlu as nlu_mod
from . import prompts

API_KEY_ENV = "ASYNCMLD_LLM_API_KEY"


class Purpose(str, Enum):
    RESPOND = "Respond"
    NLU = "Nlu"
    QA = "Qa"


class TransportError(RuntimeError):
    """The backend could not be reached or answered abnormally."""


class ScriptExhaustedError(RuntimeError):
    """A scripted backend ran out of entries for a (session, purpose) lane."""


@dataclass(frozen=True)
class BackendRequest:
    purpose: Purpose
    prompt: str
    session_id: str
    turn_id: int

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")


@dataclass(frozen=True)
class BackendResponse:
    text: str
    latency_injected: float = 0.0

    def __post_init__(self):
        if self.latency_injected < 0:
            raise ValueError("latency_injected must be >= 0")


class LLMBackend(Protocol):
    blocking: bool

    def complete(self, request: BackendRequest) -> BackendResponse: ...


# -- latency distributions ----------------------------------------------------


@dataclass
class Fixed:
    """Constant delay in seconds."""

    seconds: float

    def __post_init__(self):
        if self.seconds < 0:
            raise ValueError("delay must be >= 0")

    def sample(self) -> float:
        return self.seconds


@dataclass
class Uniform:
    """Seeded uniform delay in [lo, hi] seconds; reproducible draw sequence."""

    lo: float
    hi: float
    seed: int | str = 0
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        if self.lo < 0 or self.hi < self.lo:
            raise ValueError("need 0 <= lo <= hi")
        self._rng = random.Random(self.seed)

    def sample(self) -> float:
        return self._rng.uniform(self.lo, self.hi)


class _LatencyWrapped:
    def __init__(self, base: LLMBackend, distribution):
        self.base = base
        self.distribution = distribution
        self.blocking = getattr(base, "blocking", False)

    def complete(self, request: BackendRequest) -> BackendResponse:
        inner = self.base.complete(request)
        return BackendResponse(
            text=inner.text,
            latency_injected=inner.latency_injected + self.distribution.sample(),
        )


def with_latency(backend: LLMBackend, distribution) -> LLMBackend:
    """Wrap a backend so each response carries an extra sampled delay."""
    return _LatencyWrapped(backend, distribution)


# -- deterministic mock -------------------------------------------------------


_VOCAB_LINE_RE = re.compile(r"^- (?P<cat>[^:]+): (?P<vals>.*)$")


def _parse_nlu_prompt(prompt: str) -> tuple[list[tuple[str, str]], str]:
    """Recover (category, value) pairs and the utterance from a rendered prompt."""
    pairs: list[tuple[str, str]] = []
    utterance = ""
    in_vocab = False
    for line in prompt.splitlines():
        if line.strip() == nlu_mod.VOCAB_HEADER:
            in_vocab = True
            continue
        if line.startswith(nlu_mod.UTTERANCE_PREFIX):
            utterance = line[len(nlu_mod.UTTERANCE_PREFIX) :]
            in_vocab = False
            continue
        if in_vocab:
            m = _VOCAB_LINE_RE.match(line)
            if m:
                cat = m.group("cat").strip()
                for val in m.group("vals").split(", "):
                    val = val.strip()
                    if val:
                        pairs.append((cat, val))
    return pairs, utterance


def _scan_slots(pairs: Iterable[tuple[str, str]], utterance: str) -> str:
    lowered = utterance.casefold()
    found = []
    for cat, val in pairs:
        if re.search(r"\b%s\b" % re.escape(val.casefold()), lowered):
            found.append({"category": cat, "value": val})
    return json.dumps({"slots": found})


def _section(prompt: str, prefix: str) -> str:
    for line in prompt.splitlines():
        if line.startswith(prefix):
            return line[len(prefix) :]
    return ""


def _payload_lines(prompt: str, prefix: str) -> list[str]:
    return [
        line[len(prefix) :]
        for line in prompt.splitlines()
        if line.startswith(prefix)
    ]


class MockBackend:
    """Offline stand-in; same request always yields the same bytes back."""

    blocking = False

    def complete(self, request: BackendRequest) -> BackendResponse:
        if request.purpose is Purpose.NLU:
            pairs, utterance = _parse_nlu_prompt(request.prompt)
            return BackendResponse(text=_scan_slots(pairs, utterance))
        return BackendResponse(text=self._reply(request.prompt))

    def _reply(self, prompt: str) -> str:
        goal = _section(prompt, prompts.GOAL_PREFIX).strip()
        if goal == "welcome":
            return (
                "Welcome to the Kawamachi travel desk! Tell me what you would "
                "like to see, eat, or enjoy, and I will plan your day."
            )
        if goal == "elicit":
            category = _section(prompt, prompts.FOCUS_PREFIX).strip()
            examples = [
                e.strip()
                for e in _section(prompt, prompts.EXAMPLES_PREFIX).split(",")
                if e.strip()
            ]
            hint = " or ".join(examples) if examples else "anything"
            # Kept short on purpose: elicitation happens while path B may
            # still be busy, and a long reply would stretch the turn.
            return "For %s: maybe %s. More?" % (category, hint)
        if goal == "present":
            cards = _payload_lines(prompt, prompts.CARD_PREFIX)
            parts = []
            for card in cards:
                head, _, rest = card.partition(": ")
                name, _, rest2 = rest.partition(" :: ")
                desc = rest2.partition(" :: ")[0]
                parts.append("%s: %s, %s." % (head, name, desc))
            return (
                "I found four spots you might love. "
                + " ".join(parts)
                + " Which two shall we keep? Say two numbers, like 1 and 3."
            )
        if goal == "reprompt":
            reason = _section(prompt, prompts.REASON_PREFIX).strip()
            return (
                "Sorry, I need exactly two of the numbered spots. %s "
                "Try something like 1 and 3." % _capitalize(reason)
            )
        if goal == "route":
            summary = _section(prompt, prompts.SUMMARY_PREFIX).strip()
            return (
                "Wonderful choices! %s Shall I answer any questions "
                "before you set off?" % summary
            )
        if goal == "answer":
            context = _section(prompt, prompts.PLAN_PREFIX).strip()
            return (
                "Happy to help! %s Both picks fit comfortably into "
                "a single day in Kawamachi." % context
            )
        if goal == "close":
            return (
                "It was a pleasure planning your Kawamachi visit. "
                "Have a wonderful trip, and goodbye!"
            )
        raise ValueError("mock backend cannot serve goal %r" % goal)


def _capitalize(text: str) -> str:
    if not text:
        return ""
    out = text[0].upper() + text[1:]
    return out if out.endswith((".", "!", "?")) else out + "."


# -- scripted replayer --------------------------------------------------------


class ScriptedBackend:
    """Replays canned responses per (session_id, purpose), in entry order."""

    blocking = False

    def __init__(self, entries: Iterable[dict]):
        self._lanes: dict[tuple[str, str], list[str]] = {}
        self._lock = threading.Lock()
        for entry in entries:
            key = (entry["session_id"], entry["purpose"])
            self._lanes.setdefault(key, []).append(entry["text"])

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(json.loads(line))
        return cls(entries)

    def complete(self, request: BackendRequest) -> BackendResponse:
        key = (request.session_id, request.purpose.value)
        with self._lock:
            lane = self._lanes.get(key)
            if not lane:
                raise ScriptExhaustedError(
                    "no scripted entries left for session=%s purpose=%s"
                    % (request.session_id, request.purpose.value)
                )
            text = lane.pop(0)
        return BackendResponse(text=text)


# -- optional live client -----------------------------------------------------


class HttpBackend:
    """Chat-completion-style HTTP client. Demo plumbing, not under test."""

    blocking = True

    def __init__(self, base_url: str, model: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout

    def complete(self, request: BackendRequest) -> BackendResponse:
        import httpx

        api_key = os.environ.get(API_KEY_ENV)
        if not api_key:
            raise TransportError("set %s to use the HTTP backend" % API_KEY_ENV)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
        }
        try:
            resp = httpx.post(
                self.base_url + "/chat/completions",
                json=payload,
                headers={"Authorization": "Bearer " + api_key},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code // 100 != 2:
            raise TransportError("backend returned HTTP %d" % resp.status_code)
        try:
            return BackendResponse(text=resp.json()["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError("malformed completion payload") from exc
