"""Reply-generation prompt assembly.

Each dialogue action renders to a goal directive plus a structured payload
inside a fixed template. The payload uses stable, line-oriented markers so
that deterministic offline backends can reconstruct the action from the
prompt text alone, which keeps tests honest about what actually reached
the model.
"""

from __future__ import annotations

import string
from importlib import resources

from .scenario import (
    AnswerAction,
    CloseAction,
    DialogueAction,
    ElicitAction,
    PresentAction,
    RepromptAction,
    RouteAction,
    WelcomeAction,
)

GOAL_PREFIX = "Reply goal: "
USER_PREFIX = "User said: "
CONTEXT_HEADER = "Conversation context:"
CARD_PREFIX = "Option "
FOCUS_PREFIX = "Focus category: "
EXAMPLES_PREFIX = "Category examples: "
REASON_PREFIX = "Reason: "
SUMMARY_PREFIX = "Route summary: "
PLAN_PREFIX = "Plan context: "
NAMES_PREFIX = "Chosen spots: "


def _load_template() -> string.Template:
    text = (
        resources.files("asyncdial.templates")
        .joinpath("respond_prompt.txt")
        .read_text(encoding="utf-8")
    )
    for marker in (GOAL_PREFIX, USER_PREFIX, CONTEXT_HEADER):
        if marker.rstrip() not in text:
            raise RuntimeError("respond template is missing marker %r" % marker)
    return string.Template(text)


_TEMPLATE = _load_template()


def render_payload(action: DialogueAction) -> str:
    if isinstance(action, (WelcomeAction, CloseAction)):
        return "(no extra data)"
    if isinstance(action, ElicitAction):
        return "%s%s\n%s%s" % (
            FOCUS_PREFIX,
            action.category,
            EXAMPLES_PREFIX,
            ", ".join(action.examples),
        )
    if isinstance(action, PresentAction):
        lines = []
        for i, card in enumerate(action.cards, start=1):
            lines.append(
                "%s%d: %s :: %s :: matches %s"
                % (CARD_PREFIX, i, card.name, card.description, ", ".join(card.matched))
            )
        return "\n".join(lines)
    if isinstance(action, RepromptAction):
        return REASON_PREFIX + action.reason
    if isinstance(action, RouteAction):
        return "%s%s\n%s%s" % (
            NAMES_PREFIX,
            ", ".join(action.chosen_names),
            SUMMARY_PREFIX,
            action.summary,
        )
    if isinstance(action, AnswerAction):
        return PLAN_PREFIX + action.plan_context
    raise TypeError("unknown action type %r" % type(action).__name__)


def build_respond_prompt(
    action: DialogueAction, user_text: str, context: str = ""
) -> str:
    """Render the full reply-generation prompt for one turn."""
    return _TEMPLATE.substitute(
        context=context or "(start of conversation)",
        goal=action.goal,
        payload=render_payload(action),
        utterance=user_text or "(no user utterance)",
    )
