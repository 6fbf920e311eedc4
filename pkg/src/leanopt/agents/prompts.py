"""Prompt templates shipped as text assets, addressed by id.

Templates may contain LaTeX braces, so only the slots declared for a prompt
are substituted; everything else is copied through untouched.
"""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

PROMPT_SLOTS: dict[str, tuple[str, ...]] = {
    "react_system": ("tool_descriptions", "tool_names"),
    "classification": ("query",),
    "tailored_workflow": ("q_demo", "g_demo", "f_demo", "m_demo"),
    "model_generation": ("workflow", "query"),
    "agnostic_workflow": ("q_demo", "m_demo", "query", "snapshot"),
    "agnostic_demo_query": (),
    "agnostic_demo_plan": (),
    "retry": ("error",),
}


class PromptError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_prompt(prompt_id: str) -> str:
    if prompt_id not in PROMPT_SLOTS:
        raise PromptError(f"unknown prompt {prompt_id!r}")
    text = resources.files("leanopt.agents").joinpath("prompts").joinpath(f"{prompt_id}.txt").read_text(encoding="utf-8")
    for slot in PROMPT_SLOTS[prompt_id]:
        if text.count("{" + slot + "}") != 1:
            raise PromptError(f"prompt {prompt_id!r} must contain {{{slot}}} exactly once")
    return text.rstrip("\n")


def render(prompt_id: str, **slots: str) -> str:
    """Fill every declared slot of a prompt in one pass (slot values are never re-scanned)."""
    declared = PROMPT_SLOTS.get(prompt_id)
    if declared is None:
        raise PromptError(f"unknown prompt {prompt_id!r}")
    missing = [s for s in declared if s not in slots]
    extra = [s for s in slots if s not in declared]
    if missing or extra:
        raise PromptError(f"prompt {prompt_id!r}: missing slots {missing}, unexpected slots {extra}")
    text = load_prompt(prompt_id)
    if not declared:
        return text
    pattern = re.compile("|".join(re.escape("{" + s + "}") for s in declared))
    return pattern.sub(lambda m: str(slots[m.group(0)[1:-1]]), text)


def extract_slots(prompt_id: str, rendered: str) -> dict[str, str]:
    """Recover slot values from a rendered prompt by matching the fixed template text."""
    text = load_prompt(prompt_id)
    declared = PROMPT_SLOTS[prompt_id]
    pattern = re.compile("|".join(re.escape("{" + s + "}") for s in declared))
    parts, names, pos = [], [], 0
    for m in pattern.finditer(text):
        parts.append(re.escape(text[pos:m.start()]))
        names.append(m.group(0)[1:-1])
        pos = m.end()
    regex = ""
    for lit, name in zip(parts, names):
        regex += lit + f"(?P<{name}>.*)"
    regex += re.escape(text[pos:])
    m = re.fullmatch(regex, rendered, re.DOTALL)
    if not m:
        raise PromptError(f"text does not match prompt {prompt_id!r}")
    return {n: m.group(n) for n in names}

