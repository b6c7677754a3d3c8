"""Prompt assembly and answer parsing for the chat-backed tasks.

Prompt budgets are counted in characters as a tokenizer-independent proxy
(documented factor: roughly 4 characters per token for English text).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .catalog import Item, item_text

TASKS = ("fitb", "binary", "recommend")
OPTION_LABELS = ("A", "B", "C", "D")

CONTEXT_BULLET = "- "


@dataclass(frozen=True)
class PromptTemplates:
    fitb_system: str = (
        "You are a fashion stylist. Choose the single item that best completes "
        "the outfit. Reply with the letter of your choice."
    )
    binary_system: str = (
        "You are a fashion stylist. Judge whether the listed items form a "
        "cohesive, compatible outfit. Reply yes or no."
    )
    recommend_system: str = (
        "You are a fashion stylist. Recommend pieces that pair well with the "
        "given items and explain the look briefly."
    )
    context_header: str = "Context:"
    char_budget: int = 16000

    def system_for(self, task: str) -> str:
        return {
            "fitb": self.fitb_system,
            "binary": self.binary_system,
            "recommend": self.recommend_system,
        }[task]


DEFAULT_TEMPLATES = PromptTemplates()


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    context_block: str
    task: str
    candidate_labels: tuple[str, ...] | None = None
    truncated: bool = False

    def to_messages(self) -> list[tuple[str, str]]:
        user = self.user_text
        if self.context_block:
            user = f"{self.context_block}\n\n{user}"
        return [("system", self.system_text), ("user", user)]

    @property
    def length(self) -> int:
        return len(self.system_text) + len(self.context_block) + len(self.user_text)


def _bullets(texts: Sequence[str]) -> str:
    return "\n".join(f"{CONTEXT_BULLET}{t}" for t in texts)


def fitb_user_text(context_texts: Sequence[str], option_texts: Sequence[str]) -> str:
    options = "\n".join(f"{label}) {t}" for label, t in zip(OPTION_LABELS, option_texts))
    return (
        "Outfit items:\n"
        f"{_bullets(context_texts)}\n\n"
        "Which completes the outfit?\n"
        f"{options}\n\n"
        "Answer with the letter only."
    )


def binary_user_text(item_texts: Sequence[str]) -> str:
    return (
        "Do these items form a compatible outfit?\n"
        f"{_bullets(item_texts)}\n\n"
        "Answer yes or no."
    )


def recommend_user_text(
    item_texts: Sequence[str], style: str | None = None, occasion: str | None = None
) -> str:
    lines = ["Recommend pieces to pair with:", _bullets(item_texts)]
    if style:
        lines.append(f"Style: {style}")
    if occasion:
        lines.append(f"Occasion: {occasion}")
    lines.append("Explain the look briefly.")
    return "\n".join(lines)


def assemble_prompt(
    task: str,
    items: Sequence[Item],
    retrieved=None,
    candidates: Sequence[Item] | None = None,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    style: str | None = None,
    occasion: str | None = None,
) -> PromptBundle:
    """Render a deterministic prompt; retrieved docs are added in fused order
    and dropped tail-first when the character budget would be exceeded."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    item_texts = [item_text(i) for i in items]
    labels: tuple[str, ...] | None = None
    if task == "fitb":
        if candidates is None or len(candidates) != len(OPTION_LABELS):
            raise ValueError(f"fitb requires exactly {len(OPTION_LABELS)} candidates")
        user = fitb_user_text(item_texts, [item_text(c) for c in candidates])
        labels = OPTION_LABELS
    elif task == "binary":
        user = binary_user_text(item_texts)
    else:
        user = recommend_user_text(item_texts, style=style, occasion=occasion)

    system = templates.system_for(task)
    budget = templates.char_budget
    base = len(system) + len(user)
    if base > budget:
        raise ValueError(f"prompt of {base} chars exceeds budget {budget} before context")

    docs = list(retrieved.fused) if retrieved is not None else []
    lines = []
    used = base
    truncated = False
    for rank, doc in enumerate(docs, start=1):
        prefix = f"{templates.context_header}\n" if not lines else ""
        line = f"[{rank}] ({', '.join(doc.paths)}) {doc.text}"
        cost = len(prefix) + len(line) + 1  # joining newline
        if used + cost > budget:
            truncated = True
            break
        lines.append(line)
        used += cost
    context_block = ""
    if lines:
        context_block = templates.context_header + "\n" + "\n".join(lines) + "\n"

    return PromptBundle(
        system_text=system,
        user_text=user,
        context_block=context_block,
        task=task,
        candidate_labels=labels,
        truncated=truncated,
    )


@dataclass(frozen=True)
class ParsedAnswer:
    task: str
    choice_index: int | None = None
    binary: bool | None = None
    free_text: str | None = None
    parse_confidence: str = "failed"  # "exact" | "heuristic" | "failed"

    @property
    def failed(self) -> bool:
        return self.parse_confidence == "failed"


_CUE = r"(?:answer|option|choice)\s*(?:is\s+)?[:\-]?\s*"
_CUE_LETTER = re.compile(_CUE + r"\(?([A-Da-d])\b", re.IGNORECASE)
_BARE_LETTER = re.compile(r"\b([ABCD])\b")
_CUE_DIGIT = re.compile(_CUE + r"\(?([1-4])\b", re.IGNORECASE)
_BARE_DIGIT = re.compile(r"\b([1-4])\b")

_BINARY_NO = re.compile(r"\b(?:incompatible|not\s+compatible|no)\b", re.IGNORECASE)
_BINARY_YES = re.compile(r"\b(?:compatible|yes)\b", re.IGNORECASE)


def _parse_fitb(text: str) -> ParsedAnswer:
    match = _CUE_LETTER.search(text)
    if match:
        return ParsedAnswer(
            task="fitb",
            choice_index=OPTION_LABELS.index(match.group(1).upper()),
            parse_confidence="exact",
        )
    match = _BARE_LETTER.search(text)
    if match:
        return ParsedAnswer(
            task="fitb", choice_index=OPTION_LABELS.index(match.group(1)), parse_confidence="exact"
        )
    match = _CUE_DIGIT.search(text) or _BARE_DIGIT.search(text)
    if match:
        return ParsedAnswer(
            task="fitb", choice_index=int(match.group(1)) - 1, parse_confidence="heuristic"
        )
    return ParsedAnswer(task="fitb")


def _parse_binary(text: str) -> ParsedAnswer:
    if _BINARY_NO.search(text):
        return ParsedAnswer(task="binary", binary=False, parse_confidence="exact")
    if _BINARY_YES.search(text):
        return ParsedAnswer(task="binary", binary=True, parse_confidence="exact")
    return ParsedAnswer(task="binary")


def parse_answer(task: str, text: str) -> ParsedAnswer:
    """Extract a structured answer; unparseable replies report failed, never a guess."""
    if task == "fitb":
        return _parse_fitb(text)
    if task == "binary":
        return _parse_binary(text)
    if task == "recommend":
        stripped = text.strip()
        if not stripped:
            return ParsedAnswer(task="recommend")
        return ParsedAnswer(task="recommend", free_text=stripped, parse_confidence="exact")
    raise ValueError(f"unknown task {task!r}")


_OPTION_LINE = re.compile(r"^([A-D])\)\s*(.+)$", re.MULTILINE)


def extract_fitb_structure(user_text: str) -> tuple[list[str], list[str]] | None:
    """Recover (context item texts, option texts) from a rendered FITB prompt.

    Returns None when the text does not look like a FITB prompt; used by the
    similarity-oracle backend.
    """
    options = [m.group(2).strip() for m in _OPTION_LINE.finditer(user_text)]
    if len(options) != len(OPTION_LABELS):
        return None
    context = []
    for line in user_text.splitlines():
        if line.startswith("Which completes"):
            break
        if line.startswith(CONTEXT_BULLET):
            context.append(line[len(CONTEXT_BULLET):].strip())
    if not context:
        return None
    return context, options
