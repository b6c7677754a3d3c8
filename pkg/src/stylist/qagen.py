"""Training and evaluation data generation from the outfit catalog.

Three generators: binary compatible/incompatible pairs via single-item
corruption, four-way fill-in-the-blank questions, and chat-model-written
style QA. All are deterministic per seed; per-outfit RNG streams keep the
output independent of which other outfits are present.
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .catalog import Catalog, OfficialFitb, item_text
from .chat import ChatBackend, ChatBackendError, ChatMessage, ChatRequest
from .prompting import DEFAULT_TEMPLATES, OPTION_LABELS, binary_user_text, fitb_user_text

logger = logging.getLogger(__name__)

N_FITB_CANDIDATES = 4
N_FITB_DISTRACTORS = N_FITB_CANDIDATES - 1


class QagenError(ValueError):
    """Raised when generation inputs are unusable."""


@dataclass(frozen=True)
class BinaryQA:
    qa_id: str
    item_ids: tuple[str, ...]
    question_text: str
    label: str  # "compatible" | "incompatible"
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FITBQuestion:
    qid: str
    context_item_ids: tuple[str, ...]
    blank_position: int
    candidate_item_ids: tuple[str, ...]
    answer_index: int
    split: str
    provenance: str = "generated"  # "generated" | "generated-widened" | "official"

    def __post_init__(self):
        if len(self.candidate_item_ids) != N_FITB_CANDIDATES:
            raise QagenError(
                f"{self.qid}: expected {N_FITB_CANDIDATES} candidates, "
                f"got {len(self.candidate_item_ids)}"
            )
        if not 0 <= self.answer_index < N_FITB_CANDIDATES:
            raise QagenError(f"{self.qid}: answer_index {self.answer_index} out of range")
        if len(set(self.candidate_item_ids)) != N_FITB_CANDIDATES:
            raise QagenError(f"{self.qid}: duplicate candidate items")

    @property
    def answer_item_id(self) -> str:
        return self.candidate_item_ids[self.answer_index]


@dataclass(frozen=True)
class TrainingRecord:
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class KnowledgeDoc:
    doc_id: str
    text: str
    tags: dict = field(default_factory=dict)


def _category_pools(catalog: Catalog, split: str):
    """Items used by the split's outfits, grouped by category and overall."""
    by_cat: dict[str, set[str]] = {}
    everything: set[str] = set()
    for outfit in catalog.split_outfits(split):
        for item_id in outfit.item_ids:
            by_cat.setdefault(catalog.items[item_id].semantic_category, set()).add(item_id)
            everything.add(item_id)
    return (
        {cat: sorted(ids) for cat, ids in by_cat.items()},
        sorted(everything),
    )


def _question_for(catalog: Catalog, item_ids: Sequence[str]) -> str:
    return binary_user_text([item_text(catalog.items[i]) for i in item_ids])


def _pick_replacement(
    rng: random.Random,
    pool: Sequence[str],
    corrupted_base: frozenset,
    real_outfits: frozenset,
) -> str | None:
    """Draw a replacement whose corrupted set is not some real outfit.

    A few random attempts, then a deterministic scan; None when every
    candidate would recreate a real outfit.
    """
    for _ in range(20):
        pick = rng.choice(pool)
        if (corrupted_base | {pick}) not in real_outfits:
            return pick
    for pick in pool:
        if (corrupted_base | {pick}) not in real_outfits:
            return pick
    return None


def gen_binary_qa(
    catalog: Catalog, split: str, negatives_per_positive: int = 1, seed: int = 0
) -> list[BinaryQA]:
    """One compatible example per outfit plus corrupted incompatible ones.

    Each negative swaps one randomly chosen slot for a same-category item
    used elsewhere in the split; when the category has no other items the
    draw widens to any category and the provenance says so.
    """
    if negatives_per_positive < 1:
        raise QagenError("negatives_per_positive must be >= 1")
    by_cat, everything = _category_pools(catalog, split)
    real_outfits = frozenset(frozenset(o.item_ids) for o in catalog.outfits)
    out: list[BinaryQA] = []
    n_skipped = 0
    for outfit in catalog.split_outfits(split):
        rng = random.Random(f"{seed}:binary:{split}:{outfit.outfit_id}")
        out.append(
            BinaryQA(
                qa_id=f"bin-{outfit.outfit_id}-pos",
                item_ids=outfit.item_ids,
                question_text=_question_for(catalog, outfit.item_ids),
                label="compatible",
                provenance={"source_outfit_id": outfit.outfit_id, "corruption": "positive"},
            )
        )
        members = set(outfit.item_ids)
        for n in range(negatives_per_positive):
            slot = rng.randrange(len(outfit.item_ids))
            victim = outfit.item_ids[slot]
            category = catalog.items[victim].semantic_category
            pool = [i for i in by_cat.get(category, []) if i not in members]
            fallback = not pool
            if fallback:
                pool = [i for i in everything if i not in members]
            corrupted_base = frozenset(members - {victim})
            pick = (
                _pick_replacement(rng, pool, corrupted_base, real_outfits) if pool else None
            )
            if pick is None:
                n_skipped += 1
                continue
            corrupted = list(outfit.item_ids)
            corrupted[slot] = pick
            corruption = f"replaced {victim} with {pick}"
            if fallback:
                corruption += " (any-category fallback)"
            out.append(
                BinaryQA(
                    qa_id=f"bin-{outfit.outfit_id}-neg{n}",
                    item_ids=tuple(corrupted),
                    question_text=_question_for(catalog, corrupted),
                    label="incompatible",
                    provenance={
                        "source_outfit_id": outfit.outfit_id,
                        "corruption": corruption,
                    },
                )
            )
    if n_skipped:
        logger.warning("binary qa: skipped %d negatives with no usable replacement", n_skipped)
    return out


def gen_fitb_questions(
    catalog: Catalog,
    split: str,
    seed: int = 0,
    official: Sequence[OfficialFitb] | None = None,
) -> list[FITBQuestion]:
    """Four-way fill-in-the-blank questions, one per outfit.

    The blanked slot and the answer position are uniform under the seed;
    distractors share the blanked item's category and never come from the
    source outfit. Passing official entries converts them verbatim instead
    (their answer lists put the truth first).
    """
    if official is not None:
        out = []
        for i, entry in enumerate(official):
            if len(entry.answer_item_ids) != N_FITB_CANDIDATES:
                raise QagenError(
                    f"official entry {i} has {len(entry.answer_item_ids)} answers, "
                    f"expected {N_FITB_CANDIDATES}"
                )
            out.append(
                FITBQuestion(
                    qid=f"fitb-official-{i:05d}",
                    context_item_ids=entry.question_item_ids,
                    blank_position=entry.blank_position,
                    candidate_item_ids=entry.answer_item_ids,
                    answer_index=0,
                    split=split,
                    provenance="official",
                )
            )
        return out

    by_cat, everything = _category_pools(catalog, split)
    out = []
    n_skipped = 0
    for outfit in catalog.split_outfits(split):
        rng = random.Random(f"{seed}:fitb:{split}:{outfit.outfit_id}")
        blank = rng.randrange(len(outfit.item_ids))
        truth = outfit.item_ids[blank]
        members = set(outfit.item_ids)
        category = catalog.items[truth].semantic_category
        same_cat = [i for i in by_cat.get(category, []) if i not in members]
        widened = False
        if len(same_cat) >= N_FITB_DISTRACTORS:
            distractors = rng.sample(same_cat, N_FITB_DISTRACTORS)
        else:
            same_set = set(same_cat)
            wider = [i for i in everything if i not in members and i not in same_set]
            needed = N_FITB_DISTRACTORS - len(same_cat)
            if len(wider) < needed:
                n_skipped += 1
                continue
            distractors = same_cat + rng.sample(wider, needed)
            widened = True
        answer_index = rng.randrange(N_FITB_CANDIDATES)
        candidates = list(distractors)
        candidates.insert(answer_index, truth)
        out.append(
            FITBQuestion(
                qid=f"fitb-{outfit.outfit_id}",
                context_item_ids=tuple(
                    i for pos, i in enumerate(outfit.item_ids) if pos != blank
                ),
                blank_position=blank,
                candidate_item_ids=tuple(candidates),
                answer_index=answer_index,
                split=split,
                provenance="generated-widened" if widened else "generated",
            )
        )
    if n_skipped:
        logger.warning("fitb: skipped %d outfits with too few distractors", n_skipped)
    return out


AUTO_QA_SYSTEM = (
    "You are a fashion stylist writing study material about outfit composition."
)

AUTO_QA_RECORD_SYSTEM = "You are a fashion stylist. Answer questions about outfit styling."

DESCRIBE_TEMPLATE = "Describe the style and fit of an outfit containing:\n{items}"

QA_PAIRS_TEMPLATE = (
    "Here are the items in one outfit:\n{items}\n\n"
    "Write {n} question and answer pairs about why these pieces work together.\n"
    "Format each pair as two lines, the first starting with 'Q:' and the "
    "second starting with 'A:'."
)

DEFAULT_AUTO_TEMPLATES = (DESCRIBE_TEMPLATE, QA_PAIRS_TEMPLATE)


@dataclass(frozen=True)
class AutoQaResult:
    records: tuple[TrainingRecord, ...]
    docs: tuple[KnowledgeDoc, ...]
    n_outfits: int = 0
    n_prompts: int = 0
    n_malformed: int = 0
    n_duplicates: int = 0
    failed_outfit_ids: tuple[str, ...] = ()


def _split_inline_answer(line: str) -> list[str]:
    """A 'Q:' line may carry its 'A:' inline; split it into two lines."""
    if line.startswith("Q:") and " A:" in line:
        q_part, a_part = line.split(" A:", 1)
        return [q_part.strip(), "A:" + a_part]
    return [line]


def _parse_qa_text(text: str):
    """Split a reply into Q/A pairs and leftover prose lines.

    A 'Q:' line pairs with the next 'A:' line; orphans of either kind count
    as malformed. Everything else is prose.
    """
    pairs: list[tuple[str, str]] = []
    prose: list[str] = []
    n_malformed = 0
    pending_q: str | None = None
    lines = []
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped:
            lines.extend(_split_inline_answer(stripped))
    for line in lines:
        if line.startswith("Q:"):
            if pending_q is not None:
                n_malformed += 1
            pending_q = line[2:].strip()
        elif line.startswith("A:"):
            answer = line[2:].strip()
            if pending_q is None or not pending_q or not answer:
                n_malformed += 1
                pending_q = None
            else:
                pairs.append((pending_q, answer))
                pending_q = None
        else:
            prose.append(line)
    if pending_q is not None:
        n_malformed += 1
    return pairs, prose, n_malformed


def render_qa_doc_text(question: str, answer: str) -> str:
    return f"Q: {question} A: {answer}"


def gen_auto_qa(
    backend: ChatBackend,
    catalog: Catalog,
    split: str,
    templates: Sequence[str] = DEFAULT_AUTO_TEMPLATES,
    per_outfit: int = 3,
    seed: int = 0,
    model: str = "default",
    max_outfits: int | None = None,
    concurrency: int = 1,
) -> AutoQaResult:
    """Ask a chat backend to describe outfits and write styling QA.

    Each template is rendered once per outfit ({items} and {n} placeholders);
    templates that ask for QA pairs (those using {n}) are skipped when
    per_outfit is 0. Q/A pairs become both a TrainingRecord and a
    KnowledgeDoc; other prose becomes a KnowledgeDoc per reply. Output order
    follows catalog order regardless of concurrency. Backend failures skip
    the outfit and are reported, not raised; exact-duplicate texts are
    dropped.
    """
    if concurrency < 1:
        raise QagenError("concurrency must be >= 1")
    if not templates:
        raise QagenError("need at least one prompt template")
    if per_outfit < 0:
        raise QagenError("per_outfit must be >= 0")
    outfits = list(catalog.split_outfits(split))
    if max_outfits is not None and max_outfits < len(outfits):
        rng = random.Random(f"{seed}:auto:{split}")
        keep = set(rng.sample(range(len(outfits)), max_outfits))
        outfits = [o for i, o in enumerate(outfits) if i in keep]

    active = [t for t in templates if per_outfit > 0 or "{n}" not in t]

    def ask(outfit, template: str) -> str:
        items_block = "\n".join(
            f"- {item_text(catalog.items[i])}" for i in outfit.item_ids
        )
        request = ChatRequest(
            model=model,
            messages=(
                ChatMessage("system", AUTO_QA_SYSTEM),
                ChatMessage("user", template.format(items=items_block, n=per_outfit)),
            ),
        )
        return backend.chat(request).text

    jobs = [(outfit, template) for outfit in outfits for template in active]
    replies: list[str | None] = [None] * len(jobs)
    failed: list[str] = []
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        futures = [pool.submit(ask, o, t) for o, t in jobs]
        for i, future in enumerate(futures):
            try:
                replies[i] = future.result()
            except ChatBackendError as exc:
                outfit_id = jobs[i][0].outfit_id
                if outfit_id not in failed:
                    failed.append(outfit_id)
                logger.warning("auto qa failed for %s: %s", outfit_id, exc)

    records: list[TrainingRecord] = []
    docs: list[KnowledgeDoc] = []
    seen_texts: set[str] = set()
    n_malformed = 0
    n_duplicates = 0
    doc_serial: dict[str, int] = {}
    for (outfit, _template), reply in zip(jobs, replies):
        if reply is None:
            continue
        pairs, prose, bad = _parse_qa_text(reply)
        n_malformed += bad
        doc_tags = {
            "source": "auto_qa",
            "split": split,
            "item_ids": list(outfit.item_ids),
        }
        for question, answer in pairs:
            doc_text = render_qa_doc_text(question, answer)
            if doc_text in seen_texts:
                n_duplicates += 1
                continue
            seen_texts.add(doc_text)
            serial = doc_serial.get(outfit.outfit_id, 0)
            doc_serial[outfit.outfit_id] = serial + 1
            records.append(
                TrainingRecord(
                    messages=(
                        ("system", AUTO_QA_RECORD_SYSTEM),
                        ("user", question),
                        ("assistant", answer),
                    ),
                    tags={
                        "family": "auto_qa",
                        "split": split,
                        "outfit_id": outfit.outfit_id,
                    },
                )
            )
            docs.append(
                KnowledgeDoc(
                    doc_id=f"auto-{outfit.outfit_id}-{serial}",
                    text=doc_text,
                    tags=dict(doc_tags),
                )
            )
        if prose:
            doc_text = " ".join(prose)
            if doc_text in seen_texts:
                n_duplicates += 1
            else:
                seen_texts.add(doc_text)
                serial = doc_serial.get(outfit.outfit_id, 0)
                doc_serial[outfit.outfit_id] = serial + 1
                docs.append(
                    KnowledgeDoc(
                        doc_id=f"auto-{outfit.outfit_id}-{serial}",
                        text=doc_text,
                        tags=dict(doc_tags),
                    )
                )
    return AutoQaResult(
        records=tuple(records),
        docs=tuple(docs),
        n_outfits=len(outfits),
        n_prompts=len(jobs),
        n_malformed=n_malformed,
        n_duplicates=n_duplicates,
        failed_outfit_ids=tuple(failed),
    )


def binary_training_record(qa: BinaryQA, split: str) -> TrainingRecord:
    answer = "yes" if qa.label == "compatible" else "no"
    return TrainingRecord(
        messages=(
            ("system", DEFAULT_TEMPLATES.binary_system),
            ("user", qa.question_text),
            ("assistant", answer),
        ),
        tags={"family": "binary", "split": split, "qa_id": qa.qa_id},
    )


def fitb_training_record(question: FITBQuestion, catalog: Catalog) -> TrainingRecord:
    context = [item_text(catalog.items[i]) for i in question.context_item_ids]
    options = [item_text(catalog.items[i]) for i in question.candidate_item_ids]
    return TrainingRecord(
        messages=(
            ("system", DEFAULT_TEMPLATES.fitb_system),
            ("user", fitb_user_text(context, options)),
            ("assistant", OPTION_LABELS[question.answer_index]),
        ),
        tags={"family": "fitb", "split": question.split, "qid": question.qid},
    )


def _dump_line(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def export_finetune_jsonl(records: Sequence[TrainingRecord], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(
                _dump_line(
                    {
                        "messages": [
                            {"role": role, "content": content}
                            for role, content in record.messages
                        ],
                        "tags": record.tags,
                    }
                )
            )
    return len(records)


def export_knowledge_jsonl(docs: Sequence[KnowledgeDoc], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(_dump_line({"doc_id": doc.doc_id, "text": doc.text, "tags": doc.tags}))
    return len(docs)


def export_binary_jsonl(qas: Sequence[BinaryQA], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for qa in qas:
            fh.write(
                _dump_line(
                    {
                        "qa_id": qa.qa_id,
                        "item_ids": list(qa.item_ids),
                        "question_text": qa.question_text,
                        "label": qa.label,
                        "provenance": qa.provenance,
                    }
                )
            )
    return len(qas)


def export_fitb_jsonl(questions: Sequence[FITBQuestion], path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for q in questions:
            fh.write(
                _dump_line(
                    {
                        "qid": q.qid,
                        "context_item_ids": list(q.context_item_ids),
                        "blank_position": q.blank_position,
                        "candidate_item_ids": list(q.candidate_item_ids),
                        "answer_index": q.answer_index,
                        "split": q.split,
                        "provenance": q.provenance,
                    }
                )
            )
    return len(questions)


def load_fitb_jsonl(path) -> list[FITBQuestion]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(
                    FITBQuestion(
                        qid=row["qid"],
                        context_item_ids=tuple(row["context_item_ids"]),
                        blank_position=row["blank_position"],
                        candidate_item_ids=tuple(row["candidate_item_ids"]),
                        answer_index=row["answer_index"],
                        split=row["split"],
                        provenance=row.get("provenance", "generated"),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise QagenError(f"{path}:{line_no}: bad fitb record: {exc}") from exc
    return out


def load_finetune_jsonl(path) -> list[TrainingRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(
                    TrainingRecord(
                        messages=tuple(
                            (m["role"], m["content"]) for m in row["messages"]
                        ),
                        tags=dict(row.get("tags", {})),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise QagenError(f"{path}:{line_no}: bad training record: {exc}") from exc
    return out


def load_knowledge_jsonl(path) -> list[KnowledgeDoc]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(
                    KnowledgeDoc(
                        doc_id=row["doc_id"],
                        text=row["text"],
                        tags=dict(row.get("tags", {})),
                    )
                )
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise QagenError(f"{path}:{line_no}: bad knowledge doc: {exc}") from exc
    return out
