"""Multi-path context retrieval.

A query fans out into up to three kinds of index searches: the direct
embedding of the query items and free text, a style/occasion template
query, and questions written on the fly by a chat backend. Per-path hit
lists are merged with reciprocal rank fusion.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .catalog import Catalog, item_text
from .chat import ChatBackend, ChatBackendError, ChatMessage, ChatRequest
from .embedding import EmbeddingError, EmbeddingProvider
from .vectorstore import (
    DocumentRecord,
    SearchHit,
    VectorIndex,
    VectorStoreError,
    kind_filter,
)

logger = logging.getLogger(__name__)

RRF_CONSTANT = 60
PATH_KINDS = ("direct", "style_occasion", "auto_question")
# non-direct paths search the generated knowledge corpus, not item docs
CONTEXT_DOC_KINDS = ("knowledge", "qa")


class RetrievalError(RuntimeError):
    """Raised when a query cannot produce any context at all."""


@dataclass(frozen=True)
class QueryContext:
    query_item_ids: tuple[str, ...] = ()
    free_text: str | None = None
    style: str | None = None
    occasion: str | None = None
    k_per_path: int = 10
    k_final: int = 10

    def __post_init__(self):
        if not self.query_item_ids and not (self.free_text and self.free_text.strip()):
            raise RetrievalError("query needs item ids or free text")
        if self.k_per_path < 1 or self.k_final < 1:
            raise RetrievalError("k_per_path and k_final must be >= 1")


@dataclass(frozen=True)
class PathSpec:
    label: str
    path_kind: str
    query_text: str
    doc_kinds: tuple[str, ...] | None = None  # None searches every doc kind

    def __post_init__(self):
        if self.path_kind not in PATH_KINDS:
            raise RetrievalError(f"unknown path kind {self.path_kind!r}")
        if not self.query_text.strip():
            raise RetrievalError(f"path {self.label!r} has empty query text")


@dataclass(frozen=True)
class QueryPlan:
    paths: tuple[PathSpec, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not any(p.path_kind == "direct" for p in self.paths):
            raise RetrievalError("plan must contain a direct path")
        labels = [p.label for p in self.paths]
        if len(set(labels)) != len(labels):
            raise RetrievalError("duplicate path labels")


@dataclass(frozen=True)
class FusedDoc:
    doc_id: str
    fused_score: float
    paths: tuple[str, ...]
    text: str = ""


@dataclass(frozen=True)
class RetrievedContext:
    per_path_hits: Mapping[str, tuple[SearchHit, ...]]
    fused: tuple[FusedDoc, ...]
    warnings: tuple[str, ...] = ()


AUTO_QUESTION_SYSTEM = "You are a fashion stylist's research assistant."

AUTO_QUESTION_PROMPT = (
    "A stylist is putting together: {context}\n"
    "Write {n} short questions whose answers would help style or complete "
    "this outfit. One question per line, no numbering."
)

_LINE_MARKER = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s*)")


def _direct_text(ctx: QueryContext, catalog: Catalog) -> str:
    parts = []
    for item_id in ctx.query_item_ids:
        if item_id not in catalog.items:
            raise RetrievalError(f"unknown query item {item_id!r}")
        parts.append(item_text(catalog.items[item_id]))
    if ctx.free_text and ctx.free_text.strip():
        parts.append(ctx.free_text.strip())
    return " ".join(parts)


def _style_occasion_text(ctx: QueryContext, catalog: Catalog) -> str:
    head = f"{ctx.style} outfit" if ctx.style else "outfit"
    if ctx.occasion:
        head += f" for {ctx.occasion}"
    titles = [
        catalog.items[i].title or catalog.items[i].item_id for i in ctx.query_item_ids
    ]
    if titles:
        head += " pairing with " + ", ".join(titles)
    return head


def _question_lines(reply: str, limit: int) -> list[str]:
    questions = []
    for raw in reply.splitlines():
        line = _LINE_MARKER.sub("", raw).strip()
        if line:
            questions.append(line)
        if len(questions) == limit:
            break
    return questions


def plan_queries(
    ctx: QueryContext,
    catalog: Catalog,
    llm: ChatBackend | None = None,
    n_questions: int = 3,
    model: str = "default",
) -> QueryPlan:
    """Build the path list for a query.

    The direct path is always present; style/occasion adds a template path;
    a chat backend adds one path per generated question. Backend failure
    degrades to the non-LLM paths with a warning instead of failing.
    """
    direct = _direct_text(ctx, catalog)
    paths = [PathSpec(label="direct", path_kind="direct", query_text=direct)]
    warnings: list[str] = []
    if ctx.style or ctx.occasion:
        paths.append(
            PathSpec(
                label="style_occasion",
                path_kind="style_occasion",
                query_text=_style_occasion_text(ctx, catalog),
                doc_kinds=CONTEXT_DOC_KINDS,
            )
        )
    if llm is not None and n_questions > 0:
        request = ChatRequest(
            model=model,
            messages=(
                ChatMessage("system", AUTO_QUESTION_SYSTEM),
                ChatMessage(
                    "user", AUTO_QUESTION_PROMPT.format(context=direct, n=n_questions)
                ),
            ),
        )
        try:
            reply = llm.chat(request).text
        except ChatBackendError as exc:
            warnings.append(f"auto_question paths skipped: {exc}")
            logger.warning("question generation failed: %s", exc)
        else:
            questions = _question_lines(reply, n_questions)
            if not questions:
                warnings.append("auto_question paths skipped: no usable question lines")
            for i, question in enumerate(questions):
                paths.append(
                    PathSpec(
                        label=f"auto_question:{i}",
                        path_kind="auto_question",
                        query_text=question,
                        doc_kinds=CONTEXT_DOC_KINDS,
                    )
                )
    return QueryPlan(paths=tuple(paths), warnings=tuple(warnings))


def execute(
    plan: QueryPlan,
    index: VectorIndex,
    provider: EmbeddingProvider,
    k_per_path: int = 10,
) -> tuple[dict[str, tuple[SearchHit, ...]], tuple[str, ...]]:
    """Run every path against the index; paths are independent.

    A path whose embedding or search fails contributes empty hits and a
    warning; if every path fails the whole query is an error.
    """
    hits: dict[str, tuple[SearchHit, ...]] = {}
    warnings: list[str] = []
    n_failed = 0
    for path in plan.paths:
        doc_filter = kind_filter(path.doc_kinds) if path.doc_kinds else None
        try:
            vector = provider.embed(path.query_text)
            hits[path.label] = tuple(index.search_topk(vector, k_per_path, doc_filter))
        except (EmbeddingError, VectorStoreError, ValueError) as exc:
            n_failed += 1
            hits[path.label] = ()
            warnings.append(f"path {path.label} failed: {exc}")
            logger.warning("path %s failed: %s", path.label, exc)
    if n_failed == len(plan.paths):
        raise RetrievalError(f"every path failed: {'; '.join(warnings)}")
    return hits, tuple(warnings)


def fuse(
    per_path_hits: Mapping[str, Sequence[SearchHit]], k_final: int
) -> list[FusedDoc]:
    """Reciprocal rank fusion: score(d) = sum over paths of 1/(60 + rank).

    Ranks start at 1. Contributions are summed in sorted rank order so the
    result is independent of path enumeration order; ties break by doc_id.
    """
    if k_final < 1:
        raise RetrievalError("k_final must be >= 1")
    ranks: dict[str, list[int]] = {}
    contributors: dict[str, set[str]] = {}
    for label, hits in per_path_hits.items():
        for rank, hit in enumerate(hits, start=1):
            ranks.setdefault(hit.doc_id, []).append(rank)
            contributors.setdefault(hit.doc_id, set()).add(label)
    fused = []
    for doc_id, rank_list in ranks.items():
        score = math.fsum(1.0 / (RRF_CONSTANT + r) for r in sorted(rank_list))
        fused.append(
            FusedDoc(
                doc_id=doc_id,
                fused_score=score,
                paths=tuple(sorted(contributors[doc_id])),
            )
        )
    fused.sort(key=lambda d: (-d.fused_score, d.doc_id))
    return fused[:k_final]


def retrieve(
    ctx: QueryContext,
    catalog: Catalog,
    index: VectorIndex,
    provider: EmbeddingProvider,
    llm: ChatBackend | None = None,
    n_questions: int = 3,
    model: str = "default",
) -> RetrievedContext:
    """Plan, execute, and fuse in one call; fused docs carry their text."""
    plan = plan_queries(ctx, catalog, llm=llm, n_questions=n_questions, model=model)
    per_path, exec_warnings = execute(plan, index, provider, k_per_path=ctx.k_per_path)
    fused = []
    for doc in fuse(per_path, ctx.k_final):
        record = index.get(doc.doc_id)
        fused.append(
            FusedDoc(
                doc_id=doc.doc_id,
                fused_score=doc.fused_score,
                paths=doc.paths,
                text=record.text if record else "",
            )
        )
    return RetrievedContext(
        per_path_hits=dict(per_path),
        fused=tuple(fused),
        warnings=plan.warnings + exec_warnings,
    )


def doc_kind_for_text(text: str) -> str:
    """Corpus kind of a generated doc: question-answer lines index as "qa"."""
    return "qa" if text.startswith("Q: ") and " A: " in text else "knowledge"


def build_corpus_index(
    catalog: Catalog, provider: EmbeddingProvider, docs: Sequence = ()
) -> VectorIndex:
    """Embed every item text plus the given knowledge docs into a fresh index.

    Items index under their item_id with kind "item"; docs (anything with
    doc_id, text, and tags) under their own ids. Items with no usable text
    are skipped with a logged count.
    """
    entries: list[tuple[str, str, str, dict]] = []
    n_skipped = 0
    for item_id in sorted(catalog.items):
        item = catalog.items[item_id]
        text = item_text(item)
        if not text:
            n_skipped += 1
            continue
        entries.append(
            (item_id, text, "item", {"semantic_category": item.semantic_category})
        )
    for doc in docs:
        entries.append((doc.doc_id, doc.text, doc_kind_for_text(doc.text), dict(doc.tags)))
    if n_skipped:
        logger.warning("index build skipped %d items with no text", n_skipped)

    index = VectorIndex(dims=provider.dims, provider_fingerprint=provider.fingerprint())
    if not entries:
        return index
    vectors = provider.embed_batch([text for _, text, _, _ in entries])
    index.upsert(
        [
            DocumentRecord(doc_id=doc_id, text=text, vector=vector, kind=kind, tags=tags)
            for (doc_id, text, kind, tags), vector in zip(entries, vectors)
        ]
    )
    return index
