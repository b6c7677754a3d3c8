"""HTTP service: outfit recommendations, item browse, health.

The service is a read-only composition over an immutable catalog, a
prebuilt vector index, and a chat backend. Every response is reproducible
by calling the underlying library functions with the same configuration.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .catalog import Catalog, CatalogLayout, Item, load_catalog
from .chat import ChatBackend, ChatBackendError, bundle_to_request
from .config import AppConfig, ConfigError, build_backend, build_embedder
from .embedding import EmbeddingProvider
from .prompting import DEFAULT_TEMPLATES, PromptTemplates, assemble_prompt
from .retrieval import QueryContext, RetrievalError, retrieve
from .vectorstore import VectorIndex

logger = logging.getLogger(__name__)


class RecommendBody(BaseModel):
    query_item_id: str | None = None
    free_text: str | None = None
    style: str | None = None
    occasion: str | None = None
    k: int = Field(default=10, ge=1, le=50)


@dataclass
class ServiceState:
    """Immutable snapshot the request handlers read from."""

    catalog: Catalog
    index: VectorIndex
    provider: EmbeddingProvider
    backend: ChatBackend
    config: AppConfig = field(default_factory=AppConfig)
    question_llm: ChatBackend | None = None
    templates: PromptTemplates = DEFAULT_TEMPLATES
    backend_kind: str = ""
    gate: threading.Semaphore | None = None

    def __post_init__(self):
        if self.gate is None:
            self.gate = threading.Semaphore(self.config.service.concurrency)
        if not self.backend_kind:
            self.backend_kind = self.backend.describe().split(":", 1)[0]


def build_state(
    config: AppConfig,
    backend: ChatBackend | None = None,
    provider: EmbeddingProvider | None = None,
    question_llm: ChatBackend | None = None,
) -> ServiceState:
    """Load catalog and index from the configured paths and wire components.

    Failures are ConfigError with the offending field named, so startup
    dies with an actionable message.
    """
    if not config.catalog_root:
        raise ConfigError("catalog_root: required to serve")
    if not config.index_path:
        raise ConfigError("index_path: required to serve")
    try:
        catalog = load_catalog(
            config.catalog_root, CatalogLayout(variant=config.catalog_mode)
        )
    except Exception as exc:
        raise ConfigError(f"catalog_root: cannot load catalog: {exc}") from exc
    try:
        index = VectorIndex.load(config.index_path)
    except Exception as exc:
        raise ConfigError(f"index_path: cannot load index: {exc}") from exc
    provider = provider or build_embedder(config.embedder)
    if index.provider_fingerprint and index.provider_fingerprint != provider.fingerprint():
        raise ConfigError(
            f"index_path: index was embedded by {index.provider_fingerprint!r}, "
            f"configured embedder is {provider.fingerprint()!r}"
        )
    backend = backend or build_backend(config.backend, provider=provider)
    if question_llm is None and config.retrieval.llm_questions:
        question_llm = backend
    return ServiceState(
        catalog=catalog,
        index=index,
        provider=provider,
        backend=backend,
        config=config,
        question_llm=question_llm,
        backend_kind=config.backend.kind,
    )


def _item_payload(item: Item) -> dict:
    return {
        "item_id": item.item_id,
        "title": item.title,
        "description": item.description,
        "semantic_category": item.semantic_category,
        "image_ref": item.image_ref,
    }


def rank_recommendations(
    state: ServiceState, fused, query_item_id: str | None, k: int
) -> list[tuple[Item, float]]:
    """Catalog items among the fused docs, best fused score first.

    The query item itself is never recommended back.
    """
    ranked: list[tuple[Item, float]] = []
    for doc in fused:
        record = state.index.get(doc.doc_id)
        if record is None or record.kind != "item":
            continue
        if query_item_id is not None and doc.doc_id == query_item_id:
            continue
        item = state.catalog.items.get(doc.doc_id)
        if item is None:
            continue
        ranked.append((item, doc.fused_score))
        if len(ranked) == k:
            break
    return ranked


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="stylist", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        )
        return JSONResponse(status_code=400, content={"detail": detail or "invalid request"})

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "index_size": len(state.index),
            "backend": state.backend_kind,
        }

    @app.get("/api/items")
    def list_items(query: str = "", category: str = "", page: int = 1):
        if page < 1:
            raise HTTPException(status_code=400, detail="page must be >= 1")
        needle = query.strip().lower()
        matches = []
        for item_id in sorted(state.catalog.items):
            item = state.catalog.items[item_id]
            if category and item.semantic_category != category:
                continue
            if needle:
                haystack = f"{item.item_id} {item.title} {item.description}".lower()
                if needle not in haystack:
                    continue
            matches.append(item)
        size = state.config.service.page_size
        start = (page - 1) * size
        return {
            "items": [_item_payload(i) for i in matches[start : start + size]],
            "page": page,
            "page_size": size,
            "total": len(matches),
        }

    @app.get("/api/items/{item_id}")
    def get_item(item_id: str):
        item = state.catalog.items.get(item_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id!r}")
        return _item_payload(item)

    @app.post("/api/recommend")
    def recommend(body: RecommendBody):
        start = time.perf_counter()
        if body.k > state.config.service.max_k:
            raise HTTPException(
                status_code=400,
                detail=f"k must be <= {state.config.service.max_k}",
            )
        free_text = (body.free_text or "").strip()
        if not body.query_item_id and not free_text:
            raise HTTPException(
                status_code=400, detail="request needs query_item_id or free_text"
            )
        if body.query_item_id and body.query_item_id not in state.catalog.items:
            raise HTTPException(
                status_code=404, detail=f"unknown item {body.query_item_id!r}"
            )

        # Fuse over a window wide enough that k item docs survive the
        # knowledge and qa docs ranked among them.
        rcfg = state.config.retrieval
        k_per_path = max(rcfg.k_per_path, body.k + 1)
        k_final = max(rcfg.k_final, 3 * k_per_path)
        try:
            ctx = QueryContext(
                query_item_ids=(body.query_item_id,) if body.query_item_id else (),
                free_text=free_text or None,
                style=body.style,
                occasion=body.occasion,
                k_per_path=k_per_path,
                k_final=k_final,
            )
            retrieved = retrieve(
                ctx,
                state.catalog,
                state.index,
                state.provider,
                llm=state.question_llm,
                n_questions=rcfg.n_questions,
                model=state.config.backend.model,
            )
        except RetrievalError as exc:
            raise HTTPException(status_code=502, detail=f"retrieval failed: {exc}")

        ranked = rank_recommendations(state, retrieved.fused, body.query_item_id, body.k)

        rationale = ""
        fallback = False
        if ranked:
            bundle = assemble_prompt(
                "recommend",
                [item for item, _ in ranked],
                retrieved,
                templates=state.templates,
                style=body.style,
                occasion=body.occasion,
            )
            request = bundle_to_request(bundle, model=state.config.backend.model)
            try:
                with state.gate:
                    response = state.backend.chat(request)
                rationale = response.text.strip()
            except ChatBackendError as exc:
                if not state.config.service.fallback:
                    raise HTTPException(
                        status_code=502, detail=f"chat backend failed: {exc}"
                    )
                logger.warning("chat backend failed, serving retrieval-only: %s", exc)
                fallback = True

        provenance: dict[str, list[str]] = {
            label: [] for label in retrieved.per_path_hits
        }
        for doc in retrieved.fused:
            for label in doc.paths:
                provenance.setdefault(label, []).append(doc.doc_id)

        return {
            "recommendations": [
                {
                    "item_id": item.item_id,
                    "title": item.title,
                    "score": score,
                    "rationale": rationale,
                }
                for item, score in ranked
            ],
            "provenance": provenance,
            "model": state.config.backend.model,
            "fallback": fallback,
            "latency_ms": (time.perf_counter() - start) * 1000.0,
            "warnings": list(retrieved.warnings),
        }

    return app
