"""Command line entry points for the full pipeline.

Commands are thin wrappers over the library modules; anything they can do
is reproducible by calling the same functions with the same arguments.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import shlex
import sys

import click

from .catalog import (
    CatalogError,
    CatalogLayout,
    build_disjoint_splits,
    load_catalog,
    load_official_fitb,
    save_catalog,
    verify_disjoint,
)
from .chat import ChatBackendError
from .config import (
    BACKEND_KINDS,
    CATALOG_MODES,
    AppConfig,
    ConfigError,
    build_backend,
    build_embedder,
    load_config,
)
from .embedding import EmbeddingError
from .evaluation import (
    DEFAULT_RATIO_GRID,
    EvalError,
    export_curve_csv,
    export_report,
    run_fitb_eval,
    run_ratio_series,
)
from .qagen import (
    QagenError,
    binary_training_record,
    export_binary_jsonl,
    export_finetune_jsonl,
    export_fitb_jsonl,
    export_knowledge_jsonl,
    gen_auto_qa,
    gen_binary_qa,
    gen_fitb_questions,
    load_finetune_jsonl,
    load_fitb_jsonl,
    load_knowledge_jsonl,
)
from .retrieval import QueryContext, RetrievalError, build_corpus_index, retrieve
from .service import build_state, create_app
from .vectorstore import VectorIndex, VectorStoreError

_FAILURES = (
    CatalogError,
    QagenError,
    VectorStoreError,
    EvalError,
    ConfigError,
    RetrievalError,
    ChatBackendError,
    EmbeddingError,
    OSError,
)


def _friendly(fn):
    """Convert library errors into clean CLI failures (exit code 1)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _FAILURES as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _require(value, fallback, flag: str, config_field: str):
    """Flag value if given, else the configured fallback, else a clear error."""
    if value:
        return value
    if fallback:
        return fallback
    raise click.ClickException(f"{flag} not given and {config_field} not configured")


def _load(cfg: AppConfig, root: str):
    return load_catalog(root, CatalogLayout(variant=cfg.catalog_mode))


def _echo_json(payload) -> None:
    click.echo(json.dumps(payload, ensure_ascii=False, indent=2))


@click.group()
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False),
    default=None,
    help="YAML config file; STYLIST_* environment variables override it.",
)
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def main(ctx, config_path, verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc


@main.group()
def catalog():
    """Inspect, validate, and split outfit catalogs."""


@catalog.command("validate")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice(CATALOG_MODES), default=None)
@click.pass_context
@_friendly
def catalog_validate(ctx, root, mode):
    """Load a catalog, report counts, and check split disjointness."""
    mode = mode or ctx.obj.catalog_mode
    cat = load_catalog(root, CatalogLayout(variant=mode))
    report = verify_disjoint(cat, cat.splits)
    _echo_json(
        {
            **cat.counts(),
            "mode": mode,
            "disjoint": report.is_disjoint,
            "violations": len(report.violations),
        }
    )
    if mode == "disjoint" and not report.is_disjoint:
        ctx.exit(1)


@catalog.command("split")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("--mode", type=click.Choice(["disjoint"]), default="disjoint")
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_friendly
def catalog_split(root, mode, ratios, seed, out):
    """Compute an item-disjoint split assignment and emit it as JSON."""
    cat = load_catalog(root)
    try:
        parts = tuple(float(x) for x in ratios.split(","))
    except ValueError:
        raise click.ClickException(f"bad --ratios value {ratios!r}")
    try:
        splits = build_disjoint_splits(cat, parts, seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    report = verify_disjoint(cat, splits)
    payload = {
        "mode": mode,
        "seed": seed,
        "train": sorted(splits.train),
        "valid": sorted(splits.valid),
        "test": sorted(splits.test),
        "n_dropped": len(cat.outfits) - len(splits.assigned),
        "disjoint": report.is_disjoint,
    }
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False, indent=2)
        click.echo(f"wrote {out}")
    else:
        _echo_json(payload)


@main.group()
def qagen():
    """Generate training and evaluation data."""


@qagen.command("binary")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", default="train", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--negatives", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option(
    "--records-out",
    type=click.Path(dir_okay=False),
    default=None,
    help="Also export chat-format training records.",
)
@click.pass_obj
@_friendly
def qagen_binary(cfg, root, split, seed, negatives, out, records_out):
    """Compatible/incompatible outfit pairs by single-item corruption."""
    cat = _load(cfg, _require(root, cfg.catalog_root, "--root", "catalog_root"))
    qas = gen_binary_qa(cat, split, negatives_per_positive=negatives, seed=seed)
    export_binary_jsonl(qas, out)
    if records_out:
        export_finetune_jsonl([binary_training_record(q, split) for q in qas], records_out)
    click.echo(f"wrote {len(qas)} binary QA pairs to {out}")


@qagen.command("fitb")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", default="test", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--official", is_flag=True, help="Convert the official question file.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@_friendly
def qagen_fitb(cfg, root, split, seed, official, out):
    """Four-candidate fill-in-the-blank questions."""
    root = _require(root, cfg.catalog_root, "--root", "catalog_root")
    cat = _load(cfg, root)
    official_entries = None
    if official:
        official_entries = load_official_fitb(root, cat)
        if not official_entries:
            raise click.ClickException(f"no official question file under {root}")
    questions = gen_fitb_questions(cat, split, seed=seed, official=official_entries)
    export_fitb_jsonl(questions, out)
    click.echo(f"wrote {len(questions)} questions to {out}")


@qagen.command("auto")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", default="train", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--per-outfit", type=int, default=3, show_default=True)
@click.option("--max-outfits", type=int, default=None)
@click.option("--concurrency", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--docs-out", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@_friendly
def qagen_auto(cfg, root, split, seed, per_outfit, max_outfits, concurrency, out, docs_out):
    """Chat-model-written QA records and knowledge docs.

    The chat backend comes from the config (backend section).
    """
    cat = _load(cfg, _require(root, cfg.catalog_root, "--root", "catalog_root"))
    backend = build_backend(cfg.backend, provider=build_embedder(cfg.embedder))
    result = gen_auto_qa(
        backend,
        cat,
        split,
        per_outfit=per_outfit,
        seed=seed,
        model=cfg.backend.model,
        max_outfits=max_outfits,
        concurrency=concurrency,
    )
    export_finetune_jsonl(result.records, out)
    export_knowledge_jsonl(result.docs, docs_out)
    click.echo(
        f"wrote {len(result.records)} records to {out} and "
        f"{len(result.docs)} docs to {docs_out}"
    )
    if result.failed_outfit_ids:
        click.echo(f"warning: {len(result.failed_outfit_ids)} outfits failed", err=True)


@main.command("ingest")
@click.argument("src", type=click.Path(exists=True, file_okay=False))
@click.argument("dst", type=click.Path(file_okay=False))
@click.option("--mode", type=click.Choice(CATALOG_MODES), default=None)
@click.pass_obj
@_friendly
def ingest(cfg, src, dst, mode):
    """Load a raw catalog directory and write a normalized copy."""
    cat = load_catalog(src, CatalogLayout(variant=mode or cfg.catalog_mode))
    save_catalog(cat, dst)
    _echo_json(cat.counts())


@main.group("index")
def index_group():
    """Build and inspect vector indexes."""


@index_group.command("build")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option(
    "--docs",
    "docs_paths",
    multiple=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Knowledge doc JSONL files to index alongside the items.",
)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@_friendly
def index_build(cfg, root, docs_paths, out):
    """Embed all item texts plus knowledge docs and persist the index."""
    cat = _load(cfg, _require(root, cfg.catalog_root, "--root", "catalog_root"))
    provider = build_embedder(cfg.embedder)
    docs = [doc for path in docs_paths for doc in load_knowledge_jsonl(path)]
    index = build_corpus_index(cat, provider, docs)
    index.persist(out)
    click.echo(f"indexed {len(index)} docs into {out}")


@main.command("retrieve")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--item", "items", multiple=True, help="Query item id (repeatable).")
@click.option("--text", default=None, help="Free-text query.")
@click.option("--style", default=None)
@click.option("--occasion", default=None)
@click.option("-k", type=int, default=10, show_default=True)
@click.option("--llm", is_flag=True, help="Add chat-model question paths.")
@click.pass_obj
@_friendly
def retrieve_cmd(cfg, root, index_path, items, text, style, occasion, k, llm):
    """Run the multi-path retrieval pipeline and print the fused context."""
    cat = _load(cfg, _require(root, cfg.catalog_root, "--root", "catalog_root"))
    index = VectorIndex.load(_require(index_path, cfg.index_path, "--index", "index_path"))
    provider = build_embedder(cfg.embedder)
    backend = build_backend(cfg.backend, provider=provider) if llm else None
    ctx = QueryContext(
        query_item_ids=tuple(items),
        free_text=text,
        style=style,
        occasion=occasion,
        k_per_path=max(cfg.retrieval.k_per_path, k),
        k_final=k,
    )
    result = retrieve(
        ctx,
        cat,
        index,
        provider,
        llm=backend,
        n_questions=cfg.retrieval.n_questions,
        model=cfg.backend.model,
    )
    _echo_json(
        {
            "fused": [
                {
                    "doc_id": doc.doc_id,
                    "fused_score": doc.fused_score,
                    "paths": list(doc.paths),
                    "text": doc.text,
                }
                for doc in result.fused
            ],
            "per_path": {
                label: [{"doc_id": h.doc_id, "score": h.score} for h in hits]
                for label, hits in result.per_path_hits.items()
            },
            "warnings": list(result.warnings),
        }
    )


@main.group("eval")
def eval_group():
    """Offline accuracy evaluation."""


def _eval_backend(cfg: AppConfig, backend_kind, provider):
    bcfg = cfg.backend
    if backend_kind:
        bcfg = dataclasses.replace(bcfg, kind=backend_kind)
    return build_backend(bcfg, provider=provider), bcfg


def _eval_questions(cfg, root, split, seed, questions_path, official):
    cat = _load(cfg, root)
    if questions_path:
        return cat, load_fitb_jsonl(questions_path)
    official_entries = None
    if official:
        official_entries = load_official_fitb(root, cat)
        if not official_entries:
            raise click.ClickException(f"no official question file under {root}")
    return cat, gen_fitb_questions(cat, split, seed=seed, official=official_entries)


@eval_group.command("fitb")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", default="test", show_default=True)
@click.option("--backend", "backend_kind", type=click.Choice(BACKEND_KINDS), default=None)
@click.option(
    "--retrieval",
    "retrieval_mode",
    type=click.Choice(["on", "off"]),
    default="off",
    show_default=True,
)
@click.option("--index", "index_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--questions", "questions_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--official", is_flag=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--concurrency", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
@_friendly
def eval_fitb(
    cfg, root, split, backend_kind, retrieval_mode, index_path, questions_path,
    official, seed, concurrency, out,
):
    """Fill-in-the-blank accuracy over a question set."""
    root = _require(root, cfg.catalog_root, "--root", "catalog_root")
    provider = build_embedder(cfg.embedder)
    backend, bcfg = _eval_backend(cfg, backend_kind, provider)
    cat, questions = _eval_questions(cfg, root, split, seed, questions_path, official)
    index = None
    if retrieval_mode == "on":
        index = VectorIndex.load(_require(index_path, cfg.index_path, "--index", "index_path"))
    report = run_fitb_eval(
        questions,
        cat,
        backend,
        model=bcfg.model,
        index=index,
        provider=provider if index is not None else None,
        k_per_path=cfg.retrieval.k_per_path,
        k_final=cfg.retrieval.k_final,
        dataset=cfg.catalog_mode,
        concurrency=concurrency,
        seed=seed,
    )
    if out:
        export_report(report, out, format="csv" if out.endswith(".csv") else "json")
    click.echo(
        f"accuracy {report.accuracy:.4f} on {report.n_questions} questions "
        f"({report.n_parse_failed} parse failures, "
        f"{'complete' if report.complete else 'INCOMPLETE'})"
    )


@eval_group.command("ratios")
@click.option("--root", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", default="test", show_default=True)
@click.option("--grid", default=",".join(str(r) for r in DEFAULT_RATIO_GRID), show_default=True)
@click.option(
    "--records",
    "records_path",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
    help="Training records JSONL to subsample.",
)
@click.option("--backend", "backend_kind", type=click.Choice(BACKEND_KINDS), default=None)
@click.option("--questions", "questions_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hook", default=None, help="Trainer command; gets the subsample path appended.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Curve CSV path.")
@click.pass_obj
@_friendly
def eval_ratios(
    cfg, root, split, grid, records_path, backend_kind, questions_path, seed, hook, out
):
    """Accuracy at growing training-data fractions."""
    root = _require(root, cfg.catalog_root, "--root", "catalog_root")
    try:
        ratios = [float(x) for x in grid.split(",") if x.strip()]
    except ValueError:
        raise click.ClickException(f"bad --grid value {grid!r}")
    provider = build_embedder(cfg.embedder)
    backend, bcfg = _eval_backend(cfg, backend_kind, provider)
    cat, questions = _eval_questions(cfg, root, split, seed, questions_path, False)
    records = load_finetune_jsonl(records_path)
    points = run_ratio_series(
        ratios,
        records,
        questions,
        cat,
        backend,
        seed=seed,
        trainer_hook=shlex.split(hook) if hook else None,
        model=bcfg.model,
        dataset=cfg.catalog_mode,
    )
    if out:
        export_curve_csv(points, out)
    for p in points:
        status = "failed" if p.failed else f"{p.accuracy:.4f}"
        click.echo(f"ratio {p.ratio:g}: n_train {p.n_train_records}, accuracy {status}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_obj
def serve(cfg, host, port):
    """Start the HTTP recommendation service."""
    import uvicorn

    try:
        state = build_state(cfg)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc
    app = create_app(state)
    click.echo(f"serving {len(state.catalog.items)} items on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main(prog_name="stylist")
