"""Outfit catalog: Polyvore-style ingestion, validation, and split handling.

The on-disk layout is the published Polyvore convention: one JSON document
mapping item_id -> metadata, one JSON outfit list per split, and an optional
official fill-in-the-blank question file.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")

_RATIO_TOL = 1e-9
_MAX_DANGLING_REPORTED = 10


class CatalogError(ValueError):
    """Raised for missing files, malformed records, or broken references."""


@dataclass(frozen=True)
class Item:
    item_id: str
    title: str = ""
    description: str = ""
    semantic_category: str = ""
    fine_category_id: str | None = None
    image_ref: str | None = None


@dataclass(frozen=True)
class Outfit:
    outfit_id: str
    item_ids: tuple[str, ...]
    source_split: str | None = None


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint outfit_id sets per split. mode records the dataset variant."""

    train: frozenset[str]
    valid: frozenset[str]
    test: frozenset[str]
    mode: str = "joint"  # "joint" | "disjoint"

    def outfit_ids(self, split: str) -> frozenset[str]:
        if split not in SPLIT_NAMES:
            raise KeyError(f"unknown split {split!r}")
        return getattr(self, split)

    @property
    def assigned(self) -> frozenset[str]:
        return self.train | self.valid | self.test


@dataclass(frozen=True)
class OfficialFitb:
    """One entry of the official fill-in-the-blank file, resolved to item ids."""

    question_item_ids: tuple[str, ...]
    answer_item_ids: tuple[str, ...]
    blank_position: int


@dataclass(frozen=True)
class Catalog:
    items: dict[str, Item]
    outfits: tuple[Outfit, ...]
    splits: SplitAssignment

    def outfit(self, outfit_id: str) -> Outfit:
        for o in self.outfits:
            if o.outfit_id == outfit_id:
                return o
        raise KeyError(f"unknown outfit {outfit_id!r}")

    def outfit_map(self) -> dict[str, Outfit]:
        return {o.outfit_id: o for o in self.outfits}

    def split_outfits(self, split: str) -> tuple[Outfit, ...]:
        wanted = self.splits.outfit_ids(split)
        return tuple(o for o in self.outfits if o.outfit_id in wanted)

    def counts(self) -> dict[str, int]:
        out = {"items": len(self.items), "outfits": len(self.outfits)}
        for name in SPLIT_NAMES:
            out[f"outfits_{name}"] = len(self.splits.outfit_ids(name))
        return out


@dataclass(frozen=True)
class CatalogLayout:
    """Filenames of the ingestion layout, relative to the catalog root."""

    item_metadata: str = "polyvore_item_metadata.json"
    splits: dict[str, str] = field(
        default_factory=lambda: {
            "train": "train.json",
            "valid": "valid.json",
            "test": "test.json",
        }
    )
    fitb: str | None = "fill_in_blank_test.json"
    fitb_split: str = "test"
    variant: str = "joint"  # "joint" | "disjoint"


def _clean_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().rstrip(" .")


def item_text(item: Item) -> str:
    """Canonical one-line text for an item, feeding embeddings and prompts.

    Non-empty fields are rendered as "<title>. <description>. category: <cat>."
    with whitespace collapsed; an item with no usable text yields "".
    """
    parts = []
    title = _clean_text(item.title)
    if title:
        parts.append(title)
    desc = _clean_text(item.description)
    if desc:
        parts.append(desc)
    cat = _clean_text(item.semantic_category)
    if cat:
        parts.append(f"category: {cat}")
    return " ".join(f"{p}." for p in parts)


def _load_json(path: Path):
    if not path.is_file():
        raise CatalogError(f"missing file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CatalogError(
            f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc


def _parse_items(raw, path: Path) -> dict[str, Item]:
    if not isinstance(raw, dict):
        raise CatalogError(f"{path}: item metadata must be a JSON object")
    if not raw:
        raise CatalogError(f"{path}: no items")
    items: dict[str, Item] = {}
    for item_id, meta in raw.items():
        if not item_id:
            raise CatalogError(f"{path}: empty item_id key")
        if not isinstance(meta, dict):
            raise CatalogError(f"{path}: item {item_id!r}: record must be an object")
        category = str(meta.get("semantic_category", "") or "")
        if not category.strip():
            raise CatalogError(f"{path}: item {item_id!r}: missing semantic_category")
        fine = meta.get("category_id")
        items[item_id] = Item(
            item_id=item_id,
            title=str(meta.get("title", "") or ""),
            description=str(meta.get("description", "") or ""),
            semantic_category=category,
            fine_category_id=str(fine) if fine is not None else None,
            image_ref=meta.get("image_ref"),
        )
    return items


def _parse_split_file(raw, path: Path, split: str, items: dict[str, Item]):
    """Yield (outfit, dropped_singletons, deduped_items) for one split file."""
    if not isinstance(raw, list):
        raise CatalogError(f"{path}: split file must be a JSON list")
    outfits: list[Outfit] = []
    n_singletons = 0
    n_deduped = 0
    dangling: list[tuple[str, str]] = []
    for pos, entry in enumerate(raw):
        if not isinstance(entry, dict) or "set_id" not in entry:
            raise CatalogError(f"{path}: entry {pos}: missing set_id")
        set_id = str(entry["set_id"])
        members = entry.get("items")
        if not isinstance(members, list):
            raise CatalogError(f"{path}: outfit {set_id!r}: items must be a list")
        refs: list[tuple[int, str]] = []
        for j, member in enumerate(members):
            if not isinstance(member, dict) or "item_id" not in member:
                raise CatalogError(f"{path}: outfit {set_id!r}: member {j}: missing item_id")
            index = member.get("index", j + 1)
            if not isinstance(index, int):
                raise CatalogError(f"{path}: outfit {set_id!r}: member {j}: index must be an integer")
            refs.append((index, str(member["item_id"])))
        refs.sort(key=lambda r: r[0])
        seen: list[str] = []
        for _, item_id in refs:
            if item_id in seen:
                n_deduped += 1
                continue
            seen.append(item_id)
            if item_id not in items:
                dangling.append((set_id, item_id))
        if len(seen) < 2:
            n_singletons += 1
            continue
        outfits.append(Outfit(outfit_id=set_id, item_ids=tuple(seen), source_split=split))
    return outfits, n_singletons, n_deduped, dangling


def load_catalog(root_path: str | Path, layout: CatalogLayout | None = None) -> Catalog:
    """Load and validate a catalog directory.

    Singleton outfits and duplicate items within an outfit are dropped with a
    logged count; dangling item references and duplicate outfit ids are errors.
    """
    layout = layout or CatalogLayout()
    root = Path(root_path)
    items = _parse_items(_load_json(root / layout.item_metadata), root / layout.item_metadata)

    outfits: list[Outfit] = []
    split_ids: dict[str, set[str]] = {name: set() for name in SPLIT_NAMES}
    dangling: list[tuple[str, str]] = []
    n_singletons = 0
    n_deduped = 0
    for split, filename in layout.splits.items():
        if split not in SPLIT_NAMES:
            raise CatalogError(f"layout names unknown split {split!r}")
        path = root / filename
        parsed, singles, deduped, bad = _parse_split_file(_load_json(path), path, split, items)
        n_singletons += singles
        n_deduped += deduped
        dangling.extend(bad)
        outfits.extend(parsed)
        split_ids[split].update(o.outfit_id for o in parsed)

    if dangling:
        shown = ", ".join(f"{oid}->{iid}" for oid, iid in dangling[:_MAX_DANGLING_REPORTED])
        more = len(dangling) - _MAX_DANGLING_REPORTED
        suffix = f" (+{more} more)" if more > 0 else ""
        raise CatalogError(f"dangling item references: {shown}{suffix}")

    ids = [o.outfit_id for o in outfits]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CatalogError(f"duplicate outfit ids across splits: {dupes[:_MAX_DANGLING_REPORTED]}")

    outfits.sort(key=lambda o: o.outfit_id)
    catalog = Catalog(
        items=items,
        outfits=tuple(outfits),
        splits=SplitAssignment(
            train=frozenset(split_ids["train"]),
            valid=frozenset(split_ids["valid"]),
            test=frozenset(split_ids["test"]),
            mode=layout.variant,
        ),
    )
    if n_singletons or n_deduped:
        log.warning(
            "ingest dropped %d singleton outfits, %d duplicate item refs", n_singletons, n_deduped
        )
    log.info("loaded catalog: %s", catalog.counts())
    return catalog


def save_catalog(catalog: Catalog, root_path: str | Path, layout: CatalogLayout | None = None) -> None:
    """Serialize a catalog back to the native on-disk layout."""
    layout = layout or CatalogLayout()
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)

    meta = {}
    for item_id in sorted(catalog.items):
        item = catalog.items[item_id]
        record = {
            "title": item.title,
            "description": item.description,
            "semantic_category": item.semantic_category,
        }
        if item.fine_category_id is not None:
            record["category_id"] = item.fine_category_id
        if item.image_ref is not None:
            record["image_ref"] = item.image_ref
        meta[item_id] = record
    (root / layout.item_metadata).write_text(
        json.dumps(meta, ensure_ascii=False, indent=1), encoding="utf-8"
    )

    by_id = catalog.outfit_map()
    for split, filename in layout.splits.items():
        entries = []
        for outfit_id in sorted(catalog.splits.outfit_ids(split)):
            outfit = by_id[outfit_id]
            entries.append(
                {
                    "set_id": outfit.outfit_id,
                    "items": [
                        {"item_id": iid, "index": i + 1} for i, iid in enumerate(outfit.item_ids)
                    ],
                }
            )
        (root / filename).write_text(
            json.dumps(entries, ensure_ascii=False, indent=1), encoding="utf-8"
        )


def _resolve_fitb_ref(ref, outfit_map: dict[str, Outfit], items: dict[str, Item], path: Path) -> str:
    """Resolve an official-file item ref: either a plain item_id or "setid_index"."""
    ref = str(ref)
    if ref in items:
        return ref
    set_id, sep, index = ref.rpartition("_")
    if sep and set_id in outfit_map and index.isdigit():
        position = int(index) - 1
        members = outfit_map[set_id].item_ids
        if 0 <= position < len(members):
            return members[position]
    raise CatalogError(f"{path}: unresolvable item ref {ref!r}")


def load_official_fitb(
    root_path: str | Path, catalog: Catalog, layout: CatalogLayout | None = None
) -> list[OfficialFitb]:
    """Load the optional official FITB file; empty list when absent."""
    layout = layout or CatalogLayout()
    if layout.fitb is None:
        return []
    path = Path(root_path) / layout.fitb
    if not path.is_file():
        return []
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise CatalogError(f"{path}: FITB file must be a JSON list")
    outfit_map = catalog.outfit_map()
    entries: list[OfficialFitb] = []
    for pos, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise CatalogError(f"{path}: entry {pos}: must be an object")
        try:
            question = entry["question"]
            answers = entry["answers"]
            blank = entry["blank_position"]
        except KeyError as exc:
            raise CatalogError(f"{path}: entry {pos}: missing field {exc.args[0]!r}") from exc
        if not isinstance(blank, int):
            raise CatalogError(f"{path}: entry {pos}: blank_position must be an integer")
        entries.append(
            OfficialFitb(
                question_item_ids=tuple(
                    _resolve_fitb_ref(r, outfit_map, catalog.items, path) for r in question
                ),
                answer_item_ids=tuple(
                    _resolve_fitb_ref(r, outfit_map, catalog.items, path) for r in answers
                ),
                blank_position=blank,
            )
        )
    return entries


def _validate_ratios(ratios: tuple[float, float, float]) -> None:
    if len(ratios) != 3:
        raise ValueError("ratios must be (train, valid, test)")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > _RATIO_TOL:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)!r}")


def build_disjoint_splits(
    catalog: Catalog, ratios: tuple[float, float, float], seed: int
) -> SplitAssignment:
    """Greedy item-disjoint split assignment.

    Outfits are visited in seeded-shuffled order; each joins the first split
    (most ratio-starved first) whose accumulated item set it does not collide
    with through another split, else it is dropped.
    """
    _validate_ratios(ratios)
    if not catalog.outfits:
        raise ValueError("catalog has no outfits")

    order = sorted(o.outfit_id for o in catalog.outfits)
    random.Random(seed).shuffle(order)
    by_id = catalog.outfit_map()

    assigned: dict[str, set[str]] = {name: set() for name in SPLIT_NAMES}
    pool: dict[str, set[str]] = {name: set() for name in SPLIT_NAMES}
    targets = dict(zip(SPLIT_NAMES, ratios))
    n_dropped = 0

    for outfit_id in order:
        outfit_items = set(by_id[outfit_id].item_ids)
        total = sum(len(v) for v in assigned.values())

        def deficit(name: str) -> float:
            share = len(assigned[name]) / total if total else 0.0
            return targets[name] - share

        candidates = sorted(SPLIT_NAMES, key=lambda n: (-deficit(n), SPLIT_NAMES.index(n)))
        for name in candidates:
            others = set()
            for other in SPLIT_NAMES:
                if other != name:
                    others |= pool[other]
            if outfit_items.isdisjoint(others):
                assigned[name].add(outfit_id)
                pool[name] |= outfit_items
                break
        else:
            n_dropped += 1

    if n_dropped:
        log.info("disjoint split dropped %d of %d outfits", n_dropped, len(order))
    return SplitAssignment(
        train=frozenset(assigned["train"]),
        valid=frozenset(assigned["valid"]),
        test=frozenset(assigned["test"]),
        mode="disjoint",
    )


@dataclass(frozen=True)
class DisjointnessReport:
    """Item ids appearing in more than one split; empty iff item-disjoint."""

    violations: tuple[str, ...]
    mode: str
    informational: bool = False

    @property
    def is_disjoint(self) -> bool:
        return not self.violations


def verify_disjoint(catalog: Catalog, splits: SplitAssignment) -> DisjointnessReport:
    """Report every item_id used by outfits of two or more splits."""
    by_id = catalog.outfit_map()
    item_splits: dict[str, set[str]] = {}
    for name in SPLIT_NAMES:
        for outfit_id in splits.outfit_ids(name):
            if outfit_id not in by_id:
                raise CatalogError(f"split {name!r} references unknown outfit {outfit_id!r}")
            for item_id in by_id[outfit_id].item_ids:
                item_splits.setdefault(item_id, set()).add(name)
    violations = tuple(sorted(i for i, names in item_splits.items() if len(names) >= 2))
    return DisjointnessReport(
        violations=violations, mode=splits.mode, informational=splits.mode == "joint"
    )
