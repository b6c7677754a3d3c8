from __future__ import annotations

import json
from pathlib import Path

import pytest

from stylist.catalog import Catalog, Item, Outfit, SplitAssignment


def write_polyvore_fixture(root: Path, items: dict, splits: dict, fitb: list | None = None) -> Path:
    """Write a Polyvore-layout catalog directory.

    items: item_id -> metadata dict (semantic_category required).
    splits: split name -> list of (set_id, [item_id, ...]).
    """
    root.mkdir(parents=True, exist_ok=True)
    (root / "polyvore_item_metadata.json").write_text(json.dumps(items), encoding="utf-8")
    for split in ("train", "valid", "test"):
        entries = [
            {
                "set_id": set_id,
                "items": [{"item_id": iid, "index": i + 1} for i, iid in enumerate(item_ids)],
            }
            for set_id, item_ids in splits.get(split, [])
        ]
        (root / f"{split}.json").write_text(json.dumps(entries), encoding="utf-8")
    if fitb is not None:
        (root / "fill_in_blank_test.json").write_text(json.dumps(fitb), encoding="utf-8")
    return root


def item_meta(category: str, title: str = "", description: str = "") -> dict:
    return {"title": title, "description": description, "semantic_category": category}


def assemble_catalog(outfit_specs, mode: str = "joint") -> Catalog:
    """Build an in-memory catalog.

    outfit_specs: list of (outfit_id, split, [(item_id, category, title), ...]).
    Titles default to "<category> <item_id>".
    """
    items: dict[str, Item] = {}
    outfits: list[Outfit] = []
    split_ids: dict[str, set[str]] = {"train": set(), "valid": set(), "test": set()}
    for outfit_id, split, members in outfit_specs:
        item_ids = []
        for member in members:
            if len(member) == 3:
                item_id, category, title = member
            else:
                item_id, category = member
                title = f"{category} {item_id}"
            if item_id not in items:
                items[item_id] = Item(
                    item_id=item_id, title=title, semantic_category=category
                )
            item_ids.append(item_id)
        outfits.append(Outfit(outfit_id=outfit_id, item_ids=tuple(item_ids), source_split=split))
        split_ids[split].add(outfit_id)
    outfits.sort(key=lambda o: o.outfit_id)
    return Catalog(
        items=items,
        outfits=tuple(outfits),
        splits=SplitAssignment(
            train=frozenset(split_ids["train"]),
            valid=frozenset(split_ids["valid"]),
            test=frozenset(split_ids["test"]),
            mode=mode,
        ),
    )


def grid_catalog(
    n_outfits: int,
    items_per_outfit: int = 4,
    split: str = "train",
    mode: str = "disjoint",
) -> Catalog:
    """Item-disjoint catalog of n_outfits, one category per item slot.

    Outfit i holds items o{i}_p{j} of category cat{j}, so same-category
    distractor pools are the other outfits' slot-j items.
    """
    specs = []
    for i in range(n_outfits):
        members = [(f"o{i}_p{j}", f"cat{j}") for j in range(items_per_outfit)]
        specs.append((f"outfit{i:05d}", split, members))
    return assemble_catalog(specs, mode=mode)


def aligned_fitb_fixture(n_outfits: int = 20, dims: int = 512, seed: int = 0):
    """Catalog whose generated FITB questions a similarity oracle must ace.

    Each outfit's items share three tokens unique to that outfit, so the
    true candidate lies strictly nearest the context centroid. That claim
    is verified here by an independent centroid computation over every
    question before anything is returned.
    """
    import numpy as np

    from stylist.catalog import item_text
    from stylist.embedding import HashEmbedder
    from stylist.qagen import gen_fitb_questions

    specs = []
    for i in range(n_outfits):
        members = [
            (f"o{i}_p{j}", f"cat{j}", f"style{i} fabric{i} motif{i} garment{j}")
            for j in range(4)
        ]
        specs.append((f"outfit{i:05d}", "test", members))
    catalog = assemble_catalog(specs, mode="disjoint")
    questions = gen_fitb_questions(catalog, "test", seed=seed)
    assert len(questions) == n_outfits
    provider = HashEmbedder(dims=dims, seed=seed)

    def vec(item_id):
        return provider.embed(item_text(catalog.items[item_id])).as_array()

    for q in questions:
        centroid = np.mean([vec(i) for i in q.context_item_ids], axis=0)
        scores = [float(np.dot(centroid, vec(c))) for c in q.candidate_item_ids]
        top = max(scores)
        assert scores[q.answer_index] == top
        others = [s for i, s in enumerate(scores) if i != q.answer_index]
        assert top > max(others) + 1e-9, f"{q.qid}: construction not separable"
    return catalog, questions, provider


@pytest.fixture(autouse=True, scope="session")
def no_network():
    """The whole suite must run offline; any socket connect is a failure."""
    import socket

    real_connect = socket.socket.connect

    def guarded(self, address):
        raise AssertionError(f"test attempted network access: {address!r}")

    socket.socket.connect = guarded
    try:
        yield
    finally:
        socket.socket.connect = real_connect


@pytest.fixture
def tiny_catalog() -> Catalog:
    return assemble_catalog(
        [
            ("o1", "train", [("i1", "tops"), ("i2", "bottoms"), ("i3", "shoes")]),
            ("o2", "train", [("i4", "tops"), ("i5", "bottoms")]),
            ("o3", "train", [("i6", "tops"), ("i7", "bottoms"), ("i8", "shoes")]),
            ("o4", "test", [("i9", "tops"), ("i10", "bottoms")]),
            ("o5", "test", [("i11", "tops"), ("i12", "bottoms"), ("i13", "shoes")]),
        ],
        mode="disjoint",
    )
