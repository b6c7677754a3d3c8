"""Tests for the HTTP service endpoints and state builder."""

import dataclasses

import pytest
from fastapi.testclient import TestClient

from conftest import aligned_fitb_fixture, assemble_catalog, write_polyvore_fixture, item_meta
from stylist.catalog import item_text, save_catalog
from stylist.chat import ScriptedChatBackend, SimilarityOracleBackend
from stylist.config import AppConfig, ConfigError, EmbedderConfig, RetrievalConfig, ServiceConfig
from stylist.embedding import HashEmbedder, cosine
from stylist.qagen import KnowledgeDoc
from stylist.retrieval import build_corpus_index
from stylist.service import ServiceState, build_state, create_app, rank_recommendations
from stylist.vectorstore import VectorIndex


WARDROBE = [
    ("o1", "test", [
        ("scarf", "accessories", "crimson silk scarf with tassels"),
        ("gown", "dresses", "crimson silk evening gown"),
    ]),
    ("o2", "test", [
        ("boots", "shoes", "tan leather ankle boots"),
        ("belt", "accessories", "tan leather belt"),
    ]),
    ("o3", "test", [
        ("parka", "outerwear", "olive canvas field parka"),
        ("cap", "accessories", "olive canvas baseball cap"),
    ]),
]

DOCS = [
    KnowledgeDoc("doc-silk", "Silk pieces pair well with other silk accents.", {}),
    KnowledgeDoc("doc-qa", "Q: What suits crimson silk? A: More crimson silk.", {}),
]


def make_state(backend=None, docs=DOCS, config=None, provider=None):
    catalog = assemble_catalog(WARDROBE, mode="disjoint")
    provider = provider or HashEmbedder(dims=128, seed=0)
    index = build_corpus_index(catalog, provider, docs)
    return ServiceState(
        catalog=catalog,
        index=index,
        provider=provider,
        backend=backend or ScriptedChatBackend(["Pair these for texture contrast."] * 50),
        config=config or AppConfig(),
    )


def client_for(state):
    return TestClient(create_app(state), raise_server_exceptions=False)


class TestRecommend:
    def test_known_item_with_style(self):
        state = make_state()
        response = client_for(state).post(
            "/api/recommend",
            json={"query_item_id": "scarf", "style": "formal", "k": 3},
        )
        assert response.status_code == 200
        body = response.json()
        assert 0 < len(body["recommendations"]) <= 3
        scores = [r["score"] for r in body["recommendations"]]
        assert scores == sorted(scores, reverse=True)
        for rec in body["recommendations"]:
            assert set(rec) == {"item_id", "title", "score", "rationale"}
            assert rec["rationale"] == "Pair these for texture contrast."
        assert body["fallback"] is False
        assert body["model"] == "default"
        assert body["latency_ms"] >= 0

    def test_query_item_never_recommended_back(self):
        state = make_state()
        body = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 10}
        ).json()
        assert "scarf" not in [r["item_id"] for r in body["recommendations"]]

    def test_unknown_item_is_404_naming_the_id(self):
        response = client_for(make_state()).post(
            "/api/recommend", json={"query_item_id": "ghost-item"}
        )
        assert response.status_code == 404
        assert "ghost-item" in response.json()["detail"]

    def test_missing_query_and_text_is_400(self):
        response = client_for(make_state()).post("/api/recommend", json={"k": 3})
        assert response.status_code == 400
        assert "query_item_id" in response.json()["detail"]

    def test_bad_k_is_400(self):
        client = client_for(make_state())
        assert client.post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 0}
        ).status_code == 400
        assert client.post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 51}
        ).status_code == 400
        response = client.post(
            "/api/recommend", json={"query_item_id": "scarf", "k": "soup"}
        )
        assert response.status_code == 400
        assert "k" in response.json()["detail"]

    def test_free_text_query_works(self):
        body = client_for(make_state()).post(
            "/api/recommend", json={"free_text": "tan leather something", "k": 2}
        ).json()
        assert len(body["recommendations"]) >= 1

    def test_nearest_item_under_mock_embedder_ranks_first(self):
        state = make_state()
        provider = state.provider
        query_vec = provider.embed(item_text(state.catalog.items["scarf"]))
        expected = max(
            (iid for iid in state.catalog.items if iid != "scarf"),
            key=lambda iid: cosine(
                query_vec, provider.embed(item_text(state.catalog.items[iid]))
            ),
        )
        # construction check: the shared-token sibling wins by cosine
        assert expected == "gown"
        body = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 3}
        ).json()
        assert body["recommendations"][0]["item_id"] == expected

    def test_provenance_lists_fused_doc_ids_per_path(self):
        body = client_for(make_state()).post(
            "/api/recommend",
            json={"query_item_id": "scarf", "style": "formal", "k": 2},
        ).json()
        assert "direct" in body["provenance"]
        assert "style_occasion" in body["provenance"]
        assert body["provenance"]["direct"]
        fused_ids = set()
        for ids in body["provenance"].values():
            fused_ids.update(ids)
        assert "gown" in fused_ids

    def test_backend_failure_falls_back_when_enabled(self):
        state = make_state(backend=ScriptedChatBackend([]))
        response = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 2}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["fallback"] is True
        assert body["recommendations"]
        assert all(r["rationale"] == "" for r in body["recommendations"])

    def test_backend_failure_is_502_when_fallback_disabled(self):
        config = AppConfig(service=ServiceConfig(fallback=False))
        state = make_state(backend=ScriptedChatBackend([]), config=config)
        response = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 2}
        )
        assert response.status_code == 502
        assert "backend" in response.json()["detail"]

    def test_total_retrieval_failure_is_502(self):
        state = make_state()
        state = dataclasses.replace(state, provider=HashEmbedder(dims=32, seed=0))
        response = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 2}
        )
        assert response.status_code == 502
        assert "retrieval" in response.json()["detail"]

    def test_response_matches_direct_library_composition(self):
        reply = "Layer the crimson pieces."
        state = make_state(backend=ScriptedChatBackend([reply]))
        body = client_for(state).post(
            "/api/recommend", json={"query_item_id": "scarf", "k": 2}
        ).json()

        from stylist.retrieval import QueryContext, retrieve

        rcfg = state.config.retrieval
        k_per_path = max(rcfg.k_per_path, 2 + 1)
        retrieved = retrieve(
            QueryContext(
                query_item_ids=("scarf",),
                k_per_path=k_per_path,
                k_final=max(rcfg.k_final, 3 * k_per_path),
            ),
            state.catalog,
            state.index,
            state.provider,
        )
        ranked = rank_recommendations(state, retrieved.fused, "scarf", 2)
        assert [r["item_id"] for r in body["recommendations"]] == [
            item.item_id for item, _ in ranked
        ]
        assert [r["score"] for r in body["recommendations"]] == pytest.approx(
            [score for _, score in ranked]
        )
        assert body["recommendations"][0]["rationale"] == reply
        assert set(body["provenance"]) == set(retrieved.per_path_hits)


class TestItems:
    def test_first_page_count_and_total(self):
        config = AppConfig(service=ServiceConfig(page_size=4))
        client = client_for(make_state(config=config))
        body = client.get("/api/items").json()
        assert body["page"] == 1
        assert body["page_size"] == 4
        assert body["total"] == 6
        assert len(body["items"]) == 4
        ids = [item["item_id"] for item in body["items"]]
        assert ids == sorted(ids)

    def test_second_page_holds_the_rest(self):
        config = AppConfig(service=ServiceConfig(page_size=4))
        client = client_for(make_state(config=config))
        first = client.get("/api/items", params={"page": 1}).json()
        second = client.get("/api/items", params={"page": 2}).json()
        assert len(second["items"]) == 2
        all_ids = [i["item_id"] for i in first["items"] + second["items"]]
        assert sorted(all_ids) == sorted(["scarf", "gown", "boots", "belt", "parka", "cap"])

    def test_query_filters_title_text(self):
        client = client_for(make_state())
        body = client.get("/api/items", params={"query": "leather"}).json()
        assert {i["item_id"] for i in body["items"]} == {"boots", "belt"}
        assert body["total"] == 2

    def test_category_filter(self):
        body = client_for(make_state()).get(
            "/api/items", params={"category": "accessories"}
        ).json()
        assert {i["item_id"] for i in body["items"]} == {"scarf", "belt", "cap"}

    def test_unknown_category_is_empty_not_error(self):
        body = client_for(make_state()).get(
            "/api/items", params={"category": "swimwear"}
        ).json()
        assert body["items"] == []
        assert body["total"] == 0

    def test_bad_page_is_400(self):
        assert client_for(make_state()).get(
            "/api/items", params={"page": 0}
        ).status_code == 400

    def test_single_item_payload(self):
        response = client_for(make_state()).get("/api/items/gown")
        assert response.status_code == 200
        assert response.json() == {
            "item_id": "gown",
            "title": "crimson silk evening gown",
            "description": "",
            "semantic_category": "dresses",
            "image_ref": None,
        }

    def test_unknown_item_404(self):
        response = client_for(make_state()).get("/api/items/ghost")
        assert response.status_code == 404
        assert "ghost" in response.json()["detail"]


class TestHealth:
    def test_health_reports_index_size_and_backend_kind(self):
        state = make_state()
        body = client_for(state).get("/api/health").json()
        assert body == {
            "status": "ok",
            "index_size": len(state.index),
            "backend": "scripted",
        }

    def test_health_on_empty_index(self):
        state = make_state()
        state = dataclasses.replace(
            state, index=VectorIndex(dims=state.provider.dims)
        )
        body = client_for(state).get("/api/health").json()
        assert body["index_size"] == 0
        assert body["status"] == "ok"

    def test_health_never_touches_the_backend(self):
        class ExplodingBackend:
            def describe(self):
                return "exploding:backend"

            def chat(self, request):
                raise AssertionError("health must not call the backend")

        state = make_state(backend=ExplodingBackend())
        response = client_for(state).get("/api/health")
        assert response.status_code == 200


class TestReadOnly:
    def test_only_read_routes_exist(self):
        app = create_app(make_state())
        methods = set()
        for route in app.routes:
            if getattr(route, "path", "").startswith("/api"):
                methods.update(route.methods)
        assert methods <= {"GET", "POST", "HEAD"}

    def test_requests_leave_catalog_and_index_unchanged(self):
        state = make_state()
        n_docs = len(state.index)
        n_items = len(state.catalog.items)
        doc_before = state.index.get("doc-silk")
        client = client_for(state)
        client.post("/api/recommend", json={"query_item_id": "scarf", "k": 3})
        client.get("/api/items")
        client.get("/api/health")
        assert len(state.index) == n_docs
        assert len(state.catalog.items) == n_items
        assert state.index.get("doc-silk") == doc_before


class TestBuildState:
    def write_deployment(self, tmp_path, dims=64):
        catalog, _questions, provider = aligned_fitb_fixture(n_outfits=4, dims=dims)
        root = tmp_path / "catalog"
        save_catalog(catalog, root)
        index = build_corpus_index(catalog, provider, DOCS)
        index_path = tmp_path / "index.stvx"
        index.persist(index_path)
        return root, index_path

    def test_builds_from_disk(self, tmp_path):
        root, index_path = self.write_deployment(tmp_path)
        config = AppConfig(
            catalog_root=str(root),
            index_path=str(index_path),
            catalog_mode="disjoint",
        )
        state = build_state(config)
        assert len(state.catalog.items) == 16
        assert len(state.index) == 16 + len(DOCS)
        assert state.backend_kind == "random"
        client = client_for(state)
        assert client.get("/api/health").json()["index_size"] == 18

    def test_missing_catalog_root_named(self):
        with pytest.raises(ConfigError, match="catalog_root"):
            build_state(AppConfig(index_path="/tmp/x.stvx"))

    def test_missing_index_path_named(self, tmp_path):
        with pytest.raises(ConfigError, match="index_path"):
            build_state(AppConfig(catalog_root=str(tmp_path)))

    def test_unreadable_index_named(self, tmp_path):
        root, _ = self.write_deployment(tmp_path)
        config = AppConfig(
            catalog_root=str(root),
            index_path=str(tmp_path / "missing.stvx"),
            catalog_mode="disjoint",
        )
        with pytest.raises(ConfigError, match="index_path"):
            build_state(config)

    def test_embedder_fingerprint_mismatch_fatal(self, tmp_path):
        root, index_path = self.write_deployment(tmp_path, dims=64)
        config = AppConfig(
            catalog_root=str(root),
            index_path=str(index_path),
            catalog_mode="disjoint",
            embedder=EmbedderConfig(dims=64, seed=99),
        )
        with pytest.raises(ConfigError, match="embedded by"):
            build_state(config)

    def test_question_llm_wired_when_enabled(self, tmp_path):
        root, index_path = self.write_deployment(tmp_path)
        config = AppConfig(
            catalog_root=str(root),
            index_path=str(index_path),
            catalog_mode="disjoint",
            retrieval=RetrievalConfig(llm_questions=True),
        )
        state = build_state(config)
        assert state.question_llm is state.backend
