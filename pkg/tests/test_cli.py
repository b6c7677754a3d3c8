"""End-to-end tests for the command line interface."""

import json

import pytest
from click.testing import CliRunner

from conftest import aligned_fitb_fixture, item_meta, write_polyvore_fixture
from stylist.catalog import load_catalog, save_catalog
from stylist.cli import main
from stylist.qagen import load_fitb_jsonl
from stylist.vectorstore import VectorIndex


@pytest.fixture
def runner():
    return CliRunner()


def make_catalog_dir(tmp_path, name="catalog"):
    """Six two-item outfits across train and test, fully item-disjoint."""
    colors = ["red", "blue", "green", "amber", "violet", "teal"]
    items = {}
    splits = {"train": [], "test": []}
    for i, color in enumerate(colors):
        top = f"{color}_top"
        bottom = f"{color}_bottom"
        items[top] = item_meta("tops", f"{color} knit sweater")
        items[bottom] = item_meta("bottoms", f"{color} twill trousers")
        split = "train" if i < 3 else "test"
        splits[split].append((f"set_{color}", [top, bottom]))
    return write_polyvore_fixture(tmp_path / name, items, splits)


def write_config(tmp_path, text):
    path = tmp_path / "stylist.yaml"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestCatalogCommands:
    def test_validate_reports_counts(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        result = runner.invoke(main, ["catalog", "validate", str(root)])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["items"] == 12
        assert payload["outfits"] == 6
        assert payload["disjoint"] is True

    def test_validate_disjoint_violation_exits_nonzero(self, runner, tmp_path):
        items = {
            "shared": item_meta("tops", "shared top"),
            "a": item_meta("bottoms", "a"),
            "b": item_meta("bottoms", "b"),
        }
        splits = {"train": [("o1", ["shared", "a"])], "test": [("o2", ["shared", "b"])]}
        root = write_polyvore_fixture(tmp_path / "bad", items, splits)
        result = runner.invoke(main, ["catalog", "validate", str(root), "--mode", "disjoint"])
        assert result.exit_code == 1
        assert json.loads(result.output)["disjoint"] is False

    def test_validate_missing_file_fails_cleanly(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(main, ["catalog", "validate", str(empty)])
        assert result.exit_code == 1
        assert "missing file" in result.output

    def test_split_emits_assignment(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        out = tmp_path / "splits.json"
        result = runner.invoke(
            main,
            ["catalog", "split", str(root), "--ratios", "0.5,0.25,0.25",
             "--seed", "3", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(out.read_text())
        assert payload["disjoint"] is True
        assigned = payload["train"] + payload["valid"] + payload["test"]
        assert len(assigned) + payload["n_dropped"] == 6

    def test_split_bad_ratios_fails(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        result = runner.invoke(main, ["catalog", "split", str(root), "--ratios", "0.5,0.5,0.5"])
        assert result.exit_code == 1
        assert "sum to 1" in result.output


class TestQagenCommands:
    def test_binary_writes_jsonl(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        out = tmp_path / "binary.jsonl"
        records_out = tmp_path / "records.jsonl"
        result = runner.invoke(
            main,
            ["qagen", "binary", "--root", str(root), "--split", "train",
             "--out", str(out), "--records-out", str(records_out)],
        )
        assert result.exit_code == 0, result.output
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 6
        assert {r["label"] for r in rows} == {"compatible", "incompatible"}
        assert len(records_out.read_text().splitlines()) == 6

    def test_fitb_writes_loadable_questions(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        out = tmp_path / "fitb.jsonl"
        result = runner.invoke(
            main,
            ["qagen", "fitb", "--root", str(root), "--split", "train", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        questions = load_fitb_jsonl(out)
        assert len(questions) == 3
        assert all(len(q.candidate_item_ids) == 4 for q in questions)

    def test_fitb_official_missing_file_fails(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        result = runner.invoke(
            main,
            ["qagen", "fitb", "--root", str(root), "--official",
             "--out", str(tmp_path / "x.jsonl")],
        )
        assert result.exit_code == 1
        assert "official" in result.output

    def test_auto_uses_configured_scripted_backend(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        replies = [f"Q: What mood {i}? A: Mood {i}." for i in range(12)]
        config = write_config(
            tmp_path,
            "backend:\n  kind: scripted\n  replies:\n"
            + "".join(f"    - '{r}'\n" for r in replies),
        )
        out = tmp_path / "auto.jsonl"
        docs_out = tmp_path / "docs.jsonl"
        result = runner.invoke(
            main,
            ["--config", config, "qagen", "auto", "--root", str(root),
             "--split", "train", "--out", str(out), "--docs-out", str(docs_out)],
        )
        assert result.exit_code == 0, result.output
        records = out.read_text().splitlines()
        docs = docs_out.read_text().splitlines()
        assert len(records) == 6
        assert len(docs) == 6
        assert "6 records" in result.output

    def test_missing_root_everywhere_fails_with_hint(self, runner, tmp_path):
        result = runner.invoke(
            main, ["qagen", "binary", "--out", str(tmp_path / "x.jsonl")]
        )
        assert result.exit_code == 1
        assert "catalog_root" in result.output


class TestIngest:
    def test_round_trips_catalog(self, runner, tmp_path):
        src = make_catalog_dir(tmp_path, "src")
        dst = tmp_path / "dst"
        result = runner.invoke(main, ["ingest", str(src), str(dst)])
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["outfits"] == 6
        copied = load_catalog(dst)
        original = load_catalog(src)
        assert copied.items == original.items
        assert copied.outfits == original.outfits


class TestIndexBuild:
    def test_builds_and_persists(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        docs_path = tmp_path / "docs.jsonl"
        docs_path.write_text(
            json.dumps({"doc_id": "d1", "text": "Layer warm colors.", "tags": {}})
            + "\n"
            + json.dumps({"doc_id": "d2", "text": "Q: Cold day? A: Wool.", "tags": {}})
            + "\n",
            encoding="utf-8",
        )
        out = tmp_path / "index.stvx"
        result = runner.invoke(
            main,
            ["index", "build", "--root", str(root), "--docs", str(docs_path),
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        index = VectorIndex.load(out)
        assert len(index) == 14
        assert index.get("red_top").kind == "item"
        assert index.get("d1").kind == "knowledge"
        assert index.get("d2").kind == "qa"
        assert "14 docs" in result.output


class TestRetrieveCommand:
    def test_emits_fused_json(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        out = tmp_path / "index.stvx"
        build = runner.invoke(main, ["index", "build", "--root", str(root), "--out", str(out)])
        assert build.exit_code == 0, build.output
        result = runner.invoke(
            main,
            ["retrieve", "--root", str(root), "--index", str(out),
             "--item", "red_top", "--style", "casual", "-k", "5"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["fused"]
        assert payload["fused"][0]["doc_id"] == "red_top"
        assert "direct" in payload["per_path"]
        assert "style_occasion" in payload["per_path"]
        scores = [d["fused_score"] for d in payload["fused"]]
        assert scores == sorted(scores, reverse=True)

    def test_unknown_query_item_fails_cleanly(self, runner, tmp_path):
        root = make_catalog_dir(tmp_path)
        out = tmp_path / "index.stvx"
        runner.invoke(main, ["index", "build", "--root", str(root), "--out", str(out)])
        result = runner.invoke(
            main,
            ["retrieve", "--root", str(root), "--index", str(out), "--item", "ghost"],
        )
        assert result.exit_code == 1
        assert "ghost" in result.output


class TestEvalCommands:
    def write_aligned(self, tmp_path):
        catalog, questions, provider = aligned_fitb_fixture(n_outfits=6)
        root = tmp_path / "aligned"
        save_catalog(catalog, root)
        config = write_config(tmp_path, "catalog_mode: disjoint\n")
        return root, config

    def test_oracle_backend_aces_aligned_catalog(self, runner, tmp_path):
        root, config = self.write_aligned(tmp_path)
        report_path = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["--config", config, "eval", "fitb", "--root", str(root),
             "--split", "test", "--backend", "oracle", "--out", str(report_path)],
        )
        assert result.exit_code == 0, result.output
        assert "accuracy 1.0000 on 6 questions" in result.output
        payload = json.loads(report_path.read_text())
        assert payload["accuracy"] == 1.0
        assert payload["complete"] is True

    def test_random_backend_runs_with_retrieval(self, runner, tmp_path):
        root, config = self.write_aligned(tmp_path)
        index_path = tmp_path / "index.stvx"
        build = runner.invoke(
            main,
            ["--config", config, "index", "build", "--root", str(root),
             "--out", str(index_path)],
        )
        assert build.exit_code == 0, build.output
        result = runner.invoke(
            main,
            ["--config", config, "eval", "fitb", "--root", str(root),
             "--split", "test", "--backend", "random", "--retrieval", "on",
             "--index", str(index_path)],
        )
        assert result.exit_code == 0, result.output
        assert "on 6 questions" in result.output

    def test_retrieval_on_requires_index(self, runner, tmp_path):
        root, config = self.write_aligned(tmp_path)
        result = runner.invoke(
            main,
            ["--config", config, "eval", "fitb", "--root", str(root),
             "--retrieval", "on"],
        )
        assert result.exit_code == 1
        assert "--index" in result.output

    def test_configured_paths_substitute_for_flags(self, runner, tmp_path):
        """catalog_root and index_path from the config file stand in for
        --root and --index on every command that takes them."""
        catalog, questions, provider = aligned_fitb_fixture(n_outfits=6)
        root = tmp_path / "aligned"
        save_catalog(catalog, root)
        index_path = tmp_path / "index.stvx"
        config = write_config(
            tmp_path,
            f"catalog_root: {root}\nindex_path: {index_path}\n"
            "catalog_mode: disjoint\n",
        )
        build = runner.invoke(main, ["--config", config, "index", "build",
                                     "--out", str(index_path)])
        assert build.exit_code == 0, build.output
        result = runner.invoke(
            main,
            ["--config", config, "eval", "fitb", "--split", "test",
             "--backend", "oracle"],
        )
        assert result.exit_code == 0, result.output
        assert "accuracy 1.0000 on 6 questions" in result.output
        item_id = sorted(catalog.items)[0]
        fetched = runner.invoke(
            main, ["--config", config, "retrieve", "--item", item_id, "-k", "3"]
        )
        assert fetched.exit_code == 0, fetched.output
        assert json.loads(fetched.output)["fused"][0]["doc_id"] == item_id

    def test_ratio_sweep_writes_curve(self, runner, tmp_path):
        root, config = self.write_aligned(tmp_path)
        records_path = tmp_path / "records.jsonl"
        record = {"messages": [{"role": "user", "content": "q"},
                               {"role": "assistant", "content": "a"}], "tags": {}}
        records_path.write_text(
            "".join(json.dumps(record) + "\n" for _ in range(8)), encoding="utf-8"
        )
        curve = tmp_path / "curve.csv"
        result = runner.invoke(
            main,
            ["--config", config, "eval", "ratios", "--root", str(root),
             "--split", "test", "--grid", "0.5,1.0", "--records", str(records_path),
             "--backend", "oracle", "--out", str(curve)],
        )
        assert result.exit_code == 0, result.output
        assert "ratio 0.5: n_train 4, accuracy 1.0000" in result.output
        assert "ratio 1: n_train 8, accuracy 1.0000" in result.output
        lines = curve.read_text().splitlines()
        assert lines[0] == "ratio,n_train,accuracy,seed"
        assert len(lines) == 3

    def test_bad_grid_fails(self, runner, tmp_path):
        root, config = self.write_aligned(tmp_path)
        records_path = tmp_path / "records.jsonl"
        records_path.write_text("", encoding="utf-8")
        result = runner.invoke(
            main,
            ["--config", config, "eval", "ratios", "--root", str(root),
             "--grid", "1.0,0.5", "--records", str(records_path)],
        )
        assert result.exit_code == 1
        assert "increasing" in result.output


class TestServe:
    def test_missing_paths_fail_with_field_names(self, runner):
        result = runner.invoke(main, ["serve"])
        assert result.exit_code == 1
        assert "catalog_root" in result.output

    def test_build_then_serve_round_trip(self, runner, tmp_path, monkeypatch):
        root = make_catalog_dir(tmp_path)
        index_path = tmp_path / "index.stvx"
        build = runner.invoke(main, ["index", "build", "--root", str(root), "--out", str(index_path)])
        assert build.exit_code == 0, build.output

        config = write_config(
            tmp_path,
            f"catalog_root: {root}\nindex_path: {index_path}\n",
        )
        captured = {}

        def fake_run(app, **kwargs):
            captured["app"] = app
            captured["kwargs"] = kwargs

        import uvicorn

        monkeypatch.setattr(uvicorn, "run", fake_run)
        result = runner.invoke(
            main, ["--config", config, "serve", "--port", "8123"]
        )
        assert result.exit_code == 0, result.output
        assert "8123" in result.output
        assert captured["kwargs"]["port"] == 8123

        from fastapi.testclient import TestClient

        client = TestClient(captured["app"])
        health = client.get("/api/health").json()
        assert health["index_size"] == 12
        assert health["backend"] == "random"
        page = client.get("/api/items").json()
        assert page["total"] == 12

    def test_env_override_reaches_config(self, runner, tmp_path):
        result = runner.invoke(
            main,
            ["catalog", "validate", str(make_catalog_dir(tmp_path))],
            env={"STYLIST_BACKEND__KIND": "bogus"},
        )
        assert result.exit_code == 1
        assert "backend.kind" in result.output
