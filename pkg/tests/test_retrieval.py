import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from leanopt.retrieval import (
    CsvError, DocRecord, EmptyTextError, LexicalEmbedder, ProviderUnreachableError, RemoteEmbedder, VectorIndex,
    cosine, csv_qa, embed, extract_keywords, file_qa, keyword_matches, parse_csv, select_rows, top_k,
    within_one_edit,
)

PRODUCTS = parse_csv("Product Name,Price\nNike Air Zoom Pegasus 40,120\nNike Dunk Low,110\nAdidas Samba,100\n",
                     "products.csv")


class TestEmbedding:
    def test_unit_norm(self):
        v = LexicalEmbedder().embed("allocate trucks across four periods")
        assert np.isclose(sp.linalg.norm(v), 1.0)

    def test_empty_text_rejected(self):
        with pytest.raises(EmptyTextError):
            LexicalEmbedder().embed("  ,;  ")

    @settings(max_examples=50, deadline=None)
    @given(st.text(alphabet="abcdefg xyz", min_size=1).filter(lambda s: s.strip()))
    def test_self_similarity_is_one(self, text):
        v = embed(text)
        assert cosine(v, v) == pytest.approx(1.0)

    def test_remote_embedder_failure_is_typed(self, monkeypatch):
        import httpx

        def boom(*a, **k):
            raise httpx.ConnectError("refused")

        monkeypatch.setattr(httpx, "post", boom)
        with pytest.raises(ProviderUnreachableError):
            RemoteEmbedder("http://127.0.0.1:9", "m", 8).embed("hello")

    def test_remote_embedder_checks_dimension(self, monkeypatch):
        import httpx

        req = httpx.Request("POST", "http://x")
        monkeypatch.setattr(httpx, "post", lambda *a, **k: httpx.Response(
            200, json={"data": [{"embedding": [1.0, 0.0]}]}, request=req))
        with pytest.raises(ProviderUnreachableError):
            RemoteEmbedder("http://x", "m", 3).embed("hello")
        assert RemoteEmbedder("http://x", "m", 2).embed("hello").shape == (1, 2)


class TestIndex:
    def docs(self):
        return [DocRecord("a", "transport goods from plants to stores"),
                DocRecord("b", "assign workers to jobs at minimum cost"),
                DocRecord("c", "choose warehouse locations to open")]

    def test_top_k_orders_by_similarity(self):
        idx = VectorIndex.build(self.docs())
        hits = top_k(idx, "assign each worker to one job", 2)
        assert hits[0][0].id == "b"
        assert hits[0][1] >= hits[1][1]

    def test_ties_break_by_id(self):
        idx = VectorIndex.build([DocRecord("z", "same text"), DocRecord("m", "same text")])
        assert [r.id for r, _ in top_k(idx, "same text", 2)] == ["m", "z"]

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            VectorIndex.build([DocRecord("a", "x"), DocRecord("a", "y")])

    def test_file_qa_on_reference_store(self, pipeline):
        hits = file_qa(pipeline.index, "open distribution centers to serve customer regions", 3)
        assert len(hits) == 3
        assert all(isinstance(q, str) and t for q, t in hits)


class TestCsvQA:
    def test_keywords_from_request(self):
        assert extract_keywords("Retrieve all products related to Nike Dunk Low and Adidas Samba.") == [
            "nike dunk low", "adidas samba"]

    def test_typo_tolerance(self):
        assert within_one_edit("pegasus", "pegasos")
        assert within_one_edit("samba", "smaba")
        assert not within_one_edit("samba", "mambo")
        assert keyword_matches("pegasos", "Nike Air Zoom Pegasus 40")

    def test_select_rows_and_fallback(self):
        assert select_rows(PRODUCTS, ["adidas samba"]) == [("Adidas Samba", "100")]
        assert len(select_rows(PRODUCTS, ["puma"])) == 3

    def test_csv_qa_rendering(self):
        out = csv_qa([PRODUCTS], "rows related to Dunk Low")
        assert "DataFrame 1 - products.csv" in out
        assert "1. Product Name: Nike Dunk Low, Price: 110" in out

    def test_ragged_csv_rejected(self):
        with pytest.raises(CsvError):
            parse_csv("a,b\n1,2,3\n", "bad.csv")
