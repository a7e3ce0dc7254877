from __future__ import annotations

import pytest

from hypogen.errors import SourceUnavailable
from hypogen.literature import (
    EmptySource,
    FixtureCorpus,
    LiteratureSourceKind,
    search_literature,
)


class TestFixtureCorpus:
    def test_search_deterministic_order(self, corpus):
        first = corpus.search("nuclear pore ALS")
        second = corpus.search("nuclear pore ALS")
        assert [h.doc_id for h in first] == [h.doc_id for h in second]
        assert first[0].doc_id == "doc-npc-phospho"
        assert all(h.source == LiteratureSourceKind.FIXTURE for h in first)

    def test_doc_ids_unique_within_result(self, corpus):
        hits = corpus.search("stress neurons")
        ids = [h.doc_id for h in hits]
        assert len(ids) == len(set(ids))

    def test_empty_query_rejected(self, corpus):
        with pytest.raises(ValueError):
            corpus.search("  ")

    def test_fetch_unknown_doc(self, corpus):
        with pytest.raises(SourceUnavailable):
            corpus.fetch("doc-missing")

    def test_missing_index_is_unavailable(self, tmp_path):
        with pytest.raises(SourceUnavailable):
            FixtureCorpus(tmp_path)

    def test_irrelevant_query_returns_nothing(self, corpus):
        assert corpus.search("zzzqqqxxx") == []


class TestEmptySource:
    def test_empty_repository_returns_empty_list(self):
        source = EmptySource()
        assert source.search("anything") == []
        assert source.kind == LiteratureSourceKind.PRIVATE_REPOSITORY


class TestSearchLiterature:
    def test_no_source_configured(self):
        with pytest.raises(SourceUnavailable):
            search_literature(None, "query")

    def test_delegates(self, corpus):
        hits = search_literature(corpus, "phage gene transfer", limit=2)
        assert hits and hits[0].doc_id == "doc-gene-transfer"
        assert len(hits) <= 2
