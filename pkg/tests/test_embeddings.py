import json
import threading

import httpx
import numpy as np
import pytest

from kgqa.embeddings import (
    CachedProvider,
    EmbeddingCache,
    GraphEmbeddingTable,
    OpenAIEmbeddingProvider,
    StubTextEmbedder,
    TextTables,
    TransEConfig,
    relation_surface,
    train_transe,
    transe_score,
)
from kgqa.kg_store import load_kb


def test_stub_deterministic_and_normalized():
    a = StubTextEmbedder(32, seed=1)
    b = StubTextEmbedder(32, seed=1)
    va, vb = a.embed(["who directed X", "who directed X"]), b.embed(["who directed X"])
    assert va.dtype == np.float32 and va.shape == (2, 32)
    assert np.array_equal(va[0], vb[0])
    assert np.linalg.norm(va[0]) == pytest.approx(1.0, abs=1e-6)
    assert not np.array_equal(a.embed(["x"]), StubTextEmbedder(32, seed=2).embed(["x"]))


def test_stub_shared_words_are_similar():
    e = StubTextEmbedder(256, 0)
    q, rel, other = e.embed(["which movies were directed by her", relation_surface("directed_by"), "release year"])
    assert q @ rel > q @ other


def test_relation_surface():
    assert relation_surface("starred_actors_reverse") == "starred actors reverse"


class CountingProvider:
    provider_id = "count-4"
    dim = 4

    def __init__(self):
        self.seen = []

    def embed(self, texts):
        self.seen.extend(texts)
        return np.stack([np.full(4, len(t), dtype=np.float32) for t in texts])


def test_cache_hits_inner_once(tmp_path):
    inner = CountingProvider()
    p = CachedProvider(inner, EmbeddingCache(tmp_path))
    first = p.embed(["a", "bb", "a"])
    second = CachedProvider(inner, EmbeddingCache(tmp_path)).embed(["bb", "a"])
    assert inner.seen == ["a", "bb"]
    assert np.array_equal(first[1], second[0])


def test_cache_concurrent_writers(tmp_path):
    cache = EmbeddingCache(tmp_path)
    vec = np.arange(8, dtype=np.float32)
    threads = [threading.Thread(target=cache.put, args=("p", "t", vec)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert np.array_equal(cache.get("p", "t"), vec)
    assert cache.get("p", "missing") is None


def test_openai_provider_batches_and_orders():
    batches = []

    def handler(req):
        body = json.loads(req.content)
        batches.append(body["input"])
        data = [{"index": i, "embedding": [float(len(t))] * 3} for i, t in reversed(list(enumerate(body["input"])))]
        return httpx.Response(200, json={"data": data})

    p = OpenAIEmbeddingProvider("m", base_url="http://emb.test/v1", dim=3, batch_size=2, transport=httpx.MockTransport(handler), sleep=lambda s: None)
    out = p.embed(["a", "bbb", "cc"])
    assert batches == [["a", "bbb"], ["cc"]]
    assert out[:, 0].tolist() == [1.0, 3.0, 2.0] and p.network_calls == 2


def test_text_tables_cover_graph(toy_graph):
    t = TextTables.build(toy_graph, StubTextEmbedder(16))
    assert t.entity.shape == (toy_graph.num_entities, 16)
    assert t.relation.shape == (toy_graph.num_relations, 16)


def test_transe_learns_true_triples_better(tmp_path):
    kb = "".join(f"m{i}|genre|g{i % 3}\nm{i}|director|d{i % 4}\n" for i in range(24)).encode()
    g = load_kb(kb)
    table = train_transe(g, TransEConfig(dim=16, epochs=150, seed=0))
    assert table.relation_vectors.shape == (g.num_relations, 16)
    assert table.loss_history[-1] < table.loss_history[0]
    norms = np.linalg.norm(table.entity_vectors, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-5)
    rng = np.random.default_rng(0)
    wins = 0
    triples = g.forward_triples()
    for h, r, t in triples:
        fake = int(rng.integers(g.num_entities))
        wins += transe_score(table, h, r, t) > transe_score(table, h, r, fake) or fake == t
    assert wins / len(triples) > 0.8
    table.save(tmp_path / "t.bin")
    back = GraphEmbeddingTable.load(tmp_path / "t.bin")
    assert np.array_equal(back.entity_vectors, table.entity_vectors)
    assert back.loss_history == pytest.approx(table.loss_history)


def test_transe_deterministic(toy_graph):
    a = train_transe(toy_graph, TransEConfig(dim=8, epochs=5, seed=3))
    b = train_transe(toy_graph, TransEConfig(dim=8, epochs=5, seed=3))
    assert np.array_equal(a.entity_vectors, b.entity_vectors)


def test_transe_score_is_negative_distance(toy_graph):
    t = GraphEmbeddingTable(np.eye(toy_graph.num_entities, 4, dtype=np.float32), np.zeros((toy_graph.num_relations, 4), dtype=np.float32))
    assert transe_score(t, 0, 0, 1) == pytest.approx(-np.sqrt(2))
    with pytest.raises(IndexError):
        transe_score(t, 999, 0, 1)
