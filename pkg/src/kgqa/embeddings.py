"""Text embeddings (stub or remote, with a file cache) and TransE graph embeddings."""
from __future__ import annotations

import hashlib
import logging
import os
import re
import struct
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np

from .container import read_container, write_container
from .kg_store import KnowledgeGraph
from .llm_client import EndpointError, TransportError, backoff_delays

log = logging.getLogger(__name__)

DEFAULT_TEXT_DIM = 1536
DEFAULT_GRAPH_DIM = 256

_TOKEN = re.compile(r"\w+")


class TextEmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def relation_surface(name: str) -> str:
    """Text rendered for a relation name: underscores become spaces."""
    return name.replace("_", " ")


class StubTextEmbedder:
    """Deterministic offline embedder.

    Each lowercased word token maps to a seeded Gaussian vector; a text is the
    unit-normalized sum over its token multiset, so texts sharing words have
    positive cosine similarity.
    """

    def __init__(self, dim: int = DEFAULT_TEXT_DIM, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.provider_id = f"stub-{dim}-{seed}"
        self._tokens: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._tokens.get(token)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}\x00{token}".encode(), digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            with self._lock:
                self._tokens[token] = vec
        return vec

    def embed_one(self, text: str) -> np.ndarray:
        tokens = _TOKEN.findall(text.lower()) or [f"\x00{text}"]
        acc = np.zeros(self.dim)
        for tok in tokens:
            acc += self._token_vector(tok)
        norm = np.linalg.norm(acc)
        if norm == 0.0:
            acc = self._token_vector(f"\x00{text}")
            norm = np.linalg.norm(acc)
        return (acc / norm).astype(np.float32)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.embed_one(t) for t in texts])


class OpenAIEmbeddingProvider:
    """``POST <base_url>/embeddings`` client (OpenAI wire format)."""

    def __init__(
        self,
        model: str = "text-embedding-3-small",
        base_url: str = "https://api.openai.com/v1",
        dim: int = DEFAULT_TEXT_DIM,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        batch_size: int = 256,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.model = model
        self.base_url = base_url.rstrip("/")
        self.dim = dim
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.batch_size = batch_size
        self.provider_id = f"openai:{model}:{dim}"
        self.network_calls = 0
        self._sleep = sleep
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def _post(self, batch: list[str]) -> np.ndarray:
        headers = {}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model, "input": batch}
        delays = backoff_delays(self.max_retries)
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self.network_calls += 1
            try:
                resp = self._http.post(f"{self.base_url}/embeddings", json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = exc
            else:
                if resp.is_success:
                    rows = sorted(resp.json()["data"], key=lambda d: d["index"])
                    out = np.asarray([r["embedding"] for r in rows], dtype=np.float32)
                    if out.shape != (len(batch), self.dim) or not np.isfinite(out).all():
                        raise EndpointError(resp.status_code, f"bad embedding payload shape {out.shape}")
                    return out
                if resp.status_code < 500 and resp.status_code != 429:
                    raise EndpointError(resp.status_code, resp.text)
                last = EndpointError(resp.status_code, resp.text)
            if attempt < self.max_retries:
                self._sleep(delays[attempt])
        if isinstance(last, EndpointError):
            raise last
        raise TransportError(f"embedding endpoint unreachable: {last!r}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        parts = [self._post(texts[i : i + self.batch_size]) for i in range(0, len(texts), self.batch_size)]
        return np.concatenate(parts) if parts else np.zeros((0, self.dim), dtype=np.float32)


class EmbeddingCache:
    """Content-addressed vector store: one file per (provider id, text).

    File format: little-endian uint32 component count, then float32 values.
    Writes go through a temp file and ``os.replace`` so readers never see a
    partial file.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(provider_id: str, text: str) -> str:
        return hashlib.sha256(f"{provider_id}\x00{text}".encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.bin"

    def get(self, provider_id: str, text: str) -> np.ndarray | None:
        path = self._path(self.key(provider_id, text))
        try:
            raw = path.read_bytes()
        except FileNotFoundError:
            return None
        (n,) = struct.unpack("<I", raw[:4])
        return np.frombuffer(raw[4 : 4 + 4 * n], dtype="<f4").astype(np.float32)

    def put(self, provider_id: str, text: str, vec: np.ndarray) -> None:
        vec = np.ascontiguousarray(vec, dtype="<f4")
        path = self._path(self.key(provider_id, text))
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent)
            with os.fdopen(fd, "wb") as fh:
                fh.write(struct.pack("<I", vec.size))
                fh.write(vec.tobytes())
            os.replace(tmp, path)


class CachedProvider:
    """Wrap a provider so each distinct text hits the inner provider once."""

    def __init__(self, inner: TextEmbeddingProvider, cache: EmbeddingCache):
        self.inner = inner
        self.cache = cache
        self.provider_id = inner.provider_id
        self.dim = inner.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out: list[np.ndarray | None] = [self.cache.get(self.provider_id, t) for t in texts]
        missing = sorted({t for t, v in zip(texts, out) if v is None})
        if missing:
            fresh = dict(zip(missing, self.inner.embed(missing)))
            for t, v in fresh.items():
                self.cache.put(self.provider_id, t, v)
            out = [fresh[t] if v is None else v for t, v in zip(texts, out)]
        if not out:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack(out).astype(np.float32)


def embed_text(provider: TextEmbeddingProvider, text: str) -> np.ndarray:
    return provider.embed([text])[0]


@dataclass
class TextTables:
    """Text embeddings for every entity and relation id of a graph."""

    entity: np.ndarray
    relation: np.ndarray

    @classmethod
    def build(cls, g: KnowledgeGraph, provider: TextEmbeddingProvider) -> "TextTables":
        ent = provider.embed([g.entity_name(i) for i in range(g.num_entities)])
        rel = provider.embed([relation_surface(n) for n in g.relation_names])
        return cls(np.asarray(ent, dtype=np.float32), np.asarray(rel, dtype=np.float32))


# -- TransE --------------------------------------------------------------------


@dataclass(frozen=True)
class TransEConfig:
    dim: int = DEFAULT_GRAPH_DIM
    margin: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 200
    negatives_per_positive: int = 1
    batch_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.dim <= 0 or self.margin <= 0 or self.learning_rate <= 0:
            raise ValueError("dim, margin and learning_rate must be positive")
        if self.epochs < 0 or self.negatives_per_positive < 1 or self.batch_size < 1:
            raise ValueError("epochs >= 0, negatives_per_positive >= 1, batch_size >= 1 required")


@dataclass
class GraphEmbeddingTable:
    """TransE vectors. ``relation_vectors`` has one row per relation id,
    reverse relations included."""

    entity_vectors: np.ndarray
    relation_vectors: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.entity_vectors.shape[1]

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        write_container(
            path,
            {"entity_vectors": self.entity_vectors, "relation_vectors": self.relation_vectors},
            meta={"kind": "transe", "loss_history": self.loss_history, **(meta or {})},
        )

    @classmethod
    def load(cls, path: str | Path) -> "GraphEmbeddingTable":
        arrays, meta = read_container(path)
        return cls(arrays["entity_vectors"], arrays["relation_vectors"], list(meta.get("loss_history", [])))


def transe_score(table: GraphEmbeddingTable, h: int, r: int, t: int) -> float:
    """``-||e_h + e_r - e_t||_2``; 0 is the best possible score."""
    n_e, n_r = len(table.entity_vectors), len(table.relation_vectors)
    if not (0 <= h < n_e and 0 <= t < n_e and 0 <= r < n_r):
        raise IndexError(f"invalid triple ids ({h}, {r}, {t})")
    diff = table.entity_vectors[h].astype(np.float64) + table.relation_vectors[r] - table.entity_vectors[t]
    return -float(np.linalg.norm(diff))


def _xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.maximum(norms, 1e-12)


def train_transe(g: KnowledgeGraph, cfg: TransEConfig = TransEConfig(), progress=None) -> GraphEmbeddingTable:
    """Margin-ranking TransE with uniform head-or-tail corruption and plain SGD.

    Reverse triples ``(t, r_rev, h)`` are trained alongside the forward ones,
    so reverse relations learn their own vectors.
    """
    rng = np.random.default_rng(cfg.seed)
    ent = _xavier_uniform(rng, g.num_entities, cfg.dim)
    rel = _xavier_uniform(rng, g.num_relations, cfg.dim)
    fwd = np.asarray(g.forward_triples(), dtype=np.int64).reshape(-1, 3)
    if len(fwd) == 0:
        raise ValueError("graph has no triples")
    rev = fwd[:, [2, 1, 0]].copy()
    rev[:, 1] ^= 1
    triples = np.concatenate([fwd, rev])
    history: list[float] = []
    n_neg = cfg.negatives_per_positive
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(triples))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            pos = np.repeat(triples[order[start : start + cfg.batch_size]], n_neg, axis=0)
            neg = pos.copy()
            corrupt_head = rng.random(len(pos)) < 0.5
            repl = rng.integers(0, g.num_entities, size=len(pos))
            neg[corrupt_head, 0] = repl[corrupt_head]
            neg[~corrupt_head, 2] = repl[~corrupt_head]

            xp = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
            xn = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
            dp = np.linalg.norm(xp, axis=1)
            dn = np.linalg.norm(xn, axis=1)
            loss = np.maximum(0.0, cfg.margin + dp - dn)
            total += float(loss.sum())
            active = loss > 0
            if not active.any():
                continue
            gp = xp[active] / np.maximum(dp[active], 1e-12)[:, None]
            gn = xn[active] / np.maximum(dn[active], 1e-12)[:, None]
            pa, na = pos[active], neg[active]
            lr = cfg.learning_rate
            # gradients were taken at the pre-update point, so in-place scatter is plain SGD
            np.add.at(ent, np.concatenate([pa[:, 0], pa[:, 2], na[:, 0], na[:, 2]]), -lr * np.concatenate([gp, -gp, -gn, gn]))
            np.add.at(rel, pa[:, 1], -lr * (gp - gn))
        ent = _normalize_rows(ent)
        history.append(total / (len(triples) * n_neg))
        if progress is not None:
            progress(epoch, history[-1])
    return GraphEmbeddingTable(ent.astype(np.float32), rel.astype(np.float32), history)
