"""Labeled edge examples for the scorer, derived from gold reasoning paths."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .container import read_container, write_container
from .edge_scorer import EdgeBatch, hop_context_batch
from .embeddings import GraphEmbeddingTable, TextEmbeddingProvider, TextTables
from .evaluation import QuestionInstance
from .kg_store import EntityLinkError, KnowledgeGraph

log = logging.getLogger(__name__)

COLUMNS = ("question", "head", "relation", "tail", "goal", "hop", "label")


@dataclass(frozen=True)
class GoldPath:
    relations: tuple[int, ...]
    edges: tuple[tuple[tuple[int, int, int], ...], ...]  # on-path edges, one tuple per hop
    frontiers: tuple[tuple[int, ...], ...]  # forward frontier before each hop (len k)
    f1: float


def _step(g: KnowledgeGraph, frontier: Iterable[int], r: int) -> set[int]:
    out: set[int] = set()
    for v in frontier:
        out.update(g.out_edges(v).get(r, ()))
    return out


def find_gold_paths(g: KnowledgeGraph, seed, answers: Iterable[int], k: int, max_paths: int = 8) -> list[GoldPath]:
    """Relation sequences of length ``k`` whose execution from ``seed`` reaches an answer.

    Sequences are ranked by answer-set F1 of their endpoint set (ties broken by
    relation ids) and at most ``max_paths`` are returned. Each path carries the
    edges that lie on some seed-to-answer walk along it.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    seeds = {seed} if isinstance(seed, (int, np.integer)) else set(seed)
    answers = set(answers)
    found: list[GoldPath] = []

    def visit(prefix: tuple[int, ...], frontiers: list[set[int]]):
        F = frontiers[-1]
        if len(prefix) == k:
            hit = F & answers
            if hit:
                found.append(_materialize(g, prefix, frontiers, hit, answers))
            return
        rels = sorted({r for v in F for r in g.out_edges(v)})
        for r in rels:
            visit(prefix + (r,), frontiers + [_step(g, F, r)])

    visit((), [seeds])
    found.sort(key=lambda p: (-p.f1, p.relations))
    return found[:max_paths]


def _materialize(g, relations, frontiers, hit, answers) -> GoldPath:
    k = len(relations)
    alive = [set() for _ in range(k + 1)]
    alive[k] = set(hit)
    edges: list[tuple] = [()] * k
    for d in range(k - 1, -1, -1):
        r = relations[d]
        hop_edges = []
        for v in sorted(frontiers[d]):
            for u in g.out_edges(v).get(r, ()):
                if u in alive[d + 1]:
                    hop_edges.append((v, r, u))
                    alive[d].add(v)
        edges[d] = tuple(hop_edges)
    end = frontiers[k]
    p = len(hit) / len(end)
    rc = len(hit) / len(answers)
    return GoldPath(tuple(relations), tuple(edges), tuple(tuple(sorted(f)) for f in frontiers[:k]), 2 * p * rc / (p + rc))


@dataclass
class FeatureStore:
    """Embedding lookup tables; examples refer into these by id."""

    question_text: np.ndarray
    text: TextTables
    graph_entity: np.ndarray
    graph_relation: np.ndarray

    @classmethod
    def build(cls, g: KnowledgeGraph, question_texts: Sequence[str], provider: TextEmbeddingProvider, table: GraphEmbeddingTable) -> "FeatureStore":
        q = provider.embed(list(question_texts)) if question_texts else np.zeros((0, provider.dim), dtype=np.float32)
        return cls(np.asarray(q, dtype=np.float32), TextTables.build(g, provider), table.entity_vectors, table.relation_vectors)

    def edge_batch(self, q_rows: np.ndarray, heads, rels, tails, goals, hops) -> EdgeBatch:
        return EdgeBatch(
            question=self.question_text[q_rows],
            node_text=self.text.entity[heads],
            node_graph=self.graph_entity[heads],
            edge_text=self.text.relation[rels],
            edge_graph=self.graph_relation[rels],
            target_text=self.text.entity[tails],
            target_graph=self.graph_entity[tails],
            hop_context=hop_context_batch(goals, hops),
        )


@dataclass
class EdgeExamples:
    """Columnar example table (ids only) bound to a :class:`FeatureStore`."""

    columns: dict[str, np.ndarray]
    store: FeatureStore | None = None

    def __len__(self) -> int:
        return len(self.columns["label"])

    @property
    def labels(self) -> np.ndarray:
        return self.columns["label"]

    def batch(self, idx) -> EdgeBatch:
        c = self.columns
        return self.store.edge_batch(c["question"][idx], c["head"][idx], c["relation"][idx], c["tail"][idx], c["goal"][idx], c["hop"][idx])

    def subset(self, mask) -> "EdgeExamples":
        return EdgeExamples({k: v[mask] for k, v in self.columns.items()}, self.store)


@dataclass
class ScorerDataset:
    train: EdgeExamples
    val: EdgeExamples
    questions: list[QuestionInstance]
    manifest: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        arrays = {f"train.{k}": v for k, v in self.train.columns.items()}
        arrays.update({f"val.{k}": v for k, v in self.val.columns.items()})
        meta = {"kind": "scorer_dataset", "manifest": self.manifest, "questions": [q.to_dict() for q in self.questions]}
        write_container(path, arrays, meta=meta)

    @classmethod
    def load(cls, path: str | Path) -> "ScorerDataset":
        arrays, meta = read_container(path)
        split = lambda p: {k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith(p + ".")}
        qs = [QuestionInstance.from_dict(d) for d in meta["questions"]]
        return cls(EdgeExamples(split("train")), EdgeExamples(split("val")), qs, meta["manifest"])

    def bind(self, store: FeatureStore) -> "ScorerDataset":
        self.train.store = store
        self.val.store = store
        return self


def _empty_columns() -> dict[str, list]:
    return {c: [] for c in COLUMNS}


def question_examples(
    g: KnowledgeGraph,
    q: QuestionInstance,
    q_row: int,
    negatives_per_positive: int,
    rng: np.random.Generator,
    max_paths: int = 8,
) -> tuple[dict[str, list] | None, str | None, dict]:
    """Examples for one question, or ``(None, reason, {})`` when it is skipped."""
    try:
        seeds = g.link_entities(q.text)
    except EntityLinkError:
        return None, "unlinked", {}
    if not seeds:
        return None, "unlinked", {}
    answers = {g.entity_id(a) for a in q.gold_answers if g.has_entity(a)}
    if not answers:
        return None, "answers_not_in_graph", {}
    paths = find_gold_paths(g, seeds, answers, q.hop_count, max_paths)
    if not paths:
        return None, "no_gold_path", {}
    best = paths[0].f1
    gold = [p for p in paths if p.f1 >= best - 1e-12]
    cols = _empty_columns()
    info = {"short_negatives": 0}
    k = q.hop_count
    for d in range(k):
        positives = sorted({e for p in gold for e in p.edges[d]})
        frontier = sorted({v for p in gold for v in p.frontiers[d]})
        pos_set = set(positives)
        candidates = [e for e in g.frontier_edges(frontier) if e not in pos_set]
        want = negatives_per_positive * len(positives)
        if len(candidates) < want:
            info["short_negatives"] += want - len(candidates)
            chosen = candidates
        else:
            pick = np.sort(rng.choice(len(candidates), size=want, replace=False))
            chosen = [candidates[i] for i in pick]
        for label, edges in ((1, positives), (0, chosen)):
            for h, r, t in edges:
                cols["question"].append(q_row)
                cols["head"].append(h)
                cols["relation"].append(r)
                cols["tail"].append(t)
                cols["goal"].append(k)
                cols["hop"].append(d + 1)
                cols["label"].append(label)
    return cols, None, info


def _to_arrays(cols: dict[str, list]) -> dict[str, np.ndarray]:
    return {c: np.asarray(cols[c], dtype=np.int64) for c in COLUMNS}


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_dataset(
    g: KnowledgeGraph,
    questions: Sequence[QuestionInstance],
    negatives_per_positive: int = 5,
    seed: int = 0,
    val_fraction: float = 0.2,
    val_questions: Sequence[QuestionInstance] | None = None,
    max_paths: int = 8,
    store: FeatureStore | None = None,
    source_hashes: dict | None = None,
) -> ScorerDataset:
    """Positive on-gold-path edges plus sampled same-hop frontier negatives.

    Validation questions are either given explicitly or split off by question
    (never by example). Question rows in the example tables index
    ``dataset.questions``.
    """
    if val_questions is None:
        order = np.random.default_rng(seed).permutation(len(questions))
        n_val = int(round(val_fraction * len(questions)))
        val_ids = {questions[i].id for i in order[:n_val]}
        all_qs = list(questions)
    else:
        val_ids = {q.id for q in val_questions}
        all_qs = list(questions) + list(val_questions)
    cols = {"train": _empty_columns(), "val": _empty_columns()}
    skipped: dict[str, int] = {}
    short = 0
    per_split_questions = {"train": 0, "val": 0}
    for row, q in enumerate(all_qs):
        rng = np.random.default_rng([seed, row])
        ex, reason, info = question_examples(g, q, row, negatives_per_positive, rng, max_paths)
        if ex is None:
            skipped[reason] = skipped.get(reason, 0) + 1
            continue
        short += info["short_negatives"]
        part = "val" if q.id in val_ids else "train"
        per_split_questions[part] += 1
        for c in COLUMNS:
            cols[part][c].extend(ex[c])
    if short:
        log.info("%d negatives missing for lack of candidates", short)
    train_cols, val_cols = _to_arrays(cols["train"]), _to_arrays(cols["val"])
    n_pos = int(train_cols["label"].sum())
    n_neg = len(train_cols["label"]) - n_pos
    manifest = {
        "seed": seed,
        "negatives_per_positive": negatives_per_positive,
        "max_paths": max_paths,
        "questions": {"train": per_split_questions["train"], "val": per_split_questions["val"], "skipped": dict(sorted(skipped.items()))},
        "examples": {
            "train_positive": n_pos,
            "train_negative": n_neg,
            "val_positive": int(val_cols["label"].sum()),
            "val_negative": int(len(val_cols["label"]) - val_cols["label"].sum()),
        },
        "missing_negatives": short,
        "neg_pos_ratio": (n_neg / n_pos) if n_pos else None,
        "source_hashes": dict(source_hashes or {}),
    }
    return ScorerDataset(EdgeExamples(train_cols, store), EdgeExamples(val_cols, store), all_qs, manifest)
