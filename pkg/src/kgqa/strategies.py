"""Answering strategies pluggable into :func:`kgqa.evaluation.run_benchmark`."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .bfs_executor import execute_plan
from .embeddings import TextEmbeddingProvider
from .evaluation import QuestionInstance, StrategyResult
from .kg_store import KnowledgeGraph
from .llm_client import ChatClient
from .neural_search import BeamConfig, EdgeScorer, search
from .planner import RelationPlan, RelationVocabulary, plan, zero_shot_answers

# MetaQA question-type vocabulary: entity type -> forward relation from a movie
METAQA_TYPE_RELATIONS = {
    "director": "directed_by",
    "writer": "written_by",
    "actor": "starred_actors",
    "year": "release_year",
    "language": "in_language",
    "tag": "has_tags",
    "tags": "has_tags",
    "genre": "has_genre",
    "imdbvotes": "has_imdb_votes",
    "votes": "has_imdb_votes",
    "imdbrating": "has_imdb_rating",
    "rating": "has_imdb_rating",
}


def qtype_relations(qtype: str, type_relations: Mapping[str, str] = METAQA_TYPE_RELATIONS) -> tuple[str, ...]:
    """Relation chain for a question type such as ``actor_to_movie_to_director``.

    Each ``movie_to_X`` step follows ``X``'s relation forward and each
    ``X_to_movie`` step follows it in reverse.
    """
    types = qtype.strip().lower().split("_to_")
    if len(types) < 2:
        raise ValueError(f"not a question type: {qtype!r}")
    out = []
    for a, b in zip(types, types[1:]):
        if a == "movie" and b != "movie":
            out.append(type_relations[b])
        elif b == "movie" and a != "movie":
            out.append(type_relations[a] + "_reverse")
        else:
            raise ValueError(f"cannot map step {a}->{b} in {qtype!r}")
    return tuple(out)


def _answer_names(g: KnowledgeGraph, ids) -> list[str]:
    return [g.entity_name(e) for e in ids]


class GoldPlanStrategy:
    """Executes the question's known relation chain (oracle planner)."""

    name = "gold_plan"

    def __init__(self, g: KnowledgeGraph, type_relations: Mapping[str, str] = METAQA_TYPE_RELATIONS):
        self.g = g
        self.type_relations = type_relations

    def relations_for(self, q: QuestionInstance) -> tuple[str, ...]:
        if q.relations is not None:
            return tuple(q.relations)
        if q.template:
            return qtype_relations(q.template, self.type_relations)
        raise ValueError(f"question {q.id} has neither relations nor a question type")

    def answer(self, q: QuestionInstance) -> StrategyResult:
        rels = self.relations_for(q)
        if len(rels) != q.hop_count:
            raise ValueError(f"{len(rels)} relations for a {q.hop_count}-hop question")
        seeds = self.g.link_entities(q.text)
        ans, stats = execute_plan(self.g, seeds, [[self.g.relation_id(r)] for r in rels])
        return StrategyResult(list(ans.surfaces), stats.nodes_expanded, None, {"plan": [[r] for r in rels]})


class LlmPlanStrategy:
    """LLM relation planning followed by plan-constrained BFS."""

    name = "llm_plan"

    def __init__(self, client: ChatClient, g: KnowledgeGraph, bidirectional: bool = True):
        self.client = client
        self.g = g
        self.vocab = RelationVocabulary.of(g)
        self.bidirectional = bidirectional

    def make_plan(self, q: QuestionInstance) -> RelationPlan:
        return plan(self.client, q.text, q.hop_count, self.vocab)

    def answer(self, q: QuestionInstance) -> StrategyResult:
        seeds = self.g.link_entities(q.text)
        p = self.make_plan(q)
        executed = p.bidirectional() if self.bidirectional else p
        ans, stats = execute_plan(self.g, seeds, executed)
        return StrategyResult(list(ans.surfaces), stats.nodes_expanded, p.cost, {"plan": p.names(self.vocab), "warnings": list(p.warnings)})


class ZeroShotStrategy:
    """Direct LLM answering without graph access."""

    name = "zero_shot"

    def __init__(self, client: ChatClient, limit: int = 50):
        self.client = client
        self.limit = limit

    def answer(self, q: QuestionInstance) -> StrategyResult:
        res = zero_shot_answers(self.client, q.text, self.limit)
        return StrategyResult(list(res.answers), 0.0, res.cost, {"passes": res.passes_used})


class NeuralStrategy:
    """Edge-scored beam search (``whole_path`` or ``greedy``)."""

    def __init__(self, scorer: EdgeScorer, g: KnowledgeGraph, provider: TextEmbeddingProvider, beam: BeamConfig = BeamConfig(), name: str | None = None):
        self.scorer = scorer
        self.g = g
        self.provider = provider
        self.beam = beam
        self.name = name or ("neural_greedy" if beam.variant == "greedy" else "neural_path")

    def question_vector(self, text: str) -> np.ndarray:
        return np.asarray(self.provider.embed([text])[0], dtype=np.float32)

    def answer(self, q: QuestionInstance) -> StrategyResult:
        seeds = self.g.link_entities(q.text)
        res = search(self.scorer, self.g, self.question_vector(q.text), seeds, q.hop_count, self.beam)
        chain = [self.g.relation_name(r) for r in res.best_chain.relations] if res.best_chain else []
        detail = {"best_chain": chain, "best_chain_score": res.best_chain.chain_score if res.best_chain else None, "best_chain_answers": list(res.best_answers.surfaces)}
        return StrategyResult(list(res.answers.surfaces), res.stats.nodes_expanded, None, detail)


STRATEGY_NAMES: Sequence[str] = ("gold_plan", "llm_plan", "zero_shot", "neural_path", "neural_greedy")
