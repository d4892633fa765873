"""End-to-end helpers shared by the CLI and the desk-scale checks."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

from .edge_scorer import ABLATIONS, ScorerConfig, ScorerParams, init_params
from .embeddings import GraphEmbeddingTable, TextEmbeddingProvider, TextTables
from .evaluation import EvalReport, QuestionInstance, merge_reports, run_benchmark
from .kg_store import KnowledgeGraph
from .neural_search import BeamConfig, NeuralEdgeScorer
from .scorer_data import FeatureStore, ScorerDataset, build_dataset
from .scorer_training import TrainConfig, label_frequency_baseline_f1, train
from .strategies import NeuralStrategy

ABLATION_ORDER = ("TE+GE+HC", "TE+HC", "TE", "GE+HC", "GE")
TABLE3_COLUMNS = ["Configuration", "Hop", "Hit Rate", "Macro F1", "Micro F1", "Avg Nodes Expanded", "Avg Time (s)"]


@dataclass
class TrainedScorer:
    params: ScorerParams
    cfg: ScorerConfig
    history: list[dict]
    dataset: ScorerDataset
    baseline_f1: float

    @property
    def best_val_f1(self) -> float:
        return max(r["val_f1"] for r in self.history)


def make_dataset(
    g: KnowledgeGraph,
    train_questions: Sequence[QuestionInstance],
    val_questions: Sequence[QuestionInstance] | None,
    provider: TextEmbeddingProvider,
    table: GraphEmbeddingTable,
    negatives_per_positive: int = 5,
    seed: int = 0,
    text_tables: TextTables | None = None,
) -> ScorerDataset:
    qs = list(train_questions) + list(val_questions or [])
    store = FeatureStore.build(g, [q.text for q in qs], provider, table)
    if text_tables is not None:
        store.text = text_tables
    return build_dataset(g, train_questions, negatives_per_positive, seed, val_questions=val_questions, store=store)


def bind_dataset(g: KnowledgeGraph, ds: ScorerDataset, provider: TextEmbeddingProvider, table: GraphEmbeddingTable) -> ScorerDataset:
    """Attach embedding lookups to a dataset loaded from disk."""
    return ds.bind(FeatureStore.build(g, [q.text for q in ds.questions], provider, table))


def train_scorer(ds: ScorerDataset, cfg: ScorerConfig, tcfg: TrainConfig = TrainConfig(), progress=None) -> TrainedScorer:
    """Train from a fresh seeded init; ``pos_weight`` comes from the dataset manifest."""
    if tcfg.pos_weight is None and ds.manifest.get("neg_pos_ratio") is not None:
        tcfg = replace(tcfg, pos_weight=float(ds.manifest["neg_pos_ratio"]))
    params, history = train(init_params(cfg), cfg, ds.train, ds.val, tcfg, progress)
    return TrainedScorer(params, cfg, history, ds, label_frequency_baseline_f1(ds.train.labels, ds.val.labels))


@dataclass
class AblationResult:
    report: EvalReport
    trained: dict[str, TrainedScorer] = field(default_factory=dict)

    def f1(self, config: str, hop: int, metric: str = "micro_f1") -> float:
        return getattr(self.report.row(config, hop), metric)

    def table3_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE3_COLUMNS)
        for r in self.report.rows:
            w.writerow([r.method, f"{r.hop}-hop", f"{r.hit_rate:.3f}", f"{r.macro_f1:.3f}", f"{r.micro_f1:.3f}", f"{r.avg_nodes_expanded:.3f}", f"{r.avg_time_s:.3f}"])
        return buf.getvalue()


def run_ablation(
    g: KnowledgeGraph,
    ds: ScorerDataset,
    eval_questions: Sequence[QuestionInstance],
    provider: TextEmbeddingProvider,
    table: GraphEmbeddingTable,
    base_cfg: ScorerConfig,
    tcfg: TrainConfig = TrainConfig(),
    beam: BeamConfig = BeamConfig(),
    configs: Sequence[str] = ABLATION_ORDER,
    parallelism: int = 1,
) -> AblationResult:
    """Train one scorer per feature mask on the same data, then evaluate each with neural search."""
    text = ds.train.store.text
    reports, trained = [], {}
    for name in configs:
        cfg = base_cfg.with_ablation(ABLATIONS[name])
        ts = train_scorer(ds, cfg, tcfg)
        trained[name] = ts
        strategy = NeuralStrategy(NeuralEdgeScorer(ts.params, cfg, text, table), g, provider, beam, name=name)
        reports.append(run_benchmark(strategy, eval_questions, parallelism))
    return AblationResult(merge_reports(reports), trained)
