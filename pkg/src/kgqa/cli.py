"""``kgqa`` command-line entry point.

Settings resolve as: command-line flag, then ``--config`` JSON file, then
``KGQA_<NAME>`` environment variable, then the built-in default. Every command
that writes an artifact also writes ``<artifact>.manifest.json``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .bfs_executor import execute_plan
from .edge_scorer import ABLATIONS, ScorerConfig, count_parameters, load_checkpoint, save_checkpoint
from .embeddings import (
    CachedProvider,
    EmbeddingCache,
    GraphEmbeddingTable,
    OpenAIEmbeddingProvider,
    StubTextEmbedder,
    TextTables,
    TransEConfig,
    train_transe,
)
from .evaluation import QuestionInstance, load_questions, run_benchmark
from .kg_store import KBError, KnowledgeGraph, load_kb
from .llm_client import LlmConfig, LlmError, OpenAICompatClient
from .neural_search import BeamConfig, NeuralEdgeScorer
from .pipeline import ABLATION_ORDER, bind_dataset, run_ablation, train_scorer
from .planner import PlannerError, RelationPlan, RelationVocabulary, export_teacher_traces, plan, sample_per_hop
from .scorer_data import ScorerDataset, build_dataset, file_sha256
from .scorer_training import TrainConfig
from .strategies import STRATEGY_NAMES, GoldPlanStrategy, LlmPlanStrategy, NeuralStrategy, ZeroShotStrategy

log = logging.getLogger("kgqa")

METAQA_COUNTS = {"entities": 43234, "triples": 134741, "forward_relations": 9}

DEFAULTS = {
    "seed": 0,
    "hops": None,
    "strategy": "neural_greedy",
    "beam_B": 3,
    "cap_M": 30,
    "path_beam_P": None,
    "jobs": 1,
    "text_embedder": "stub:1536:0",
    "embedding_cache": None,
    "llm_base_url": "https://api.openai.com/v1",
    "llm_model": "gpt-5-mini",
    "llm_timeout": 60.0,
    "llm_max_retries": 3,
    "llm_price_in": 0.0,
    "llm_price_out": 0.0,
    "negatives": 5,
    "max_paths": 8,
    "val_fraction": 0.2,
    "transe_dim": 256,
    "transe_epochs": 200,
    "transe_margin": 1.0,
    "transe_lr": 0.01,
    "latent_dim": 512,
    "attention_hidden": 1024,
    "classifier_hidden": "512,256",
    "dropout": 0.3,
    "ablation": "TE+GE+HC",
    "epochs": 50,
    "batch_size": 1024,
    "lr": 1e-4,
    "weight_decay": 1e-5,
    "patience": 10,
    "per_hop": None,
    "planner": "llm",
    "macro": "question",
    "per_template": 20,
}
_FLOATS = {"llm_timeout", "llm_price_in", "llm_price_out", "val_fraction", "transe_margin", "transe_lr", "dropout", "lr", "weight_decay"}
_INTS = {"seed", "hops", "beam_B", "cap_M", "path_beam_P", "jobs", "llm_max_retries", "negatives", "max_paths", "transe_dim", "transe_epochs",
         "latent_dim", "attention_hidden", "epochs", "batch_size", "patience", "per_hop", "per_template"}


class ConfigError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config: dict
    input_hashes: dict
    seed: int
    tool_version: str = __version__
    outputs: list = field(default_factory=list)
    started_at: str = ""
    finished_at: str = ""

    def identity(self) -> dict:
        """Fields that determine the artifact (timestamps excluded)."""
        d = asdict(self)
        d.pop("started_at")
        d.pop("finished_at")
        return d

    def write(self, artifact: str | Path) -> Path:
        path = Path(str(artifact) + ".manifest.json")
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _INTS:
        return int(value)
    if key in _FLOATS:
        return float(value)
    return value


def resolve_settings(args: argparse.Namespace, environ=os.environ) -> dict:
    """Merge flags > config file > environment > defaults for every known setting."""
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        env = environ.get(f"KGQA_{key.upper()}")
        for candidate in (flag, file_cfg.get(key), env):
            if candidate is not None:
                out[key] = _coerce(key, candidate)
                break
        else:
            out[key] = default
    return out


def _hashes(*paths) -> dict:
    return {str(p): file_sha256(p) for p in paths if p and Path(p).is_file()}


def _finish(manifest: RunManifest, artifact: str | Path) -> None:
    manifest.finished_at = _now()
    manifest.outputs.append(str(artifact))
    manifest.write(artifact)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=False))


# -- resource builders -----------------------------------------------------------


def _graph(args) -> KnowledgeGraph:
    if not args.kb:
        raise ConfigError("--kb is required")
    return load_kb(args.kb)


def make_text_provider(spec: str, cache_dir: str | None = None, api_key_env: str = "OPENAI_API_KEY"):
    """``stub:<dim>:<seed>`` or ``openai:<model>:<dim>[:<base_url>]``."""
    kind, _, rest = spec.partition(":")
    if kind == "stub":
        dim, _, seed = rest.partition(":")
        provider = StubTextEmbedder(int(dim or 1536), int(seed or 0))
    elif kind == "openai":
        parts = rest.split(":", 2)
        model = parts[0] or "text-embedding-3-small"
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 1536
        kw = {"base_url": parts[2]} if len(parts) > 2 else {}
        provider = OpenAIEmbeddingProvider(model, dim=dim, api_key_env=api_key_env, **kw)
    else:
        raise ConfigError(f"unknown text embedder {spec!r}")
    if cache_dir:
        provider = CachedProvider(provider, EmbeddingCache(cache_dir))
    return provider


def _llm_client(s: dict) -> OpenAICompatClient:
    cfg = LlmConfig(
        base_url=s["llm_base_url"],
        model_name=s["llm_model"],
        timeout=s["llm_timeout"],
        max_retries=s["llm_max_retries"],
        price_per_input_token=s["llm_price_in"],
        price_per_output_token=s["llm_price_out"],
    )
    return OpenAICompatClient(cfg)


def _beam(s: dict, variant: str) -> BeamConfig:
    return BeamConfig(s["beam_B"], s["cap_M"], s["path_beam_P"], variant)


def _load_neural(g: KnowledgeGraph, args, s: dict):
    if not args.checkpoint or not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    if not args.embeddings or not Path(args.embeddings).is_file():
        raise ConfigError(f"graph embeddings not found: {args.embeddings}")
    params, cfg, meta = load_checkpoint(args.checkpoint)
    table = GraphEmbeddingTable.load(args.embeddings)
    spec = args.text_embedder or meta.get("text_embedder") or s["text_embedder"]
    provider = make_text_provider(spec, s["embedding_cache"])
    if provider.dim != cfg.text_dim or table.dim != cfg.graph_dim:
        raise ConfigError("embedding dimensions do not match the checkpoint")
    if table.entity_vectors.shape[0] != g.num_entities or table.relation_vectors.shape[0] != g.num_relations:
        raise ConfigError("graph embeddings were trained on a different graph")
    return NeuralEdgeScorer(params, cfg, TextTables.build(g, provider), table), provider


def make_strategy(name: str, g: KnowledgeGraph, args, s: dict):
    if name == "gold_plan":
        return GoldPlanStrategy(g)
    if name == "llm_plan":
        return LlmPlanStrategy(_llm_client(s), g)
    if name == "zero_shot":
        return ZeroShotStrategy(_llm_client(s))
    if name in ("neural_path", "neural_greedy"):
        scorer, provider = _load_neural(g, args, s)
        return NeuralStrategy(scorer, g, provider, _beam(s, "greedy" if name == "neural_greedy" else "whole_path"), name=name)
    raise ConfigError(f"unknown strategy {name!r}")


def read_questions(path: str, hops: int | None, qtypes: str | None = None, split: str = "test") -> list[QuestionInstance]:
    """``.jsonl`` files hold question records; anything else is MetaQA text (needs ``hops``)."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"questions file not found: {path}")
    if p.suffix == ".jsonl":
        qs = [QuestionInstance.from_dict(json.loads(line)) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
        return [q for q in qs if hops is None or q.hop_count == hops]
    if hops is None:
        raise ConfigError("--hops is required for MetaQA question files")
    types = Path(qtypes).read_text(encoding="utf-8").splitlines() if qtypes else None
    return load_questions(p, hops, split, types)


def _scorer_config(s: dict, text_dim: int, graph_dim: int) -> ScorerConfig:
    hidden = tuple(int(x) for x in str(s["classifier_hidden"]).split(",") if x.strip())
    if s["ablation"] not in ABLATIONS:
        raise ConfigError(f"unknown ablation {s['ablation']!r}; choose from {sorted(ABLATIONS)}")
    return ScorerConfig(
        text_dim=text_dim, graph_dim=graph_dim, latent_dim=s["latent_dim"], attention_hidden=s["attention_hidden"],
        classifier_hidden=hidden, dropout=s["dropout"], ablation=ABLATIONS[s["ablation"]], seed=s["seed"],
    )


def _train_config(s: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=s["lr"], weight_decay=s["weight_decay"], batch_size=s["batch_size"], max_epochs=s["epochs"],
        early_stop_patience=s["patience"], seed=s["seed"],
    )


def _manifest(cmd: str, s: dict, args, *inputs) -> RunManifest:
    cfg = dict(s)
    cfg.update({k: v for k, v in vars(args).items() if k not in cfg and k not in ("func", "config") and isinstance(v, (str, int, float, bool, type(None)))})
    return RunManifest(cmd, cfg, _hashes(*inputs), s["seed"], started_at=_now())


# -- commands ----------------------------------------------------------------------


def cmd_ingest(args, s) -> int:
    g = _graph(args)
    rep = g.report().as_dict()
    rep["relations_with_reverse"] = g.num_relations
    out = {"report": rep}
    status = 0
    if args.expect_metaqa:
        check = {k: {"expected": v, "observed": rep[k], "ok": rep[k] == v} for k, v in METAQA_COUNTS.items()}
        out["metaqa_check"] = check
        status = 0 if all(c["ok"] for c in check.values()) else 4
    _emit(out)
    return status


def _parse_relations_flag(text: str, g: KnowledgeGraph) -> list[list[int]]:
    vocab = RelationVocabulary.of(g)
    hops = []
    for hop in text.split(","):
        ids = []
        for name in hop.split("|"):
            rid = vocab.resolve(name)
            if rid is None:
                raise ConfigError(f"unknown relation {name!r}")
            ids.append(rid)
        hops.append(ids)
    return hops


def cmd_ask(args, s) -> int:
    g = _graph(args)
    hops = s["hops"]
    strategy = s["strategy"]
    if args.relations:
        plan_ids = _parse_relations_flag(args.relations, g)
        ans, stats = execute_plan(g, g.link_entities(args.question), plan_ids)
        _emit({"strategy": "gold_plan", "answers": list(ans.surfaces), "plan": [[g.relation_name(r) for r in h] for h in plan_ids],
               "nodes_expanded": stats.nodes_expanded, "latency_s": stats.wall_time})
        return 0
    if hops is None:
        raise ConfigError("--hops is required")
    q = QuestionInstance("cli-0", args.question, ("?",), hops, "cli", args.qtype)
    strat = make_strategy(strategy, g, args, s)
    t0 = time.perf_counter()
    res = strat.answer(q)
    _emit({"strategy": strat.name, "answers": sorted(set(res.answers)), "nodes_expanded": res.nodes_expanded,
           "cost_usd": res.cost_usd, "latency_s": time.perf_counter() - t0, **res.detail})
    return 0


def cmd_plan(args, s) -> int:
    g = _graph(args)
    if s["hops"] is None:
        raise ConfigError("--hops is required")
    p = plan(_llm_client(s), args.question, s["hops"], g)
    _emit({"plan": json.loads(p.to_json(g)), "warnings": list(p.warnings), "cost_usd": p.cost})
    return 0


def cmd_train_transe(args, s) -> int:
    g = _graph(args)
    man = _manifest("train-transe", s, args, args.kb)
    cfg = TransEConfig(dim=s["transe_dim"], margin=s["transe_margin"], learning_rate=s["transe_lr"], epochs=s["transe_epochs"], seed=s["seed"])
    table = train_transe(g, cfg, progress=lambda e, loss: log.info("transe epoch %d loss %.5f", e, loss))
    table.save(args.out, meta={"config": asdict(cfg)})
    _finish(man, args.out)
    _emit({"out": args.out, "entities": g.num_entities, "relations": g.num_relations, "final_loss": table.loss_history[-1] if table.loss_history else None})
    return 0


def cmd_gen_scorer_data(args, s) -> int:
    g = _graph(args)
    qs = read_questions(args.questions, s["hops"], args.qtypes, "train")
    val = read_questions(args.val_questions, s["hops"], None, "dev") if args.val_questions else None
    inputs = [args.kb, args.questions] + ([args.val_questions] if args.val_questions else [])
    man = _manifest("gen-scorer-data", s, args, *inputs)
    ds = build_dataset(g, qs, s["negatives"], s["seed"], s["val_fraction"], val, s["max_paths"], source_hashes=_hashes(*inputs))
    ds.save(args.out)
    Path(str(args.out) + ".dataset.json").write_text(json.dumps(ds.manifest, indent=2, sort_keys=True), encoding="utf-8")
    _finish(man, args.out)
    _emit(ds.manifest)
    return 0


def _dataset_and_tables(g, args, s):
    if not args.data or not Path(args.data).is_file():
        raise ConfigError(f"dataset not found: {args.data}")
    if not args.embeddings or not Path(args.embeddings).is_file():
        raise ConfigError(f"graph embeddings not found: {args.embeddings}")
    table = GraphEmbeddingTable.load(args.embeddings)
    provider = make_text_provider(s["text_embedder"], s["embedding_cache"])
    ds = bind_dataset(g, ScorerDataset.load(args.data), provider, table)
    return ds, table, provider


def cmd_train_scorer(args, s) -> int:
    g = _graph(args)
    ds, table, provider = _dataset_and_tables(g, args, s)
    man = _manifest("train-scorer", s, args, args.kb, args.data, args.embeddings)
    cfg = _scorer_config(s, provider.dim, table.dim)
    ts = train_scorer(ds, cfg, _train_config(s), progress=lambda r: log.info("epoch %(epoch)d loss %(train_loss).4f val_f1 %(val_f1).4f", r))
    count = count_parameters(ts.params)
    save_checkpoint(args.out, ts.params, cfg, {"text_embedder": s["text_embedder"], "history": ts.history, "baseline_f1": ts.baseline_f1})
    _finish(man, args.out)
    _emit({"out": args.out, "parameters": count.total, "attention_fraction": count.attention_fraction, "best_val_f1": ts.best_val_f1,
           "baseline_f1": ts.baseline_f1, "epochs_run": len(ts.history)})
    return 0


def cmd_export_traces(args, s) -> int:
    g = _graph(args)
    qs = read_questions(args.questions, s["hops"], args.qtypes, "train")
    if s["per_hop"]:
        qs = sample_per_hop(qs, s["per_hop"], s["seed"])
    man = _manifest("export-traces", s, args, args.kb, args.questions)
    if s["planner"] == "gold":
        gold = GoldPlanStrategy(g)
        plans = [RelationPlan(tuple((g.relation_id(r),) for r in gold.relations_for(q)), "oracle plan from question type") for q in qs]
        kept = qs
    else:
        client = _llm_client(s)
        plans, kept = [], []
        for q in qs:
            try:
                plans.append(plan(client, q.text, q.hop_count, g))
                kept.append(q)
            except (PlannerError, LlmError) as exc:
                log.warning("skipping %s: %s", q.id, exc)
    n = export_teacher_traces(kept, plans, g, args.out)
    _finish(man, args.out)
    _emit({"out": args.out, "records": n, "skipped": len(qs) - len(kept)})
    return 0


def cmd_eval(args, s) -> int:
    g = _graph(args)
    qs = read_questions(args.questions, s["hops"], args.qtypes)
    strat = make_strategy(s["strategy"], g, args, s)
    man = _manifest("eval", s, args, args.kb, args.questions, args.checkpoint, args.embeddings)
    rep = run_benchmark(strat, qs, s["jobs"], args.report, macro=s["macro"])
    _finish(man, args.report)
    _emit({"report": args.report, "rows": [asdict(r) for r in rep.rows]})
    return 0


def cmd_ablate(args, s) -> int:
    g = _graph(args)
    ds, table, provider = _dataset_and_tables(g, args, s)
    qs = read_questions(args.questions, s["hops"], args.qtypes)
    man = _manifest("ablate", s, args, args.kb, args.data, args.embeddings, args.questions)
    base = _scorer_config(s, provider.dim, table.dim)
    variant = "greedy" if s["strategy"] == "neural_greedy" else "whole_path"
    res = run_ablation(g, ds, qs, provider, table, base, _train_config(s), _beam(s, variant), ABLATION_ORDER, s["jobs"])
    res.report.meta.update({"beam": asdict(_beam(s, variant)), "val_f1": {k: v.best_val_f1 for k, v in res.trained.items()}})
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text(res.report.to_json(), encoding="utf-8")
    report.with_suffix(".csv").write_text(res.table3_csv(), encoding="utf-8")
    _finish(man, report)
    print(res.table3_csv(), end="")
    return 0


def cmd_synth(args, s) -> int:
    from .synthetic import build_movie_world, generate_questions, split_questions, to_metaqa_lines

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = build_movie_world(s["seed"])
    world.write_kb(out / "kb.txt")
    parts = split_questions(generate_questions(world, s["per_template"], seed=s["seed"]), seed=s["seed"])
    counts = {}
    for split, qs in parts.items():
        (out / f"questions_{split}.jsonl").write_text("".join(json.dumps(q.to_dict()) + "\n" for q in qs), encoding="utf-8")
        for k in (1, 2, 3):
            sub = [q for q in qs if q.hop_count == k]
            (out / f"qa_{split}_{k}hop.txt").write_text(to_metaqa_lines(sub), encoding="utf-8")
            (out / f"qa_{split}_{k}hop_qtype.txt").write_text("".join(f"{q.template}\n" for q in sub), encoding="utf-8")
            counts[f"{split}_{k}hop"] = len(sub)
    man = _manifest("synth", s, args)
    _finish(man, out / "kb.txt")
    _emit({"out_dir": str(out), "entities": world.graph.num_entities, "triples": world.graph.triple_count, "questions": counts})
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kb", help="knowledge base file (head|relation|tail per line)")
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--seed", type=int)
    common.add_argument("--log-level", default="WARNING")

    qflags = argparse.ArgumentParser(add_help=False)
    qflags.add_argument("--hops", type=int, choices=(1, 2, 3))
    qflags.add_argument("--qtypes", help="MetaQA question-type file aligned with --questions")

    emb = argparse.ArgumentParser(add_help=False)
    emb.add_argument("--embeddings", help="TransE table produced by train-transe")
    emb.add_argument("--text-embedder", dest="text_embedder", help="stub:<dim>:<seed> or openai:<model>:<dim>[:<base_url>]")
    emb.add_argument("--embedding-cache", dest="embedding_cache", help="directory for cached text embeddings")

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--strategy", choices=STRATEGY_NAMES)
    search.add_argument("--beam-B", dest="beam_B", type=int)
    search.add_argument("--cap-M", dest="cap_M", type=int)
    search.add_argument("--path-beam-P", dest="path_beam_P", type=int)
    search.add_argument("--checkpoint")

    llm = argparse.ArgumentParser(add_help=False)
    llm.add_argument("--llm-base-url", dest="llm_base_url")
    llm.add_argument("--llm-model", dest="llm_model")
    llm.add_argument("--llm-timeout", dest="llm_timeout", type=float)
    llm.add_argument("--llm-max-retries", dest="llm_max_retries", type=int)
    llm.add_argument("--llm-price-in", dest="llm_price_in", type=float, help="USD per input token")
    llm.add_argument("--llm-price-out", dest="llm_price_out", type=float, help="USD per output token")

    arch = argparse.ArgumentParser(add_help=False)
    arch.add_argument("--latent-dim", dest="latent_dim", type=int)
    arch.add_argument("--attention-hidden", dest="attention_hidden", type=int)
    arch.add_argument("--classifier-hidden", dest="classifier_hidden", help="comma-separated widths")
    arch.add_argument("--dropout", type=float)
    arch.add_argument("--epochs", type=int)
    arch.add_argument("--batch-size", dest="batch_size", type=int)
    arch.add_argument("--lr", type=float)
    arch.add_argument("--weight-decay", dest="weight_decay", type=float)
    arch.add_argument("--patience", type=int)

    p = argparse.ArgumentParser(prog="kgqa", description="Grounded multi-hop question answering over a knowledge graph.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("ingest", parents=[common], help="load a KB and print its statistics")
    c.add_argument("--expect-metaqa", action="store_true", help="compare counts with the full MetaQA KB")
    c.set_defaults(func=cmd_ingest)

    c = sub.add_parser("ask", parents=[common, qflags, emb, search, llm], help="answer one question")
    c.add_argument("question")
    c.add_argument("--relations", help="execute this plan instead: hops separated by ',', alternatives by '|'")
    c.add_argument("--qtype", help="question type, used by the gold_plan strategy")
    c.set_defaults(func=cmd_ask)

    c = sub.add_parser("plan", parents=[common, qflags, llm], help="print the LLM relation plan for a question")
    c.add_argument("question")
    c.set_defaults(func=cmd_plan)

    c = sub.add_parser("train-transe", parents=[common], help="train TransE graph embeddings")
    c.add_argument("--out", required=True)
    c.add_argument("--dim", dest="transe_dim", type=int)
    c.add_argument("--epochs", dest="transe_epochs", type=int)
    c.add_argument("--margin", dest="transe_margin", type=float)
    c.add_argument("--lr", dest="transe_lr", type=float)
    c.set_defaults(func=cmd_train_transe)

    c = sub.add_parser("gen-scorer-data", parents=[common, qflags], help="build labeled edge examples")
    c.add_argument("--questions", required=True)
    c.add_argument("--val-questions", dest="val_questions")
    c.add_argument("--negatives", type=int, help="negatives per positive")
    c.add_argument("--max-paths", dest="max_paths", type=int)
    c.add_argument("--val-fraction", dest="val_fraction", type=float)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_gen_scorer_data)

    c = sub.add_parser("train-scorer", parents=[common, emb, arch], help="train the edge scorer")
    c.add_argument("--data", required=True, help="dataset from gen-scorer-data")
    c.add_argument("--ablation", choices=sorted(ABLATIONS))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_train_scorer)

    c = sub.add_parser("export-traces", parents=[common, qflags, llm], help="export question-to-plan teacher traces as JSONL")
    c.add_argument("--questions", required=True)
    c.add_argument("--per-hop", dest="per_hop", type=int)
    c.add_argument("--planner", choices=("llm", "gold"))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_export_traces)

    c = sub.add_parser("eval", parents=[common, qflags, emb, search, llm], help="benchmark a strategy on a question file")
    c.add_argument("--questions", required=True)
    c.add_argument("--jobs", type=int)
    c.add_argument("--macro", choices=("question", "template"))
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("ablate", parents=[common, qflags, emb, search, arch], help="train and evaluate the five feature-mask configurations")
    c.add_argument("--data", required=True)
    c.add_argument("--questions", required=True)
    c.add_argument("--jobs", type=int)
    c.add_argument("--report", required=True)
    c.set_defaults(func=cmd_ablate)

    c = sub.add_parser("synth", parents=[common], help="write a synthetic movie KB and question files")
    c.add_argument("--out-dir", required=True)
    c.add_argument("--per-template", dest="per_template", type=int)
    c.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        s = resolve_settings(args)
        return args.func(args, s)
    except (ConfigError, KBError, PlannerError, LlmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
