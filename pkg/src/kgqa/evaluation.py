"""Question loading, answer-set metrics and benchmark reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

log = logging.getLogger(__name__)

TABLE1_COLUMNS = ["Method", "Hop", "Hit Rate", "Macro F1", "Micro Precision", "Micro Recall", "Micro F1", "Avg Time (s)"]
TABLE2_COLUMNS = ["Method", "Hop", "Avg Nodes Expanded", "Time (s)", "Cost per Query (USD)"]


class QuestionFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class QuestionInstance:
    id: str
    text: str
    gold_answers: tuple[str, ...]
    hop_count: int
    split: str = "test"
    template: Optional[str] = None  # question-type key, e.g. "movie_to_director"
    relations: Optional[tuple[str, ...]] = None  # gold relation sequence when known

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gold_answers"] = list(self.gold_answers)
        d["relations"] = list(self.relations) if self.relations is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionInstance":
        rel = d.get("relations")
        return cls(d["id"], d["text"], tuple(d["gold_answers"]), int(d["hop_count"]), d.get("split", "test"), d.get("template"), tuple(rel) if rel is not None else None)


def _is_file(source) -> bool:
    try:
        return isinstance(source, (str, os.PathLike)) and Path(source).is_file()
    except OSError:
        return False


def _lines(source) -> Iterable[str]:
    if _is_file(source):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    elif isinstance(source, str):
        yield from io.StringIO(source)
    else:
        for line in source:
            yield line.decode("utf-8") if isinstance(line, (bytes, bytearray)) else line


def load_questions(source, hop_count: int, split: str = "test", qtypes: Sequence[str] | None = None) -> list[QuestionInstance]:
    """Parse MetaQA ``question<TAB>ans1|ans2|...`` lines.

    ``qtypes`` optionally gives one question-type string per non-blank line
    (MetaQA ``qa_*_qtype.txt``), stored as :attr:`QuestionInstance.template`.
    """
    if hop_count not in (1, 2, 3):
        raise ValueError("hop_count must be 1, 2 or 3")
    out = []
    for line_no, line in enumerate(_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise QuestionFormatError(line_no, "missing tab between question and answers")
        text, answers = line.split("\t", 1)
        gold = tuple(dict.fromkeys(a.strip() for a in answers.split("|") if a.strip()))
        if not gold:
            raise QuestionFormatError(line_no, "no answers")
        out.append(QuestionInstance(f"{split}-{hop_count}hop-{line_no:06d}", text.strip(), gold, hop_count, split))
    if qtypes is not None:
        qtypes = [q.strip() for q in qtypes if q.strip()]
        if len(qtypes) != len(out):
            raise ValueError(f"{len(qtypes)} question types for {len(out)} questions")
        out = [QuestionInstance(q.id, q.text, q.gold_answers, q.hop_count, q.split, t) for q, t in zip(out, qtypes)]
    return out


@dataclass(frozen=True)
class QuestionScore:
    hit: int
    precision: float
    recall: float
    f1: float
    true_positives: int
    n_predicted: int
    n_gold: int


def score_question(predicted: Iterable[str], gold: Iterable[str]) -> QuestionScore:
    pred = {p.strip() for p in predicted} - {""}
    ref = {g.strip() for g in gold} - {""}
    tp = len(pred & ref)
    p = tp / len(pred) if pred else 0.0
    r = tp / len(ref) if ref else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return QuestionScore(int(tp > 0), p, r, f, tp, len(pred), len(ref))


@dataclass
class QuestionRecord:
    question_id: str
    hop: int
    predicted: list[str]
    gold: list[str]
    hit: int
    precision: float
    recall: float
    f1: float
    true_positives: int
    n_predicted: int
    n_gold: int
    time_s: float = 0.0
    nodes_expanded: float = 0.0
    cost_usd: Optional[float] = None
    error: Optional[str] = None
    group: Optional[str] = None
    detail: dict = field(default_factory=dict)


def make_record(q: QuestionInstance, predicted: Sequence[str], **kw) -> QuestionRecord:
    s = score_question(predicted, q.gold_answers)
    return QuestionRecord(
        q.id, q.hop_count, sorted(set(predicted)), list(q.gold_answers),
        s.hit, s.precision, s.recall, s.f1, s.true_positives, s.n_predicted, s.n_gold,
        group=q.template, **kw,
    )


@dataclass
class EvalRow:
    method: str
    hop: int
    n: int
    hit_rate: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    avg_time_s: float
    avg_nodes_expanded: float
    cost_per_query_usd: Optional[float]
    failures: int = 0


def aggregate(records: Sequence[QuestionRecord], method: str = "", hop: int = 0, macro: str = "question") -> EvalRow:
    """Pool counts across questions (micro) and average per-question F1 (macro).

    ``macro="template"`` averages F1 within each question template first, then
    across templates.
    """
    if not records:
        raise ValueError("no records to aggregate")
    recs = sorted(records, key=lambda r: r.question_id)
    tp = sum(r.true_positives for r in recs)
    n_pred = sum(r.n_predicted for r in recs)
    n_gold = sum(r.n_gold for r in recs)
    p = tp / n_pred if n_pred else 0.0
    rc = tp / n_gold if n_gold else 0.0
    f = 2 * p * rc / (p + rc) if p + rc else 0.0
    n = len(recs)
    if macro == "question":
        macro_f1 = sum(r.f1 for r in recs) / n
    elif macro == "template":
        groups: dict[str, list[float]] = {}
        for r in recs:
            groups.setdefault(r.group or "", []).append(r.f1)
        macro_f1 = sum(sum(v) / len(v) for v in groups.values()) / len(groups)
    else:
        raise ValueError(f"unknown macro mode {macro!r}")
    costs = [r.cost_usd for r in recs if r.cost_usd is not None]
    return EvalRow(
        method=method,
        hop=hop,
        n=n,
        hit_rate=sum(r.hit for r in recs) / n,
        macro_f1=macro_f1,
        micro_precision=p,
        micro_recall=rc,
        micro_f1=f,
        avg_time_s=sum(r.time_s for r in recs) / n,
        avg_nodes_expanded=sum(r.nodes_expanded for r in recs) / n,
        cost_per_query_usd=(sum(costs) / n) if costs else None,
        failures=sum(1 for r in recs if r.error),
    )


@dataclass
class EvalReport:
    rows: list[EvalRow]
    records: list[QuestionRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.records if r.error)

    def row(self, method: str, hop: int) -> EvalRow:
        for r in self.rows:
            if r.method == method and r.hop == hop:
                return r
        raise KeyError((method, hop))

    def to_dict(self) -> dict:
        return {"meta": self.meta, "rows": [asdict(r) for r in self.rows], "records": [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls([EvalRow(**r) for r in d["rows"]], [QuestionRecord(**r) for r in d["records"]], d.get("meta", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def table1_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE1_COLUMNS)
        for r in self.rows:
            w.writerow([r.method, f"{r.hop}-hop", f"{r.hit_rate:.3f}", f"{r.macro_f1:.3f}", f"{r.micro_precision:.3f}", f"{r.micro_recall:.3f}", f"{r.micro_f1:.3f}", f"{r.avg_time_s:.3f}"])
        return buf.getvalue()

    def table2_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE2_COLUMNS)
        for r in self.rows:
            cost = "--" if r.cost_per_query_usd is None else f"{r.cost_per_query_usd:.6f}"
            w.writerow([r.method, f"{r.hop}-hop", f"{r.avg_nodes_expanded:.3f}", f"{r.avg_time_s:.3f}", cost])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        """Write ``<path>`` (JSON), ``<stem>.csv`` (accuracy table) and ``<stem>.efficiency.csv``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        path.with_suffix(".csv").write_text(self.table1_csv(), encoding="utf-8")
        path.with_suffix(".efficiency.csv").write_text(self.table2_csv(), encoding="utf-8")


@dataclass
class StrategyResult:
    answers: list[str]
    nodes_expanded: float = 0.0
    cost_usd: Optional[float] = None
    detail: dict = field(default_factory=dict)


class Strategy(Protocol):
    name: str

    def answer(self, q: QuestionInstance) -> StrategyResult: ...


def _run_one(strategy: Strategy, q: QuestionInstance) -> QuestionRecord:
    t0 = time.perf_counter()
    try:
        res = strategy.answer(q)
    except Exception as exc:  # scored as a miss, never fatal
        elapsed = time.perf_counter() - t0
        cost = None
        responses = getattr(exc, "responses", None)
        if responses:
            cost = sum(r.estimated_cost for r in responses)
        log.debug("question %s failed: %r", q.id, exc)
        return make_record(q, [], time_s=elapsed, cost_usd=cost, error=f"{type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - t0
    return make_record(q, res.answers, time_s=elapsed, nodes_expanded=res.nodes_expanded, cost_usd=res.cost_usd, detail=res.detail)


def run_benchmark(
    strategy: Strategy,
    questions: Sequence[QuestionInstance],
    parallelism: int = 1,
    output_path: str | Path | None = None,
    method: str | None = None,
    macro: str = "question",
) -> EvalReport:
    """Answer every question, score it, and aggregate one row per hop level."""
    if output_path is not None:
        out = Path(output_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.is_dir():
            raise IsADirectoryError(f"report path {out} is a directory")
        if not os.access(out.parent, os.W_OK) or (out.exists() and not os.access(out, os.W_OK)):
            raise PermissionError(f"cannot write report to {out}")
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(lambda q: _run_one(strategy, q), questions))
    else:
        records = [_run_one(strategy, q) for q in questions]
    records.sort(key=lambda r: r.question_id)
    name = method or strategy.name
    rows = [aggregate([r for r in records if r.hop == h], name, h, macro) for h in sorted({r.hop for r in records})]
    report = EvalReport(rows, records, {"method": name, "questions": len(records), "failures": sum(1 for r in records if r.error)})
    if output_path is not None:
        report.write(output_path)
    return report


def merge_reports(reports: Iterable[EvalReport]) -> EvalReport:
    rows, records = [], []
    for r in reports:
        rows.extend(r.rows)
        records.extend(r.records)
    return EvalReport(rows, records, {"methods": sorted({r.method for r in rows})})
