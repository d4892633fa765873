"""Relation planning and the zero-shot answer baseline.

The planner asks an LLM for a hop-by-hop relation plan using a fixed prompt
template, then validates it against the graph's relation vocabulary. The
zero-shot baseline asks for answers directly and falls back to a second
"reformat as JSON" pass when the first completion is not parseable.
"""
from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .json_extract import JsonExtractionError, extract_json_object, extract_string_list
from .kg_store import REVERSE_SUFFIX
from .llm_client import ChatClient, LlmResponse

log = logging.getLogger(__name__)

MAX_SUPPORTED_HOPS = 3
MAX_RELATIONS_PER_HOP = 2
MAX_ZERO_SHOT_ANSWERS = 50

PLAN_PROMPT_TEMPLATE = "\n".join(
    (
        'You are analyzing a knowledge graph question ',
        'to determine which relations to traverse.',
        '',
        'Available relations in the knowledge graph:',
        '{available_relations}',
        '',
        'Question: "{question}"',
        '',
        'This is a {max_hops}-hop question. You need to select ',
        'which relation(s) might be relevant at EACH hop.',
        '',
        'For each hop, select 1-2 most relevant relations from ',
        'the list above. Think about the logical path needed ',
        'to answer the question.',
        '',
        'Examples:',
        '- "Who directed movies starring [Actor]?" ',
        '→ Hop 1: starred_actors, Hop 2: directed_by',
        '- "What genre are films written by [Writer]?" ',
        '→ Hop 1: written_by, Hop 2: has_genre',
        '- "What year were movies by the director of [Movie]?" ',
        '→ Hop 1: directed_by, Hop 2: release_year',
        '- "What films can be described by [occupation]?" ',
        '→ Hop 1: has_tags (films point TO tags/themes)',
        '- "What films can be described by [Person Name]?" ',
        '→ Hop 1: has_tags (films associated with person as tag)',
        '',
        'Respond in JSON format:',
        '{{',
        '  "reasoning": "brief explanation of the path",',
        '  "hops": [',
        '    ["relation1"],',
        '    ["relation2"],',
        '    ...',
        '  ]',
        '}}',
        '',
        'Provide your analysis:',
    )
)

PLAN_SYSTEM_PROMPT = "You plan relation paths over a knowledge graph. Reply with one JSON object."

PLAN_REPAIR_PROMPT = """\
The text below was meant to be a single JSON object of the form
{{"reasoning": "<string>", "hops": [["<relation>"], ...]}}
with exactly {max_hops} hop(s), using only these relations:
{available_relations}

Problem: {problem}

Text:
{raw}

Return only the corrected JSON object."""

# Wording is free-form; only the output contract (a JSON string array) matters.
ZERO_SHOT_SYSTEM_PROMPT = "You answer factual questions about movies from memory."
ZERO_SHOT_PROMPT = """\
Question: {question}

List every correct answer you know, most likely first, at most {limit} items.
Respond with a JSON array of strings only, for example ["answer one", "answer two"]."""
ZERO_SHOT_REFORMAT_PROMPT = """\
Convert the answers mentioned in the text below into a JSON array of strings.
Copy each answer exactly as written. Output only the array.

Text:
{raw}"""


class PlannerError(Exception):
    pass


class PlanParseError(PlannerError):
    """No usable JSON object in the completion."""


class PlanValidationError(PlannerError):
    def __init__(self, message: str, relation: str | None = None):
        self.relation = relation
        super().__init__(message)


class PlanningError(PlannerError):
    """Planning failed even after the repair pass."""

    def __init__(self, message: str, raw_texts: Sequence[str], responses: Sequence[LlmResponse] = ()):
        self.raw_texts = list(raw_texts)
        self.responses = list(responses)
        super().__init__(message)


class BaselineParseError(PlannerError):
    def __init__(self, raw_passes: Sequence[str], responses: Sequence[LlmResponse] = ()):
        self.raw_passes = list(raw_passes)
        self.responses = list(responses)
        super().__init__("zero-shot output unparseable after two passes")


class RelationVocabulary:
    """Name/id mapping for forward relations and their ``_reverse`` twins.

    Ids follow :mod:`kgqa.kg_store`: forward ``2i``, reverse ``2i + 1``.
    """

    def __init__(self, forward_names: Sequence[str]):
        if not forward_names:
            raise ValueError("relation vocabulary is empty")
        self.forward_names = list(forward_names)
        self.names: list[str] = []
        for n in self.forward_names:
            self.names += [n, n + REVERSE_SUFFIX]
        self._index = {n: i for i, n in enumerate(self.names)}

    @classmethod
    def of(cls, vocab) -> "RelationVocabulary":
        if isinstance(vocab, RelationVocabulary):
            return vocab
        if hasattr(vocab, "relation_vocabulary"):
            return cls(vocab.relation_vocabulary)
        return cls(list(vocab))

    def relation_id(self, name: str) -> int:
        return self._index[name]

    def relation_name(self, rid: int) -> str:
        return self.names[rid]

    def resolve(self, name: str) -> int | None:
        if name in self._index:
            return self._index[name]
        norm = re.sub(r"[\s\-]+", "_", name.strip().lower())
        norm = re.sub(r"_reversed?$", REVERSE_SUFFIX, norm)
        return self._index.get(norm)


@dataclass(frozen=True)
class RelationPlan:
    hops: tuple[tuple[int, ...], ...]
    reasoning: str = ""
    warnings: tuple[str, ...] = field(default=(), compare=False)
    responses: tuple[LlmResponse, ...] = field(default=(), compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.hops)

    def names(self, vocab) -> list[list[str]]:
        v = RelationVocabulary.of(vocab)
        return [[v.relation_name(r) for r in hop] for hop in self.hops]

    def to_json(self, vocab) -> str:
        return json.dumps({"reasoning": self.reasoning, "hops": self.names(vocab)}, ensure_ascii=False)

    def bidirectional(self) -> "RelationPlan":
        """Each hop extended with the opposite direction of every relation it names."""
        hops = tuple(tuple(sorted({x for r in hop for x in (r, r ^ 1)})) for hop in self.hops)
        return RelationPlan(hops, self.reasoning, self.warnings, self.responses)

    @property
    def cost(self) -> float:
        return sum(r.estimated_cost for r in self.responses)


@dataclass(frozen=True)
class ZeroShotAnswerSet:
    answers: tuple[str, ...]
    raw_passes: tuple[str, ...]
    responses: tuple[LlmResponse, ...] = field(default=(), compare=False, repr=False)

    @property
    def passes_used(self) -> int:
        return len(self.raw_passes)

    @property
    def cost(self) -> float:
        return sum(r.estimated_cost for r in self.responses)


def build_plan_prompt(question: str, relation_vocabulary: Sequence[str], max_hops: int) -> str:
    if max_hops not in (1, 2, 3):
        raise ValueError("max_hops must be 1, 2 or 3")
    if not relation_vocabulary:
        raise ValueError("relation vocabulary is empty")
    return PLAN_PROMPT_TEMPLATE.format(
        available_relations=", ".join(relation_vocabulary),
        question=question,
        max_hops=max_hops,
    )


def parse_plan(raw: str, vocabulary, max_hops: int) -> RelationPlan:
    """Extract and validate a plan object from an LLM completion.

    Plans with fewer hops than ``max_hops`` are rejected; extra hops and extra
    relations per hop are dropped with a warning.
    """
    vocab = RelationVocabulary.of(vocabulary)
    try:
        obj = extract_json_object(raw)
    except JsonExtractionError as exc:
        raise PlanParseError(str(exc)) from None
    hops_raw = obj.get("hops")
    if not isinstance(hops_raw, list) or not hops_raw:
        raise PlanValidationError("plan has no hops")
    reasoning = obj.get("reasoning", "")
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning)
    warnings = []
    if len(hops_raw) > max_hops:
        warnings.append(f"plan had {len(hops_raw)} hops; truncated to {max_hops}")
        hops_raw = hops_raw[:max_hops]
    if len(hops_raw) < max_hops:
        raise PlanValidationError(f"plan has {len(hops_raw)} hop(s) but the question needs {max_hops}")
    hops = []
    for d, hop in enumerate(hops_raw):
        if isinstance(hop, str):
            hop = [hop]
        if not isinstance(hop, list) or not hop:
            raise PlanValidationError(f"hop {d + 1} is empty or not a list")
        ids: list[int] = []
        for name in hop:
            if not isinstance(name, str):
                raise PlanValidationError(f"hop {d + 1} contains a non-string relation {name!r}")
            rid = vocab.resolve(name)
            if rid is None:
                raise PlanValidationError(f"unknown relation {name!r} at hop {d + 1}", relation=name)
            if rid not in ids:
                ids.append(rid)
        if len(ids) > MAX_RELATIONS_PER_HOP:
            warnings.append(f"hop {d + 1} named {len(ids)} relations; kept first {MAX_RELATIONS_PER_HOP}")
            ids = ids[:MAX_RELATIONS_PER_HOP]
        hops.append(tuple(ids))
    for w in warnings:
        log.warning(w)
    return RelationPlan(tuple(hops), reasoning, tuple(warnings))


def plan(client: ChatClient, question: str, max_hops: int, vocabulary) -> RelationPlan:
    """One planning call, plus one repair call if the first output is unusable."""
    vocab = RelationVocabulary.of(vocabulary)
    prompt = build_plan_prompt(question, vocab.forward_names, max_hops)
    first = client.complete(PLAN_SYSTEM_PROMPT, prompt)
    try:
        p = parse_plan(first.text, vocab, max_hops)
        return RelationPlan(p.hops, p.reasoning, p.warnings, (first,))
    except PlannerError as exc:
        problem = str(exc)
    repair = client.complete(
        PLAN_SYSTEM_PROMPT,
        PLAN_REPAIR_PROMPT.format(
            max_hops=max_hops,
            available_relations=", ".join(vocab.names),
            problem=problem,
            raw=first.text,
        ),
    )
    try:
        p = parse_plan(repair.text, vocab, max_hops)
    except PlannerError as exc:
        raise PlanningError(f"planning failed after repair: {exc}", [first.text, repair.text], [first, repair]) from exc
    return RelationPlan(p.hops, p.reasoning, p.warnings + ("repaired",), (first, repair))


def _dedupe(items: Iterable[str]) -> tuple[str, ...]:
    out = dict.fromkeys(s.strip() for s in items)
    out.pop("", None)
    return tuple(out)


def zero_shot_answers(client: ChatClient, question: str, limit: int = MAX_ZERO_SHOT_ANSWERS) -> ZeroShotAnswerSet:
    first = client.complete(ZERO_SHOT_SYSTEM_PROMPT, ZERO_SHOT_PROMPT.format(question=question, limit=limit))
    try:
        answers = extract_string_list(first.text)
        return ZeroShotAnswerSet(_dedupe(answers)[:limit], (first.text,), (first,))
    except JsonExtractionError:
        pass
    second = client.complete(ZERO_SHOT_SYSTEM_PROMPT, ZERO_SHOT_REFORMAT_PROMPT.format(raw=first.text))
    try:
        answers = extract_string_list(second.text)
    except JsonExtractionError:
        raise BaselineParseError([first.text, second.text], [first, second]) from None
    return ZeroShotAnswerSet(_dedupe(answers)[:limit], (first.text, second.text), (first, second))


def teacher_trace_records(questions: Iterable, plans: Iterable[RelationPlan], vocabulary) -> Iterable[dict]:
    """Pair each question with its plan as an instruction-tuning record.

    ``questions`` yields objects with ``text`` and ``hop_count`` attributes or
    ``(text, hop_count)`` tuples.
    """
    vocab = RelationVocabulary.of(vocabulary)
    for q, p in zip(questions, plans, strict=True):
        text, hops = (q.text, q.hop_count) if hasattr(q, "text") else q
        if len(p.hops) != hops:
            raise ValueError(f"plan for {text!r} has {len(p.hops)} hops, question has {hops}")
        yield {
            "instruction": build_plan_prompt(text, vocab.forward_names, hops),
            "input": "",
            "output": p.to_json(vocab),
        }


def export_teacher_traces(questions: Iterable, plans: Iterable[RelationPlan], vocabulary, path: str | Path) -> int:
    """Write teacher traces as JSON lines; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in teacher_trace_records(questions, plans, vocabulary):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def sample_per_hop(questions: Sequence, per_hop: int, seed: int = 0) -> list:
    """Uniform sample of up to ``per_hop`` questions from each hop level, seeded."""
    by_hop: dict[int, list] = {}
    for q in questions:
        by_hop.setdefault(q.hop_count, []).append(q)
    rng = random.Random(seed)
    out = []
    for hop in sorted(by_hop):
        group = by_hop[hop]
        out.extend(group if len(group) <= per_hop else rng.sample(group, per_hop))
    return out
