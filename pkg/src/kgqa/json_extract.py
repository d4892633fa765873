"""Pull JSON values out of chatty LLM completions."""
from __future__ import annotations

import ast
import json
from typing import Any, Iterator

_SMART_QUOTES = str.maketrans({"“": '"', "”": '"', "‘": "'", "’": "'"})


class JsonExtractionError(ValueError):
    pass


def balanced_spans(text: str, opener: str) -> Iterator[str]:
    """Yield each balanced ``{...}`` / ``[...]`` substring, scanning string literals correctly.

    Spans are produced in order of their opening character. A span that never
    closes (a truncated completion) is not produced.
    """
    closer = {"{": "}", "[": "]"}[opener]
    start = text.find(opener)
    while start != -1:
        stack = []
        in_str = False
        quote = ""
        escape = False
        end = -1
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == quote:
                    in_str = False
                continue
            if ch in "\"'" and (ch == '"' or _opens_single_quote(text, i)):
                in_str = True
                quote = ch
            elif ch in "{[":
                stack.append(ch)
            elif ch in "}]":
                if not stack or {"{": "}", "[": "]"}[stack[-1]] != ch:
                    break
                stack.pop()
                if not stack:
                    end = i
                    break
        if end != -1 and text[end] == closer:
            yield text[start : end + 1]
        start = text.find(opener, start + 1)


def _opens_single_quote(text: str, i: int) -> bool:
    # Treat ' as a string delimiter only where a JSON-ish value could start,
    # so apostrophes inside prose ("don't") are ignored.
    j = i - 1
    while j >= 0 and text[j] in " \t\r\n":
        j -= 1
    return j >= 0 and text[j] in "{[,:"


def strip_trailing_commas(s: str) -> str:
    out = []
    in_str = False
    escape = False
    i = 0
    while i < len(s):
        ch = s[i]
        if in_str:
            out.append(ch)
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
            out.append(ch)
        elif ch == ",":
            j = i + 1
            while j < len(s) and s[j] in " \t\r\n":
                j += 1
            if j < len(s) and s[j] in "}]":
                i += 1
                continue
            out.append(ch)
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def loads_lenient(candidate: str) -> Any:
    """``json.loads`` with light repairs: smart quotes, trailing commas, Python literals."""
    try:
        return json.loads(candidate)
    except json.JSONDecodeError:
        pass
    fixed = strip_trailing_commas(candidate.translate(_SMART_QUOTES))
    try:
        return json.loads(fixed)
    except json.JSONDecodeError:
        pass
    try:
        value = ast.literal_eval(fixed)
    except (ValueError, SyntaxError, MemoryError, RecursionError):
        raise JsonExtractionError(f"unparseable JSON candidate: {candidate[:120]!r}") from None
    if not isinstance(value, (dict, list)):
        raise JsonExtractionError("candidate is not an object or array")
    return value


def extract_json_object(text: str) -> dict:
    """Return the first balanced JSON object in ``text`` that parses (after repair)."""
    text = text.translate(_SMART_QUOTES)
    for span in balanced_spans(text, "{"):
        try:
            value = loads_lenient(span)
        except JsonExtractionError:
            continue
        if isinstance(value, dict):
            return value
    raise JsonExtractionError("no JSON object found")


def extract_string_list(text: str) -> list[str]:
    """Return the first JSON array of strings in ``text``.

    An object carrying such an array under ``answers`` is accepted too.
    """
    text = text.translate(_SMART_QUOTES)
    candidates = []
    for opener in "[{":
        for span in balanced_spans(text, opener):
            candidates.append((text.find(span), span))
    for _, span in sorted(candidates, key=lambda c: c[0]):
        try:
            value = loads_lenient(span)
        except JsonExtractionError:
            continue
        if isinstance(value, dict):
            value = value.get("answers")
        if isinstance(value, list) and all(isinstance(v, (str, int, float)) and not isinstance(v, bool) for v in value):
            return [str(v) for v in value]
    raise JsonExtractionError("no JSON string array found")
