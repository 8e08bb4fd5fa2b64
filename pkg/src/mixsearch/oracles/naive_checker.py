"""Brute-force constraint checker used to cross-check the production verifier.

Implements the declared constraint semantics with character-level scans
and plain loops.  No regular expressions, no shared helpers with the
production path.

Standalone usage:

    python -m mixsearch.oracles.naive_checker response.txt specs.json

where specs.json is a list of objects like
``{"family": "LENGTH", "parameters": {"min_words": 10}}``.
Prints one ``PASS``/``FAIL`` line per spec.
"""
from __future__ import annotations

import json
import sys

_WORD_CHARS = set("abcdefghijklmnopqrstuvwxyz0123456789_")


def _count_words(text: str) -> int:
    count = 0
    in_word = False
    for ch in text:
        if ch.isspace():
            in_word = False
        elif not in_word:
            in_word = True
            count += 1
    return count


def _occurs_on_word_boundary(text: str, keyword: str) -> bool:
    """Case-insensitive substring search requiring non-word characters on
    both sides of the match."""
    hay = text.lower()
    needle = keyword.lower()
    if not needle:
        return False
    start = 0
    while True:
        pos = hay.find(needle, start)
        if pos < 0:
            return False
        before_ok = pos == 0 or hay[pos - 1] not in _WORD_CHARS
        end = pos + len(needle)
        after_ok = end >= len(hay) or hay[end] not in _WORD_CHARS
        if before_ok and after_ok:
            return True
        start = pos + 1


def _nonempty_lines(text: str) -> list[str]:
    return [line.strip() for line in text.splitlines() if line.strip()]


def _is_bullet_list(text: str) -> bool:
    lines = _nonempty_lines(text)
    if not lines:
        return False
    for line in lines:
        if not (line.startswith("- ") or line.startswith("* ")):
            return False
    return True


def _is_numbered_list(text: str) -> bool:
    lines = _nonempty_lines(text)
    if not lines:
        return False
    for line in lines:
        i = 0
        while i < len(line) and line[i].isdigit():
            i += 1
        if i == 0 or i >= len(line) or line[i] not in ".)":
            return False
    return True


def _is_json(text: str) -> bool:
    try:
        json.loads(text)
    except ValueError:
        return False
    return True


def _count_units(text: str, unit: str) -> int:
    lines = _nonempty_lines(text)
    if unit == "sections":
        return sum(1 for line in lines if line.startswith("#"))
    if unit == "bullets":
        return sum(1 for line in lines if line.startswith("- ") or line.startswith("* "))
    raise ValueError(f"unknown structure unit {unit!r}")


def _within(value: int, minimum, maximum) -> bool:
    if minimum is not None and value < minimum:
        return False
    if maximum is not None and value > maximum:
        return False
    return True


def naive_verdict(text: str, family: str, parameters: dict) -> bool:
    """Evaluate one constraint spec against a response text."""
    if family == "LENGTH":
        return _within(
            _count_words(text), parameters.get("min_words"), parameters.get("max_words")
        )
    if family == "INCLUSION":
        return all(_occurs_on_word_boundary(text, kw) for kw in parameters["keywords"])
    if family == "EXCLUSION":
        return not any(_occurs_on_word_boundary(text, kw) for kw in parameters["keywords"])
    if family == "FORMAT":
        kind = parameters["kind"]
        if kind == "json":
            return _is_json(text)
        if kind == "bullet_list":
            return _is_bullet_list(text)
        if kind == "numbered_list":
            return _is_numbered_list(text)
        raise ValueError(f"unknown format kind {kind!r}")
    if family == "STRUCTURE":
        return _within(
            _count_units(text, parameters["unit"]),
            parameters.get("min_count"),
            parameters.get("max_count"),
        )
    raise ValueError(f"unknown constraint family {family!r}")


def naive_verdicts(text: str, specs: list[dict]) -> list[bool]:
    return [naive_verdict(text, spec["family"], spec["parameters"]) for spec in specs]


def main(argv: list[str]) -> int:
    if len(argv) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    with open(argv[0], "r", encoding="utf-8") as handle:
        text = handle.read()
    with open(argv[1], "r", encoding="utf-8") as handle:
        specs = json.load(handle)
    for spec, ok in zip(specs, naive_verdicts(text, specs)):
        print(f"{spec['family']}: {'PASS' if ok else 'FAIL'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
