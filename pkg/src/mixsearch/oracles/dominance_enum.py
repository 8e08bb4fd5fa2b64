"""Brute-force non-dominated set enumerator.

Compares score vectors componentwise on their 4-decimal string forms via
``decimal.Decimal``, an arithmetic path the production archive does not
use, and filters the full cross product of pairs.  Quadratic and proud
of it.

Standalone usage:

    python -m mixsearch.oracles.dominance_enum points.json

where points.json maps labels to 3-vectors, e.g.
``{"base": [2.76, 4.6667, 3.43], "it2": [4.4567, 4.33, 3.7033]}``.
Prints the non-dominated labels, one per line, sorted.
"""
from __future__ import annotations

import json
import sys
from decimal import Decimal

_QUANTUM = Decimal("0.0001")


def _exact(vector: list[float] | tuple[float, ...]) -> tuple[Decimal, ...]:
    return tuple(Decimal(repr(float(v))).quantize(_QUANTUM) for v in vector)


def strictly_better(a, b) -> bool:
    """True when ``a`` dominates ``b``: at least as good everywhere,
    strictly better somewhere, at 4-decimal resolution."""
    ea, eb = _exact(a), _exact(b)
    if len(ea) != len(eb):
        raise ValueError("vectors must have equal length")
    return all(x >= y for x, y in zip(ea, eb)) and any(x > y for x, y in zip(ea, eb))


def non_dominated(points: dict[str, tuple[float, ...]]) -> set[str]:
    """Labels of points no other point dominates."""
    survivors = set()
    for label, vector in points.items():
        if not any(
            strictly_better(other, vector)
            for other_label, other in points.items()
            if other_label != label
        ):
            survivors.add(label)
    return survivors


def main(argv: list[str]) -> int:
    if len(argv) != 1:
        print(__doc__, file=sys.stderr)
        return 2
    with open(argv[0], "r", encoding="utf-8") as handle:
        points = {label: tuple(vec) for label, vec in json.load(handle).items()}
    for label in sorted(non_dominated(points)):
        print(label)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
