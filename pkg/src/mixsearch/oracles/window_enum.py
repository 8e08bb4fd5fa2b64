"""Reference enumerator and coverage checker for document windowing.

``expected_windows`` lists (start, length) pairs by direct range
arithmetic; ``check_coverage`` independently verifies that a proposed
window list touches every token position and respects the declared
geometry.  Tests run both against the production splitter.

Standalone usage:

    python -m mixsearch.oracles.window_enum TOKEN_COUNT WINDOW_LENGTH STRIDE

Prints one ``start length`` pair per line.
"""
from __future__ import annotations

import sys


def expected_windows(token_count: int, window_length: int, stride: int) -> list[tuple[int, int]]:
    if token_count < 1 or window_length < 1 or not 1 <= stride <= window_length:
        raise ValueError("need token_count >= 1, window_length >= 1, 1 <= stride <= window_length")
    starts = range(0, token_count, stride)
    return [(start, min(window_length, token_count - start)) for start in starts]


def check_coverage(
    windows: list[tuple[int, int]], token_count: int, window_length: int, stride: int
) -> None:
    """Raise AssertionError unless ``windows`` is a valid covering layout."""
    assert windows, "no windows for a non-empty document"
    covered = [False] * token_count
    previous_start = None
    for start, length in windows:
        assert 0 <= start < token_count, f"start {start} outside document"
        assert 1 <= length <= window_length, f"length {length} outside (0, {window_length}]"
        assert start + length <= token_count, f"window ({start}, {length}) overruns document"
        if previous_start is not None:
            assert start - previous_start == stride, (
                f"start {start} does not advance by stride {stride}"
            )
        previous_start = start
        for position in range(start, start + length):
            covered[position] = True
    missing = [position for position, seen in enumerate(covered) if not seen]
    assert not missing, f"uncovered token positions: {missing[:5]}..."


def main(argv: list[str]) -> int:
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    token_count, window_length, stride = (int(a) for a in argv)
    for start, length in expected_windows(token_count, window_length, stride):
        print(start, length)
    return 0


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
