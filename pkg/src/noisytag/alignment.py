"""Levenshtein distance, optimal character alignment, and character error rate.

Edits are unit cost.  The backtrace resolves ties with the fixed
preference Match > Substitute > Delete > Insert so downstream confusion
counts are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class EditOp:
    """Single character edit: kind is match, substitute, delete, or insert.

    ``src`` is the source-side character (None for insert), ``dst`` the
    target-side character (None for delete).
    """

    kind: str
    src: str | None
    dst: str | None


def match(c: str) -> EditOp:
    return EditOp("match", c, c)


def substitute(c: str, d: str) -> EditOp:
    return EditOp("substitute", c, d)


def delete(c: str) -> EditOp:
    return EditOp("delete", c, None)


def insert(d: str) -> EditOp:
    return EditOp("insert", None, d)


@dataclass(frozen=True)
class Alignment:
    ops: tuple[EditOp, ...]
    cost: int


def levenshtein_distance(a: str, b: str) -> int:
    """Minimal number of insertions, deletions, and substitutions a -> b."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(
                min(
                    prev[j - 1] + (ca != cb),
                    prev[j] + 1,
                    cur[j - 1] + 1,
                )
            )
        prev = cur
    return prev[len(b)]


def align(a: str, b: str) -> Alignment:
    """Optimal edit script transforming ``a`` into ``b``."""
    n, m = len(a), len(b)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, above = dist[i], dist[i - 1]
        ca = a[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                above[j - 1] + (ca != b[j - 1]),
                above[j] + 1,
                row[j - 1] + 1,
            )

    ops: list[EditOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and here == dist[i - 1][j - 1]:
            ops.append(match(a[i - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == dist[i - 1][j - 1] + 1:
            ops.append(substitute(a[i - 1], b[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and here == dist[i - 1][j] + 1:
            ops.append(delete(a[i - 1]))
            i -= 1
        else:
            ops.append(insert(b[j - 1]))
            j -= 1
    ops.reverse()
    return Alignment(tuple(ops), dist[n][m])


def replay(a: str, ops: Sequence[EditOp]) -> str:
    """Apply an edit script to ``a``; inverse check for :func:`align`."""
    out = []
    i = 0
    for op in ops:
        if op.kind == "match" or op.kind == "substitute":
            if i >= len(a) or a[i] != op.src:
                raise ValueError(f"op {op} does not fit source at position {i}")
            out.append(op.dst)
            i += 1
        elif op.kind == "delete":
            if i >= len(a) or a[i] != op.src:
                raise ValueError(f"op {op} does not fit source at position {i}")
            i += 1
        else:
            out.append(op.dst)
    if i != len(a):
        raise ValueError(f"edit script consumed {i} of {len(a)} source characters")
    return "".join(out)


def character_error_rate(pairs: Iterable[tuple[str, str]]) -> float:
    """Total edit count over total clean length for (noisy, clean) pairs."""
    edits = 0
    reference = 0
    for noisy, clean in pairs:
        edits += levenshtein_distance(noisy, clean)
        reference += len(clean)
    if reference == 0:
        raise ValueError("character error rate undefined: zero reference length")
    return edits / reference
