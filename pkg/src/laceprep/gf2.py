"""Linear algebra over GF(2) with Python ints as row bitsets."""

from __future__ import annotations

from typing import Iterable, Sequence


def bits(indices: Iterable[int]) -> int:
    v = 0
    for i in indices:
        v ^= 1 << i
    return v


def support(v: int) -> list[int]:
    out = []
    i = 0
    while v:
        if v & 1:
            out.append(i)
        v >>= 1
        i += 1
    return out


def reduce_rows(rows: Sequence[int]) -> tuple[list[int], list[int]]:
    """Row echelon basis and pivot bit of each basis row."""
    basis: list[int] = []
    pivots: list[int] = []
    for r in rows:
        for b, p in zip(basis, pivots):
            if r >> p & 1:
                r ^= b
        if r:
            p = r.bit_length() - 1
            for k in range(len(basis)):
                if basis[k] >> p & 1:
                    basis[k] ^= r
            basis.append(r)
            pivots.append(p)
    return basis, pivots


def rank(rows: Sequence[int]) -> int:
    return len(reduce_rows(rows)[0])


def in_span(v: int, basis: Sequence[int], pivots: Sequence[int]) -> bool:
    for b, p in zip(basis, pivots):
        if v >> p & 1:
            v ^= b
    return v == 0


def solve(columns: Sequence[int], target: int) -> int | None:
    """Find ``c`` (bitset over column indices) with ``XOR_{k in c} columns[k] == target``."""
    basis: list[int] = []
    combo: list[int] = []
    pivots: list[int] = []
    for k, col in enumerate(columns):
        c = 1 << k
        for b, m, p in zip(basis, combo, pivots):
            if col >> p & 1:
                col ^= b
                c ^= m
        if col:
            basis.append(col)
            combo.append(c)
            pivots.append(col.bit_length() - 1)
    out = 0
    for b, m, p in zip(basis, combo, pivots):
        if target >> p & 1:
            target ^= b
            out ^= m
    if target:
        return None
    return out


def nullspace(columns: Sequence[int]) -> list[int]:
    """Basis of ``{c : XOR_{k in c} columns[k] == 0}``."""
    basis: list[int] = []
    combo: list[int] = []
    pivots: list[int] = []
    null: list[int] = []
    for k, col in enumerate(columns):
        c = 1 << k
        for b, m, p in zip(basis, combo, pivots):
            if col >> p & 1:
                col ^= b
                c ^= m
        if col:
            basis.append(col)
            combo.append(c)
            pivots.append(col.bit_length() - 1)
        else:
            null.append(c)
    return null
