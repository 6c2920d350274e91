"""Subset combinatorics over the description index set {1..L}.

Description sets are plain ``frozenset`` objects of 1-based indices.  Families
of sets are tuples in canonical order: by cardinality, then lexicographically
on the sorted members.  Enumeration goes through bitmasks, which is why ``L``
is capped at :data:`MAX_L`.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable

MAX_L = 8

DescriptionSet = frozenset
SubsetFamily = tuple


def _check_L(L: int) -> None:
    if not isinstance(L, int) or not 1 <= L <= MAX_L:
        raise ValueError(f"L must be an integer in [1, {MAX_L}], got {L!r}")


def canonical_key(s: Iterable[int]) -> tuple:
    members = tuple(sorted(s))
    return (len(members), members)


def canonical(family: Iterable[Iterable[int]]) -> SubsetFamily:
    """Deduplicate and sort a family of sets into canonical order."""
    return tuple(sorted({frozenset(s) for s in family}, key=canonical_key))


def full_set(L: int) -> DescriptionSet:
    _check_L(L)
    return frozenset(range(1, L + 1))


def as_set(members: Iterable[int], L: int | None = None) -> DescriptionSet:
    s = frozenset(int(m) for m in members)
    if L is not None:
        _check_L(L)
        bad = [m for m in s if not 1 <= m <= L]
        if bad:
            raise ValueError(f"indices {sorted(bad)} outside 1..{L}")
    return s


def to_mask(s: Iterable[int]) -> int:
    mask = 0
    for m in s:
        mask |= 1 << (m - 1)
    return mask


def from_mask(mask: int) -> DescriptionSet:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return frozenset(out)


def label(s: Iterable[int]) -> str:
    """Compact label used in variable names, e.g. ``{1, 3} -> "13"``."""
    return "".join(str(m) for m in sorted(s))


def subsets_of(s: Iterable[int], *, nonempty: bool = True) -> SubsetFamily:
    """Power set of ``s`` (optionally without the empty set), canonical order."""
    members = sorted(s)
    start = 1 if nonempty else 0
    return tuple(
        frozenset(c)
        for w in range(start, len(members) + 1)
        for c in combinations(members, w)
    )


def nonempty_subsets(L: int) -> SubsetFamily:
    """All ``2**L - 1`` nonempty subsets of {1..L}."""
    _check_L(L)
    return subsets_of(range(1, L + 1))


def tier(L: int, W: int) -> SubsetFamily:
    """Subsets of {1..L} with exactly ``W`` members."""
    _check_L(L)
    if not 1 <= W <= L:
        raise ValueError(f"width W must be in [1, {L}], got {W}")
    return tuple(frozenset(c) for c in combinations(range(1, L + 1), W))


def tier_above(L: int, W: int) -> SubsetFamily:
    """Subsets of {1..L} with more than ``W`` members."""
    _check_L(L)
    if not 1 <= W <= L:
        raise ValueError(f"width W must be in [1, {L}], got {W}")
    return tuple(s for s in nonempty_subsets(L) if len(s) > W)


def _check_B(L: int, W: int, B: Iterable[int]) -> DescriptionSet:
    B = as_set(B, L)
    if not B:
        raise ValueError("B must be nonempty")
    if len(B) > W:
        raise ValueError(f"|B| = {len(B)} exceeds width W = {W}")
    return B


def tier_containing(L: int, W: int, B: Iterable[int]) -> SubsetFamily:
    """Width-``W`` subsets that contain ``B``."""
    B = _check_B(L, W, B)
    return tuple(s for s in tier(L, W) if B <= s)


def tier_above_containing(L: int, W: int, B: Iterable[int]) -> SubsetFamily:
    """Subsets wider than ``W`` that contain ``B``."""
    B = _check_B(L, W, B)
    return tuple(s for s in tier_above(L, W) if B <= s)


def sharing_sets(L: int, K: Iterable[int]) -> SubsetFamily:
    """Multi-description subsets meeting ``K``.

    These index the shared codewords a decoder sees when it receives the
    descriptions in ``K``.
    """
    K = as_set(K, L)
    if not K:
        raise ValueError("K must be nonempty")
    return tuple(s for s in nonempty_subsets(L) if len(s) > 1 and s & K)


def family_to_json(family: Iterable[Iterable[int]]) -> list[list[int]]:
    return [sorted(s) for s in canonical(family)]


def family_from_json(data: Iterable[Iterable[int]], L: int | None = None) -> SubsetFamily:
    return canonical(as_set(s, L) for s in data)
