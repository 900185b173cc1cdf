"""Ordered subpartitions of the target keys and the regions they index.

A subpartition ``s`` is an ordered sequence of disjoint nonempty blocks of
target keys. When the blocks cover all keys it labels the region ``R_s`` of
time vectors whose coordinates are equal within blocks and strictly
increasing from block to block.
"""
from __future__ import annotations

import itertools
import math
import re
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    DisjointnessError,
    DomainError,
    EmptySetError,
    EnumerationSizeError,
    ModelMismatchError,
)
from .mcore import IntensityModel, StateSet

DEFAULT_ENUMERATION_CAP = 8


def _block(A) -> tuple[int, ...]:
    if isinstance(A, (int, np.integer)):
        A = (A,)
    b = tuple(sorted(int(k) for k in A))
    if not b:
        raise EmptySetError("empty block")
    if len(set(b)) != len(b):
        raise DisjointnessError(f"repeated key in block {b}")
    return b


class SubPartition:
    """Ordered sequence of disjoint nonempty blocks of integer keys.

    ``s[n]`` is the ``n``-th block counted from zero; ``s.block(n)`` uses the
    one-based count. ``s + A`` appends a block, ``s - A`` removes the block
    equal to ``A``, ``s.left_shift(m)`` drops the first ``m`` blocks.
    """

    __slots__ = ("_blocks",)

    def __init__(self, blocks: Iterable = ()):
        bl = tuple(_block(b) for b in blocks)
        seen: set[int] = set()
        for b in bl:
            if seen.intersection(b):
                raise DisjointnessError(f"block {set(b)} overlaps earlier blocks")
            seen.update(b)
        self._blocks = bl

    @classmethod
    def singletons(cls, keys: Iterable[int]) -> "SubPartition":
        return cls((k,) for k in keys)

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        return self._blocks

    def keys(self) -> frozenset[int]:
        return frozenset(k for b in self._blocks for k in b)

    def __len__(self):
        return len(self._blocks)

    def __iter__(self):
        return iter(self._blocks)

    def __getitem__(self, n):
        if isinstance(n, slice):
            return SubPartition(self._blocks[n])
        return self._blocks[n]

    def block(self, n: int) -> tuple[int, ...]:
        """One-based block access ``s(n)``."""
        if not 1 <= n <= len(self):
            raise IndexError(f"block {n} out of range for |s| = {len(self)}")
        return self._blocks[n - 1]

    def left_shift(self, m: int = 1) -> "SubPartition":
        if not 0 <= m <= len(self):
            raise IndexError(f"cannot shift {m} blocks from |s| = {len(self)}")
        return SubPartition(self._blocks[m:])

    def remove_block(self, A) -> "SubPartition":
        """``s - A``: drop the block equal to ``A`` (a set of keys)."""
        A = _block(A)
        if A not in self._blocks:
            raise ConsistencyError(f"{set(A)} is not a block of {self}")
        return SubPartition(b for b in self._blocks if b != A)

    def remove_index(self, n: int) -> "SubPartition":
        """``s - s(n)`` with one-based ``n``."""
        return self.remove_block(self.block(n))

    def add_block(self, A) -> "SubPartition":
        """``s + A``: append ``A`` as the last block."""
        A = _block(A)
        if self.keys().intersection(A):
            raise DisjointnessError(f"{set(A)} overlaps {self}")
        return SubPartition(self._blocks + (A,))

    def concat(self, other: "SubPartition") -> "SubPartition":
        """Blocks of ``self`` followed by those of ``other`` (the union ``s1 u s2``)."""
        return SubPartition(self._blocks + tuple(other))

    def __add__(self, A):
        return self.add_block(A)

    def __sub__(self, A):
        if isinstance(A, SubPartition):
            out = self
            for b in A:
                out = out.remove_block(b)
            return out
        return self.remove_block(A)

    def without_singletons(self) -> "SubPartition":
        return SubPartition(b for b in self._blocks if len(b) > 1)

    def is_partition_of(self, K: Iterable[int]) -> bool:
        return self.keys() == frozenset(K)

    def __eq__(self, other):
        return isinstance(other, SubPartition) and self._blocks == other._blocks

    def __lt__(self, other):
        return self._blocks < other._blocks

    def __hash__(self):
        return hash(self._blocks)

    def __repr__(self):
        return f"SubPartition({[set(b) for b in self._blocks]})"

    def __str__(self):
        return render(self)


def render(s: SubPartition) -> str:
    """Textual form ``{2,3}<{1}``; the empty subpartition renders as ``()``."""
    if not len(s):
        return "()"
    return "<".join("{" + ",".join(str(k) for k in b) + "}" for b in s)


_BLOCK_RE = re.compile(r"\{([^{}]*)\}")


def parse(text: str) -> SubPartition:
    """Inverse of :func:`render`; whitespace is ignored."""
    t = re.sub(r"\s+", "", text)
    if t in ("", "()"):
        return SubPartition()
    parts = t.split("<")
    blocks = []
    for p in parts:
        m = _BLOCK_RE.fullmatch(p)
        if not m or not m.group(1):
            raise ValueError(f"malformed region {text!r}")
        try:
            blocks.append([int(x) for x in m.group(1).split(",")])
        except ValueError:
            raise ValueError(f"malformed region {text!r}") from None
    return SubPartition(blocks)


def union_targets(model: IntensityModel, s: SubPartition | Iterable[int]) -> StateSet:
    """``S(s)``: union of ``Gamma_k`` over every key in ``s``."""
    keys = s.keys() if isinstance(s, SubPartition) else frozenset(s)
    out = StateSet.empty(model.n)
    for k in sorted(keys):
        out = out | model.target(k)
    return out


def intersect_targets(model: IntensityModel, block: Iterable[int]) -> StateSet:
    out = StateSet.full(model.n)
    for k in block:
        out = out & model.target(k)
    return out


def as_time_map(t, keys: Sequence[int] | None = None) -> dict[int, float]:
    """Coerce a mapping or a sequence (in ``keys`` order) into ``{k: t_k}``."""
    if isinstance(t, Mapping):
        out = {int(k): float(v) for k, v in t.items()}
    else:
        vals = [float(x) for x in np.atleast_1d(np.asarray(t, dtype=float))]
        if keys is None:
            keys = range(1, len(vals) + 1)
        keys = list(keys)
        if len(keys) != len(vals):
            raise ModelMismatchError(f"{len(vals)} times for {len(keys)} keys")
        out = dict(zip(keys, vals))
    for k, v in out.items():
        if not math.isfinite(v) or v < 0:
            raise DomainError(f"time for key {k} must be finite and nonnegative, got {v}")
    return out


def classify(t, keys: Sequence[int] | None = None, tie_tol: float = 0.0) -> SubPartition:
    """The unique full partition ``s`` with ``t`` in ``R_s``.

    Blocks group equal times and are ordered by increasing common value.
    With ``tie_tol > 0`` sorted neighbours closer than ``tie_tol`` are merged
    (chained), which is off by default.
    """
    tm = as_time_map(t, keys)
    if not tm:
        return SubPartition()
    order = sorted(tm, key=lambda k: (tm[k], k))
    blocks = [[order[0]]]
    prev = tm[order[0]]
    for k in order[1:]:
        v = tm[k]
        if v == prev or (tie_tol > 0 and v - prev <= tie_tol):
            blocks[-1].append(k)
        else:
            blocks.append([k])
        prev = v
    return SubPartition(blocks)


def in_region(t, s: SubPartition, keys: Sequence[int] | None = None) -> bool:
    tm = as_time_map(t, keys)
    if frozenset(tm) != s.keys():
        return False
    reps = []
    for b in s:
        vals = {tm[k] for k in b}
        if len(vals) != 1:
            return False
        reps.append(vals.pop())
    return all(a < b for a, b in zip(reps, reps[1:]))


def fubini(n: int) -> int:
    """Number of ordered set partitions of an ``n``-element set."""
    a = [1]
    for m in range(1, n + 1):
        a.append(sum(math.comb(m, j) * a[m - j] for j in range(1, m + 1)))
    return a[n]


def enumerate_partitions(K: Iterable[int], cap: int = DEFAULT_ENUMERATION_CAP) -> list[SubPartition]:
    """All ordered set partitions of ``K``, each once, in lexicographic order."""
    keys = sorted(set(int(k) for k in K))
    if not keys:
        raise EmptySetError("cannot enumerate partitions of the empty set")
    if len(keys) > cap:
        raise EnumerationSizeError(
            f"|K| = {len(keys)} exceeds the enumeration cap {cap} ({fubini(len(keys))} regions)")
    parts: list[list[list[int]]] = [[]]
    for k in keys:
        nxt = []
        for p in parts:
            for i in range(len(p)):
                q = [list(b) for b in p]
                q[i].append(k)
                nxt.append(q)
            for g in range(len(p) + 1):
                nxt.append([list(b) for b in p[:g]] + [[k]] + [list(b) for b in p[g:]])
        parts = nxt
    return sorted(SubPartition(p) for p in parts)


def unordered_partitions(items: Sequence) -> list[list[list]]:
    """All set partitions of ``items`` (blocks unordered), as nested lists."""
    items = list(items)
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for p in unordered_partitions(rest):
        out.append([[first]] + p)
        for i in range(len(p)):
            out.append(p[:i] + [[first] + p[i]] + p[i + 1:])
    return out


def waiting_target_sets(model: IntensityModel, s: SubPartition) -> list[tuple[StateSet, StateSet]]:
    """Pairs ``(W_n, T_n)`` for ``n = 1..|s|``.

    ``W_n`` is the complement of the targets still pending before the
    ``n``-th block is hit; ``T_n`` is the part of ``cap_{k in s(n)} Gamma_k``
    that lies outside every target still pending afterwards.
    """
    W = [~union_targets(model, s.left_shift(n)) for n in range(len(s) + 1)]
    return [(W[n], intersect_targets(model, s[n]) & W[n + 1]) for n in range(len(s))]


def subpermutations(n: int) -> list[tuple[int, ...]]:
    """All injective sequences from ``{1..n}``, shortest first."""
    out = []
    for r in range(n + 1):
        out.extend(itertools.permutations(range(1, n + 1), r))
    return out
