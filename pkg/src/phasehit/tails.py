"""Tail probabilities of hitting times, including equality constraints.

A :class:`TailQuery` ``(s1, s2, t)`` is the event that

* for each block of ``s1`` the hitting times of its keys coincide and exceed
  the matching entry of ``t``,
* for each block of ``s2`` the hitting times of its keys coincide,
* blocks with two or more keys are hit at finite, pairwise distinct times.

A coincidence always means a common finite value. Single-key blocks of
``s2`` impose nothing and are dropped. Single-key blocks of ``s1`` only
carry their threshold (``tau_k = inf`` is allowed). Events with an exact
pattern of equalities and inequalities among the keys are reduced to these
queries by :func:`canonicalize`.

The tail vector ``p(s1, s2, t)`` is a column over start states with
``P_alpha(event) = alpha @ p``. It is computed from the recursion that
conditions on the first time an ``s2`` block is completed before ``t_1``,
and on the state at ``t_1`` otherwise.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import (
    ConsistencyError,
    DisjointnessError,
    DomainError,
    EnumerationSizeError,
    PreconditionError,
)
from .expmat import ExpmWorkspace, QuadratureRule, integrate, solve
from .hitting import region_mass_vector, require_absorbing
from .mcore import IntensityModel, StateSet, mask, reach_within
from .partitions import (
    SubPartition,
    intersect_targets,
    subpermutations,
    union_targets,
    unordered_partitions,
)

KEY_DIGITS = 12


@dataclass(frozen=True)
class TailQuery:
    """Extended tail event ``(s1, s2, t)``; see the module docstring.

    ``t`` has one entry per ``s1`` block and must be non-decreasing (equal
    consecutive thresholds are accepted).
    """

    s1: SubPartition
    s2: SubPartition = field(default_factory=SubPartition)
    t: tuple[float, ...] = ()

    def __post_init__(self):
        s1 = self.s1 if isinstance(self.s1, SubPartition) else SubPartition(self.s1)
        s2 = self.s2 if isinstance(self.s2, SubPartition) else SubPartition(self.s2)
        t = tuple(float(x) for x in np.atleast_1d(np.asarray(self.t, dtype=float))) if len(s1) else ()
        if len(s1) and len(t) != len(s1):
            raise ConsistencyError(f"{len(t)} thresholds for {len(s1)} blocks")
        if s1.keys() & s2.keys():
            raise DisjointnessError("s1 and s2 share keys")
        for x in t:
            if not math.isfinite(x) or x < 0:
                raise DomainError(f"thresholds must be finite and nonnegative, got {x}")
        if any(a > b for a, b in zip(t, t[1:])):
            raise ConsistencyError(f"thresholds {t} are not non-decreasing")
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)
        object.__setattr__(self, "t", t)

    def normalized(self) -> "TailQuery":
        return TailQuery(self.s1, self.s2.without_singletons(), self.t)

    def keys(self) -> frozenset[int]:
        return self.s1.keys() | self.s2.keys()

    def __str__(self):
        parts = []
        for b, c in zip(self.s1, self.t):
            lhs = "=".join(f"tau{k}" for k in b)
            parts.append(f"{lhs}>{c:.12g}")
        for b in self.s2.without_singletons():
            parts.append("=".join(f"tau{k}" for k in b))
        return " & ".join(parts) if parts else "true"


@dataclass(frozen=True)
class TailResult:
    p: np.ndarray
    value: float

    def __float__(self):
        return float(self.value)


def _tkey(t) -> tuple:
    return tuple(round(x, KEY_DIGITS) for x in t)


def _shift(t, u):
    return tuple(max(x - u, 0.0) for x in t)


class _Structure:
    __slots__ = ("W", "QW", "M", "T")

    def __init__(self, model, s1, s2):
        S = union_targets(model, s1.concat(s2))
        self.W = ~S
        self.QW = mask(model, self.W)
        self.T = []
        for b in s2:
            Tn = intersect_targets(model, b) - union_targets(model, s1.concat(s2 - b))
            self.T.append((b, Tn))
        Tall = StateSet.empty(model.n)
        for _, Tn in self.T:
            Tall = Tall | Tn
        self.M = mask(model, self.W, Tall)


class _Engine:
    """Shared state for one evaluation: structural caches, expm memo, rule."""

    def __init__(self, model: IntensityModel, rule: QuadratureRule | None = None,
                 workspace: ExpmWorkspace | None = None, absorbing: bool = False):
        self.model = model
        self.rule = rule or QuadratureRule()
        self.ws = workspace or ExpmWorkspace()
        self.absorbing = absorbing
        self._struct: dict = {}
        self._base: dict = {}
        self._memo: dict = {}

    def struct(self, s1, s2) -> _Structure:
        key = (s1, s2)
        st = self._struct.get(key)
        if st is None:
            st = self._struct[key] = _Structure(self.model, s1, s2)
        return st

    def expm(self, st: _Structure, u: float) -> np.ndarray:
        if self.absorbing:
            return self.ws.expm(self.model.intensity, u)
        return self.ws.expm(st.QW, u)

    def base(self, s2: SubPartition) -> np.ndarray:
        """``p(empty, s2, 0)``: every block of ``s2`` completed, in some order."""
        v = self._base.get(s2)
        if v is not None:
            return v
        if not len(s2):
            v = np.ones(self.model.n)
        else:
            sub = self.model.with_targets(sorted(s2.keys()))
            v = np.zeros(self.model.n)
            for order in itertools.permutations(s2.blocks):
                v = v + region_mass_vector(sub, SubPartition(order))
        self._base[s2] = v
        return v

    def p(self, s1: SubPartition, s2: SubPartition, t: tuple) -> np.ndarray:
        s2 = s2.without_singletons()
        if not len(s1):
            st = self.struct(s1, s2)
            return np.where(st.W.mask, self.base(s2), 0.0)
        key = (s1, s2, _tkey(t))
        v = self._memo.get(key)
        if v is not None:
            return v
        st = self.struct(s1, s2)
        t1 = t[0]
        nxt = self.p(s1.left_shift(1), s2 + s1[0], _shift(t[1:], t1))
        if self.absorbing:
            nxt = np.where(st.W.mask, nxt, 0.0)
        v = self.expm(st, t1) @ nxt
        if len(s2) and t1 > 0:
            v = v + integrate(lambda u: self._integrand(st, s1, s2, t, u), t1, self.rule)
        v = np.where(st.W.mask, v, 0.0)
        self._memo[key] = v
        return v

    def _integrand(self, st, s1, s2, t, u):
        acc = np.zeros(self.model.n)
        tu = _shift(t, u)
        for b, Tn in st.T:
            if Tn:
                acc = acc + np.where(Tn.mask, self.p(s1, s2 - b, tu), 0.0)
        y = st.M @ acc
        if not np.any(y):
            return y
        return self.expm(st, u) @ y


def _prepare(model: IntensityModel, q: TailQuery) -> TailQuery:
    if not isinstance(q, TailQuery):
        raise TypeError("expected a TailQuery")
    for k in q.keys():
        model.target(k)
    qn = q.normalized()
    S = union_targets(model, qn.s1.concat(qn.s2))
    if not (~S):
        raise PreconditionError("every state lies in a target of the query")
    if float(model.alpha[S.mask].sum()) > 0:
        raise PreconditionError("initial distribution charges a target of the query")
    return qn


def tail_p(model: IntensityModel, q: TailQuery, rule: QuadratureRule | None = None,
           workspace: ExpmWorkspace | None = None) -> TailResult:
    """Tail vector of ``q`` by the first-completion recursion."""
    qn = _prepare(model, q)
    eng = _Engine(model, rule, workspace)
    p = eng.p(qn.s1, qn.s2, qn.t)
    return TailResult(p, float(model.alpha @ p))


def tail_p_absorbing(model: IntensityModel, q: TailQuery, rule: QuadratureRule | None = None,
                     workspace: ExpmWorkspace | None = None) -> TailResult:
    """Same as :func:`tail_p` using ``exp(u Q)`` for absorbing targets."""
    qn = _prepare(model, q)
    require_absorbing(model, sorted(qn.keys()))
    eng = _Engine(model, rule, workspace, absorbing=True)
    p = eng.p(qn.s1, qn.s2, qn.t)
    return TailResult(p, float(model.alpha @ p))


def tail_p_simple(model: IntensityModel, s1, t, workspace: ExpmWorkspace | None = None) -> TailResult:
    """Product form for singleton blocks and strictly increasing thresholds:
    ``P(tau_{k_1} > t_1, ..., tau_{k_m} > t_m)``.
    """
    s1 = s1 if isinstance(s1, SubPartition) else SubPartition(s1)
    t = tuple(float(x) for x in np.atleast_1d(t))
    if not len(s1) or len(t) != len(s1):
        raise ConsistencyError("need one threshold per block and at least one block")
    if any(len(b) != 1 for b in s1):
        raise PreconditionError("product form needs singleton blocks")
    if any(a >= b for a, b in zip(t, t[1:])):
        raise ConsistencyError(f"thresholds {t} must be strictly increasing")
    _prepare(model, TailQuery(s1, SubPartition(), t))
    ws = workspace or ExpmWorkspace()
    v = np.ones(model.n)
    prev = [0.0] + list(t[:-1])
    for n in reversed(range(len(s1))):
        W = ~union_targets(model, s1.left_shift(n))
        v = ws.expm(mask(model, W), t[n] - prev[n]) @ v
    v = np.where((~union_targets(model, s1)).mask, v, 0.0)
    return TailResult(v, float(model.alpha @ v))


class _AltEngine(_Engine):
    """Evaluates the sum over subpermutations of the pending equality blocks."""

    def p(self, s1, s2, t):
        s2 = s2.without_singletons()
        if not len(s1):
            return np.where(self.struct(s1, s2).W.mask, self.base(s2), 0.0)
        key = (s1, s2, _tkey(t))
        v = self._memo.get(key)
        if v is not None:
            return v
        t1 = t[0]
        rest = _shift(t[1:], t1)
        W0 = ~union_targets(self.model, s1.concat(s2))
        total = np.zeros(self.model.n)
        for pi in subpermutations(len(s2)):
            done = [s2.block(i) for i in pi]
            s2_rest = s2
            for b in done:
                s2_rest = s2_rest - b
            nxt = self.p(s1.left_shift(1), s2_rest + s1[0], rest)
            if not np.any(nxt):
                continue
            # W_n excludes the blocks completed before step n
            Ws, Js = [], []
            for n in range(len(pi) + 1):
                pend = s2
                for b in done[:n]:
                    pend = pend - b
                Ws.append(~union_targets(self.model, s1.concat(pend)))
            for n in range(len(pi)):
                Tn = intersect_targets(self.model, done[n]) & Ws[n + 1]
                Js.append(mask(self.model, Ws[n], Tn))
            QW = [mask(self.model, W) for W in Ws]
            total = total + self._simplex(QW, Js, 0, 0.0, t1, nxt)
        v = np.where(W0.mask, total, 0.0)
        self._memo[key] = v
        return v

    def _simplex(self, QW, Js, n, v0, t1, nxt):
        """``int_{v0 < v_{n+1} < ... < t1}`` of the remaining product, applied to ``nxt``."""
        if n == len(Js):
            return self.ws.expm(QW[n], t1 - v0) @ nxt
        if not np.any(Js[n]):
            return np.zeros(self.model.n)
        L = t1 - v0
        if L <= 0:
            return np.zeros(self.model.n)

        def f(v):
            inner = self._simplex(QW, Js, n + 1, v, t1, nxt)
            return self.ws.expm(QW[n], v - v0) @ (Js[n] @ inner)

        return integrate(f, L, self.rule, a=v0)


def tail_p_alt(model: IntensityModel, q: TailQuery, rule: QuadratureRule | None = None,
               workspace: ExpmWorkspace | None = None) -> TailResult:
    """Tail vector of ``q`` by summing over the orders in which the pending
    equality blocks can be completed before ``t_1``."""
    qn = _prepare(model, q)
    eng = _AltEngine(model, rule, workspace)
    p = eng.p(qn.s1, qn.s2, qn.t)
    return TailResult(p, float(model.alpha @ p))


def embedded_chain(model: IntensityModel) -> tuple[np.ndarray, np.ndarray]:
    """Jump-chain transition matrix ``P = I + D Q`` and the diagonal ``D``.

    States with no exits get a unit self-loop and ``D[i, i] = 0``.
    """
    q = model.intensity
    rates = -np.diag(q)
    moving = rates > 0
    dvals = np.zeros(model.n)
    dvals[moving] = 1.0 / rates[moving]
    D = np.diag(dvals)
    P = np.eye(model.n) + D @ q
    P[np.flatnonzero(moving), np.flatnonzero(moving)] = 0.0
    for i in np.flatnonzero(~moving):
        P[i] = 0.0
        P[i, i] = 1.0
    return P, D


def equality_prob(model: IntensityModel, k1: int, k2: int, *more: int) -> np.ndarray:
    """Column vector ``q(i) = P_i(tau_{k1} = tau_{k2} = ... < inf)``.

    Two keys use the jump-chain linear system; more keys go through the
    region mass of the single block.
    """
    keys = (k1, k2) + tuple(more)
    if len(set(keys)) != len(keys):
        raise ConsistencyError("keys must be distinct")
    for k in keys:
        model.target(k)
    inter = intersect_targets(model, keys)
    uni = union_targets(model, keys)
    q = np.zeros(model.n)
    q[inter.mask] = 1.0
    w = ~uni
    if len(keys) > 2:
        sub = model.with_targets(keys)
        v = region_mass_vector(sub, SubPartition([keys]))
        q[w.mask] = v[w.mask]
        return q
    if not inter:
        return q
    wp = reach_within(model, w, inter)
    if not wp:
        return q
    P, _ = embedded_chain(model)
    idx = wp.indices
    A = np.eye(len(idx)) - P[np.ix_(idx, idx)]
    b = P[np.ix_(idx, inter.indices)].sum(axis=1)
    q[idx] = solve(A, b)
    return q


# -- canonical decomposition ------------------------------------------------

@dataclass(frozen=True)
class Threshold:
    key: int
    value: float


@dataclass(frozen=True)
class Equal:
    j: int
    k: int


@dataclass(frozen=True)
class NotEqual:
    j: int
    k: int


@dataclass
class CanonicalEvent:
    """An exact equality pattern on the constrained keys with thresholds.

    ``pattern`` lists the classes of coinciding hitting times ordered by
    threshold; ``thresholds`` holds the threshold of each class (``0`` when
    none applies). ``expansion`` writes the event as a signed sum of
    :class:`TailQuery` terms.
    """

    pattern: SubPartition
    thresholds: tuple[float, ...]
    expansion: list[tuple[int, TailQuery]]

    def probability(self, model, rule=None, workspace=None, method=tail_p) -> float:
        ws = workspace or ExpmWorkspace()
        return float(sum(c * method(model, q, rule, ws).value for c, q in self.expansion))

    def __str__(self):
        parts = []
        for b, c in zip(self.pattern, self.thresholds):
            name = "=".join(f"tau{k}" for k in b)
            parts.append(f"{name}>{c:.12g}" if c > 0 else name)
        if len(self.pattern) > 1:
            parts.append("distinct")
        return " & ".join(parts)


@dataclass
class Decomposition:
    events: list[CanonicalEvent]
    contradictory: bool = False
    note: str = ""

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def probability(self, model, rule=None, workspace=None, method=tail_p) -> float:
        ws = workspace or ExpmWorkspace()
        return float(sum(e.probability(model, rule, ws, method) for e in self.events))


def _classes(keys, eqs):
    parent = {k: k for k in keys}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for c in eqs:
        a, b = find(c.j), find(c.k)
        if a != b:
            parent[max(a, b)] = min(a, b)
    out: dict[int, list[int]] = {}
    for k in keys:
        out.setdefault(find(k), []).append(k)
    return [tuple(sorted(v)) for v in out.values()]


def _coarsenings(blocks):
    """All partitions obtained by merging the given blocks, as lists of tuples."""
    out = []
    for p in unordered_partitions(list(range(len(blocks)))):
        out.append([tuple(sorted(k for i in grp for k in blocks[i])) for grp in p])
    return out


def _hybrid(blocks, thr) -> TailQuery | None:
    """Query for: keys coincide within ``blocks``, multi-key blocks distinct."""
    timed = []
    untimed = []
    for b in blocks:
        c = max((thr[k] for k in b if k in thr), default=0.0)
        if c > 0:
            timed.append((c, b))
        elif len(b) > 1:
            untimed.append(b)
    timed.sort()
    return TailQuery(SubPartition(b for _, b in timed), SubPartition(untimed),
                     tuple(c for c, _ in timed))


def _mobius(pi_blocks, sigma_blocks) -> int:
    out = 1
    for sb in sigma_blocks:
        m = sum(1 for pb in pi_blocks if set(pb) <= set(sb))
        out *= (-1) ** (m - 1) * math.factorial(m - 1)
    return out


def canonicalize(constraints: Iterable, cap: int = 8) -> Decomposition:
    """Split a conjunction of :class:`Threshold`, :class:`Equal` and
    :class:`NotEqual` constraints into events with an explicit equality
    pattern on the keys involved.

    The probability of the conjunction is the sum of the event
    probabilities. Contradictory constraints give an empty, flagged result.
    """
    cons = list(constraints)
    thr: dict[int, float] = {}
    eqs, neqs = [], []
    keys: set[int] = set()
    for c in cons:
        if isinstance(c, Threshold):
            if not math.isfinite(c.value):
                raise ValueError(f"threshold for key {c.key} must be finite")
            if c.value < 0:
                raise ValueError(f"negative threshold {c.value} for key {c.key}")
            thr[c.key] = max(thr.get(c.key, 0.0), float(c.value))
            keys.add(c.key)
        elif isinstance(c, Equal):
            if c.j != c.k:
                eqs.append(c)
            keys.update((c.j, c.k))
        elif isinstance(c, NotEqual):
            if c.j == c.k:
                return Decomposition([], True, f"tau({c.j}) != tau({c.k}) is impossible")
            neqs.append(c)
            keys.update((c.j, c.k))
        else:
            raise TypeError(f"unknown constraint {c!r}")
    if not keys:
        return Decomposition([], False, "no constraints")
    if len(keys) > cap:
        raise EnumerationSizeError(f"{len(keys)} keys exceed the cap {cap}")
    base = _classes(sorted(keys), eqs)
    cls_of = {k: i for i, b in enumerate(base) for k in b}
    for c in neqs:
        if cls_of[c.j] == cls_of[c.k]:
            return Decomposition([], True, f"tau({c.j}) == tau({c.k}) and != both required")

    def allowed(blocks):
        where = {k: i for i, b in enumerate(blocks) for k in b}
        return all(where[c.j] != where[c.k] for c in neqs)

    patterns = [p for p in _coarsenings(base) if allowed(p)]
    events = []
    for pi in patterns:
        coef: dict[TailQuery, int] = {}
        for sigma in _coarsenings(pi):
            mu = _mobius(pi, sigma)
            multi = [b for b in sigma if len(b) > 1]
            single = [b for b in sigma if len(b) == 1]
            for merged in _coarsenings(multi) if multi else [[]]:
                q = _hybrid(merged + single, thr)
                coef[q] = coef.get(q, 0) + mu
        expansion = sorted(((c, q) for q, c in coef.items() if c != 0),
                           key=lambda cq: (len(cq[1].s1) + len(cq[1].s2), str(cq[1])))
        order = sorted(pi, key=lambda b: (max((thr.get(k, 0.0) for k in b)), b))
        events.append(CanonicalEvent(SubPartition(order),
                                     tuple(max(thr.get(k, 0.0) for k in b) for b in order),
                                     expansion))
    events.sort(key=lambda e: (len(e.pattern), e.pattern.blocks), reverse=True)
    return Decomposition(events)


def tail_probability(model: IntensityModel, constraints: Iterable, rule=None, workspace=None,
                     method=tail_p) -> float:
    """Probability of a conjunction of raw constraints."""
    return canonicalize(constraints).probability(model, rule, workspace, method)
