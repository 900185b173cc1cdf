"""State spaces, intensity models and the projector calculus.

Every formula in the package is written with three primitives acting on
dense ``n x n`` matrices, where ``n`` is the number of states:

* ``projector(a, n)``: the identity with the rows outside ``a`` zeroed,
* ``mask(model, a, b)``: the intensity matrix with every entry outside
  ``a x b`` zeroed (``projector(a) @ Q @ projector(b)``),
* ``restrict`` / ``extend``: gather a sub-vector or sub-matrix, and scatter
  it back with zeros elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ContainmentError,
    EmptySetError,
    InvalidModelError,
    ModelMismatchError,
)

ROW_SUM_TOL = 1e-12
ALPHA_TOL = 1e-12


class StateSet:
    """Immutable subset of ``{0, ..., n-1}`` stored as a boolean mask.

    Supports ``&``, ``|``, ``-``, ``^`` and ``~`` (complement within the
    ambient state space).
    """

    __slots__ = ("_mask", "_key")

    def __init__(self, mask):
        m = np.array(mask, dtype=bool).reshape(-1)
        m.flags.writeable = False
        self._mask = m
        self._key = (m.size, m.tobytes())

    @classmethod
    def from_indices(cls, indices: Iterable[int], n: int) -> "StateSet":
        m = np.zeros(n, dtype=bool)
        idx = np.fromiter((int(i) for i in indices), dtype=np.intp)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ModelMismatchError(f"state index out of range for {n} states")
        m[idx] = True
        return cls(m)

    @classmethod
    def full(cls, n: int) -> "StateSet":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def empty(cls, n: int) -> "StateSet":
        return cls(np.zeros(n, dtype=bool))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def n(self) -> int:
        return self._mask.size

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self._mask)

    def _check(self, other):
        if not isinstance(other, StateSet):
            return NotImplemented
        if other.n != self.n:
            raise ModelMismatchError(f"state sets over {self.n} and {other.n} states")
        return other

    def __and__(self, other):
        other = self._check(other)
        return other if other is NotImplemented else StateSet(self._mask & other._mask)

    def __or__(self, other):
        other = self._check(other)
        return other if other is NotImplemented else StateSet(self._mask | other._mask)

    def __sub__(self, other):
        other = self._check(other)
        return other if other is NotImplemented else StateSet(self._mask & ~other._mask)

    def __xor__(self, other):
        other = self._check(other)
        return other if other is NotImplemented else StateSet(self._mask ^ other._mask)

    def __invert__(self):
        return StateSet(~self._mask)

    def complement(self) -> "StateSet":
        return ~self

    def issubset(self, other: "StateSet") -> bool:
        self._check(other)
        return not np.any(self._mask & ~other._mask)

    def isdisjoint(self, other: "StateSet") -> bool:
        self._check(other)
        return not np.any(self._mask & other._mask)

    def __len__(self):
        return int(self._mask.sum())

    def __bool__(self):
        return bool(self._mask.any())

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, i):
        return 0 <= i < self.n and bool(self._mask[i])

    def __eq__(self, other):
        return isinstance(other, StateSet) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"StateSet({self.indices.tolist()}, n={self.n})"


@dataclass(frozen=True)
class StateSpace:
    """Ordered, duplicate-free state labels with a label <-> index bijection."""

    labels: tuple[str, ...]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            raise ModelMismatchError("state space must be nonempty")
        index = {}
        for i, lab in enumerate(labels):
            if lab in index:
                raise ModelMismatchError(f"duplicate state label {lab!r}")
            index[lab] = i
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", MappingProxyType(index))

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise ModelMismatchError(f"unknown state label {label!r}") from None

    def label(self, i: int) -> str:
        return self.labels[i]

    def subset(self, labels: Iterable[str]) -> StateSet:
        return StateSet.from_indices((self.index(x) for x in labels), len(self))


def _as_stateset(a, n: int) -> StateSet:
    if isinstance(a, StateSet):
        if a.n != n:
            raise ModelMismatchError(f"state set over {a.n} states, model has {n}")
        return a
    arr = np.asarray(a)
    if arr.dtype == bool:
        if arr.size != n:
            raise ModelMismatchError(f"boolean mask of length {arr.size}, model has {n}")
        return StateSet(arr)
    return StateSet.from_indices(arr.reshape(-1).tolist(), n)


class IntensityModel:
    """A finite CTMC with intensity matrix, target sets and initial law.

    Parameters
    ----------
    intensity : (n, n) array_like
        Intensity matrix (nonnegative off-diagonal, zero row sums).
    targets : mapping int -> state set
        The sets ``Gamma_k`` indexed by integer keys ``k``. Values may be
        ``StateSet``, boolean masks, or iterables of state indices.
    alpha : (n,) array_like
        Initial distribution.
    labels : sequence of str, optional
        State labels; defaults to ``"0", "1", ...``.
    repair : bool
        Recompute the diagonal as minus the off-diagonal row sums.
    check : bool
        Raise :class:`InvalidModelError` when :func:`validate` reports errors.

    Instances are read-only after construction.
    """

    def __init__(self, intensity, targets, alpha, labels: Sequence[str] | None = None,
                 repair: bool = False, check: bool = True):
        q = np.array(intensity, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ModelMismatchError(f"intensity must be square, got shape {q.shape}")
        n = q.shape[0]
        if repair:
            np.fill_diagonal(q, 0.0)
            np.fill_diagonal(q, -q.sum(axis=1))
        q.flags.writeable = False
        a = np.array(alpha, dtype=float).reshape(-1)
        if a.size != n:
            raise ModelMismatchError(f"alpha has {a.size} entries, model has {n} states")
        a.flags.writeable = False
        if labels is None:
            labels = [str(i) for i in range(n)]
        space = StateSpace(tuple(labels))
        if len(space) != n:
            raise ModelMismatchError(f"{len(space)} labels for {n} states")
        tg = {}
        for k, g in dict(targets).items():
            tg[int(k)] = _as_stateset(g, n)
        self._space = space
        self._q = q
        self._alpha = a
        self._targets = MappingProxyType(dict(sorted(tg.items())))
        self._memo = {}
        if check:
            report = validate(self)
            if report.errors:
                raise InvalidModelError(report)

    @property
    def space(self) -> StateSpace:
        return self._space

    @property
    def intensity(self) -> np.ndarray:
        return self._q

    @property
    def alpha(self) -> np.ndarray:
        return self._alpha

    @property
    def targets(self) -> Mapping[int, StateSet]:
        return self._targets

    @property
    def keys(self) -> tuple[int, ...]:
        return tuple(self._targets)

    @property
    def n(self) -> int:
        return self._q.shape[0]

    def target(self, k: int) -> StateSet:
        try:
            return self._targets[k]
        except KeyError:
            raise ModelMismatchError(f"unknown target key {k!r}") from None

    def stateset(self, a) -> StateSet:
        """Coerce indices, labels-free masks or a StateSet onto this model."""
        return _as_stateset(a, self.n)

    def with_alpha(self, alpha) -> "IntensityModel":
        return IntensityModel(self._q, self._targets, alpha, self._space.labels, check=False)

    def with_targets(self, keys: Iterable[int]) -> "IntensityModel":
        keys = list(keys)
        return IntensityModel(self._q, {k: self.target(k) for k in keys}, self._alpha,
                              self._space.labels, check=False)

    def memo(self, key, build):
        """Cached ``build()`` for derived data; safe because models are immutable."""
        try:
            return self._memo[key]
        except KeyError:
            return self._memo.setdefault(key, build())

    def point_mass(self, i: int) -> np.ndarray:
        d = np.zeros(self.n)
        d[i] = 1.0
        return d

    def union_of_targets(self) -> StateSet:
        out = StateSet.empty(self.n)
        for g in self._targets.values():
            out = out | g
        return out

    def is_absorbing(self, a) -> bool:
        a = self.stateset(a)
        return not np.any(mask(self, a, ~a))

    def __eq__(self, other):
        return (isinstance(other, IntensityModel)
                and self._space.labels == other._space.labels
                and np.array_equal(self._q, other._q)
                and np.array_equal(self._alpha, other._alpha)
                and dict(self._targets) == dict(other._targets))

    __hash__ = None

    def __repr__(self):
        return (f"IntensityModel(n={self.n}, targets={list(self._targets)}, "
                f"alpha_support={np.flatnonzero(self._alpha).tolist()})")


def _dims(model_or_n) -> int:
    if isinstance(model_or_n, IntensityModel):
        return model_or_n.n
    return int(model_or_n)


def projector(a, n: int) -> np.ndarray:
    """The matrix ``I_a``: identity with the rows indexed by ``a^c`` zeroed."""
    a = _as_stateset(a, n)
    return np.diag(a.mask.astype(float))


def mask(model, a, b=None) -> np.ndarray:
    """Masked intensity matrix: ``Q[i, j]`` for ``i in a, j in b``, else 0.

    ``mask(model, a)`` is the square mask ``mask(model, a, a)``. ``model`` may
    also be a bare square array.
    """
    q = model.intensity if isinstance(model, IntensityModel) else np.asarray(model, dtype=float)
    n = q.shape[0]
    a = _as_stateset(a, n)
    b = a if b is None else _as_stateset(b, n)
    return np.where(a.mask[:, None] & b.mask[None, :], q, 0.0)


def restrict(y, a, b=None) -> np.ndarray:
    """Restriction ``y|_a`` of a vector, or sub-matrix ``M|_{a x b}``.

    For a matrix and ``b=None`` the square restriction ``M|_a`` is returned.
    """
    y = np.asarray(y)
    n = y.shape[0]
    a = _as_stateset(a, n)
    if not a:
        raise EmptySetError("restriction to the empty set")
    if y.ndim == 1:
        if b is not None:
            raise ModelMismatchError("vector restriction takes a single index set")
        return y[a.mask]
    b = a if b is None else _as_stateset(b, y.shape[1])
    if not b:
        raise EmptySetError("restriction to the empty set")
    return y[np.ix_(a.indices, b.indices)]


def extend(x, a, b) -> np.ndarray:
    """Extension ``x|^b`` of ``x`` (indexed by ``a``) by zeros, as a vector over
    the ambient state space with support in ``a``.

    ``a`` and ``b`` are state sets over the same ambient space; the result has
    the ambient length and is zero outside ``a``. Zeros on ``b - a`` are the
    extension; entries outside ``b`` are also zero.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = a.n if isinstance(a, StateSet) else b.n
    a = _as_stateset(a, n)
    b = _as_stateset(b, n)
    if not a.issubset(b):
        raise ContainmentError("extension requires a to be a subset of b")
    if x.size != len(a):
        raise ModelMismatchError(f"vector of length {x.size} does not index a set of size {len(a)}")
    out = np.zeros(n)
    out[a.mask] = x
    return out


def reach_within(model, within, goal) -> StateSet:
    """States of ``within`` that can reach ``goal`` through a path that stays in
    ``within`` until it enters ``goal``."""
    q = model.intensity if isinstance(model, IntensityModel) else np.asarray(model)
    n = q.shape[0]
    within = _as_stateset(within, n).mask
    goal = _as_stateset(goal, n).mask
    adj = q > 0
    np.fill_diagonal(adj, False)
    reached = np.zeros(n, dtype=bool)
    frontier = goal.copy()
    while True:
        new = within & ~reached & adj[:, frontier].any(axis=1)
        if not new.any():
            return StateSet(reached)
        reached |= new
        frontier = new


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    fatal: bool = True

    def __str__(self):
        return f"[{'error' if self.fatal else 'warning'}] {self.code}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[Issue, ...] = ()

    @property
    def errors(self) -> tuple[Issue, ...]:
        return tuple(i for i in self.issues if i.fatal)

    @property
    def warnings(self) -> tuple[Issue, ...]:
        return tuple(i for i in self.issues if not i.fatal)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        # truthy when something was reported
        return bool(self.issues)

    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


def validate(model: IntensityModel) -> ValidationReport:
    """Report every invariant violation of ``model`` without raising."""
    issues = []
    q = model.intensity
    n = model.n
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if not np.all(np.isfinite(q)):
        issues.append(Issue("nonfinite-rate", "intensity matrix has non-finite entries"))
    neg = np.argwhere(off < 0)
    for i, j in neg[:10]:
        issues.append(Issue("negative-rate", f"rate {q[i, j]!r} from state {i} to {j} is negative"))
    with np.errstate(invalid="ignore"):
        sums = q.sum(axis=1)
    scale = np.maximum(1.0, np.abs(off).sum(axis=1))
    for i in np.flatnonzero(np.abs(sums) > ROW_SUM_TOL * scale):
        issues.append(Issue("row-sum", f"row {i} sums to {sums[i]:.6g}, expected 0"))
    for k, g in model.targets.items():
        if not g:
            issues.append(Issue("empty-target", f"target {k} is empty"))
    a = model.alpha
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        issues.append(Issue("alpha-negative", "initial distribution has negative or non-finite entries"))
    if abs(a.sum() - 1.0) > ALPHA_TOL:
        issues.append(Issue("alpha-sum", f"initial distribution sums to {a.sum():.15g}"))
    gamma = model.union_of_targets() if model.targets else StateSet.empty(n)
    charged = float(a[gamma.mask].sum())
    if charged > 0:
        issues.append(Issue("alpha-on-targets",
                            f"initial distribution puts mass {charged:.6g} on the union of targets",
                            fatal=False))
    if model.targets and not (~gamma):
        issues.append(Issue("no-free-states", "every state lies in some target", fatal=False))
    return ValidationReport(tuple(issues))
