"""Densities of first hitting times.

Notation: ``d^c`` is the complement of a state set, ``Q(a, b)`` the
intensity matrix masked to ``a x b`` and ``Q(a) = Q(a, a)``. Row vectors are
distributions over states, column vectors are functions of the start state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .errors import (
    ConditioningError,
    ConsistencyError,
    DisjointnessError,
    DomainError,
    EmptySetError,
    PreconditionError,
)
from .expmat import expm_apply, solve
from .mcore import IntensityModel, StateSet, mask, reach_within
from .partitions import (
    SubPartition,
    as_time_map,
    classify,
    enumerate_partitions,
    intersect_targets,
    parse,
    union_targets,
    waiting_target_sets,
)


class Survival(NamedTuple):
    value: float
    mass_at_zero: float


@dataclass(frozen=True)
class DensityValue:
    """Density with respect to ``dimension``-dimensional Lebesgue measure on ``region``."""

    value: float
    region: SubPartition
    dimension: int

    def __float__(self):
        return float(self.value)


def _check_time(u):
    if not np.isfinite(u) or u < 0:
        raise DomainError(f"time must be finite and nonnegative, got {u}")


def _charge(model, d: StateSet) -> float:
    return float(model.alpha[d.mask].sum())


def taboo_distribution(model: IntensityModel, d, u: float, workspace=None) -> np.ndarray:
    """``alpha exp(u Q(d^c))``: sub-probability law of ``X_u`` on paths avoiding ``d``."""
    d = model.stateset(d)
    _check_time(u)
    if _charge(model, d) > 0:
        raise PreconditionError(
            "initial distribution charges the taboo set; use decompose_initial or survival_single")
    return expm_apply(model.alpha, mask(model, ~d), u, workspace)


def survival_single(model: IntensityModel, d, u: float, workspace=None) -> Survival:
    """``P(tau_d > u)`` together with ``P(tau_d = 0)``.

    Mass that ``alpha`` places on ``d`` is hit at time zero and is removed
    before propagating.
    """
    d = model.stateset(d)
    _check_time(u)
    a0 = np.where(d.mask, 0.0, model.alpha)
    v = expm_apply(a0, mask(model, ~d), u, workspace)
    return Survival(float(v.sum()), _charge(model, d))


def _single_setup(model, a, b):
    a = model.stateset(a)
    b = model.stateset(StateSet.empty(model.n) if b is None else b)
    if not a:
        raise EmptySetError("target set a is empty")
    if not a.isdisjoint(b):
        raise DisjointnessError("a and b must be disjoint")
    d = a | b
    if _charge(model, d) > 0:
        raise PreconditionError("initial distribution charges a or b")
    return a, b, d


def _jump_law(model, a, b, u, workspace):
    a, b, d = _single_setup(model, a, b)
    _check_time(u)
    v = expm_apply(model.alpha, mask(model, ~d), u, workspace)
    return v @ mask(model, ~d, a)


def density_single(model: IntensityModel, a, b=None, u: float = 0.0, workspace=None) -> float:
    """Density of ``tau_a`` at ``u`` on the event that ``b`` is avoided before ``tau_a``."""
    return float(_jump_law(model, a, b, u, workspace).sum())


def post_jump_distribution(model: IntensityModel, a, b=None, u: float = 0.0, workspace=None) -> np.ndarray:
    """Law of ``X_{tau_a}`` given ``tau_a = u`` and avoidance of ``b``.

    Returned over the full state space; the support lies in ``a``.
    """
    a1 = _jump_law(model, a, b, u, workspace)
    z = a1.sum()
    if not z > 0:
        raise ConditioningError(f"hitting density is zero at u={u}")
    return a1 / z


def _region_times(tm: Mapping[int, float], s: SubPartition) -> list[float]:
    reps = []
    for b in s:
        vals = {tm[k] for k in b}
        if len(vals) != 1:
            raise ConsistencyError(f"times in block {set(b)} are not equal")
        reps.append(vals.pop())
    if any(x > y for x, y in zip(reps, reps[1:])):
        raise ConsistencyError(f"times are not ordered as region {s}")
    return reps


def _sub_model(model, keys):
    keys = tuple(sorted(keys))
    if keys == model.keys:
        return model
    return model.memo(("sub", keys), lambda: model.with_targets(keys))


def _plan(sub, s, kind):
    """Per-factor matrices of the product formula, cached on the model.

    Each factor is ``(E, J)``: the generator in the exponent and the masked
    jump matrix ``Q(W_n, T_n)``. ``None`` marks an empty ``T_n``.
    """
    def build():
        if kind == "general":
            pairs = waiting_target_sets(sub, s)
        elif kind == "standard":
            pairs = waiting_target_sets(sub, s)
        elif kind == "hat":
            pairs = hat_sets(sub, s)
        else:
            raise ValueError(f"unknown construction {kind!r}")
        if any(not T for _, T in pairs):
            return None
        return [(mask(sub, W) if kind == "general" else sub.intensity, mask(sub, W, T))
                for W, T in pairs]
    return sub.memo(("plan", s, kind), build)


def _density_setup(model, t, region):
    keys = list(t) if isinstance(t, Mapping) else list(model.keys)
    tm = as_time_map(t, keys)
    for k, v in tm.items():
        if v == 0:
            raise DomainError(f"time for key {k} is zero; the density lives on positive times")
    sub = _sub_model(model, tm)
    if region is None:
        region = classify(tm)
    else:
        if isinstance(region, str):
            region = parse(region)
        if region.keys() != frozenset(tm):
            raise ConsistencyError(f"region {region} does not cover keys {sorted(tm)}")
    reps = _region_times(tm, region)
    charged = sub.memo(("charged", region.keys()), lambda: _charge(sub, union_targets(sub, region)))
    if charged > 0:
        raise PreconditionError("initial distribution charges a target; use decompose_initial")
    return sub, region, reps


def _evaluate(sub, s, reps, kind, workspace):
    plan = _plan(sub, s, kind)
    if plan is None:
        return DensityValue(0.0, s, len(s))
    v = sub.alpha
    prev = 0.0
    for (E, J), tn in zip(plan, reps):
        v = expm_apply(v, E, tn - prev, workspace) @ J
        prev = tn
    return DensityValue(max(float(v.sum()), 0.0), s, len(s))


def joint_density(model: IntensityModel, t, region=None, workspace=None) -> DensityValue:
    """Joint density of the hitting times at ``t`` on its region ``R_s``.

    Parameters
    ----------
    t : mapping ``k -> time`` or sequence
        A sequence is matched to ``model.keys`` in order. A mapping over a
        subset of keys gives the density of that sub-vector.
    region : SubPartition or str, optional
        Defaults to ``classify(t)``. When supplied, ``t`` may sit on the
        boundary of the region (equal times across consecutive blocks).
    """
    sub, s, reps = _density_setup(model, t, region)
    return _evaluate(sub, s, reps, "general", workspace)


def absorbing_violation(model: IntensityModel, keys=None):
    """First ``(k, i, j, rate)`` with a positive rate leaving ``Gamma_k``, or ``None``."""
    for k in (model.keys if keys is None else keys):
        g = model.target(k)
        m = mask(model, g, ~g)
        idx = np.argwhere(m > 0)
        if idx.size:
            i, j = idx[0]
            return k, int(i), int(j), float(m[i, j])
    return None


def require_absorbing(model: IntensityModel, keys=None):
    bad = absorbing_violation(model, keys)
    if bad is not None:
        k, i, j, r = bad
        lab = model.space.labels
        raise PreconditionError(
            f"target {k} is not absorbing: rate {r:g} from state {lab[i]} to {lab[j]}")


def hat_sets(model: IntensityModel, s: SubPartition) -> list[tuple[StateSet, StateSet]]:
    """Alternative waiting/target pairs for absorbing targets.

    ``T^_n`` is the set where every key of the first ``n`` blocks has been
    hit and none of the later ones; ``W^_n = T^_{n-1}``.
    """
    That = [~union_targets(model, s)]
    done: list[int] = []
    for n in range(1, len(s) + 1):
        done.extend(s.block(n))
        That.append(intersect_targets(model, done) - union_targets(model, s.left_shift(n)))
    return [(That[n - 1], That[n]) for n in range(1, len(s) + 1)]


def joint_density_absorbing(model: IntensityModel, t, region=None, construction: str = "standard",
                            workspace=None) -> DensityValue:
    """Joint density with the full intensity matrix in every exponential.

    Valid only when every target is absorbing. ``construction='hat'`` uses
    :func:`hat_sets` instead of :func:`waiting_target_sets`.
    """
    if construction not in ("standard", "hat"):
        raise ValueError(f"unknown construction {construction!r}")
    sub, s, reps = _density_setup(model, t, region)
    if sub.memo(("absorbing",), lambda: absorbing_violation(sub)) is not None:
        require_absorbing(sub)
    return _evaluate(sub, s, reps, construction, workspace)


@dataclass(frozen=True)
class InitialTerm:
    """One term of the split of ``alpha`` along the union of targets.

    ``frozen`` lists the keys whose hitting time is identically zero under
    this term; ``model`` carries the remaining keys and the start law.
    """

    weight: float
    model: IntensityModel
    frozen: frozenset
    state: int | None = None


def decompose_initial(model: IntensityModel) -> list[InitialTerm]:
    """Split ``alpha`` into its part off the union of targets and point masses on it."""
    gamma = model.union_of_targets()
    a = model.alpha
    out = []
    off = float(a[~gamma.mask].sum())
    if off > 0:
        a1 = np.where(gamma.mask, 0.0, a) / off
        out.append(InitialTerm(off, model.with_alpha(a1), frozenset(), None))
    for i in gamma.indices:
        if a[i] <= 0:
            continue
        Ki = frozenset(k for k in model.keys if i in model.target(k))
        rest = [k for k in model.keys if k not in Ki]
        sub = model.with_targets(rest).with_alpha(model.point_mass(i))
        out.append(InitialTerm(float(a[i]), sub, Ki, int(i)))
    return out


def conditional_density(model: IntensityModel, u0: float, state: int, visited: Mapping[int, float],
                        t, workspace=None) -> DensityValue:
    """Conditional density of the remaining hitting times after ``u0``.

    ``visited`` maps each key hit strictly before ``u0`` to its hitting
    time; ``t`` gives the residual times ``tau_k - u0`` of the other keys.
    """
    _check_time(u0)
    visited = {int(k): float(v) for k, v in visited.items()}
    for k, v in visited.items():
        model.target(k)
        if not 0 <= v < u0:
            raise ConsistencyError(f"visited key {k} has time {v} not in [0, {u0})")
    rest = [k for k in model.keys if k not in visited]
    for k in rest:
        if state in model.target(k):
            raise ConsistencyError(f"state {model.space.label(state)} lies in unvisited target {k}")
    if not rest:
        return DensityValue(1.0, SubPartition(), 0)
    sub = model.with_targets(rest).with_alpha(model.point_mass(state))
    tm = t if isinstance(t, Mapping) else dict(zip(rest, np.atleast_1d(t)))
    if set(int(k) for k in tm) != set(rest):
        raise ConsistencyError(f"residual times must cover keys {rest}")
    return joint_density(sub, tm, workspace=workspace)


def _green(model: IntensityModel, W: StateSet, rhs: np.ndarray) -> np.ndarray:
    """``int_0^inf exp(u Q(W)) rhs du`` for a column ``rhs`` supported on ``W``'s exits."""
    live = reach_within(model, W, ~W)
    out = np.zeros(model.n)
    if not live:
        return out
    idx = live.indices
    A = -model.intensity[np.ix_(idx, idx)]
    out[idx] = solve(A, rhs[idx])
    return out


def region_mass_vector(model: IntensityModel, s: SubPartition) -> np.ndarray:
    """Column vector ``P_i(tau in R_s)`` for start states ``i`` off the targets.

    Entries for start states inside ``S(s)`` are zero.
    """
    if isinstance(s, str):
        s = parse(s)
    v = np.ones(model.n)
    for W, T in reversed(waiting_target_sets(model, s)):
        if not T:
            return np.zeros(model.n)
        v = _green(model, W, mask(model, W, T) @ v)
    return v


def region_probability(model: IntensityModel, s: SubPartition) -> float:
    """``P_alpha(tau in R_s)`` in closed form, for a full partition ``s`` of the keys.

    Mass that ``alpha`` puts on targets is handled by :func:`decompose_initial`:
    keys hit at time zero must form the first block of ``s``.
    """
    if isinstance(s, str):
        s = parse(s)
    if not s.is_partition_of(model.keys):
        raise ConsistencyError(f"{s} is not a partition of keys {list(model.keys)}")
    total = 0.0
    for term in decompose_initial(model):
        if not term.frozen:
            total += term.weight * float(term.model.alpha @ region_mass_vector(term.model, s))
        elif len(s) and frozenset(s.block(1)) == term.frozen:
            rest = s.left_shift(1)
            if not len(rest):
                total += term.weight
            else:
                total += term.weight * float(term.model.alpha @ region_mass_vector(term.model, rest))
    # cancellation can leave a tiny negative value for impossible regions
    return max(total, 0.0)


def defective_mass(model: IntensityModel) -> float:
    """``P_alpha(some tau_k = inf)`` as one minus the sum of all region probabilities."""
    return 1.0 - sum(region_probability(model, s) for s in enumerate_partitions(model.keys))
