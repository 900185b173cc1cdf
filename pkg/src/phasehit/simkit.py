"""Monte Carlo simulation of hitting times.

Paths are simulated exactly: exponential holding times and jumps drawn from
the jump chain. A path stops when every target has been hit, when it sits
in a state without exits, or at the horizon. Simultaneous hits are detected
exactly: two keys tie iff the same jump enters both targets.

Random streams are derived from ``(seed, block)`` for fixed-size blocks of
paths, so a sample does not depend on how many worker threads produced it.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBoxError, DomainError
from .mcore import IntensityModel
from .partitions import SubPartition, enumerate_partitions, parse

BLOCK = 1 << 15
NOT_HIT = -1


def default_horizon(model: IntensityModel) -> float:
    """``20 / (smallest positive total jump rate)``."""
    rates = -np.diag(model.intensity)
    pos = rates[rates > 0]
    if not pos.size:
        return 1.0
    return 20.0 / float(pos.min())


def max_workers() -> int:
    env = os.environ.get("PHASEHIT_THREADS")
    cpu = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpu))
        except ValueError:
            pass
    return cpu


@dataclass(frozen=True)
class PathSample:
    jump_times: tuple[float, ...]
    states: tuple[int, ...]
    tau: dict
    horizon: float


def sample_path(model: IntensityModel, horizon: float | None = None, seed=0) -> PathSample:
    """One exact trajectory, up to ``horizon`` or until every target is hit.

    ``jump_times[0]`` is 0 and belongs to the initial state ``states[0]``.
    """
    horizon = default_horizon(model) if horizon is None else float(horizon)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    rng = np.random.default_rng(seed)
    q = model.intensity
    n = model.n
    x = int(rng.choice(n, p=model.alpha))
    t = 0.0
    times, states = [0.0], [x]
    tau = {k: np.inf for k in model.keys}
    for k in model.keys:
        if x in model.target(k):
            tau[k] = 0.0
    while any(np.isinf(v) for v in tau.values()):
        r = -q[x, x]
        if r <= 0:
            break
        t += rng.exponential(1.0 / r)
        if t > horizon:
            break
        p = np.where(np.arange(n) == x, 0.0, q[x]) / r
        x = int(rng.choice(n, p=p))
        times.append(t)
        states.append(x)
        for k in model.keys:
            if np.isinf(tau[k]) and x in model.target(k):
                tau[k] = t
    return PathSample(tuple(times), tuple(states), tau, horizon)


def _simulate_block(model_arrays, n_paths, horizon, seed, block):
    cum, rates, member, alpha_cum = model_arrays
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(block)])))
    nk = member.shape[1]
    x = np.searchsorted(alpha_cum, rng.random(n_paths), side="right")
    x = np.minimum(x, len(alpha_cum) - 1)
    tau = np.full((n_paths, nk), np.inf)
    jump = np.full((n_paths, nk), NOT_HIT, dtype=np.int64)
    init = member[x]
    tau[init] = 0.0
    jump[init] = 0
    t = np.zeros(n_paths)
    censored = np.zeros(n_paths, dtype=bool)
    active = ~init.all(axis=1) & (rates[x] > 0)
    step = 0
    idx = np.flatnonzero(active)
    while idx.size:
        step += 1
        xi = x[idx]
        ti = t[idx] + rng.exponential(1.0, idx.size) / rates[xi]
        late = ti > horizon
        if late.any():
            censored[idx[late]] = True
            idx, xi, ti = idx[~late], xi[~late], ti[~late]
        u = rng.random(idx.size)
        y = (u[:, None] > cum[xi]).sum(axis=1)
        y = np.minimum(y, cum.shape[1] - 1)
        x[idx] = y
        t[idx] = ti
        new = member[y] & (jump[idx] == NOT_HIT)
        if new.any():
            rows, cols = np.nonzero(new)
            tau[idx[rows], cols] = ti[rows]
            jump[idx[rows], cols] = step
        keep = (jump[idx] == NOT_HIT).any(axis=1) & (rates[y] > 0)
        idx = idx[keep]
    return tau, jump, censored


class HittingSample:
    """Hitting times of many simulated paths.

    Attributes
    ----------
    tau : (n, |K|) array
        Hitting times, ``inf`` when not hit.
    jump : (n, |K|) int array
        Index of the jump that hit each target (0 for the initial state,
        -1 when not hit). Equal indices mean simultaneous hits.
    censored : (n,) bool array
        Paths stopped by the horizon with some target still unhit.
    """

    def __init__(self, keys, tau, jump, censored, horizon, seed):
        self.keys = tuple(keys)
        self.tau = tau
        self.jump = jump
        self.censored = censored
        self.horizon = horizon
        self.seed = seed
        self._col = {k: i for i, k in enumerate(self.keys)}

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    def col(self, k):
        return self._col[k]

    def censored_fraction(self) -> float:
        return float(self.censored.mean())

    def region_indicator(self, s: SubPartition) -> np.ndarray:
        """Paths whose hitting-time vector (over the keys of ``s``) lies in ``R_s``."""
        if isinstance(s, str):
            s = parse(s)
        ok = np.ones(self.n, dtype=bool)
        prev = None
        for b in s:
            cols = [self._col[k] for k in b]
            j0 = self.jump[:, cols[0]]
            ok &= j0 != NOT_HIT
            for c in cols[1:]:
                ok &= self.jump[:, c] == j0
            if prev is not None:
                ok &= j0 > prev
            prev = j0
        return ok

    def tail_indicator(self, q) -> np.ndarray:
        """Paths in the extended tail event of a :class:`~phasehit.tails.TailQuery`."""
        ok = np.ones(self.n, dtype=bool)
        multi = []
        for b, c in zip(q.s1, q.t):
            cols = [self._col[k] for k in b]
            if len(b) == 1:
                ok &= self.tau[:, cols[0]] > c
                continue
            j0 = self.jump[:, cols[0]]
            ok &= (j0 != NOT_HIT) & (self.tau[:, cols[0]] > c)
            for cc in cols[1:]:
                ok &= self.jump[:, cc] == j0
            multi.append(j0)
        for b in q.s2:
            if len(b) == 1:
                continue
            cols = [self._col[k] for k in b]
            j0 = self.jump[:, cols[0]]
            ok &= j0 != NOT_HIT
            for cc in cols[1:]:
                ok &= self.jump[:, cc] == j0
            multi.append(j0)
        for i in range(len(multi)):
            for j in range(i + 1, len(multi)):
                ok &= multi[i] != multi[j]
        return ok

    def constraint_indicator(self, constraints) -> np.ndarray:
        """Paths satisfying a conjunction of raw constraints (see :func:`~phasehit.tails.canonicalize`).

        Equality means the same jump hit both targets; never-hit times are
        not equal to anything.
        """
        ok = np.ones(self.n, dtype=bool)
        for c in constraints:
            name = type(c).__name__
            if name == "Threshold":
                ok &= self.tau[:, self._col[c.key]] > c.value
                continue
            a = self.jump[:, self._col[c.j]]
            b = self.jump[:, self._col[c.k]]
            same = (a != NOT_HIT) & (a == b)
            ok &= same if name == "Equal" else ~same
        return ok

    def box_indicator(self, s: SubPartition, lo, hi) -> np.ndarray:
        """Paths in ``R_s`` whose block times lie in ``[lo, hi)`` coordinatewise."""
        ok = self.region_indicator(s)
        for b, a, z in zip(s, lo, hi):
            tb = self.tau[:, self._col[b[0]]]
            ok &= (tb >= a) & (tb < z)
        return ok

    def frequency(self, indicator: np.ndarray) -> "EmpiricalEstimate":
        p = float(indicator.mean())
        return EmpiricalEstimate(p, float(np.sqrt(p * (1 - p) / self.n)), self.n, self.seed,
                                 self.censored_fraction())

    def region_table(self) -> list[tuple[SubPartition, "EmpiricalEstimate"]]:
        """Frequency of every region, in enumeration order."""
        return [(s, self.frequency(self.region_indicator(s))) for s in enumerate_partitions(self.keys)]


@dataclass(frozen=True)
class EmpiricalEstimate:
    value: float
    stderr: float
    n: int
    seed: object
    censored: float = 0.0

    def zscore(self, exact: float) -> float:
        if self.stderr == 0:
            return 0.0 if abs(self.value - exact) <= 1e-12 else np.inf
        return (self.value - exact) / self.stderr

    def agrees(self, exact: float, sigmas: float = 3.0) -> bool:
        return abs(self.zscore(exact)) <= sigmas


def _arrays(model, keys):
    q = model.intensity
    rates = -np.diag(q).copy()
    P = np.where(np.eye(model.n, dtype=bool), 0.0, q)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(rates[:, None] > 0, P / rates[:, None], 0.0)
    cum = np.cumsum(P, axis=1)
    member = np.column_stack([model.target(k).mask for k in keys]) if keys else np.zeros((model.n, 0), bool)
    alpha_cum = np.cumsum(model.alpha)
    return cum, rates, member, alpha_cum


def simulate(model: IntensityModel, n: int, horizon: float | None = None, seed=0,
             keys: Sequence[int] | None = None, workers: int | None = None) -> HittingSample:
    """Simulate ``n`` paths and record the hitting times of ``keys`` (default all)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    horizon = default_horizon(model) if horizon is None else float(horizon)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    keys = tuple(model.keys if keys is None else keys)
    for k in keys:
        model.target(k)
    arrays = _arrays(model, keys)
    sizes = [BLOCK] * (n // BLOCK) + ([n % BLOCK] if n % BLOCK else [])
    workers = max_workers() if workers is None else max(1, int(workers))
    jobs = [(arrays, sz, horizon, seed, b) for b, sz in enumerate(sizes)]
    if workers == 1 or len(jobs) == 1:
        parts = [_simulate_block(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(lambda j: _simulate_block(*j), jobs))
    tau = np.concatenate([p[0] for p in parts])
    jump = np.concatenate([p[1] for p in parts])
    cens = np.concatenate([p[2] for p in parts])
    return HittingSample(keys, tau, jump, cens, horizon, seed)


def estimate_region_prob(model: IntensityModel, s, n: int, horizon: float | None = None, seed=0,
                         sample: HittingSample | None = None) -> EmpiricalEstimate:
    """Frequency of ``tau in R_s`` (all hitting times finite and within the horizon)."""
    if isinstance(s, str):
        s = parse(s)
    sample = sample or simulate(model, n, horizon, seed, keys=sorted(s.keys()))
    return sample.frequency(sample.region_indicator(s))


def estimate_tail(model: IntensityModel, q, n: int, horizon: float | None = None, seed=0,
                  sample: HittingSample | None = None) -> EmpiricalEstimate:
    """Frequency of the extended tail event ``q``."""
    sample = sample or simulate(model, n, horizon, seed, keys=sorted(q.keys()))
    return sample.frequency(sample.tail_indicator(q))


@dataclass(frozen=True)
class BoxEstimate:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    mass: EmpiricalEstimate
    volume: float

    @property
    def density(self) -> float:
        return self.mass.value / self.volume

    @property
    def density_stderr(self) -> float:
        return self.mass.stderr / self.volume


def _check_boxes(boxes, dim):
    out = []
    for lo, hi in boxes:
        lo = tuple(float(x) for x in lo)
        hi = tuple(float(x) for x in hi)
        if len(lo) != dim or len(hi) != dim:
            raise ValueError(f"boxes must have {dim} coordinates")
        vol = float(np.prod(np.subtract(hi, lo)))
        if not vol > 0:
            raise DegenerateBoxError(f"box {lo}-{hi} has zero volume")
        out.append((lo, hi, vol))
    if len(out) > 1:
        L = np.array([b[0] for b in out])
        H = np.array([b[1] for b in out])
        overlap = np.all((L[:, None, :] < H[None, :, :]) & (L[None, :, :] < H[:, None, :]), axis=2)
        np.fill_diagonal(overlap, False)
        if overlap.any():
            i, j = np.argwhere(overlap)[0]
            raise ValueError(f"boxes {i} and {j} overlap")
    return out


def binned_density(model: IntensityModel, s, boxes, n: int, seed=0, horizon: float | None = None,
                   sample: HittingSample | None = None) -> list[BoxEstimate]:
    """Histogram estimate of the density on ``R_s``.

    ``boxes`` is a sequence of ``(lo, hi)`` pairs in the coordinates of
    ``R_s`` (one time per block, in block order).
    """
    if isinstance(s, str):
        s = parse(s)
    checked = _check_boxes(boxes, len(s))
    sample = sample or simulate(model, n, horizon, seed, keys=sorted(s.keys()))
    reg = sample.region_indicator(s)
    tb = np.column_stack([sample.tau[:, sample.col(b[0])] for b in s])
    out = []
    for lo, hi, vol in checked:
        ind = reg & np.all((tb >= lo) & (tb < hi), axis=1)
        out.append(BoxEstimate(lo, hi, sample.frequency(ind), vol))
    return out


def grid_boxes(lo, hi, bins) -> list[tuple[tuple[float, ...], tuple[float, ...]]]:
    """Regular grid of boxes over ``[lo, hi)`` with ``bins`` cells per axis."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    bins = np.broadcast_to(np.atleast_1d(bins), lo.shape)
    edges = [np.linspace(a, b, int(m) + 1) for a, b, m in zip(lo, hi, bins)]
    out = []
    for cell in np.ndindex(*[len(e) - 1 for e in edges]):
        out.append((tuple(e[i] for e, i in zip(edges, cell)), tuple(e[i + 1] for e, i in zip(edges, cell))))
    return out
