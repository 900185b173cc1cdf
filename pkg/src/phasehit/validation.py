"""Built-in check suites behind ``phasehit verify``.

Each suite returns a list of :class:`Check` rows with the measured
discrepancy and the tolerance it was held to. Failures are report content,
never exceptions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expmat import ExpmWorkspace, QuadratureRule
from .hitting import (absorbing_violation, defective_mass, density_single, joint_density,
                      joint_density_absorbing, region_probability, survival_single)
from .mcore import IntensityModel
from .partitions import SubPartition, enumerate_partitions, fubini, render, subpermutations
from .simkit import default_horizon, simulate
from .tails import Equal, NotEqual, TailQuery, canonicalize, tail_p, tail_p_absorbing, tail_p_alt

SUITES = ("special-cases", "cross-oracles", "simulation")


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.tolerance)


def exponential_model(rate: float) -> IntensityModel:
    """Two states, ``0 -> 1`` at ``rate``, target ``{1}`` absorbing."""
    q = np.array([[-rate, rate], [0.0, 0.0]])
    return IntensityModel(q, {1: [1]}, np.array([1.0, 0.0]))


def birth_model(rate: float, levels: int = 3) -> IntensityModel:
    """Pure-birth chain on ``0..levels`` with ``Gamma_k = {k}``."""
    n = levels + 1
    q = np.zeros((n, n))
    for i in range(levels):
        q[i, i + 1] = rate
        q[i, i] = -rate
    a = np.zeros(n)
    a[0] = 1.0
    return IntensityModel(q, {k: [k] for k in range(1, levels + 1)}, a)


def special_cases(model=None, rule=None, **_):
    out = []
    for r in (0.5, 2.0):
        m = exponential_model(r)
        worst_f = worst_s = 0.0
        for u in (0.1, 1.0, 5.0):
            worst_f = max(worst_f, abs(density_single(m, [1], u=u) - r * math.exp(-r * u)))
            worst_s = max(worst_s, abs(survival_single(m, [1], u).value - math.exp(-r * u)))
        out.append(Check(f"exponential density r={r:g}", worst_f, 1e-10))
        out.append(Check(f"exponential survival r={r:g}", worst_s, 1e-10))
    rng = np.random.default_rng(12345)
    for r in (0.5, 2.0):
        m = birth_model(r)
        worst = 0.0
        for _ in range(5):
            t = np.sort(rng.uniform(0.05, 4.0, 3))
            exact = r ** 3 * math.exp(-r * t[2])
            worst = max(worst, abs(joint_density(m, {1: t[0], 2: t[1], 3: t[2]}).value - exact))
        out.append(Check(f"birth-chain density r={r:g}", worst, 1e-10))
    out.append(Check("ordered partition counts", float(sum(
        abs(len(enumerate_partitions(range(1, n + 1))) - f)
        for n, f in zip(range(1, 5), (1, 3, 13, 75)))), 0.0))
    out.append(Check("fubini numbers", float(sum(abs(fubini(n) - f)
                                                 for n, f in zip(range(1, 5), (1, 3, 13, 75)))), 0.0))
    out.append(Check("subpermutations of 2", float(abs(len(subpermutations(2)) - 5)), 0.0))
    return out


def _sample_points(model, s, rng, count):
    """Random times in ``R_s`` for the keys of ``s``."""
    pts = []
    for _ in range(count):
        v = np.cumsum(rng.uniform(0.05, 1.0, len(s)))
        pts.append({k: float(v[i]) for i, b in enumerate(s) for k in b})
    return pts


def cross_oracles(model, rule=None, points: int = 2, seed: int = 0, **_):
    """Compare independent formulas on ``model``."""
    rule = rule or QuadratureRule()
    ws = ExpmWorkspace()
    rng = np.random.default_rng(seed)
    keys = list(model.keys)
    parts = enumerate_partitions(keys)
    out = []
    absorbing = absorbing_violation(model) is None
    if absorbing:
        worst = 0.0
        for s in parts:
            for t in _sample_points(model, s, rng, points):
                a = joint_density(model, t, s, ws).value
                for c in ("standard", "hat"):
                    b = joint_density_absorbing(model, t, s, construction=c, workspace=ws).value
                    worst = max(worst, abs(a - b) / max(abs(a), 1e-12))
        out.append(Check("absorbing density equivalence", worst, 1e-8))
    queries = [TailQuery(SubPartition([[k] for k in keys]), SubPartition(),
                         tuple(np.round(np.cumsum(rng.uniform(0.1, 0.6, len(keys))), 6)))]
    if len(keys) >= 2:
        queries.append(TailQuery(SubPartition([keys[:2]]), SubPartition(), (0.3,)))
    if len(keys) >= 3:
        queries.append(TailQuery(SubPartition([[keys[2]]]), SubPartition([keys[:2]]), (0.4,)))
    worst_alt = worst_abs = 0.0
    for q in queries:
        a = tail_p(model, q, rule, ws).value
        worst_alt = max(worst_alt, abs(tail_p_alt(model, q, rule, ws).value - a))
        if absorbing:
            worst_abs = max(worst_abs, abs(tail_p_absorbing(model, q, rule, ws).value - a))
    out.append(Check("tail recursion vs subpermutation sum", worst_alt, 1e-7))
    if absorbing:
        out.append(Check("tail recursion vs absorbing recursion", worst_abs, 1e-8))
    total = sum(region_probability(model, s) for s in parts) + defective_mass(model)
    out.append(Check("region masses plus defect sum to one", abs(total - 1.0), 1e-9))
    distinct = sum(region_probability(model, s) for s in parts if len(s) == len(keys))
    if len(keys) >= 2:
        cons = [Equal(a, b) for i, a in enumerate(keys) for b in keys[i + 1:]]
        dec = canonicalize([NotEqual(c.j, c.k) for c in cons])
        out.append(Check("distinct regions vs canonical decomposition",
                         abs(dec.probability(model, rule, ws) - distinct), 1e-8))
    return out


def simulation(model, budget: int = 20000, seed: int = 0, horizon=None, sigmas: float = 3.0, **_):
    """Simulated region frequencies against exact probabilities.

    The measured value is ``|freq - p| / sigma`` with the binomial sigma of
    the exact ``p`` (plus a half-count continuity term), held to ``sigmas``.
    The horizon defaults to 20 times the simulator default so that
    censoring does not bias the frequencies.
    """
    if horizon is None:
        horizon = 20 * default_horizon(model)
    sample = simulate(model, budget, horizon, seed)
    out = []
    n = sample.n
    for s in enumerate_partitions(model.keys):
        p = region_probability(model, s)
        f = sample.frequency(sample.region_indicator(s)).value
        sd = math.sqrt(max(p * (1 - p), 0.0) / n) + 0.5 / n
        out.append(Check(f"region {render(s)}", abs(f - p) / sd, sigmas))
    out.append(Check("censored fraction", sample.censored_fraction(), 0.01))
    return out


def run_suite(name: str, model, budget: int = 20000, seed: int = 0, rule=None):
    if name == "special-cases":
        return special_cases(model, rule)
    if name == "cross-oracles":
        return cross_oracles(model, rule, seed=seed)
    if name == "simulation":
        return simulation(model, budget=budget, seed=seed)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
