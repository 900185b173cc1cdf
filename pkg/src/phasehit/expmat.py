"""Numerical kernels: matrix exponential action, dense solves, quadrature."""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import AccuracyError, DomainError, NumericError, SingularMatrixError

COND_LIMIT = 1e13


class ExpmWorkspace:
    """Bounded memo of ``expm(t * M)`` keyed on the bytes of ``M`` and ``t``.

    The cache is a pure memo: a hit returns exactly what a miss would have
    computed. Concurrent use is safe; two threads may compute the same entry,
    the second insert simply wins.
    """

    def __init__(self, maxsize: int = 4096, tolerance: float = 1e-12):
        self.maxsize = int(maxsize)
        self.tolerance = tolerance
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def expm(self, M: np.ndarray, t: float = 1.0) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        t = float(t)
        if t < 0:
            raise DomainError(f"negative time {t}")
        key = (M.shape, M.tobytes(), t)
        with self._lock:
            E = self._cache.get(key)
            if E is not None:
                self._cache.move_to_end(key)
                self.hits += 1
                return E
        E = _expm(M, t)
        with self._lock:
            self.misses += 1
            self._cache[key] = E
            while len(self._cache) > self.maxsize:
                self._cache.popitem(last=False)
        return E

    def clear(self):
        with self._lock:
            self._cache.clear()

    def __len__(self):
        return len(self._cache)


def _expm(M, t):
    if t == 0.0:
        return np.eye(M.shape[0])
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix has non-finite entries")
    E = scipy.linalg.expm(t * M)
    E.flags.writeable = False
    return E


def expm_apply(v, M, t: float, workspace: ExpmWorkspace | None = None) -> np.ndarray:
    """Row-vector action ``v @ expm(t M)``; ``t = 0`` returns ``v`` unchanged.

    ``v`` may also be a 2-d array, in which case each row is propagated.
    """
    v = np.asarray(v, dtype=float)
    M = np.asarray(M, dtype=float)
    if t < 0:
        raise DomainError(f"negative time {t}")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(M)) and np.isfinite(t)):
        raise NumericError("non-finite input to expm_apply")
    if M.ndim != 2 or M.shape[0] != M.shape[1] or v.shape[-1] != M.shape[0]:
        raise ValueError(f"shape mismatch: v {v.shape}, M {M.shape}")
    if t == 0:
        return v.copy()
    E = workspace.expm(M, t) if workspace is not None else _expm(M, t)
    return v @ E


def solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` with a condition check.

    Raises
    ------
    SingularMatrixError
        If ``A`` is numerically singular; the error carries the 2-norm
        condition estimate.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"solve needs a square matrix, got {A.shape}")
    if A.shape[0] == 0:
        return np.zeros_like(b)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularMatrixError("matrix is numerically singular", condition=cond)
    x = scipy.linalg.solve(A, b)
    res = np.max(np.abs(A @ x - b)) if b.size else 0.0
    if res > 1e-10 * (1.0 + np.max(np.abs(b), initial=0.0)):
        raise SingularMatrixError(f"residual {res:.3g} too large", condition=cond)
    return x


@dataclass(frozen=True)
class QuadratureRule:
    """Composite Gauss-Legendre rule.

    ``kind='fixed'`` uses exactly ``panels`` panels of ``order`` nodes each.
    ``kind='adaptive'`` starts from ``panels`` and doubles until two
    successive estimates agree to ``max(abs_tol, rel_tol * |I|)`` in the max
    norm, or ``max_panels`` is exceeded.
    """

    kind: str = "adaptive"
    panels: int = 1
    order: int = 12
    abs_tol: float = 1e-9
    rel_tol: float = 0.0
    max_panels: int = 256

    def __post_init__(self):
        if self.kind not in ("adaptive", "fixed"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.panels < 1 or self.order < 1:
            raise ValueError("panels and order must be positive")

    @property
    def degree(self) -> int:
        """Polynomial degree integrated exactly."""
        return 2 * self.order - 1

    def fixed(self) -> "QuadratureRule":
        return QuadratureRule("fixed", self.panels, self.order, self.abs_tol, self.rel_tol,
                              self.max_panels)


@lru_cache(maxsize=64)
def _legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def nodes(T: float, panels: int, order: int, a: float = 0.0):
    """Nodes and weights of the composite rule on ``[a, a + T]``."""
    x, w = _legendre(order)
    h = T / panels
    left = a + h * np.arange(panels)
    u = (left[:, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    wt = np.tile(0.5 * h * w, panels)
    return u, wt


def _fixed(f, T, panels, order, a):
    u, wt = nodes(T, panels, order, a)
    acc = None
    for ui, wi in zip(u, wt):
        y = wi * np.asarray(f(ui), dtype=float)
        acc = y if acc is None else acc + y
    return acc


def integrate(f, T: float, rule: QuadratureRule | None = None, a: float = 0.0):
    """Integrate ``f`` over ``[a, a + T]`` componentwise.

    ``f`` maps a float to a float or an array of fixed shape. ``T = 0``
    returns zero of the right shape.
    """
    rule = rule or QuadratureRule()
    if T < 0:
        raise DomainError(f"negative integration length {T}")
    if T == 0:
        return np.zeros_like(np.asarray(f(a), dtype=float))
    p = rule.panels
    est = _fixed(f, T, p, rule.order, a)
    if rule.kind == "fixed":
        return est
    err = np.inf
    while True:
        p *= 2
        if p > rule.max_panels:
            raise AccuracyError(
                f"quadrature did not reach tolerance {rule.abs_tol:g} with {p // 2} panels",
                estimate=est, error=float(err))
        new = _fixed(f, T, p, rule.order, a)
        err = np.max(np.abs(new - est), initial=0.0)
        scale = np.max(np.abs(new), initial=0.0)
        if err <= max(rule.abs_tol, rule.rel_tol * scale):
            return new
        est = new
