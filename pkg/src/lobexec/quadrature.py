"""Oscillatory quadrature, alternating-series acceleration and one-sided
finite differences.

The hitting probabilities of the queue model are sine transforms over a
half line: every integrand is a smooth, eventually monotone envelope times
``sin(a p)``.  Splitting at the zeros of the sine turns the integral into an
alternating series of half-period contributions, which is then summed with
the Euler transformation (Longman's method).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple

import numpy as np


class ConvergenceError(ArithmeticError):
    """Raised when a sum or integral fails to reach its tolerance.

    The best available estimate is kept in ``partial``.
    """

    def __init__(self, message: str, partial: float = math.nan):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class QuadConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_half_periods: int = 512
    accel_order: int = 24

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_half_periods < 8:
            raise ValueError("max_half_periods must be >= 8")
        if self.accel_order < 1:
            raise ValueError("accel_order must be >= 1")

    def target(self, value: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(value))


DEFAULT_QUAD = QuadConfig()


@dataclass(frozen=True)
class IntegrandSpec:
    """A half-line integrand ``evaluate(p)`` containing a ``sin(a p)`` factor.

    ``evaluate`` must accept and return numpy arrays.  ``decay_hint`` is an
    estimate of the exponential decay rate of the envelope (0 if only
    algebraic); it only sets how many half periods are taken before the
    convergence test starts.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    oscillation_wavenumber: float
    decay_hint: float = 0.0

    def __post_init__(self):
        if not self.oscillation_wavenumber > 0:
            raise ValueError("oscillation_wavenumber must be positive")


class QuadResult(NamedTuple):
    value: float
    error: float
    n_terms: int


class DerivativeEstimate(NamedTuple):
    value: float
    error: float
    diverging: bool


@lru_cache(maxsize=None)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _panel(f, lo: float, hi: float, n: int = 20) -> float:
    x, w = _gauss_legendre(n)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return float(half * np.dot(w, f(mid + half * x)))


def _adaptive_panel(f, lo: float, hi: float, tol: float, whole: float | None = None,
                    depth: int = 0) -> float:
    if whole is None:
        whole = _panel(f, lo, hi)
    mid = 0.5 * (lo + hi)
    left = _panel(f, lo, mid)
    right = _panel(f, mid, hi)
    if abs(left + right - whole) <= tol or depth >= 12:
        return left + right
    return (_adaptive_panel(f, lo, mid, 0.5 * tol, left, depth + 1)
            + _adaptive_panel(f, mid, hi, 0.5 * tol, right, depth + 1))


def _euler_estimate(partial_sums: np.ndarray, order: int) -> float:
    """Iterated averaging of the trailing partial sums."""
    row = np.asarray(partial_sums[-(order + 1):], dtype=float)
    while row.size > 1:
        row = 0.5 * (row[1:] + row[:-1])
    return float(row[0])


def _is_alternating(terms: list[float], window: int = 4) -> bool:
    tail = terms[-window:]
    if len(tail) < window:
        return False
    return all(tail[i] * tail[i + 1] < 0 for i in range(len(tail) - 1))


def _accelerated_sum(terms: Iterable[float], cfg: QuadConfig, max_terms: int,
                     min_terms: int = 6) -> QuadResult:
    collected: list[float] = []
    partial: list[float] = []
    running = 0.0
    prev_est = math.nan
    last_diff = math.inf
    value = math.nan
    for term in terms:
        term = float(term)
        if not math.isfinite(term):
            raise ConvergenceError("non-finite term in series", running)
        collected.append(term)
        running += term
        partial.append(running)
        k = len(collected)
        if k >= min_terms:
            if _is_alternating(collected):
                order = min(cfg.accel_order, k - 1)
                est = _euler_estimate(np.asarray(partial), order)
                diff = abs(est - prev_est) if math.isfinite(prev_est) else math.inf
                err = max(diff, last_diff)
                last_diff = diff
                prev_est = est
                value = est
            else:
                # direct summation; geometric tail bound from the last ratio
                value = running
                prev_est = math.nan
                last_diff = math.inf
                last, before = abs(collected[-1]), abs(collected[-2])
                if last == 0.0:
                    err = 0.0
                elif before > 0 and last < before:
                    r = last / before
                    err = last * r / (1.0 - r)
                else:
                    err = math.inf
            # a tenth of the target: consecutive estimates understate the error
            if err <= 0.1 * cfg.target(value):
                return QuadResult(value, err, k)
        if k >= max_terms:
            break
    if collected and math.isfinite(value):
        raise ConvergenceError(f"series not converged after {len(collected)} terms", value)
    if collected and not math.isfinite(value):
        raise ConvergenceError(f"series not converged after {len(collected)} terms", running)
    raise ConvergenceError("empty series")


def sum_alternating(terms: Iterable[float], cfg: QuadConfig = DEFAULT_QUAD,
                    max_terms: int = 10_000) -> QuadResult:
    """Sum an (eventually) alternating series with Euler acceleration.

    Falls back to direct summation with a geometric tail bound when the tail
    stops alternating.

    >>> round(sum_alternating((-1) ** (n + 1) / n for n in range(1, 10**6)).value, 10)
    0.6931471806
    """
    return _accelerated_sum(terms, cfg, max_terms)


def integrate_oscillatory(spec: IntegrandSpec, cfg: QuadConfig = DEFAULT_QUAD) -> QuadResult:
    """Integrate ``spec.evaluate`` over ``[0, inf)``.

    Panels are the half periods ``[k pi/a, (k+1) pi/a]`` of the sine factor;
    each is integrated with adaptive Gauss-Legendre and the resulting
    alternating sequence is summed by :func:`sum_alternating`.
    """
    f = spec.evaluate
    step = math.pi / spec.oscillation_wavenumber
    # panel tolerance well below the series target
    seg_tol = 0.01 * cfg.abs_tol

    def half_periods():
        k = 0
        while True:
            yield _adaptive_panel(f, k * step, (k + 1) * step, seg_tol)
            k += 1

    min_terms = 6
    if spec.decay_hint > 0:
        # do not test convergence before the envelope has visibly decayed
        min_terms = max(min_terms, min(cfg.max_half_periods // 2,
                                       int(2.0 / (spec.decay_hint * step)) + 2))
    return _accelerated_sum(half_periods(), cfg, cfg.max_half_periods, min_terms)


def derivative_at_zero_plus(f: Callable[[float], float], order: int = 1,
                            step: float = 1e-3) -> DerivativeEstimate:
    """One-sided finite-difference derivative at ``0+`` with Richardson extrapolation.

    The estimate is repeated at ``step``, ``step/2`` and ``step/4``; when the
    successive corrections do not shrink (as for a ``w log w`` singularity)
    the result is flagged as diverging.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")

    def raw(h):
        if order == 1:
            return (-3.0 * f(0.0) + 4.0 * f(h) - f(2.0 * h)) / (2.0 * h)
        return (2.0 * f(0.0) - 5.0 * f(h) + 4.0 * f(2.0 * h) - f(3.0 * h)) / h**2

    d = [raw(step / 2**i) for i in range(4)]
    # both stencils are second order: Richardson factor 4
    r = [(4.0 * d[i + 1] - d[i]) / 3.0 for i in range(3)]
    e1 = abs(r[1] - r[0])
    e2 = abs(r[2] - r[1])
    noise = 1e-6 * (1.0 + abs(d[3]))
    raw_shrink = abs(d[3] - d[2]) > 0.6 * abs(d[2] - d[1]) and abs(d[2] - d[1]) > noise
    diverging = bool(raw_shrink and (e2 > 0.6 * e1))
    return DerivativeEstimate(r[2], e2, diverging)
