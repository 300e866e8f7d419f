"""First-passage probabilities of the two queues on the quadrant and on the
execution strip.

The state ``(b, a)`` = (bid volume, ask volume) diffuses with unit diffusion
coefficient and drift ``-mu`` on both coordinates.  Three boundaries absorb
it: ``a = 0`` (ask depleted, price up), ``b = 0`` (bid depleted, price down)
and, on the strip, ``a = q`` (order executed).  For each boundary the
Laplace transform of the hitting-time density solves

    w p = (1/2) lap(p) - mu (d_b + d_a) p,

with unit data on its own boundary.  Writing ``p = exp(mu (a + b)) phi``
turns this into a Helmholtz problem.  It is solved here in two ways:

* a sine series in the ask direction (modes ``q_n = pi n / q``), where the
  slowly convergent part is summed in closed form, leaving a remainder that
  decays like ``exp(-q_n b)``;
* a sine transform in the bid direction, an oscillatory integral handled by
  :mod:`lobexec.quadrature`.

Derivatives with respect to ``w`` are taken analytically, term by term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import ModelParams, StripGeometry
from .quadrature import (
    DEFAULT_QUAD,
    ConvergenceError,
    IntegrandSpec,
    QuadConfig,
    integrate_oscillatory,
)

SNAP = 1e-9
SERIES_TOL = 1e-14
SERIES_CAP = 10_000
EULER_GAMMA = 0.57721566490153286061

BOUNDARIES = ("ex", "up", "dn")


@dataclass(frozen=True)
class HitProbTriple:
    p_ex: float
    p_up: float
    p_dn: float
    omega: float
    state: tuple[float, float]
    q: float = math.inf

    @property
    def total(self) -> float:
        return self.p_ex + self.p_up + self.p_dn

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_ex, self.p_up, self.p_dn)

    def __getitem__(self, key: str) -> float:
        return {"ex": self.p_ex, "up": self.p_up, "dn": self.p_dn}[key]


@dataclass(frozen=True)
class HittingTimeMoments:
    """First and second moment of the time to absorption.

    Conditional moments (``conditional_on`` in ex/up/dn) are moments of the
    hitting time given that the named boundary is the one hit.  An infinite
    mean is reported as ``math.inf`` with ``finite=False``.
    """

    mean: float
    second_moment: float
    conditional_on: str
    state: tuple[float, float]
    q: float
    mu: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.mean)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2


@dataclass(frozen=True)
class SmallOmegaCoeffs:
    a1: float
    b1: float


@dataclass(frozen=True)
class LargeQExpansion:
    """Free-quadrant values plus the leading finite-``q`` correction."""

    free: HitProbTriple
    correction: tuple[float, float, float]

    @property
    def predicted(self) -> tuple[float, float, float]:
        return tuple(f + c for f, c in zip(self.free.as_tuple(), self.correction))


# ---------------------------------------------------------------------------
# sinh(sqrt(z) x) / sinh(sqrt(z) Q) and its z-derivatives

_FACT_ODD = np.array([math.factorial(2 * k + 1) for k in range(32)], dtype=float)


def _sinh_series(x, z, nterms=32):
    """sinh(sqrt(z) x)/sqrt(z) and two z-derivatives as power series in z.

    All terms are positive, so this is stable; used for small sqrt(z) x.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast(x, z).shape
    a0, a1, a2 = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for k in range(nterms):
        c = x ** (2 * k + 1) / _FACT_ODD[k]
        a0 = a0 + c * z**k
        if k >= 1:
            a1 = a1 + k * c * z ** (k - 1)
        if k >= 2:
            a2 = a2 + k * (k - 1) * c * z ** (k - 2)
    return a0, a1, a2


def sinh_ratio(x, q, z):
    """``G = sinh(sqrt(z) x) / sinh(sqrt(z) q)`` with ``dG/dz`` and ``d2G/dz2``.

    ``x`` in ``[0, q]``, ``z >= 0``; vectorised over ``z`` (and ``x``).
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    shape = np.broadcast(x, z).shape
    xb = np.broadcast_to(x, shape)
    zb = np.broadcast_to(z, shape)
    g0 = np.zeros(shape)
    g1 = np.zeros(shape)
    g2 = np.zeros(shape)
    beta = np.sqrt(zb)
    small = beta * q <= 1.0
    if np.any(small):
        xs, zs = xb[small], zb[small]
        a0, a1, a2 = _sinh_series(xs, zs)
        b0, b1, b2 = _sinh_series(np.full_like(xs, q), zs)
        g0[small] = a0 / b0
        num1 = a1 * b0 - a0 * b1
        g1[small] = num1 / b0**2
        g2[small] = (a2 * b0 - a0 * b2) / b0**2 - 2.0 * b1 * num1 / b0**3
    big = ~small & (xb > 0)
    if np.any(big):
        bt, xs = beta[big], xb[big]
        y1, y2 = bt * xs, bt * q
        d1 = -np.expm1(-2.0 * y1)
        d2 = -np.expm1(-2.0 * y2)
        g = np.exp(-(y2 - y1)) * d1 / d2
        coth1 = (1.0 + np.exp(-2.0 * y1)) / d1
        coth2 = (1.0 + np.exp(-2.0 * y2)) / d2
        csch1 = 2.0 * np.exp(-y1) / d1
        csch2 = 2.0 * np.exp(-y2) / d2
        ell = xs * coth1 - q * coth2
        dell = -(xs * csch1) ** 2 + (q * csch2) ** 2
        g0[big] = g
        g1[big] = g * ell / (2.0 * bt)
        g2[big] = g / (4.0 * bt**2) * (ell**2 + dell - ell / bt)
    return g0, g1, g2


# ---------------------------------------------------------------------------
# boundary handling


def _boundary_triple(b: float, a: float, q: float):
    """Return the absorbed triple if the state sits on (or beyond) a boundary."""
    if b <= SNAP:
        return (0.0, 0.0, 1.0)
    if a <= SNAP:
        return (0.0, 1.0, 0.0)
    if math.isfinite(q) and a >= q - SNAP:
        return (1.0, 0.0, 0.0)
    return None


def _check_state(state) -> tuple[float, float]:
    b, a = (float(v) for v in state)
    if not (math.isfinite(b) and math.isfinite(a)):
        raise ValueError("state must be finite")
    if b < 0 or a < 0:
        raise ValueError("state volumes must be >= 0")
    return b, a


def _check_omega(omega: float) -> float:
    omega = float(omega)
    if not omega >= 0:
        raise ValueError("omega must be >= 0")
    return omega


# ---------------------------------------------------------------------------
# strip: ask-direction sine series


def series_terms_needed(mu: float, q: float, b: float, a: float,
                        tol: float = SERIES_TOL) -> int:
    """Number of modes after which the series remainder is below ``tol``."""
    if b <= 0:
        return SERIES_CAP + 1
    budget = math.log(1.0 / tol) + mu * (a + b) + 6.0
    n = q / math.pi * (budget / b + mu) + 8
    return int(math.ceil(n))


def strip_series(mu: float, q: float, b: float, a: float, omega: float = 0.0,
                 order: int = 0, nterms: int | None = None) -> np.ndarray:
    """``d^k/dw^k (p_ex, p_up, p_dn)`` from the ask-direction sine series.

    Interior states only.  Raises :class:`ConvergenceError` if more than
    ``SERIES_CAP`` modes would be needed (states too close to ``b = 0``).
    """
    if nterms is None:
        nterms = series_terms_needed(mu, q, b, a)
    if nterms > SERIES_CAP:
        raise ConvergenceError(
            f"sine series needs {nterms} > {SERIES_CAP} modes at b={b:g}, q={q:g}")
    z = 2.0 * omega + mu * mu
    n = np.arange(1, nterms + 1, dtype=float)
    qn = math.pi * n / q
    mun = np.sqrt(qn * qn + z + mu * mu)
    h0 = np.exp(-mun * b)
    sn = np.sin(qn * a)
    sign = np.where(n % 2 == 1, 1.0, -1.0)  # (-1)^(n+1)
    c0 = (2.0 / q) * qn / (qn * qn + z)
    d0 = (2.0 / q) * qn * (1.0 + sign * math.exp(-mu * q)) / (qn * qn + mu * mu)

    if order == 0:
        ch, dh = c0 * h0, d0 * h0
    elif order == 1:
        h1 = -(b / mun) * h0
        c1 = -2.0 * c0 / (qn * qn + z)
        ch = c1 * h0 + c0 * h1
        dh = d0 * h1
    elif order == 2:
        h1 = -(b / mun) * h0
        h2 = (b / mun**3 + (b / mun) ** 2) * h0
        c1 = -2.0 * c0 / (qn * qn + z)
        c2 = 8.0 * c0 / (qn * qn + z) ** 2
        ch = c2 * h0 + 2.0 * c1 * h1 + c0 * h2
        dh = d0 * h2
    else:
        raise ValueError("order must be 0, 1 or 2")

    g_up = sinh_ratio(q - a, q, z)[order] * 2.0**order
    g_ex = sinh_ratio(a, q, z)[order] * 2.0**order
    e_ab = math.exp(mu * (a + b))
    p_up = math.exp(mu * a) * float(g_up) - e_ab * float(np.dot(ch, sn))
    p_ex = math.exp(mu * (a - q)) * float(g_ex) - e_ab * math.exp(-mu * q) * float(
        np.dot(sign * ch, sn))
    p_dn = e_ab * float(np.dot(dh, sn))
    return np.array([p_ex, p_up, p_dn])


# ---------------------------------------------------------------------------
# strip: bid-direction sine transform


def _strip_integrand(mu, q, b, a, omega, which, order):
    two_pi = 2.0 / math.pi
    nu2 = 2.0 * omega + mu * mu

    if which == "ex":
        pref = math.exp(mu * (a + b - q))

        def f(p):
            g = sinh_ratio(a, q, p * p + 2.0 * omega + 2.0 * mu * mu)[order]
            return two_pi * pref * p / (p * p + mu * mu) * np.sin(p * b) * g * 2.0**order
    elif which == "up":
        pref = math.exp(mu * (a + b))

        def f(p):
            g = sinh_ratio(q - a, q, p * p + 2.0 * omega + 2.0 * mu * mu)[order]
            return two_pi * pref * p / (p * p + mu * mu) * np.sin(p * b) * g * 2.0**order
    elif which == "dn":
        if order != 0:
            raise ValueError("down integrand only at order 0")
        e_a, e_qa = math.exp(mu * a), math.exp(-mu * (q - a))

        def f(p):
            z = p * p + 2.0 * omega + 2.0 * mu * mu
            g_up = sinh_ratio(q - a, q, z)[0]
            g_ex = sinh_ratio(a, q, z)[0]
            return (two_pi * math.exp(mu * b) * p / (p * p + nu2) * np.sin(p * b)
                    * (e_a * g_up + e_qa * g_ex))
    else:
        raise ValueError(which)
    return f


def strip_integral(mu: float, q: float, b: float, a: float, omega: float = 0.0,
                   order: int = 0, cfg: QuadConfig = DEFAULT_QUAD) -> np.ndarray:
    """``d^k/dw^k (p_ex, p_up, p_dn)`` from the bid-direction sine transform.

    Down-boundary derivatives come from the total time integral (order 1)
    and are not available at order 2.
    """
    decay = max(min(a, q - a), 1e-3)
    vals = []
    for which in ("ex", "up"):
        spec = IntegrandSpec(_strip_integrand(mu, q, b, a, omega, which, order), b, decay)
        vals.append(integrate_oscillatory(spec, cfg).value)
    if order == 0:
        nu = math.sqrt(2.0 * omega + mu * mu)
        spec = IntegrandSpec(_strip_integrand(mu, q, b, a, omega, "dn", 0), b, decay)
        p_dn = math.exp(-(nu - mu) * b) - integrate_oscillatory(spec, cfg).value
    elif order == 1:
        if omega != 0.0:
            raise ValueError("integral derivative of p_dn only at omega = 0")
        p_dn = -total_hit_time_integral(mu, q, b, a, cfg) - vals[0] - vals[1]
    else:
        raise ConvergenceError("second omega-derivative of p_dn needs the sine series")
    return np.array([vals[0], vals[1], p_dn])


def _bracket_driftless(p, a, q):
    """1 - [sinh(pa) + sinh(p(q-a))]/sinh(pq), cancellation-free for small p."""
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    small = p * q <= 1.0
    if np.any(small):
        ps = p[small]
        num = np.zeros_like(ps)
        den = np.zeros_like(ps)
        for k in range(25):
            e = 2 * k + 1
            den += ps**e * q**e / _FACT_ODD[k]
            if k >= 1:
                num += ps**e * (q**e - a**e - (q - a) ** e) / _FACT_ODD[k]
        out[small] = num / den
    big = ~small
    if np.any(big):
        pb = p[big]
        g1 = sinh_ratio(a, q, pb * pb)[0]
        g2 = sinh_ratio(q - a, q, pb * pb)[0]
        out[big] = 1.0 - g1 - g2
    return out


def total_hit_time_integral(mu: float, q: float, b: float, a: float,
                            cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Mean time to hit any strip boundary, summing before differentiating."""
    four_pi = 4.0 / math.pi
    if mu == 0.0:
        def f(p):
            return four_pi * np.sin(p * b) / p**3 * _bracket_driftless(p, a, q)
    else:
        e_b, e_ex, e_up = math.exp(mu * b), math.exp(mu * (b + a - q)), math.exp(mu * (b + a))

        def f(p):
            z = p * p + 2.0 * mu * mu
            br = e_b - sinh_ratio(a, q, z)[0] * e_ex - sinh_ratio(q - a, q, z)[0] * e_up
            return four_pi * p / (p * p + mu * mu) ** 2 * np.sin(p * b) * br
    decay = max(min(a, q - a), 1e-3)
    return integrate_oscillatory(IntegrandSpec(f, b, decay), cfg).value


# ---------------------------------------------------------------------------
# closed forms, mu = 0, omega = 0


def strip_driftless_closed(state, q: float) -> HitProbTriple:
    """Elementary-function hitting probabilities on the strip (no drift, w=0)."""
    b, a = _check_state(state)
    q = float(q)
    edge = _boundary_triple(b, a, q)
    if edge is not None:
        return HitProbTriple(*edge, omega=0.0, state=(b, a), q=q)
    th = math.pi * a / q
    ex = math.exp(math.pi * b / q)
    s, c = math.sin(th), math.cos(th)
    t_plus = math.atan2(s, ex + c)
    t_minus = math.atan2(s, ex - c)
    p_ex = a / q - 2.0 / math.pi * t_plus
    p_up = 1.0 - a / q - 2.0 / math.pi * t_minus
    p_dn = 2.0 / math.pi * (t_minus + t_plus)
    return HitProbTriple(p_ex, p_up, p_dn, omega=0.0, state=(b, a), q=q)


# ---------------------------------------------------------------------------
# free quadrant


def _free_dn_integral(mu: float, b: float, a: float, omega: float, order: int,
                      cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """k-th w-derivative of the down-hitting transform on the quadrant."""
    two_pi = 2.0 / math.pi
    off = 2.0 * omega + 2.0 * mu * mu
    if order >= 1 and off == 0.0:
        # driftless quadrant at w = 0: moments diverge
        return -math.inf if order == 1 else math.inf

    def f(k):
        beta = np.sqrt(k * k + off)
        base = two_pi * k / (k * k + mu * mu) * np.sin(k * a) * np.exp(mu * a - (beta - mu) * b)
        if order == 0:
            return base
        if order == 1:
            return base * (-b / beta)
        return base * (b / beta**3 + (b / beta) ** 2)

    return integrate_oscillatory(IntegrandSpec(f, a, max(b, 1e-3)), cfg).value


def _free_values(mu: float, b: float, a: float, omega: float, order: int,
                 cfg: QuadConfig = DEFAULT_QUAD) -> tuple[float, float]:
    if order == 0 and mu == 0.0 and omega == 0.0:
        up = 2.0 / math.pi * math.atan2(b, a)
        return up, 1.0 - up
    p_dn = _free_dn_integral(mu, b, a, omega, order, cfg)
    p_up = _free_dn_integral(mu, a, b, omega, order, cfg)
    return p_up, p_dn


def free_next_sign(params: ModelParams, state) -> tuple[float, float]:
    """Probabilities that the next price change is up / down (no execution)."""
    return free_laplace(params, state, 0.0)


def free_laplace(params: ModelParams, state, omega: float = 0.0,
                 cfg: QuadConfig = DEFAULT_QUAD) -> tuple[float, float]:
    """Laplace transforms ``(p_up, p_dn)`` of the quadrant hitting densities."""
    b, a = _check_state(state)
    omega = _check_omega(omega)
    edge = _boundary_triple(b, a, math.inf)
    if edge is not None:
        return edge[1], edge[2]
    return _free_values(params.mu, b, a, omega, 0, cfg)


# ---------------------------------------------------------------------------
# strip dispatch


def strip_derivatives(mu: float, q: float, state, omega: float = 0.0, order: int = 0,
                      method: str = "auto", cfg: QuadConfig = DEFAULT_QUAD) -> np.ndarray:
    """``d^k/dw^k`` of ``(p_ex, p_up, p_dn)`` at ``state`` on the strip ``(0,inf)x(0,q)``.

    States on or beyond a boundary are absorbed immediately (ask at or above
    ``q`` counts as executed), so all derivatives vanish there.
    """
    b, a = _check_state(state)
    edge = _boundary_triple(b, a, q)
    if edge is not None:
        return np.array(edge, dtype=float) if order == 0 else np.zeros(3)
    if method == "auto":
        method = "series" if series_terms_needed(mu, q, b, a) <= SERIES_CAP else "integral"
    if method == "series":
        return strip_series(mu, q, b, a, omega, order)
    if method == "integral":
        return strip_integral(mu, q, b, a, omega, order, cfg)
    raise ValueError(f"unknown method {method!r}")


def strip_laplace(params: ModelParams, geom: StripGeometry, state, omega: float = 0.0,
                  method: str = "auto", cfg: QuadConfig = DEFAULT_QUAD) -> HitProbTriple:
    """Hitting-probability transforms ``(p_ex, p_up, p_dn)`` on the strip."""
    b, a = _check_state(state)
    omega = _check_omega(omega)
    vals = strip_derivatives(params.mu, geom.q, (b, a), omega, 0, method, cfg)
    vals = np.clip(vals, 0.0, 1.0)
    return HitProbTriple(*map(float, vals), omega=omega, state=(b, a), q=geom.q)


# ---------------------------------------------------------------------------
# hitting times


def hit_time_moments(params: ModelParams, geom: StripGeometry | None, state,
                     conditional_on: str = "any", order: int = 2,
                     cfg: QuadConfig = DEFAULT_QUAD) -> HittingTimeMoments:
    """Mean and second moment of the absorption time from ``state``.

    ``geom=None`` is the free quadrant.  ``order=1`` skips the second moment
    (reported as nan).  On the driftless quadrant the mean is infinite.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if conditional_on not in ("any",) + BOUNDARIES:
        raise ValueError(f"unknown boundary {conditional_on!r}")
    b, a = _check_state(state)
    mu = params.mu
    q = math.inf if geom is None else geom.q
    if geom is None and conditional_on == "ex":
        raise ValueError("no execution boundary on the free quadrant")

    def pack(mean, second):
        return HittingTimeMoments(mean, second, conditional_on, (b, a), q, mu)

    edge = _boundary_triple(b, a, q)
    if edge is not None:
        return pack(0.0, 0.0)

    if geom is None:
        if mu == 0.0:
            return pack(math.inf, math.inf)
        p0 = np.array((0.0,) + _free_values(mu, b, a, 0.0, 0, cfg))
        if conditional_on == "any":
            mean = free_total_hit_time(mu, b, a, cfg)
            second = math.nan
            if order == 2:
                second = float(sum(_free_values(mu, b, a, 0.0, 2, cfg)))
            return pack(mean, second)
        idx = BOUNDARIES.index(conditional_on)
        d1 = np.array((0.0,) + _free_values(mu, b, a, 0.0, 1, cfg))
        mean = -d1[idx] / p0[idx]
        second = math.nan
        if order == 2:
            d2 = np.array((0.0,) + _free_values(mu, b, a, 0.0, 2, cfg))
            second = d2[idx] / p0[idx]
        return pack(mean, second)

    if conditional_on == "any":
        if series_terms_needed(mu, q, b, a) <= SERIES_CAP:
            d1 = strip_series(mu, q, b, a, 0.0, 1)
            mean = -float(d1.sum())
        else:
            mean = total_hit_time_integral(mu, q, b, a, cfg)
        second = math.nan
        if order == 2:
            second = float(strip_derivatives(mu, q, (b, a), 0.0, 2, "auto", cfg).sum())
        return pack(mean, second)

    idx = BOUNDARIES.index(conditional_on)
    p0 = strip_derivatives(mu, q, (b, a), 0.0, 0, "auto", cfg)
    d1 = strip_derivatives(mu, q, (b, a), 0.0, 1, "auto", cfg)
    if p0[idx] <= 0.0:
        return pack(math.nan, math.nan)
    mean = -d1[idx] / p0[idx]
    second = math.nan
    if order == 2:
        second = strip_derivatives(mu, q, (b, a), 0.0, 2, "auto", cfg)[idx] / p0[idx]
    return pack(float(mean), float(second))


def free_total_hit_time(mu: float, b: float, a: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Mean time to hit either axis of the quadrant (``mu > 0``)."""
    if mu <= 0.0:
        return math.inf
    if b <= SNAP or a <= SNAP:
        return 0.0
    def f(p):
        beta = np.sqrt(p * p + 2.0 * mu * mu)
        return (4.0 / math.pi * p / (p * p + mu * mu) ** 2 * np.sin(p * b)
                * np.exp(mu * b - (beta - mu) * a))

    tail = integrate_oscillatory(IntegrandSpec(f, b, max(a, 1e-3)), cfg).value
    return b / mu - tail


# ---------------------------------------------------------------------------
# small-w and large-q asymptotics


def small_omega_coeffs(state) -> SmallOmegaCoeffs:
    """Coefficients of ``w`` and ``w log w`` in the driftless quadrant
    transform of the up-hitting density."""
    b, a = _check_state(state)
    if b <= 0 or a <= 0:
        raise ValueError("state must be interior")
    pref = b * a / math.pi
    a1 = pref * ((2.0 * EULER_GAMMA - 3.0) + 2.0 * (a / b) * math.atan(b / a)
                 + math.log((b * b + a * a) / 2.0))
    return SmallOmegaCoeffs(a1=a1, b1=pref)


def large_q_expansion(params: ModelParams, state, q: float) -> LargeQExpansion:
    """Free values at ``w = 0`` plus the leading finite-``q`` correction.

    Driftless corrections are algebraic (``1/q**2``); with drift they are
    exponentially small in ``q``.
    """
    b, a = _check_state(state)
    mu = params.mu
    free_up, free_dn = free_next_sign(params, (b, a))
    free = HitProbTriple(0.0, free_up, free_dn, omega=0.0, state=(b, a), q=math.inf)
    if mu == 0.0:
        c = math.pi * a * b / q**2
        corr = (c / 2.0, -c / 6.0, -c / 3.0)
    else:
        r2 = math.sqrt(2.0)
        ex = (b / (math.sqrt(math.pi) * mu**2) * (2.0 * r2 * mu / q) ** 1.5
              * math.sinh(r2 * mu * a) * math.exp(mu * (b + a - (1.0 + r2) * q)))
        up = -(b / (math.sqrt(math.pi) * mu**2) * (r2 * mu / q) ** 1.5
               * math.sinh(r2 * mu * a) * math.exp(mu * (b + a - 2.0 * r2 * q)))
        corr = (ex, up, -ex - up)
    return LargeQExpansion(free, corr)


def asymmetry_chi(params: ModelParams, geom: StripGeometry | None = None,
                  cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Ratio of up to down hitting probability right after an up move.

    Below 1 means short-time mean reversion of the price.
    """
    state = params.up_state
    if geom is None:
        p_up, p_dn = free_next_sign(params, state)
    else:
        t = strip_laplace(params, geom, state, 0.0, cfg=cfg)
        p_up, p_dn = t.p_up, t.p_dn
    return p_up / p_dn


def iter_states(states: Iterable) -> Iterable[tuple[float, float]]:
    for s in states:
        yield _check_state(s)
