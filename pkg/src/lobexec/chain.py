"""Renewal chain of price changes.

Between two depletions the book diffuses from a known post-reset state, so
the sequence of depletion signs is a two-state Markov chain whose transition
weights are the Laplace-transformed hitting probabilities.  The generating
functions of price change, hit count and execution time are geometric
series in the 2x2 kernel; their derivatives give every moment.

Kernel convention: ``m[i, j]`` is the weight of hitting boundary ``i`` next
when the book was last reset into state ``j`` (index 0 = up, 1 = down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .firstpassage import (
    _free_values,
    asymmetry_chi,
    free_total_hit_time,
    strip_derivatives,
)
from .model import ModelParams, Regime, StripGeometry, classify_regime
from .quadrature import DEFAULT_QUAD, IntegrandSpec, QuadConfig, integrate_oscillatory

DET_GUARD = 1e-14
UP, DN = 0, 1


class DivergentSumError(ArithmeticError):
    """The geometric series of the kernel does not converge."""


@dataclass(frozen=True)
class TransitionKernel:
    """Hitting weights of the renewal chain at one Laplace frequency.

    For the free quadrant the exit entries are zero.  ``order > 0`` holds
    the ``order``-th derivative in ``omega`` of every entry instead.
    """

    omega: float
    m: np.ndarray
    entry_pair: tuple[float, float]
    exit_pair: tuple[float, float] = (0.0, 0.0)
    exit_zero: float = 0.0
    order: int = 0

    @property
    def p0(self) -> np.ndarray:
        return np.array(self.entry_pair, dtype=float)

    @property
    def e(self) -> np.ndarray:
        return np.array(self.exit_pair, dtype=float)

    @property
    def nohit(self) -> np.ndarray:
        """Weight of no further depletion from each post-reset state."""
        return 1.0 - self.m.sum(axis=0)


@dataclass(frozen=True)
class GFPoint:
    omega: float
    s: float


@dataclass(frozen=True)
class MomentSet:
    """Moments of price change ``x``, hit count ``n`` and execution time ``T``.

    Entries not computed are nan.  Monte Carlo sets carry standard errors
    (``se_*``) and the censored fraction.
    """

    mean_x: float = math.nan
    var_x: float = math.nan
    mean_n: float = math.nan
    var_n: float = math.nan
    mean_T: float = math.nan
    var_T: float = math.nan
    source: str = "analytic"
    se: dict = field(default_factory=dict)
    n_samples: int = 0
    censored_frac: float = 0.0

    def merged(self, other: "MomentSet") -> "MomentSet":
        """Fill the nan entries of ``self`` from ``other``."""
        vals = {}
        for name in ("mean_x", "var_x", "mean_n", "var_n", "mean_T", "var_T"):
            mine = getattr(self, name)
            vals[name] = getattr(other, name) if math.isnan(mine) else mine
        return MomentSet(**vals, source=self.source, se={**other.se, **self.se},
                         n_samples=self.n_samples, censored_frac=self.censored_frac)


@dataclass(frozen=True)
class ExecTimeIntermediates:
    a_up: float
    a_dn: float
    b: float


@dataclass(frozen=True)
class SmallQCoeffs:
    delta_up: float
    delta_dn: float


@dataclass(frozen=True)
class AsymptoticStats:
    """Large-``q`` limits at the given ``q`` and small-``q`` slopes."""

    q: float
    chi: float
    mean_x: float
    mean_n: float
    var_x: float
    small_q: SmallQCoeffs
    slope_mean_x: float
    slope_mean_n: float
    slope_var_x: float


# ---------------------------------------------------------------------------
# kernel assembly


def _strip_column(params: ModelParams, q: float, state, omega: float, order: int,
                  cfg: QuadConfig):
    ex, up, dn = strip_derivatives(params.mu, q, state, omega, order, "auto", cfg)
    return ex, up, dn


def build_kernel(params: ModelParams, geom: StripGeometry | None, omega: float = 0.0,
                 order: int = 0, cfg: QuadConfig = DEFAULT_QUAD) -> TransitionKernel:
    """Assemble the chain weights (or their ``order``-th omega-derivative).

    States whose ask volume is at or above ``q`` execute immediately, which
    covers both the instant regime and the up-state of the below-``v_lrg``
    regime.
    """
    if omega < 0:
        raise ValueError("omega must be >= 0")
    states = (params.up_state, params.down_state, params.start_state)
    if geom is None:
        cols = []
        for st in states:
            up, dn = _free_values(params.mu, st[0], st[1], omega, order, cfg)
            cols.append((0.0, up, dn))
    else:
        cols = [_strip_column(params, geom.q, st, omega, order, cfg) for st in states]
    (ex_u, uu, du), (ex_d, ud, dd), (ex_0, u0, d0) = cols
    m = np.array([[uu, ud], [du, dd]], dtype=float)
    return TransitionKernel(omega, m, (u0, d0), (ex_u, ex_d), ex_0, order)


def _counting_matrix(s: float, counting: str) -> np.ndarray:
    if counting == "price":
        return np.diag([math.exp(-s), math.exp(s)])
    if counting == "hits":
        return np.diag([math.exp(-s), math.exp(-s)])
    raise ValueError(f"unknown counting {counting!r}")


def geometric_sum(kernel: TransitionKernel | np.ndarray, point: GFPoint | float = 0.0,
                  counting: str = "price") -> np.ndarray:
    """``sum_n (K m)^n = (I - K m)^-1`` by explicit 2x2 inversion.

    ``K`` weights each depletion by ``exp(-s)`` (up) or ``exp(+-s)`` (down),
    so every hit is counted once, on arrival.
    """
    m = kernel.m if isinstance(kernel, TransitionKernel) else np.asarray(kernel, float)
    s = point.s if isinstance(point, GFPoint) else float(point)
    a = _counting_matrix(s, counting) @ m
    tr, det_a = a[0, 0] + a[1, 1], a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    disc = complex(tr * tr - 4.0 * det_a) ** 0.5
    radius = max(abs((tr + disc) / 2.0), abs((tr - disc) / 2.0))
    det = (1.0 - a[0, 0]) * (1.0 - a[1, 1]) - a[0, 1] * a[1, 0]
    if radius >= 1.0 or abs(det) <= DET_GUARD:
        raise DivergentSumError(f"kernel spectral radius {radius:.6g} (det {det:.3g})")
    return np.array([[1.0 - a[1, 1], a[0, 1]], [a[1, 0], 1.0 - a[0, 0]]]) / det


# ---------------------------------------------------------------------------
# closed-form moments


def _denominator(m: np.ndarray) -> float:
    uu, ud, du, dd = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    return 1.0 - dd - uu - ud * du + uu * dd


def _chain_moments(m: np.ndarray, p0: np.ndarray) -> tuple[float, float, float, float]:
    """First and second moments of price and hit count, up to the ``1/w`` factor.

    Rational functions of the kernel; the unnamed half of each second
    moment is obtained by exchanging up and down.
    """
    uu, ud, du, dd = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    u0, d0 = p0
    b = _denominator(m)
    if abs(b) <= DET_GUARD:
        raise DivergentSumError("degenerate kernel")

    def half_x2(uu, ud, du, dd, u0):
        n1 = 1 - 2*dd + dd**2 - du + 3*dd*du - du*ud - dd*du*ud
        n2 = du**2*ud + uu - 2*dd*uu + dd**2*uu - du*uu - dd*du*uu
        return u0 * (n1 + n2) / b**2

    def half_n2(uu, ud, du, dd, u0):
        n1 = 1 - 2*dd + dd**2 + 3*du - dd*du + 3*du*ud - dd*du*ud
        n2 = du**2*ud + uu - 2*dd*uu + dd**2*uu - du*uu - dd*du*uu
        return u0 * (n1 + n2) / b**2

    x1 = (u0 * (1 - dd - du) - d0 * (1 - uu - ud)) / b
    n1 = (u0 * (1 - dd + du) + d0 * (1 - uu + ud)) / b
    x2 = half_x2(uu, ud, du, dd, u0) + half_x2(dd, du, ud, uu, d0)
    n2 = half_n2(uu, ud, du, dd, u0) + half_n2(dd, du, ud, uu, d0)
    return x1, x2, n1, n2


def free_moments(kernel: TransitionKernel) -> dict[str, float]:
    """Laplace transforms in time of ``<x_t>``, ``<x_t^2>``, ``<n_t>``, ``<n_t^2>``.

    Valid for ``omega > 0`` on the free kernel.
    """
    if kernel.omega <= 0:
        raise DivergentSumError("free moments need omega > 0")
    x1, x2, n1, n2 = _chain_moments(kernel.m, kernel.p0)
    w = kernel.omega
    return {"x": x1 / w, "x2": x2 / w, "n": n1 / w, "n2": n2 / w}


def _instant(params: ModelParams, geom: StripGeometry) -> bool:
    return classify_regime(params, geom) is Regime.INSTANT


def exec_moments(params: ModelParams, geom: StripGeometry,
                 kernel: TransitionKernel | None = None,
                 cfg: QuadConfig = DEFAULT_QUAD) -> MomentSet:
    """Mean and variance of the price change and hit count at execution.

    ``mean_x`` is the apparent impact of waiting for ``q`` on the ask.
    """
    if _instant(params, geom):
        return MomentSet(0.0, 0.0, 0.0, 0.0)
    if kernel is None:
        kernel = build_kernel(params, geom, 0.0, 0, cfg)
    x1, x2, n1, n2 = _chain_moments(kernel.m, kernel.p0)
    return MomentSet(mean_x=x1, var_x=max(x2 - x1 * x1, 0.0),
                     mean_n=n1, var_n=max(n2 - n1 * n1, 0.0))


def exec_time_intermediates(kernel: TransitionKernel) -> ExecTimeIntermediates:
    (uu, ud), (du, dd) = kernel.m
    u0, d0 = kernel.entry_pair
    return ExecTimeIntermediates(
        a_up=d0 * ud + u0 - u0 * dd,
        a_dn=u0 * du + d0 - d0 * uu,
        b=_denominator(kernel.m),
    )


def exec_time_gf(kernel: TransitionKernel) -> float:
    """Laplace transform of the execution-time density, ``E[exp(-w T)]``."""
    (uu, ud), (du, dd) = kernel.m
    u0, d0 = kernel.entry_pair
    eu, ed = kernel.exit_pair
    b = _denominator(kernel.m)
    if b <= DET_GUARD:
        raise DivergentSumError("degenerate execution kernel")
    num = u0 * (eu - dd * eu + du * ed) + d0 * (ed - uu * ed + ud * eu)
    return kernel.exit_zero + num / b


def _time_tables(params: ModelParams, geom: StripGeometry, cfg: QuadConfig):
    """Probabilities and unnormalised first/second time moments per source."""
    tabs = []
    for order in (0, 1, 2):
        k = build_kernel(params, geom, 0.0, order, cfg)
        # rows: ex, up, dn; columns: up-state, down-state, start
        t = np.array([[k.exit_pair[0], k.exit_pair[1], k.exit_zero],
                      [k.m[0, 0], k.m[0, 1], k.entry_pair[0]],
                      [k.m[1, 0], k.m[1, 1], k.entry_pair[1]]])
        tabs.append(t)
    prob, d1, d2 = tabs
    return prob, -d1, d2


def exec_time_moments(params: ModelParams, geom: StripGeometry,
                      cfg: QuadConfig = DEFAULT_QUAD) -> MomentSet:
    """Mean and variance of the execution time.

    Built from the conditional hitting-time moments of the three source
    states; see :func:`exec_time_moments_matrix` for an independent route.
    """
    if _instant(params, geom):
        return MomentSet(mean_T=0.0, var_T=0.0)
    prob, m1, m2 = _time_tables(params, geom, cfg)
    k0 = build_kernel(params, geom, 0.0, 0, cfg)
    inter = exec_time_intermediates(k0)
    b, a_u, a_d = inter.b, inter.a_up, inter.a_dn
    if b <= DET_GUARD:
        raise DivergentSumError("degenerate execution kernel")
    h1 = m1.sum(axis=0)  # unconditional mean hitting time per source
    h2 = m2.sum(axis=0)
    U, D, Z = 0, 1, 2
    mean = (a_d * h1[D] + a_u * h1[U] + b * h1[Z]) / b

    # m1[row, col]: rows ex/up/dn, so "up hit from down-state" is m1[1, D]
    def half(a_u, a_d, U, D, r_up, r_dn):
        p_dd, p_du = prob[r_dn, D], prob[r_dn, U]
        return ((a_d * (h2[D] - h1[D] ** 2) + b / 2 * (h2[Z] - h1[Z] ** 2)) / b
                + (-(a_d * h1[D] + a_u * h1[U]) ** 2 / 2 + a_d * b * (h1[D] - h1[Z]) ** 2
                   - a_d * b * h1[Z] ** 2) / b**2
                + 2 / b**2 * (a_d * m1[r_up, D] + a_u * m1[r_up, U] + b * m1[r_up, Z])
                * ((1 - p_dd) * h1[U] + p_du * h1[D]))

    var = half(a_u, a_d, U, D, 1, 2) + half(a_d, a_u, D, U, 2, 1)
    return MomentSet(mean_T=float(mean), var_T=float(max(var, 0.0)))


def exec_time_moments_matrix(params: ModelParams, geom: StripGeometry,
                             cfg: QuadConfig = DEFAULT_QUAD) -> tuple[float, float]:
    """``(<T>, Var T)`` by differentiating the resolvent, ``N' = N M' N``."""
    if _instant(params, geom):
        return 0.0, 0.0
    k0, k1, k2 = (build_kernel(params, geom, 0.0, o, cfg) for o in (0, 1, 2))
    n = np.linalg.inv(np.eye(2) - k0.m)
    n1 = n @ k1.m @ n
    n2 = n @ k2.m @ n + 2.0 * n @ k1.m @ n @ k1.m @ n
    e0, e1, e2 = k0.e, k1.e, k2.e
    p0, p1, p2 = k0.p0, k1.p0, k2.p0
    # Psi = ex0 + e^T N p0, differentiated by the product rule
    d1 = k1.exit_zero + e1 @ n @ p0 + e0 @ n1 @ p0 + e0 @ n @ p1
    d2 = (k2.exit_zero + e2 @ n @ p0 + e0 @ n2 @ p0 + e0 @ n @ p2
          + 2.0 * (e1 @ n1 @ p0 + e1 @ n @ p1 + e0 @ n1 @ p1))
    return float(-d1), float(d2 - d1 * d1)


# ---------------------------------------------------------------------------
# asymptotics


def _delta_series(mu: float, v0: float, nterms: int = 400) -> SmallQCoeffs:
    """Rates at which up / down depletion probabilities grow as the ask
    starts just below the execution level, from the strip series at
    ``b = a = q = v0``."""
    q = b = v0
    n = np.arange(1, nterms + 1, dtype=float)
    qn = math.pi * n / q
    z = mu * mu
    mun = np.sqrt(qn * qn + 2.0 * z)
    h = np.exp(-mun * b)
    alt = np.where(n % 2 == 0, 1.0, -1.0)  # (-1)^n
    c_q = (2.0 / q) * qn * qn / (qn * qn + z)
    d_q = (2.0 / q) * qn * qn * (1.0 - alt * math.exp(-mu * q)) / (qn * qn + z)
    edge = 1.0 / q if mu == 0.0 else mu * math.exp(mu * q) / math.sinh(mu * q)
    e_qb = math.exp(mu * (q + b))
    delta_up = edge + e_qb * float(np.dot(c_q * alt, h))
    delta_dn = -e_qb * float(np.dot(d_q * alt, h))
    return SmallQCoeffs(delta_up, delta_dn)


def _delta_integral(mu: float, v0: float, cfg: QuadConfig = DEFAULT_QUAD) -> SmallQCoeffs:
    """Same rates from the bid-direction sine transform (``mu > 0``).

    The down-rate integrand tends to ``exp(mu v0) sin(p v0)``; that part is
    summed in the Abel sense (``1/v0``) and the remainder integrated.
    """
    two_pi = 2.0 / math.pi
    ev = math.exp(mu * v0)

    def f_up(p):
        beta = np.sqrt(p * p + 2.0 * mu * mu)
        return two_pi * beta * p * np.sin(p * v0) / (p * p + mu * mu) * ev * ev / np.sinh(beta * v0)

    def f_dn(p):
        beta = np.sqrt(p * p + 2.0 * mu * mu)
        x = beta * v0
        # (cosh x - e^{mu v0}) / sinh x, written to stay finite for large x
        ratio = (1.0 + np.exp(-2.0 * x) - 2.0 * ev * np.exp(-x)) / (1.0 - np.exp(-2.0 * x))
        full = beta * p / (p * p + mu * mu) * ratio * ev
        return two_pi * np.sin(p * v0) * (full - ev)

    up = integrate_oscillatory(IntegrandSpec(f_up, v0, v0), cfg).value
    rem = integrate_oscillatory(IntegrandSpec(f_dn, v0, 0.0), cfg).value
    dn = mu + two_pi * ev / v0 + rem
    return SmallQCoeffs(up, dn)


def small_q_coeffs(params: ModelParams, method: str = "series") -> SmallQCoeffs:
    """Linear-response rates near ``q = v0`` (needs ``v0_bid == v0_ask``)."""
    if params.v0_bid != params.v0_ask:
        raise ValueError("small-q slopes assume a symmetric start (v0_bid == v0_ask)")
    v0 = params.v0_ask
    if method == "series":
        return _delta_series(params.mu, v0)
    if method == "integral":
        if params.mu == 0.0:
            return SmallQCoeffs((1.0 / v0) * math.tanh(math.pi / 2.0),
                                (2.0 / v0) / math.sinh(math.pi))
        return _delta_integral(params.mu, v0)
    raise ValueError(f"unknown method {method!r}")


def large_q_hits(params: ModelParams, q: float) -> float:
    """Leading growth of the mean hit count with the execution level."""
    mu, vs, vl = params.mu, params.v_sml, params.v_lrg
    if mu == 0.0:
        return 2.0 * q * q / (math.pi * vs * vl)
    r2 = math.sqrt(2.0)
    den = vs * math.sinh(r2 * mu * vl) + vl * math.sinh(r2 * mu * vs)
    return (2.0 * math.sqrt(math.pi) * mu**2 * (q / (2.0 * r2 * mu)) ** 1.5
            * math.exp(mu * ((1.0 + r2) * q - vs - vl)) / den)


def large_q_impact(params: ModelParams, chi: float | None = None) -> float:
    """Limit of the mean price change at execution as ``q`` grows."""
    if chi is None:
        chi = asymmetry_chi(params)
    return (1.0 + chi) / (6.0 if params.mu == 0.0 else 2.0)


def asymptotic_exec_stats(params: ModelParams, geom: StripGeometry,
                          cfg: QuadConfig = DEFAULT_QUAD) -> AsymptoticStats:
    """Large-``q`` predictions at ``geom.q`` and the slopes at ``q = v0``."""
    chi = asymmetry_chi(params)
    n_big = large_q_hits(params, geom.q)
    coeffs = small_q_coeffs(params)
    # kernel entries from the down-state with the level right at v0
    ex, p_ud, p_dd = strip_derivatives(params.mu, params.v0_ask, params.down_state,
                                       0.0, 0, "auto", cfg)
    du, dn = coeffs.delta_up, coeffs.delta_dn
    slope_x = du - dn * (1.0 - p_ud) / (1.0 - p_dd)
    slope_n = du + dn * (1.0 + p_ud) / (1.0 - p_dd)
    slope_v = du + dn * (1.0 + p_dd) * (1.0 - p_ud) / (1.0 - p_dd) ** 2
    return AsymptoticStats(
        q=geom.q, chi=chi, mean_x=large_q_impact(params, chi), mean_n=n_big,
        var_x=chi * n_big, small_q=coeffs,
        slope_mean_x=slope_x, slope_mean_n=slope_n, slope_var_x=slope_v,
    )


@dataclass(frozen=True)
class FreeTimeAsymptotics:
    """Long-time predictions for the free book at the requested times."""

    t: np.ndarray
    mean_x: np.ndarray
    mean_n: np.ndarray
    var_x: np.ndarray
    var_n: np.ndarray
    sigma2: float  # long-run variance rate of the price; 0 when sub-diffusive
    chi: float
    mean_hit_time: float


def free_time_asymptotics(params: ModelParams, times: Sequence[float],
                          cfg: QuadConfig = DEFAULT_QUAD) -> FreeTimeAsymptotics:
    """Leading large-``t`` behaviour of the free price and hit count.

    Without drift the hit rate decays like ``1/log t`` (sub-diffusive
    price); with drift the depletions form a renewal process with finite
    mean inter-hit time.
    """
    t = np.asarray(times, dtype=float)
    if np.any(t <= 1.0):
        raise ValueError("asymptotic predictions need t > 1")
    chi = asymmetry_chi(params)
    mu = params.mu
    if mu == 0.0:
        c = math.pi / (2.0 * params.v_sml * params.v_lrg)
        lt = np.log(t)
        mean_n = c * t / lt
        return FreeTimeAsymptotics(t, np.zeros_like(t), mean_n, chi * mean_n,
                                   c * c * t * t / lt**3, 0.0, chi, math.inf)
    b, a = params.up_state
    th = free_total_hit_time(mu, b, a, cfg)
    th2 = float(sum(_free_values(mu, b, a, 0.0, 2, cfg)))
    mean_n = t / th
    return FreeTimeAsymptotics(t, np.zeros_like(t), mean_n, chi * t / th,
                               t * (th2 - th * th) / th**3, chi / th, chi, th)
