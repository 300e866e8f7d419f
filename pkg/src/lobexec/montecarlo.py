"""Monte Carlo simulation of the two best queues.

Two dynamics are available: the diffusion (``dv = 0``), simulated with
adaptive bridge-corrected steps, and a volume-granular jump process
(``dv > 0``) whose first two moments match the diffusion.

Path ``i`` always draws from ``Generator(Philox(SeedSequence(seed,
spawn_key=(i,))))``, so results do not depend on how paths are split
across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .chain import MomentSet
from .model import ModelParams, ParameterError, ResetDistribution, StripGeometry


class InsufficientDataError(ValueError):
    """Fewer than two usable samples."""


@dataclass(frozen=True)
class SimConfig:
    """Simulator controls.

    ``kappa`` sets macro steps to ``(distance / kappa)**2``; ``bisect_eps``
    is the crossing probability above which a step is split.  Neither
    affects the ``dt``-level crossing test.
    """

    dt: float = 1e-3
    bridge_correction: bool = True
    dv: float = 0.0
    reset_distribution: ResetDistribution | None = None
    n_paths: int = 1000
    seed: int = 0
    max_time: float = 1e6
    sample_times: tuple[float, ...] = ()
    workers: int = 1
    h_max: float = 100.0
    kappa: float = 2.0
    bisect_eps: float = 1e-2

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt", "dt must be > 0")
        if not self.dv >= 0:
            raise ParameterError("dv", "dv must be >= 0")
        if int(self.n_paths) < 1:
            raise ParameterError("n_paths", "n_paths must be >= 1")
        if not self.max_time > 0:
            raise ParameterError("max_time", "max_time must be > 0")
        if int(self.workers) < 1:
            raise ParameterError("workers", "workers must be >= 1")
        times = tuple(float(t) for t in self.sample_times)
        if any(b <= a for a, b in zip(times, times[1:])) or any(t <= 0 for t in times):
            raise ParameterError("sample_times", "sample times must be positive and increasing")
        object.__setattr__(self, "sample_times", times)
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass
class PathState:
    vb: float
    va: float
    x: int = 0
    n: int = 0
    t: float = 0.0


@dataclass(frozen=True)
class SimOutcome:
    """Per-path results.

    Execution runs fill ``x``, ``n``, ``T`` and ``censored``; free runs fill
    ``snap_x``/``snap_n`` with shape ``(n_paths, len(sample_times))``.
    """

    x: np.ndarray
    n: np.ndarray
    T: np.ndarray
    censored: np.ndarray
    sample_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snap_x: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    snap_n: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def censored_frac(self) -> float:
        return float(self.censored.mean()) if self.censored.size else 0.0


# ---------------------------------------------------------------------------
# building blocks


def path_rng(seed: int, index: int) -> np.random.Generator:
    """The random stream of path ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def crossing_probability(d0: float, d1: float, h: float) -> float:
    """Chance that a Brownian bridge of duration ``h`` touches a boundary
    it starts ``d0`` from and ends ``d1`` from (unit diffusion)."""
    return float(_kernels._crossing_prob(float(d0), float(d1), float(h)))


def jump_rates(mu: float, dv: float) -> tuple[float, float]:
    """Up / down jump rates of one queue for granularity ``dv``.

    Matches mean ``-mu`` and variance ``1`` per unit time.
    """
    if not dv > 0:
        raise ParameterError("dv", "dv must be > 0 for the jump process")
    lam_plus = 0.5 * (1.0 / dv**2 - mu / dv)
    lam_minus = 0.5 * (1.0 / dv**2 + mu / dv)
    if lam_plus < 0 or lam_minus < 0:
        raise ParameterError("dv", f"granularity too coarse: mu*dv = {mu * dv:g} > 1")
    return lam_plus, lam_minus


def draw_reset(direction: str, dist: ResetDistribution,
               rng: np.random.Generator) -> tuple[float, float]:
    """Post-depletion ``(bid, ask)``: up means the ask was emptied."""
    lrg = dist.lrg_support[int(rng.random() * len(dist.lrg_support))] \
        if len(dist.lrg_support) > 1 else dist.lrg_support[0]
    sml = dist.sml_support[int(rng.random() * len(dist.sml_support))] \
        if len(dist.sml_support) > 1 else dist.sml_support[0]
    if direction == "up":
        return (sml, lrg)
    if direction == "down":
        return (lrg, sml)
    raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")


def _apply_event(state: PathState, which: str, dist: ResetDistribution, rng) -> None:
    state.n += 1
    state.x += 1 if which == "up" else -1
    state.vb, state.va = draw_reset(which, dist, rng)


def step_diffusion(state: PathState, params: ModelParams, dt: float,
                   rng: np.random.Generator, q: float = math.inf, bridge: bool = True,
                   dist: ResetDistribution | None = None) -> tuple[PathState, str | None]:
    """Advance one fixed step; returns the new state and the event, if any.

    Events are ``"up"``, ``"down"`` or ``"ex"``.  The simulators use the
    compiled adaptive version; this one is for inspection and tests.
    """
    dist = dist or ResetDistribution.deterministic(params)
    s = math.sqrt(dt)
    vb1 = state.vb - params.mu * dt + s * rng.standard_normal()
    va1 = state.va - params.mu * dt + s * rng.standard_normal()
    cands = []
    for name, d0, d1 in (("down", state.vb, vb1), ("up", state.va, va1),
                         ("ex", q - state.va, q - va1)):
        if d1 <= 0:
            p = 1.0
        elif bridge and math.isfinite(d0):
            p = crossing_probability(d0, d1, dt)
        else:
            p = 0.0
        if p >= 1.0 or (p > 0.0 and rng.random() < p):
            cands.append((d0 / (d0 + abs(d1)), name))
    new = PathState(vb1, va1, state.x, state.n, state.t + dt)
    if not cands:
        return new, None
    frac, which = min(cands, key=lambda c: c[0])  # stable: bid first on ties
    new.t = state.t + frac * dt
    if which != "ex":
        _apply_event(new, which, dist, rng)
    return new, which


def step_jump(state: PathState, params: ModelParams, dv: float, rng: np.random.Generator,
              q: float = math.inf, dist: ResetDistribution | None = None
              ) -> tuple[PathState, str | None]:
    """One jump of the granular process (exponential waiting time)."""
    dist = dist or ResetDistribution.deterministic(params)
    lam_plus, lam_minus = jump_rates(params.mu, dv)
    rate = 2.0 * (lam_plus + lam_minus)
    new = PathState(state.vb, state.va, state.x, state.n,
                    state.t + rng.exponential(1.0 / rate))
    step = dv if rng.random() < lam_plus / (lam_plus + lam_minus) else -dv
    if rng.random() < 0.5:
        new.vb += step
    else:
        new.va += step
    tol = 0.5 * dv  # absorb at the lattice site nearest each boundary
    if new.va > q - tol:
        return new, "ex"
    if new.vb < tol:
        _apply_event(new, "down", dist, rng)
        return new, "down"
    if new.va < tol:
        _apply_event(new, "up", dist, rng)
        return new, "up"
    return new, None


# ---------------------------------------------------------------------------
# path batches


def _run_chunk(args):
    params, q, cfg, start, stop, max_hits = args
    dist = cfg.reset_distribution or ResetDistribution.deterministic(params)
    lrg = np.array(dist.lrg_support)
    sml = np.array(dist.sml_support)
    times = np.array(cfg.sample_times, dtype=float)
    m = stop - start
    out_x = np.zeros(m, dtype=np.int64)
    out_n = np.zeros(m, dtype=np.int64)
    out_t = np.zeros(m)
    out_c = np.zeros(m, dtype=bool)
    snap_x = np.zeros((m, times.size), dtype=np.int64)
    snap_n = np.zeros((m, times.size), dtype=np.int64)
    if cfg.dv > 0:
        jump_rates(params.mu, cfg.dv)
    for j, i in enumerate(range(start, stop)):
        rng = path_rng(cfg.seed, i)
        if cfg.dv > 0:
            x, n, t, code = _kernels.jump_path(
                rng, params.mu, cfg.dv, params.v0_bid, params.v0_ask, q, lrg, sml,
                cfg.max_time, times, snap_x[j], snap_n[j], max_hits)
        else:
            x, n, t, code = _kernels.diffusion_path(
                rng, params.mu, params.v0_bid, params.v0_ask, q, lrg, sml, cfg.dt,
                cfg.h_max, cfg.kappa, cfg.bisect_eps, cfg.bridge_correction,
                cfg.max_time, times, snap_x[j], snap_n[j], max_hits)
        out_x[j], out_n[j], out_t[j] = x, n, t
        out_c[j] = code == _kernels.CENSORED
    return out_x, out_n, out_t, out_c, snap_x, snap_n


_NO_LIMIT = np.iinfo(np.int64).max


def _run(params: ModelParams, q: float, cfg: SimConfig, max_hits: int = _NO_LIMIT) -> SimOutcome:
    n = cfg.n_paths
    if cfg.workers == 1:
        parts = [_run_chunk((params, q, cfg, 0, n, max_hits))]
    else:
        bounds = np.linspace(0, n, cfg.workers + 1).astype(int)
        jobs = [(params, q, cfg, int(a), int(b), max_hits)
                for a, b in zip(bounds, bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    cat = [np.concatenate([p[k] for p in parts]) for k in range(6)]
    return SimOutcome(cat[0], cat[1], cat[2], cat[3],
                      np.array(cfg.sample_times, dtype=float), cat[4], cat[5])


def simulate_free(params: ModelParams, cfg: SimConfig) -> SimOutcome:
    """Free book (no execution level), recording ``x`` and ``n`` at the
    configured sample times."""
    if not cfg.sample_times:
        raise ParameterError("sample_times", "free runs need sample times")
    cfg = replace(cfg, max_time=max(cfg.max_time, cfg.sample_times[-1]))
    return _run(params, math.inf, cfg)


def simulate_execution(params: ModelParams, geom: StripGeometry, cfg: SimConfig) -> SimOutcome:
    """Run every path until the ask queue reaches ``geom.q`` (or the cap)."""
    if cfg.sample_times:
        cfg = replace(cfg, sample_times=())
    return _run(params, geom.q, cfg)


def simulate_first_passage(params: ModelParams, geom: StripGeometry | None,
                           cfg: SimConfig) -> dict[str, float]:
    """Empirical probabilities that execution, an up or a down depletion
    comes first from the start state, with binomial standard errors."""
    q = math.inf if geom is None else geom.q
    out = _run(params, q, replace(cfg, sample_times=()), max_hits=1)
    done = ~out.censored
    total = int(done.sum())
    if total == 0:
        raise InsufficientDataError("every path was censored")
    res = {}
    for name, mask in (("ex", (out.n == 0) & done), ("up", (out.x == 1) & done),
                       ("dn", (out.x == -1) & done)):
        p = float(mask.sum()) / total
        res[name] = p
        res["se_" + name] = math.sqrt(max(p * (1 - p), 0.0) / total)
    res["n"] = total
    return res


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class SampleStats:
    mean: float
    var: float
    se_mean: float
    se_var: float
    count: int


def sample_stats(values) -> SampleStats:
    """Mean, unbiased variance and their standard errors.

    The variance error uses the fourth central moment.
    """
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    n = v.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    mean = float(v.mean())
    dev = v - mean
    var = float(dev @ dev / (n - 1))
    m4 = float(np.mean(dev**4))
    var_of_var = max((m4 - var * var * (n - 3) / (n - 1)) / n, 0.0)
    return SampleStats(mean, var, math.sqrt(var / n), math.sqrt(var_of_var), n)


def summarize(samples: SimOutcome) -> MomentSet:
    """Moments of ``x_T``, ``n_T`` and ``T`` over the uncensored paths."""
    keep = ~samples.censored
    if keep.sum() < 2:
        raise InsufficientDataError("fewer than 2 uncensored paths")
    sx, sn, st = (sample_stats(a[keep]) for a in (samples.x, samples.n, samples.T))
    se = {"mean_x": sx.se_mean, "var_x": sx.se_var, "mean_n": sn.se_mean,
          "var_n": sn.se_var, "mean_T": st.se_mean, "var_T": st.se_var}
    return MomentSet(sx.mean, sx.var, sn.mean, sn.var, st.mean, st.var, source="mc", se=se,
                     n_samples=int(keep.sum()), censored_frac=samples.censored_frac)


def snapshot_stats(samples: SimOutcome) -> list[tuple[SampleStats, SampleStats]]:
    """Per sample time, statistics of ``x_t`` and ``n_t`` across paths."""
    return [(sample_stats(samples.snap_x[:, j]), sample_stats(samples.snap_n[:, j]))
            for j in range(samples.sample_times.size)]


def variogram_slope(samples: SimOutcome, t_from: float, t_to: float) -> tuple[float, float]:
    """``Var(x_{t_to} - x_{t_from}) / (t_to - t_from)`` and its standard error.

    Both times must be sample times of the free run.
    """
    times = samples.sample_times
    idx = []
    for t in (t_from, t_to):
        hit = np.flatnonzero(np.isclose(times, t, rtol=1e-12, atol=0.0))
        if hit.size == 0:
            raise ValueError(f"{t} is not a sample time")
        idx.append(int(hit[0]))
    span = times[idx[1]] - times[idx[0]]
    if span <= 0:
        raise ValueError("t_to must come after t_from")
    st = sample_stats(samples.snap_x[:, idx[1]] - samples.snap_x[:, idx[0]])
    return st.var / span, st.se_var / span
