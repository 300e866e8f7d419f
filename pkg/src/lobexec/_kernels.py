"""Compiled single-path simulators.

Each function runs one path to execution (or to the time cap) with its own
``numpy.random.Generator``, so a path's result depends only on its stream.

Event codes: 0 executed, 1 censored, 2 free run finished.
"""

import math

import numba
import numpy as np

EXECUTED, CENSORED, FINISHED = 0, 1, 2
_STACK = 64


@numba.njit(cache=True)
def _crossing_prob(d0, d1, h):
    """Probability that a Brownian bridge over ``h`` starting ``d0`` and
    ending ``d1`` from a boundary touches it (``d1 <= 0``: certain)."""
    if d1 <= 0.0:
        return 1.0
    if d0 <= 0.0:
        return 1.0
    return math.exp(-2.0 * d0 * d1 / h)


@numba.njit(cache=True)
def _pick(support, rng):
    if support.shape[0] == 1:
        return support[0]
    return support[int(rng.random() * support.shape[0])]


@numba.njit(cache=True)
def diffusion_path(rng, mu, vb, va, q, lrg, sml, dt, h_max, kappa, eps, bridge,
                   max_time, sample_times, snap_x, snap_n, max_hits):
    """Bridge-corrected adaptive simulation of one path.

    Macro steps scale with the squared distance to the nearest boundary
    (never below ``dt``).  A step whose bridge-crossing probability exceeds
    ``eps`` is split at a bridge-sampled midpoint and the halves are
    processed in time order; at ``dt`` resolution crossings are Bernoulli
    draws.  Without ``bridge`` the scheme is plain Euler at step ``dt`` with
    sign-change detection.

    Stops after ``max_hits`` depletions.  Returns ``(x, n, t, code)``.
    """
    x = 0
    n = 0
    t = 0.0
    k = 0
    n_samples = sample_times.shape[0]
    st_t = np.empty(_STACK)
    st_b = np.empty(_STACK)
    st_a = np.empty(_STACK)
    top = 0
    if va >= q:
        return x, n, 0.0, EXECUTED
    while True:
        if top == 0:
            if k < n_samples and t >= sample_times[k]:
                while k < n_samples and t >= sample_times[k]:
                    snap_x[k] = x
                    snap_n[k] = n
                    k += 1
                if k == n_samples and q == math.inf:
                    return x, n, t, FINISHED
            if t >= max_time:
                return x, n, t, CENSORED
            if bridge:
                d = min(vb, va, q - va)
                h = (d / kappa) ** 2
                h = min(max(h, dt), h_max)
            else:
                h = dt
            t1 = t + h
            if k < n_samples and t1 >= sample_times[k]:
                t1 = sample_times[k]
                h = t1 - t
            if t1 >= max_time:
                t1 = max_time
                h = t1 - t
            sh = math.sqrt(h)
            st_t[0] = t1
            st_b[0] = vb - mu * h + sh * rng.standard_normal()
            st_a[0] = va - mu * h + sh * rng.standard_normal()
            top = 1
        top -= 1
        t1 = st_t[top]
        vb1 = st_b[top]
        va1 = st_a[top]
        h = t1 - t
        if bridge:
            pb = _crossing_prob(vb, vb1, h)
            pa = _crossing_prob(va, va1, h)
            pq = _crossing_prob(q - va, q - va1, h)
        else:
            pb = 1.0 if vb1 <= 0.0 else 0.0
            pa = 1.0 if va1 <= 0.0 else 0.0
            pq = 1.0 if va1 >= q else 0.0
        if bridge and max(pb, pa, pq) > eps and h > dt * 1.000001 and top < _STACK - 2:
            # split at a bridge midpoint; the right half waits on the stack
            top += 1
            half = 0.5 * h
            sd = math.sqrt(0.25 * h)
            st_t[top] = t + half
            st_b[top] = 0.5 * (vb + vb1) + sd * rng.standard_normal()
            st_a[top] = 0.5 * (va + va1) + sd * rng.standard_normal()
            top += 1
            continue
        hit_b = pb >= 1.0 or (pb > 0.0 and rng.random() < pb)
        hit_a = pa >= 1.0 or (pa > 0.0 and rng.random() < pa)
        hit_q = pq >= 1.0 or (pq > 0.0 and rng.random() < pq)
        if not (hit_b or hit_a or hit_q):
            t = t1
            vb = vb1
            va = va1
            continue
        # earliest crossing by linear interpolation; ties go to the bid
        best = 2.0
        which = -1
        if hit_b:
            best = vb / (vb + abs(vb1)) if vb + abs(vb1) > 0.0 else 0.0
            which = 0
        if hit_a:
            f = va / (va + abs(va1)) if va + abs(va1) > 0.0 else 0.0
            if f < best:
                best = f
                which = 1
        if hit_q:
            dq0 = q - va
            f = dq0 / (dq0 + abs(q - va1)) if dq0 + abs(q - va1) > 0.0 else 0.0
            if f < best:
                best = f
                which = 2
        te = t + best * h
        top = 0
        if k < n_samples:
            while k < n_samples and sample_times[k] <= te:
                snap_x[k] = x
                snap_n[k] = n
                k += 1
        t = te
        if which == 2:
            return x, n, t, EXECUTED
        n += 1
        if which == 1:
            x += 1
            if n >= max_hits:
                return x, n, t, FINISHED
            vb = _pick(sml, rng)
            va = _pick(lrg, rng)
        else:
            x -= 1
            if n >= max_hits:
                return x, n, t, FINISHED
            vb = _pick(lrg, rng)
            va = _pick(sml, rng)
        if va >= q:
            return x, n, t, EXECUTED


@numba.njit(cache=True)
def jump_path(rng, mu, dv, vb, va, q, lrg, sml, max_time, sample_times, snap_x, snap_n,
              max_hits):
    """Continuous-time random walk of both queues on a volume grid ``dv``.

    Each queue moves by ``+-dv`` with rates matched to unit diffusion and
    drift ``-mu``.  Boundaries are absorbing at the lattice site nearest to
    them: a queue below ``dv/2`` is depleted and the order fills once the ask
    is within ``dv/2`` of ``q``.  This keeps the overshoot below half a step.
    """
    tol = 0.5 * dv
    rate = 2.0 / (dv * dv)
    p_plus = 0.5 * (1.0 - mu * dv)
    x = 0
    n = 0
    t = 0.0
    k = 0
    n_samples = sample_times.shape[0]
    if va > q - tol:
        return x, n, 0.0, EXECUTED
    while True:
        t_next = t - math.log(1.0 - rng.random()) / rate
        while k < n_samples and sample_times[k] < t_next:
            snap_x[k] = x
            snap_n[k] = n
            k += 1
        if k == n_samples and q == math.inf and n_samples > 0:
            return x, n, t, FINISHED
        if t_next >= max_time:
            return x, n, max_time, CENSORED
        t = t_next
        step = dv if rng.random() < p_plus else -dv
        if rng.random() < 0.5:
            vb += step
        else:
            va += step
        if va > q - tol:
            return x, n, t, EXECUTED
        if vb < tol:
            x -= 1
            n += 1
            if n >= max_hits:
                return x, n, t, FINISHED
            vb = _pick(lrg, rng)
            va = _pick(sml, rng)
        elif va < tol:
            x += 1
            n += 1
            if n >= max_hits:
                return x, n, t, FINISHED
            vb = _pick(sml, rng)
            va = _pick(lrg, rng)
        if va > q - tol:
            return x, n, t, EXECUTED
