"""Round-trip theory of the index process under windowed even/odd swaps.

The closed form for the expected round-trip time, its minimizing window, the
root of the auxiliary function ``g`` behind the asymptotic window formula, and
a Monte-Carlo simulator of the lifted walk used to check the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InternalError, InvalidArgumentError

__all__ = [
    "RoundTripModel",
    "IndexSimResult",
    "expected_round_trip",
    "simulate_index_process",
    "optimal_window",
    "argmin_window",
    "g_function",
    "solve_g_root",
    "window_from_root",
    "estimate_optimal_chains",
    "sweep_table",
]


@dataclass(frozen=True)
class RoundTripModel:
    """``P`` slots, window ``W`` and one rejection rate per adjacent pair."""

    P: int
    W: int
    rejections: tuple

    def __post_init__(self):
        if int(self.P) != self.P or self.P < 2:
            raise InvalidArgumentError(f"P must be an integer >= 2, got {self.P}")
        if int(self.W) != self.W or self.W < 1:
            raise InvalidArgumentError(f"W must be an integer >= 1, got {self.W}")
        r = np.array(self.rejections, dtype=float).reshape(-1)
        if r.size == 1 and self.P > 2:
            r = np.full(self.P - 1, r[0])
        if r.size != self.P - 1:
            raise InvalidArgumentError(f"need {self.P - 1} rejection rates, got {r.size}")
        if not np.all((r > 0) & (r < 1)):
            raise InvalidArgumentError(f"rejection rates must lie strictly in (0, 1), got {r}")
        object.__setattr__(self, "P", int(self.P))
        object.__setattr__(self, "W", int(self.W))
        object.__setattr__(self, "rejections", tuple(float(v) for v in r))

    @classmethod
    def uniform(cls, P: int, W: int, r: float) -> RoundTripModel:
        return cls(P, W, (r,) * (int(P) - 1))


@dataclass(frozen=True)
class IndexSimResult:
    mean: float
    stderr: float
    n_round_trips: int

    def __float__(self):
        return self.mean


def expected_round_trip(model: RoundTripModel) -> float:
    """``2WP + 2WP * sum_p r_p^W / (1 - r_p^W)`` in iterations."""
    rw = np.array(model.rejections) ** model.W
    base = 2.0 * model.W * model.P
    return float(base + base * np.sum(rw / (1.0 - rw)))


def simulate_index_process(model: RoundTripModel, n_round_trips: int, seed=None, n_particles: int | None = None):
    """Monte-Carlo mean round-trip time of the lifted index walk.

    A particle sits at slot ``Z`` with direction ``d``. Each window it either
    crosses the next pair in direction ``d`` (probability ``1 - r^W``) or
    reverses; at a boundary it reverses for one window. A trip starts at
    ``(1, +1)``, must touch slot ``P`` and ends when the particle turns around
    at slot 1 again. Particles run in lockstep and each completes the same
    quota of trips so that the stopping rule does not favour short trips.
    """
    n_round_trips = int(n_round_trips)
    if n_round_trips < 1:
        raise InvalidArgumentError("n_round_trips must be >= 1")
    rng = np.random.default_rng(seed)
    P = model.P
    success = 1.0 - np.array(model.rejections) ** model.W
    if n_particles is None:
        n_particles = min(n_round_trips, 4096)
    n_particles = max(1, min(int(n_particles), n_round_trips))
    quota = np.full(n_particles, n_round_trips // n_particles)
    quota[: n_round_trips % n_particles] += 1

    # Pair index used by each state: going up from Z uses pair Z, going down uses Z-1 (1-based).
    up_prob = np.concatenate((success, [0.0]))  # indexed by Z-1; top slot never climbs
    down_prob = np.concatenate(([0.0], success))  # indexed by Z-1; bottom slot never descends

    z = np.zeros(n_particles, dtype=np.int64)  # 0-based slot
    up = np.ones(n_particles, dtype=bool)
    touched = np.zeros(n_particles, dtype=bool)
    elapsed = np.zeros(n_particles, dtype=np.int64)
    done = np.zeros(n_particles, dtype=np.int64)
    total = np.zeros(n_particles)
    total_sq = np.zeros(n_particles)
    active = np.arange(n_particles)

    while active.size:
        za, ua = z[active], up[active]
        prob = np.where(ua, up_prob[za], down_prob[za])
        move = rng.random(active.size) < prob
        z[active] = za + np.where(move, np.where(ua, 1, -1), 0)
        up[active] = ua ^ ~move
        elapsed[active] += 1
        zn = z[active]
        touched[active] |= zn == P - 1
        finished = active[(zn == 0) & up[active] & ~move & touched[active]]
        if finished.size:
            t = elapsed[finished] * model.W
            total[finished] += t
            total_sq[finished] += t.astype(float) ** 2
            done[finished] += 1
            elapsed[finished] = 0
            touched[finished] = False
            active = active[done[active] < quota[active]]

    n = int(done.sum())
    mean = total.sum() / n
    var = max(total_sq.sum() / n - mean**2, 0.0)
    return IndexSimResult(float(mean), float(math.sqrt(var / n)), n)


def optimal_window(P: int, S: float) -> int:
    """Window minimizing the round-trip time asymptotically; 1 for ``P`` in {2, 3}."""
    if int(P) != P or P < 2:
        raise InvalidArgumentError(f"P must be an integer >= 2, got {P}")
    if not 0 < S < 1:
        raise InvalidArgumentError(f"S must lie in (0, 1), got {S}")
    if P <= 3:
        return 1
    denom = -math.log1p(-S)
    if not math.isfinite(denom):
        return 1
    return max(1, math.ceil((math.log(P) + math.log(math.log(P))) / denom))


def argmin_window(P: int, r: float, max_window: int = 256) -> int:
    """Integer window minimizing the closed-form round-trip time for equal rates."""
    windows = np.arange(1, max_window + 1)
    rw = float(r) ** windows
    cost = 2.0 * windows * P * (1.0 + (P - 1) * rw / (1.0 - rw))
    return int(windows[np.argmin(cost)])


def g_function(x, P: int):
    """``g(x) = (1-x)^2 + (P-1) x (1 - x + log x)``."""
    x = np.asarray(x, dtype=float)
    # 1 - x + log x loses everything to cancellation near 1; log1p(-(1-x)) keeps it.
    y = 1.0 - x
    inner = y + np.log1p(-y)
    out = y * y + (P - 1) * x * inner
    return float(out) if out.ndim == 0 else out


def solve_g_root(P: int, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Unique root of ``g`` in (0, 1) by bisection on ``[1e-12, 1 - 1e-12]``."""
    if int(P) != P or P < 4:
        raise InvalidArgumentError(f"P must be an integer >= 4, got {P}")
    lo, hi = 1e-12, 1.0 - 1e-12
    g_lo, g_hi = g_function(lo, P), g_function(hi, P)
    if not (g_lo > 0 > g_hi):
        raise InternalError(f"g does not change sign on the bracket: g(lo)={g_lo}, g(hi)={g_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g_function(mid, P) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def window_from_root(x_star: float, r: float) -> float:
    """Continuous window ``log x* / log r`` implied by the root."""
    return math.log(x_star) / math.log(r)


def estimate_optimal_chains(sigmas, taus) -> float:
    """Lower bound ``min_p sigma_p / (3 tau^(p+1)) * log(tau^(P) / tau^(1))``.

    ``sigmas`` holds one energy-noise scale per adjacent pair (length P-1).
    """
    s = np.asarray(sigmas, dtype=float).reshape(-1)
    t = np.asarray(taus, dtype=float).reshape(-1)
    if t.size < 2 or s.size != t.size - 1:
        raise InvalidArgumentError(f"need len(sigmas) == len(taus) - 1 >= 1, got {s.size}, {t.size}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(t))):
        raise InvalidArgumentError("sigmas and taus must be finite")
    if np.any(t <= 0) or np.any(np.diff(t) < 0):
        raise InvalidArgumentError("taus must be positive and ascending")
    if np.any(s < 0):
        raise InvalidArgumentError("sigmas must be nonnegative")
    return float(np.min(s / (3.0 * t[1:])) * math.log(t[-1] / t[0]))


def sweep_table(Ps, Ws, rs, n_round_trips: int = 100_000, seed=0):
    """Closed form vs Monte Carlo over a grid; one dict per ``(P, W, r)``."""
    seeds = np.random.SeedSequence(seed).spawn(len(Ps) * len(Ws) * len(rs))
    rows, i = [], 0
    for P in Ps:
        for W in Ws:
            for r in rs:
                model = RoundTripModel.uniform(P, W, r)
                sim = simulate_index_process(model, n_round_trips, np.random.default_rng(seeds[i]))
                rows.append(
                    {
                        "P": int(P),
                        "W": int(W),
                        "r": float(r),
                        "E_T_closed_form": expected_round_trip(model),
                        "E_T_monte_carlo": sim.mean,
                        "stderr": sim.stderr,
                    }
                )
                i += 1
    return rows
