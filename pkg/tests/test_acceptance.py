"""End-to-end acceptance checks, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the "acceptance criteria"
section of the pytest summary.
"""

import math
import time
import warnings
from collections import Counter

import numpy as np
import pytest

from deostar.config import parse_config
from deostar.index_sim import RoundTripModel, argmin_window, estimate_optimal_chains, expected_round_trip, optimal_window, sweep_table
from deostar.kernels import ChainState, KernelSpec, momentum_sgd_step, preconditioned_sgd_step, sgd_step, sgld_step
from deostar.ladder import geometric_init
from deostar.sampler import DEOSampler
from deostar.swap import GateBank, SwapPolicy, attempt_swaps
from deostar.targets import Grid25, Mixture1D

pytestmark = pytest.mark.slow


def timed_fit(config):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sampler = config.to_sampler().fit()
    return sampler, time.perf_counter() - t0


@pytest.fixture(scope="module")
def grid_runs():
    """The three equal-budget Grid25 runs shared by the round-trip, TV and rate checks."""
    out = {}
    for preset in ("grid25-deo-star", "grid25-deo", "grid25-sgld"):
        out[preset] = timed_fit(parse_config(preset=preset))
    return out


def test_round_trip_oracle(verdict):
    t0 = time.perf_counter()
    rows = sweep_table((2, 4, 8, 16), (1, 2, 4, 8), (0.3, 0.5, 0.7), 100_000, seed=0)
    elapsed = time.perf_counter() - t0
    rel = [abs(r["E_T_monte_carlo"] - r["E_T_closed_form"]) / r["E_T_closed_form"] for r in rows]
    worst = rows[int(np.argmax(rel))]
    ok = len(rows) == 48 and max(rel) < 0.02 and elapsed <= 120
    verdict("C1 round-trip closed form vs Monte Carlo (48 cells, 1e5 trips, <2%, <=2 min)", ok,
            f"max rel err {max(rel):.4f} at P={worst['P']} W={worst['W']} r={worst['r']}, {elapsed:.1f}s")


def test_window_optimality(verdict):
    misses = []
    for P in (4, 8, 16):
        for r in (0.5, 0.6, 0.7):
            best, formula = argmin_window(P, r), optimal_window(P, 1 - r)
            if abs(best - formula) > 1:
                misses.append(f"P={P} r={r}: argmin {best} vs formula {formula}")
    for P in (2, 3):
        for r in np.linspace(0.05, 0.95, 19):
            costs = [expected_round_trip(RoundTripModel.uniform(P, W, r)) for W in range(1, 65)]
            if not np.all(np.diff(costs) > 0):
                misses.append(f"P={P} r={r:.2f}: E[T] not increasing in W")
    verdict("C2 optimal window within +-1 of the ceiling formula; P<=3 increasing", not misses,
            "; ".join(misses) or "all cells")


def test_round_trip_speedup(grid_runs, verdict):
    (star, t_star), (deo, t_deo) = grid_runs["grid25-deo-star"], grid_runs["grid25-deo"]
    a, b = star.report_.round_trips_per_1000_iters, deo.report_.round_trips_per_1000_iters
    ratio = a / b if b else math.inf
    elapsed = t_star + t_deo
    verdict("C3 Grid25 round trips per 1000 iters, W=8 >= 2x W=1 (<=5 min)", ratio >= 2 and elapsed <= 300,
            f"W={star.window_}: {a:.1f}, W=1: {b:.1f}, ratio {ratio:.2f}, {elapsed:.1f}s")


def test_mode_coverage_and_tv(grid_runs, verdict):
    star, deo, sgld = (grid_runs[k][0].report_ for k in ("grid25-deo-star", "grid25-deo", "grid25-sgld"))
    elapsed = sum(t for _, t in grid_runs.values())
    budgets = {grid_runs[k][0].report_.iterations for k in grid_runs}
    detail = (f"coverage {star.mode_coverage}/25, TV DEO* {star.tv_distance:.3f} vs parallel SGLD {sgld.tv_distance:.3f}"
              f" vs DEO W=1 {deo.tv_distance:.3f}, {elapsed:.1f}s")
    cover = star.mode_coverage >= 24 and len(budgets) == 1 and elapsed <= 600
    beats_sgld = star.tv_distance < sgld.tv_distance
    beats_deo = star.tv_distance < deo.tv_distance
    verdict("C4 DEO*-SGD covers >= 24/25 modes, TV below (a) parallel SGLD and (b) DEO-SGD", cover and beats_sgld and beats_deo,
            f"{detail}; (a) {'ok' if beats_sgld else 'not met'}, (b) {'ok' if beats_deo else 'not met'}")


def test_target_rate_convergence(grid_runs, verdict):
    star = grid_runs["grid25-deo-star"][0]
    rates = np.asarray(star.report_.per_pair_condition_rate)
    dev = np.abs(rates - star.target_swap_rate)
    verdict("C5 post-burn-in per-pair swap rates within +-0.08 of S=0.4 (15 pairs)", rates.size == 15 and dev.max() <= 0.08,
            f"rates {rates.min():.3f}..{rates.max():.3f}, max deviation {dev.max():.3f} at pair {int(dev.argmax()) + 1}")


def test_window_bias_correction(verdict):
    base = parse_config(preset="mixture1d-bias")
    truth = Mixture1D().right_mode_weight()
    t0 = time.perf_counter()
    runs = {(1, 0.0): base.replace(window=1)}
    for lam in (0.0, 1.0, 2.0, 3.0):
        runs[(100, lam)] = base.replace(lambda_w=lam)
    dev = {key: abs(timed_fit(cfg)[0].report_.right_mode_weight - truth) for key, cfg in runs.items()}
    elapsed = time.perf_counter() - t0
    window_hurts = dev[(100, 0.0)] > dev[(1, 0.0)]
    best_lam = min((lam for w, lam in dev if w == 100 and lam > 0), key=lambda lam: dev[(100, lam)])
    halved = dev[(100, best_lam)] <= 0.5 * dev[(100, 0.0)]
    verdict("C6 mixture bias: W=100 worse than W=1 at lambda=0; some lambda halves the W=100 deviation (1e6 iters)",
            window_hurts and halved and elapsed <= 600,
            f"|dev| W=1 {dev[(1, 0.0)]:.4f}, W=100 {dev[(100, 0.0)]:.4f}, "
            + ", ".join(f"lambda={lam:g} {dev[(100, lam)]:.4f}" for w, lam in dev if w == 100 and lam > 0)
            + f", {elapsed:.1f}s")


def test_property_suites(verdict):
    problems = []
    rng = np.random.default_rng(0)

    # Swaps permute positions between slots and never create or drop one.
    P, W = 8, 3
    lad = geometric_init(0.01, 0.5, P)
    policy, gates = SwapPolicy("DEO_W", W), GateBank(P - 1)
    states = [ChainState(rng.normal(size=2), slot=i + 1, particle=i) for i in range(P)]
    accepted = np.zeros((60, P - 1), bool)
    for k in range(60):
        states = [ChainState(s.position, s.slot, energy=float(rng.normal()), particle=s.particle) for s in states]
        before = Counter(tuple(s.position) for s in states)
        states, gates, dec = attempt_swaps(states, lad, policy, gates, k, rng)
        if Counter(tuple(s.position) for s in states) != before:
            problems.append(f"multiset changed at k={k}")
        accepted[k] = [d.accepted for d in dec]
    if accepted.reshape(-1, W, P - 1).sum(axis=1).max() > 1:
        problems.append("more than one swap in a window")

    # W=1 DEO_W and DEO agree decision for decision, and full runs replay exactly.
    a = DEOSampler(n_iter=600, window=1, scheme="DEO_W", random_state=1)
    b = DEOSampler(n_iter=600, window=1, scheme="DEO", random_state=1)
    c = DEOSampler(n_iter=600, window=1, scheme="DEO_W", random_state=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for est in (a, b, c):
            est.fit()
    if any(not np.array_equal(a.decisions_[k], b.decisions_[k]) for k in a.decisions_):
        problems.append("W=1 DEO_W differs from DEO")
    if not (np.array_equal(a.sample_trace_, c.sample_trace_) and np.array_equal(a.ladder_trace_, c.ladder_trace_)):
        problems.append("seeded replay differs")

    # Kernel reductions.
    def path(fn, spec):
        r = np.random.default_rng(3)
        s = ChainState([1.0, -0.5])
        out = []
        for _ in range(30):
            s = fn(s, spec, lambda x, g: 1.3 * x + 0.7 * g.standard_normal(x.shape), r)
            out.append(s.position)
        return np.array(out)

    sgd = path(sgd_step, KernelSpec("SGD", eta=0.05))
    for name, fn, spec in [
        ("SGLD tau=0", sgld_step, KernelSpec("SGLD", eta=0.05, tau=0.0)),
        ("mSGD(0)", momentum_sgd_step, KernelSpec("MomentumSGD", eta=0.05, momentum_coef=0.0)),
        ("pSGD(I)", preconditioned_sgd_step, KernelSpec("PreconditionedSGD", eta=0.05, precond_diag=[1.0, 1.0])),
    ]:
        if not np.array_equal(path(fn, spec), sgd):
            problems.append(f"{name} != SGD")

    # Gradients against central differences.
    h = 1e-5
    for target, pts in [(Grid25(), rng.uniform(-3, 3, (50, 2))), (Mixture1D(), rng.uniform(-8, 8, (50, 1)))]:
        for x in pts:
            fd = [(target.energy(x + h * e) - target.energy(x - h * e)) / (2 * h) for e in np.eye(x.size)]
            err = np.max(np.abs(target.gradient(x) - fd))
            if err >= 1e-6:
                problems.append(f"{type(target).__name__} gradient error {err:.1e}")
                break

    verdict("C7 property suites (conservation, one swap per window, W=1 equivalence, kernel reductions, gradients, replay)",
            not problems, "; ".join(problems) or "all hold")


def test_optimal_chain_estimate(verdict):
    taus = np.array([1.0, math.exp(0.5), math.e])
    got = estimate_optimal_chains(30.0 * taus[1:], taus)
    zero = estimate_optimal_chains([0.0, 0.0], [1.0, 2.0, 4.0])
    ok = abs(got - 10.0) < 1e-9 and zero == 0.0
    verdict("C8 desk-scale stand-in: optimal-chain estimate matches the closed form", ok, f"estimate {got:.12g} (expected 10), noiseless {zero}")
