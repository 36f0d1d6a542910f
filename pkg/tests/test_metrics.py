import json
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from deostar.exceptions import InvalidArgumentError
from deostar.kernels import ChainState
from deostar.ladder import geometric_init
from deostar.metrics import (
    RunReport,
    acceptance_rates,
    box_tv_distance,
    count_round_trips,
    histogram,
    mode_coverage,
    round_trip_rate,
    tv_distance,
)
from deostar.swap import GateBank, SwapPolicy, attempt_swaps


class TestRoundTrips:
    def test_constant_trace(self):
        trace = np.tile(np.arange(5), (100, 1))
        assert count_round_trips(trace).tolist() == [0] * 5
        assert round_trip_rate(trace) == 0.0

    def test_two_slot_alternation(self):
        n = 10
        trace = np.array([[0, 1] if t % 2 == 0 else [1, 0] for t in range(2 * n + 1)])
        assert count_round_trips(trace).tolist() == [n, n]
        assert round_trip_rate(trace, per=1000) == pytest.approx(2 * n * 1000 / (2 * n + 1))

    def test_must_touch_both_ends(self):
        # Particle 0 visits slot 1 and comes back but never reaches slot 2.
        trace = np.array([[0, 1, 2], [1, 0, 2], [0, 1, 2], [1, 0, 2]])
        assert count_round_trips(trace).tolist() == [0, 0, 0]

    def test_middle_start(self):
        # Particle 1 starts in the middle, touches both ends and returns.
        rows = [[0, 1, 2], [1, 0, 2], [0, 1, 2], [0, 2, 1], [0, 1, 2]]
        assert count_round_trips(np.array(rows))[1] == 1

    def test_relabeling_equivariance(self):
        rng = np.random.default_rng(0)
        P, T = 6, 400
        row = np.arange(P)
        trace = []
        for _ in range(T):
            i = rng.integers(P - 1)
            row = row.copy()
            row[[i, i + 1]] = row[[i + 1, i]]
            trace.append(row)
        trace = np.array(trace)
        base = count_round_trips(trace)
        pi = rng.permutation(P)
        relabeled = count_round_trips(pi[trace])
        assert base.sum() > 0
        np.testing.assert_array_equal(relabeled[pi], base)

    def test_rejects_non_permutation(self):
        with pytest.raises(InvalidArgumentError):
            count_round_trips([[0, 0, 1]])


class TestTV:
    def test_identical_and_disjoint(self):
        a = np.array([0.2, 0.3, 0.5, 0.0])
        assert tv_distance(a, a) == 0.0
        assert tv_distance([1, 0, 0], [0, 0.5, 0.5]) == 1.0

    def test_metric_properties(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b, c = rng.dirichlet(np.ones(8), size=3)
            assert tv_distance(a, b) == pytest.approx(tv_distance(b, a))
            assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c) + 1e-12
            assert tv_distance(a, b) > 0

    def test_gaussian_quadrature(self):
        # Bin edges include the crossing point 0.5, so binning loses nothing.
        edges = np.linspace(-8.5, 9.5, 101)
        a = np.diff(norm.cdf(edges, 0, 1))
        b = np.diff(norm.cdf(edges, 1, 1))
        exact = 0.5 * integrate.quad(lambda x: abs(norm.pdf(x) - norm.pdf(x, 1)), -20, 21, points=[0.5])[0]
        assert tv_distance(a, b) == pytest.approx(exact, abs=1e-3)
        assert exact == pytest.approx(2 * norm.cdf(0.5) - 1, abs=1e-8)

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            tv_distance([0.5, 0.5], [1.0])
        with pytest.raises(InvalidArgumentError):
            tv_distance([0, 0], [0.5, 0.5])
        with pytest.raises(InvalidArgumentError):
            tv_distance([-0.5, 1.5], [0.5, 0.5])


class TestHistograms:
    def test_outside_mass_dropped(self):
        h = histogram(np.array([[-5.0], [0.25], [0.75], [0.8]]), [np.array([0.0, 0.5, 1.0])])
        np.testing.assert_allclose(h, [1 / 3, 2 / 3])

    def test_box_tv_zero_for_matching_samples(self):
        edges = [np.linspace(0, 1, 3), np.linspace(0, 1, 3)]
        pts = np.array([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
        assert box_tv_distance(pts, np.full((2, 2), 0.25), edges) == 0.0

    def test_mode_coverage(self):
        grid = np.arange(-2, 3)
        centers = np.array([(a, b) for a in grid for b in grid], float)
        assert mode_coverage(np.repeat(centers, 10, axis=0)) == 25
        assert mode_coverage(np.zeros((50, 2))) == 1
        lopsided = np.vstack([np.zeros((1000, 2)), [[1.0, 1.0]]])
        assert mode_coverage(lopsided) == 1
        assert mode_coverage(lopsided, floor=0.0) == 2
        assert mode_coverage(np.full((5, 2), 10.0)) == 0


class TestAcceptanceRates:
    def test_always_accept_is_one(self):
        lad = geometric_init(0.01, 0.5, 5)
        policy = SwapPolicy("DEO", 1)
        rng = np.random.default_rng(0)
        gates = GateBank(4)
        states = [ChainState(rng.normal(size=2), i + 1, energy=0.0) for i in range(5)]
        rows = []
        for k in range(40):
            # Fresh energies descending in slot order make every condition true.
            states = [ChainState(s.position, s.slot, energy=float(10 - s.slot)) for s in states]
            states, gates, dec = attempt_swaps(states, lad, policy, gates, k, rng)
            rows.append(dec)
        rates = acceptance_rates(rows)
        assert rates.tolist() == [1.0, 1.0, 1.0, 1.0]
        assert acceptance_rates(rows, basis="evaluated").tolist() == [1.0] * 4

    def test_arrays_and_start(self):
        dec = {
            "attempted": np.array([[1, 0], [1, 1], [0, 1]], bool),
            "accepted": np.array([[1, 0], [0, 1], [0, 0]], bool),
            "condition": np.array([[1, 1], [0, 1], [1, 0]], bool),
        }
        np.testing.assert_allclose(acceptance_rates(dec), [0.5, 0.5])
        np.testing.assert_allclose(acceptance_rates(dec, basis="evaluated"), [2 / 3, 2 / 3])
        np.testing.assert_allclose(acceptance_rates(dec, start=1), [0.0, 0.5])

    def test_never_attempted_is_nan(self):
        dec = {"attempted": np.zeros((3, 1), bool), "accepted": np.zeros((3, 1), bool)}
        assert math.isnan(acceptance_rates(dec)[0])

    def test_bad_basis(self):
        with pytest.raises(InvalidArgumentError):
            acceptance_rates({"attempted": [[1]], "accepted": [[1]]}, basis="mean")


class TestRunReport:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            RunReport(per_pair_acceptance=[0.5, 1.2])
        with pytest.raises(InvalidArgumentError):
            RunReport(tv_distance=1.5)
        RunReport(per_pair_acceptance=[float("nan"), 0.3])

    def test_json_round_trip(self):
        rep = RunReport(iterations=3, per_pair_acceptance=[np.float64(0.25), float("nan")],
                        ladder_trace=np.ones((3, 2)), buffer_trace=np.zeros(3))
        short = json.loads(rep.to_json())
        assert "ladder_trace" not in short and short["per_pair_acceptance"] == [0.25, None]
        full = json.loads(rep.to_json(include_traces=True))
        assert full["ladder_trace"] == [[1.0, 1.0]] * 3
