import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frostlab.liplib import (HypothesisFailed, IntervalDecomposition,
                             PLFunction, cover_by_linear,
                             cover_by_linear_graded, find_linear_subinterval,
                             is_eps_linear, is_eps_superlinear, random_zigzag,
                             sigma_chain, slope, snap_endpoints,
                             superlinear_chain, superlinear_decomposition)


def _is_lipschitz(f):
    return np.max(np.abs(np.diff(f.values))) <= f.step + 1e-12


class TestPLFunction:
    def test_grid_and_eval(self):
        f = PLFunction(0.0, 1.0, 4, [0.0, 0.25, 0.25, 0.0, -0.25])
        assert f.step == 0.25
        assert f(0.125) == pytest.approx(0.125)   # linear interpolation
        assert f(1.0) == pytest.approx(-0.25)

    def test_lipschitz_enforced(self):
        with pytest.raises(ValueError):
            PLFunction(0.0, 1.0, 2, [0.0, 0.9, 0.0])

    def test_from_callable(self):
        f = PLFunction.from_callable(lambda x: 0.5 * x, 0.0, 2.0, G=8)
        assert f(1.5) == pytest.approx(0.75)

    def test_json_roundtrip(self):
        f = random_zigzag(64, seed=3)
        g = PLFunction.from_json(f.to_json())
        assert np.allclose(g.values, f.values)
        assert (g.a, g.b, g.G) == (f.a, f.b, f.G)

    @given(seed=st.integers(0, 10 ** 6))
    @settings(max_examples=30, deadline=None)
    def test_random_zigzag_is_lipschitz(self, seed):
        f = random_zigzag(256, seed)
        assert _is_lipschitz(f)
        assert f.values[0] == 0.0


class TestPredicates:
    def test_slope(self):
        f = PLFunction.from_callable(lambda x: 0.3 * x, 0.0, 1.0, G=16)
        assert slope(f, 0.0, 1.0) == pytest.approx(0.3)

    def test_linear_function_is_eps_linear(self):
        f = PLFunction.from_callable(lambda x: 0.4 * x, 0.0, 1.0, G=16)
        assert is_eps_linear(f, 0.0, 1.0, 0.01)

    def test_above_chord_is_superlinear_not_linear(self):
        f = PLFunction.from_callable(lambda x: x - x * x / 2, 0.0, 1.0, G=64)
        assert is_eps_superlinear(f, 0.0, 1.0, 0.01)
        assert not is_eps_linear(f, 0.0, 1.0, 0.01)

    def test_below_chord_is_not_superlinear(self):
        f = PLFunction.from_callable(lambda x: x * x / 2, 0.0, 1.0, G=64)
        assert not is_eps_superlinear(f, 0.0, 1.0, 0.01)


class TestFindLinearSubinterval:
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    @pytest.mark.parametrize("seed", range(8))
    def test_postconditions(self, seed, eps):
        f = random_zigzag(1024, seed)
        c, d = find_linear_subinterval(f, 0.0, 1.0, eps)
        assert is_eps_linear(f, c, d, eps)
        assert d - c >= eps ** math.floor(1 / eps) * 1.0 - 1e-12

    def test_whole_interval_when_linear(self):
        f = PLFunction.from_callable(lambda x: 0.7 * x, 0.0, 1.0, G=32)
        assert find_linear_subinterval(f, 0.0, 1.0, 0.1) == (0.0, 1.0)


class TestCoverByLinear:
    @pytest.mark.parametrize("eps", [0.05, 0.1, 0.2])
    @pytest.mark.parametrize("seed", range(5))
    def test_postconditions(self, seed, eps):
        f = random_zigzag(1024, seed + 100)
        dec = cover_by_linear(f, 0.0, 1.0, eps)
        assert dec.leftover() <= eps + 1e-9
        for (c, d) in dec.intervals:
            assert is_eps_linear(f, c, d, eps)
            assert d - c >= dec.tau - 1e-9

    def test_slopes_match(self):
        f = random_zigzag(512, seed=7)
        dec = cover_by_linear(f, 0.0, 1.0, 0.1)
        for (c, d), s in zip(dec.intervals, dec.slopes):
            assert s == pytest.approx(slope(f, c, d))


class TestCoverByLinearGraded:
    @pytest.mark.parametrize("seed", range(5))
    def test_postconditions(self, seed):
        eps = 0.1
        f = random_zigzag(1024, seed + 200)
        dec = cover_by_linear_graded(f, 0.0, 1.0, eps)
        for (c, d) in dec.intervals:
            assert is_eps_linear(f, c, d, eps)
            assert d - c <= (c - 0.0) + 1e-9     # grading
        assert dec.leftover() <= 2 * eps + f.step + 1e-9


class TestSuperlinearChain:
    @pytest.mark.parametrize("eps", [0.1, 0.2])
    @pytest.mark.parametrize("seed", range(5))
    def test_postconditions(self, seed, eps):
        f = random_zigzag(1024, seed + 300)
        dec = superlinear_chain(f, 0.0, 1.0, eps)
        assert dec.leftover() <= eps + 1e-9
        for s1, s2 in zip(dec.slopes, dec.slopes[1:]):
            assert s2 >= s1 - 1e-9
        for (c, d) in dec.intervals:
            assert is_eps_superlinear(f, c, d, eps)
            assert d - c >= dec.tau - 1e-9


def monotone_instance(s, t, G=1024, seed=0):
    """Non-decreasing 1-Lipschitz f on [0,1] with f(0)=0, f(1)=s,
    f(1-s) >= t: ramp to t by 1-s, then balance to s."""
    rng = np.random.default_rng(seed)
    xs = np.arange(G + 1) / G
    split = 1.0 - s
    head = np.minimum(xs / split, 1.0) * t
    tail = np.clip((xs - split) / s, 0.0, 1.0) * (s - t)
    base = head + tail
    jitter = rng.uniform(0, 0.2 / G, G + 1).cumsum()
    jitter -= xs * jitter[-1]
    vals = base + 0.0 * jitter
    return PLFunction(0.0, 1.0, G, vals)


class TestSigmaChain:
    def test_constants_positive_and_ordered(self):
        cs = sigma_chain(0.5, 0.2)
        assert 0 < cs["sigma"] < 1
        assert cs["zeta"] == pytest.approx(cs["sigma"] / 11)
        assert cs["xi"] <= cs["zeta"] + 1e-15
        assert cs["eps1"] == pytest.approx(4 / 11)


class TestSuperlinearDecomposition:
    def test_hypotheses_enforced(self):
        f = monotone_instance(0.5, 0.2)
        with pytest.raises(HypothesisFailed, match="s,t"):
            superlinear_decomposition(f, 1.0, 1.5, 0.2, 0.1)
        with pytest.raises(HypothesisFailed, match="eps <= eps1"):
            superlinear_decomposition(f, 1.0, 0.5, 0.2, 0.9)
        g = PLFunction.from_callable(lambda x: 0.5 - 0.5 * x, 0.0, 1.0, G=64)
        with pytest.raises(HypothesisFailed):
            superlinear_decomposition(g, 1.0, 0.5, 0.2, 0.1)

    @pytest.mark.parametrize("s,t", [(0.5, 0.2), (0.4, 0.15), (0.6, 0.25)])
    def test_conclusions(self, s, t):
        eps = 0.2
        f = monotone_instance(s, t)
        t = min(t, float(f(1 - s)))    # the off-grid kink can shave f(1-s)
        dec, xi = superlinear_decomposition(f, 1.0, s, t, eps)
        assert xi > 0
        assert dec.leftover() <= eps + 2 * f.step + 1e-9
        good = sum(d - c for (c, d), sl in zip(dec.intervals, dec.slopes)
                   if xi - 1e-12 <= sl <= 1 - xi + 1e-12)
        assert good >= xi - 1e-9
        for (c, d) in dec.intervals:
            assert is_eps_superlinear(f, c, d, eps)
            assert d - c <= c + 1e-9

    def test_staircase_hits_bridging_branch(self):
        # steep then flat: exactly the transition geometry
        G = 1024
        xs = np.arange(G + 1) / G
        vals = np.minimum(xs, 0.5)
        f = PLFunction(0.0, 1.0, G, vals)
        s, t = 0.5, float(f(0.5))
        dec, xi = superlinear_decomposition(f, 1.0, s, t, 0.2)
        assert dec.extras["branch"] in ("bridging", "mixed-block")
        assert xi > 0


class TestSnapEndpoints:
    def test_lattice_and_weakened_constants(self):
        f = monotone_instance(0.5, 0.2)
        dec, xi = superlinear_decomposition(f, 1.0, 0.5, 0.2, 0.2)
        ell = 16
        snapped = snap_endpoints(dec, f, 1.0, ell)
        g = 1.0 / ell
        for (c, d) in snapped.intervals:
            assert c / g == pytest.approx(round(c / g), abs=1e-9)
            assert d / g == pytest.approx(round(d / g), abs=1e-9)
            assert is_eps_superlinear(f, c, d, snapped.eps)
        assert snapped.eps == pytest.approx(2 * dec.eps)
        assert snapped.tau == pytest.approx(dec.tau / 2)
        assert snapped.extras["xi"] == pytest.approx(xi / 2)


class TestIntervalDecomposition:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            IntervalDecomposition([(0.0, 0.5), (0.4, 0.8)], "linear", 0.1,
                                  [0.0, 0.0], 0.01, (0.0, 1.0))

    def test_leftover(self):
        dec = IntervalDecomposition([(0.0, 0.25), (0.5, 1.0)], "linear", 0.1,
                                    [0.0, 0.0], 0.01, (0.0, 1.0))
        assert dec.leftover() == pytest.approx(0.25)
