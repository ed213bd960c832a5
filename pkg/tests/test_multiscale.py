import math

import numpy as np
import pytest

from frostlab.liplib import HypothesisFailed
from frostlab.multiscale import (EpsTooSmallForT, NonConcentrationFailed,
                                 ScaleDecomposition, ahlfors_multiscale,
                                 branching_function, frostman_multiscale)
from frostlab.regular import beta

from conftest import regular_cantor

SIGMA_D1 = [1.0, 0.5, 0.5, 1.0, 0.5, 0.0, 0.5, 0.5, 0.5, 0.5]
SIGMA_D2 = [1.0, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5]


class TestScaleDecomposition:
    def test_m_js(self):
        sd = ScaleDecomposition(2, [(1, 3), (4, 6)], [0.5, 0.8])
        assert sd.m_js == [4, 4]

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            ScaleDecomposition(2, [(1, 4), (3, 6)], [0.5, 0.5])

    def test_empty_interval_rejected(self):
        with pytest.raises(ValueError):
            ScaleDecomposition(2, [(3, 3)], [0.5])

    def test_json_roundtrip(self):
        sd = ScaleDecomposition(2, [(1, 3), (4, 6)], [0.5, 0.8])
        other = ScaleDecomposition.from_json(sd.to_json())
        assert other.intervals == sd.intervals
        assert other.alphas == sd.alphas and other.T == sd.T


class TestBranchingFunction:
    def test_values(self):
        piece = regular_cantor(1, 2, 4, [1.0, 0.5, 0.0, 1.0], seed=0)
        f = branching_function(piece)
        assert f(0.0) == 0.0
        assert f(2.0) == pytest.approx(1.5)
        assert f(4.0) == pytest.approx(2.5)
        assert f(4.0) / 4.0 == pytest.approx(beta(piece.sigma, 4))


class TestFrostman:
    def test_conclusions_on_regular_cantor(self):
        piece = regular_cantor(1, 2, 10, SIGMA_D1, seed=1)
        sd, rep = frostman_multiscale(piece, u=0.15, eps=0.4)
        assert rep.ok, rep.conclusions
        assert rep.params["xi"] > 0
        # alphas are the measured block slopes scaled by d
        f = branching_function(piece)
        for (a, b), al in zip(sd.intervals, sd.alphas):
            assert al == pytest.approx(
                piece.d * float(f(b) - f(a)) / (b - a))

    def test_conclusions_d2(self):
        piece = regular_cantor(2, 2, 10, SIGMA_D2, seed=2)
        sd, rep = frostman_multiscale(piece, u=0.15, eps=0.4)
        assert rep.ok, rep.conclusions
        assert rep.conclusions["iv_intermediate_scales"]["ok"]

    def test_eps_floor(self):
        piece = regular_cantor(1, 2, 10, SIGMA_D1, seed=1)
        with pytest.raises(EpsTooSmallForT):
            frostman_multiscale(piece, u=0.15, eps=0.1)

    def test_nonconcentration_guard(self):
        # very concentrated measure: single branch at every level
        piece = regular_cantor(1, 2, 10, [0.0] * 10, seed=3)
        with pytest.raises((NonConcentrationFailed, HypothesisFailed)):
            frostman_multiscale(piece, u=0.5, eps=0.4)

    def test_exponent_sum_vs_beta(self):
        piece = regular_cantor(1, 2, 10, SIGMA_D1, seed=4)
        eps = 0.4
        sd, rep = frostman_multiscale(piece, u=0.1, eps=eps)
        b = beta(piece.sigma, piece.ell)
        lhs = sum(al * mj for al, mj in zip(sd.alphas, sd.m_js))
        assert lhs >= (b - eps) * piece.m - 1e-9


class TestAhlfors:
    def test_two_sided_conclusions(self):
        piece = regular_cantor(1, 2, 10, SIGMA_D1, seed=5)
        sd, rep = ahlfors_multiscale(piece, eps=0.4)
        assert rep.ok, rep.conclusions
        ii = rep.conclusions["ii_ball_bounds"]
        assert "worst_lower_deficit_bits" in ii and ii["ok"]

    def test_eps_floor(self):
        piece = regular_cantor(1, 2, 10, SIGMA_D1, seed=5)
        with pytest.raises(EpsTooSmallForT):
            ahlfors_multiscale(piece, eps=0.05)

    def test_intervals_graded(self):
        piece = regular_cantor(2, 2, 10, SIGMA_D2, seed=6)
        sd, rep = ahlfors_multiscale(piece, eps=0.4)
        assert rep.ok, rep.conclusions
        for a, b in sd.intervals:
            assert b - a <= a + 1e-9
