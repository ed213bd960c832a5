"""Multiscale Frostman decompositions of regular measures.

Turns the regularity exponents of a measure into a 1-Lipschitz branching
function, decomposes that function into superlinear (or linear) pieces, and
converts the pieces into scale intervals [A_j, B_j] with Frostman exponents
alpha_j.  Every claimed inequality is then verified directly against the
measure, sampling cubes, centers and dyadic radii; the report records the
explicit covering slack used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dyadic import CubeIndex, DyadicMeasure, all_ball_masses, conditional
from .liplib import (HypothesisFailed, PLFunction, cover_by_linear_graded,
                     superlinear_decomposition)
from .regular import RegularPiece, beta

MAX_CUBES_PER_SCALE = 256
MAX_CENTERS = 512


class NonConcentrationFailed(ValueError):
    """The single-scale ball-mass hypothesis fails on the given measure."""


class EpsTooSmallForT(ValueError):
    """eps below the 4/m granularity floor of the block/snap arithmetic."""


@dataclass
class ScaleDecomposition:
    T: int
    intervals: List[Tuple[int, int]]   # (A_j, B_j), integer block indices
    alphas: List[float]

    def __post_init__(self):
        self.intervals = sorted((int(a), int(b)) for a, b in self.intervals)
        for (a1, b1), (a2, b2) in zip(self.intervals, self.intervals[1:]):
            if b1 > a2:
                raise ValueError("scale intervals overlap")
        for (a, b), al in zip(self.intervals, self.alphas):
            if b <= a:
                raise ValueError("empty scale interval")

    @property
    def m_js(self) -> List[int]:
        return [self.T * (b - a) for a, b in self.intervals]

    def to_json(self) -> dict:
        return {"T": self.T, "intervals": [list(iv) for iv in self.intervals],
                "alphas": list(self.alphas), "m_js": self.m_js}

    @staticmethod
    def from_json(obj) -> "ScaleDecomposition":
        return ScaleDecomposition(int(obj["T"]),
                                  [tuple(iv) for iv in obj["intervals"]],
                                  [float(a) for a in obj["alphas"]])


@dataclass
class VerificationReport:
    ok: bool
    conclusions: Dict[str, dict]
    params: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"ok": self.ok, "conclusions": self.conclusions, "params": self.params}


def branching_function(piece: RegularPiece) -> PLFunction:
    """f(j) = (sigma_1 + ... + sigma_j)/d, linear between integers, on [0, ell]."""
    ell = piece.ell
    vals = np.concatenate([[0.0], np.cumsum(np.asarray(piece.sigma, dtype=float))]) / piece.d
    return PLFunction(0.0, float(ell), ell, vals)


def _stride_sample(items: list, cap: int) -> list:
    if len(items) <= cap:
        return items
    idx = np.linspace(0, len(items) - 1, cap).round().astype(int)
    return [items[i] for i in sorted(set(idx.tolist()))]


def _check_ball_bounds(piece: RegularPiece, sd: ScaleDecomposition, eps_dec: float,
                       two_sided: bool) -> dict:
    """Verify the per-scale conditional Frostman bounds against the measure.

    Upper bound: log2 mu^Q(B(x,r)) <= alpha_j log2 r + d*eps_dec*m_j + d(T+2).
    Lower bound (two_sided): >= alpha_j log2 r - d*eps_dec*m_j - m_j/T - 2d(T+2).
    The additive terms are the explicit cube-vs-ball covering constants.
    """
    mu, T, d = piece.measure, piece.T, piece.d
    worst_up = -math.inf
    worst_lo = -math.inf
    n_checked = 0
    for (A, B), alpha, m_j in zip(sd.intervals, sd.alphas, sd.m_js):
        slack_up = d * eps_dec * m_j + d * (T + 2)
        slack_lo = d * eps_dec * m_j + m_j / T + 2 * d * (T + 2)
        cubes = _stride_sample(sorted(mu.level_masses(T * A).keys()), MAX_CUBES_PER_SCALE)
        radii = [2.0 ** (-i) for i in range(m_j + 1)]
        log_r = np.log2(np.asarray(radii))
        for coords in cubes:
            cond = conditional(mu, CubeIndex(T * A, coords))
            xs = _stride_sample(list(map(tuple, cond.centers())), MAX_CENTERS)
            masses = all_ball_masses(cond, np.asarray(xs), radii)
            with np.errstate(divide="ignore"):
                logm = np.log2(masses)
            excess_up = logm - (alpha * log_r + slack_up)
            worst_up = max(worst_up, float(np.max(excess_up)))
            if two_sided:
                deficit = (alpha * log_r - slack_lo) - logm
                worst_lo = max(worst_lo, float(np.max(deficit)))
            n_checked += len(xs)
    out = {"ok": worst_up <= 1e-9, "worst_upper_excess_bits": worst_up,
           "centers_checked": n_checked}
    if two_sided:
        out["ok"] = out["ok"] and worst_lo <= 1e-9
        out["worst_lower_deficit_bits"] = worst_lo
    return out


def _scales_from_intervals(f: PLFunction, piece: RegularPiece,
                           intervals: List[Tuple[float, float]]) -> ScaleDecomposition:
    d = piece.d
    ints = [(int(round(a)), int(round(b))) for a, b in intervals]
    alphas = [d * float((f(b) - f(a)) / (b - a)) for a, b in ints]
    return ScaleDecomposition(piece.T, ints, alphas)


def _common_report(piece: RegularPiece, sd: ScaleDecomposition, f: PLFunction,
                   tau: float, eps: float, eps_dec: float, two_sided: bool) -> dict:
    ell, d, m = piece.ell, piece.d, piece.m
    con: Dict[str, dict] = {}
    # (i): tau*ell <= B_j - A_j <= A_j
    ok_i = all(tau * ell - 1e-9 <= b - a <= a + 1e-9 for a, b in sd.intervals)
    con["i_lengths"] = {"ok": ok_i, "tau": tau}
    # (ii): ball bounds against the measure
    con["ii_ball_bounds"] = _check_ball_bounds(piece, sd, eps_dec, two_sided)
    # (iii): sum alpha_j m_j >= (beta - eps) m, recomputed from returned values
    b = beta(piece.sigma, ell)
    lhs = sum(al * mj for al, mj in zip(sd.alphas, sd.m_js))
    con["iii_exponent_sum"] = {"ok": lhs >= (b - eps) * m - 1e-9,
                               "lhs": lhs, "rhs": (b - eps) * m, "beta": b}
    # scale gaps <= eps*ell
    gap = ell - sum(bb - aa for aa, bb in sd.intervals)
    con["gaps"] = {"ok": gap <= eps * ell + 1e-9, "uncovered": gap}
    return con


def frostman_multiscale(piece: RegularPiece, u: float, eps: float
                        ) -> Tuple[ScaleDecomposition, VerificationReport]:
    """Scale decomposition with one-sided Frostman bounds and a guaranteed
    mass of scales whose exponent is in [xi, d - xi].

    Requires the single-scale hypothesis mu(B(x, |X|^{1/d})) <= 2^{-u m},
    checked over cell centers (``NonConcentrationFailed`` otherwise).
    """
    mu, d, m, ell, T = piece.measure, piece.d, piece.m, piece.ell, piece.T
    if eps < 4.0 / m:
        raise EpsTooSmallForT(f"EpsTooSmallForT: eps < 4/m = {4.0/m}")
    # hypothesis check
    vol = len(mu) * 2.0 ** (-d * m)
    r0 = vol ** (1.0 / d)
    xs = _stride_sample(list(map(tuple, mu.centers())), MAX_CENTERS)
    mx = float(np.max(all_ball_masses(mu, np.asarray(xs), [r0])))
    if mx > 2.0 ** (-u * m) * (1 + 1e-9):
        raise NonConcentrationFailed(
            f"NonConcentrationFailed: max ball mass {mx:.3e} > 2^(-um) = {2.0**(-u*m):.3e}")
    f = branching_function(piece)
    s = float(f(ell)) / ell
    if not (0 < s < 1):
        raise HypothesisFailed(f"HypothesisFailed: degenerate mean exponent s = {s}")
    t = float(f((1 - s) * ell)) / ell
    if t < u / (2 * d) - 1e-12:
        raise HypothesisFailed(
            f"HypothesisFailed: measured t = {t:.4f} < u/(2d) = {u/(2*d):.4f}")
    eps_dec = min(eps / (2 * d), 4.0 / 11.0)
    dec, xi = superlinear_decomposition(f, float(ell), s, t, eps_dec,
                                        min_sigma=1.0 / ell)
    sd = _scales_from_intervals(f, piece, dec.intervals)
    con = _common_report(piece, sd, f, dec.tau, eps, eps_dec, two_sided=False)
    # (iv): scales with alpha in [xi, d - xi] carry >= xi*m
    good = sum(mj for al, mj in zip(sd.alphas, sd.m_js)
               if xi - 1e-12 <= al <= d - xi + 1e-12)
    con["iv_intermediate_scales"] = {"ok": good >= xi * m - 1e-9,
                                     "good_mass": good, "xi": xi, "xi_m": xi * m}
    ok = all(c["ok"] for c in con.values())
    rep = VerificationReport(ok, con, {"u": u, "eps": eps, "eps_dec": eps_dec,
                                       "s": s, "t": t, "xi": xi, "tau": dec.tau,
                                       "branch": dec.extras.get("branch", "")})
    return sd, rep


def ahlfors_multiscale(piece: RegularPiece, eps: float
                       ) -> Tuple[ScaleDecomposition, VerificationReport]:
    """Scale decomposition with two-sided (Ahlfors-type) conditional bounds,
    via the graded linear cover of the branching function; no intermediate-
    exponent guarantee."""
    m, ell, d = piece.m, piece.ell, piece.d
    if eps < 4.0 / m:
        raise EpsTooSmallForT(f"EpsTooSmallForT: eps < 4/m = {4.0/m}")
    f = branching_function(piece)
    eps_dec = min(eps / (2 * d), 0.49)
    cov = cover_by_linear_graded(f, 0.0, float(ell), eps_dec)
    intervals = [(a, b) for a, b in cov.intervals if round(b) - round(a) >= 1]
    sd = _scales_from_intervals(f, piece, intervals)
    tau = min((b - a for a, b in sd.intervals), default=0) / ell
    con = _common_report(piece, sd, f, tau, 2 * eps, eps_dec, two_sided=True)
    # the graded cover only guarantees leftover <= 2*eps_dec*ell + one grid cell
    gap = con.pop("gaps")
    con["gaps"] = {"ok": gap["uncovered"] <= 2 * eps_dec * ell + 1 + 1e-9,
                   "uncovered": gap["uncovered"]}
    ok = all(c["ok"] for c in con.values())
    rep = VerificationReport(ok, con, {"eps": eps, "eps_dec": eps_dec, "tau": tau})
    return sd, rep
