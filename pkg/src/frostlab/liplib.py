"""Decomposition algorithms for 1-Lipschitz functions on an interval.

Implements the chain of interval decompositions that powers the multiscale
machinery: find one epsilon-linear subinterval, cover by epsilon-linear
intervals, the graded variant (lengths dominated by left endpoints), chains of
epsilon-superlinear intervals with increasing slopes, and the main
superlinear decomposition with a guaranteed mass of intervals whose slope is
bounded away from 0 and 1.

Functions are piecewise-linear on a uniform grid (``PLFunction``); every
guarantee is asserted at grid points, which is exact because a PL function
attains its extremal deviation from any chord at a breakpoint.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

DEFAULT_GRID = 2 ** 12
_TOL = 1e-12


class HypothesisFailed(ValueError):
    """A stated hypothesis of a decomposition failed; message names it."""


@dataclass
class PLFunction:
    """1-Lipschitz piecewise-linear function on [a,b], values on a uniform grid."""

    a: float
    b: float
    G: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.b <= self.a:
            raise ValueError("need b > a")
        if len(self.values) != self.G + 1:
            raise ValueError("values must have G+1 entries")
        step = (self.b - self.a) / self.G
        if np.max(np.abs(np.diff(self.values))) > step + 1e-12:
            raise ValueError("not 1-Lipschitz on the grid")

    @property
    def step(self) -> float:
        return (self.b - self.a) / self.G

    def xs(self) -> np.ndarray:
        return self.a + np.arange(self.G + 1) * self.step

    def __call__(self, x):
        t = (np.asarray(x, dtype=float) - self.a) / (self.b - self.a) * self.G
        t = np.clip(t, 0, self.G)
        lo = np.floor(t).astype(int)
        hi = np.minimum(lo + 1, self.G)
        frac = t - lo
        return self.values[lo] * (1 - frac) + self.values[hi] * frac

    @staticmethod
    def from_callable(fn: Callable[[float], float], a: float, b: float,
                      G: int = DEFAULT_GRID) -> "PLFunction":
        xs = a + np.arange(G + 1) * ((b - a) / G)
        return PLFunction(a, b, G, np.array([fn(x) for x in xs]))

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "G": self.G, "values": self.values.tolist()}

    @staticmethod
    def from_json(obj) -> "PLFunction":
        return PLFunction(obj["a"], obj["b"], obj["G"], np.array(obj["values"]))


def random_zigzag(G: int, seed: int, a: float = 0.0, b: float = 1.0) -> PLFunction:
    """Seeded random 1-Lipschitz PL function: cumulative sum of slopes in [-1,1]."""
    rng = np.random.default_rng(seed)
    # piecewise-constant slopes over random-length runs, for visible structure
    slopes = np.empty(G)
    i = 0
    while i < G:
        run = int(rng.integers(1, max(2, G // 8)))
        slopes[i:i + run] = rng.uniform(-1.0, 1.0)
        i += run
    vals = np.concatenate([[0.0], np.cumsum(slopes * ((b - a) / G))])
    return PLFunction(a, b, G, vals)


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

def _chord_points(f: PLFunction, a: float, b: float):
    """x-values and f-values at a, b and every grid point strictly inside."""
    lo = int(math.floor((a - f.a) / f.step)) + 1
    hi = int(math.ceil((b - f.a) / f.step)) - 1
    inner = f.a + np.arange(max(lo, 0), min(hi, f.G) + 1) * f.step
    inner = inner[(inner > a) & (inner < b)]
    xs = np.concatenate([[a], inner, [b]])
    return xs, f(xs)


def slope(f: PLFunction, a: float, b: float) -> float:
    """s_f(a,b) = (f(b) - f(a)) / (b - a)."""
    if not (b > a):
        raise ValueError("degenerate interval")
    return float((f(b) - f(a)) / (b - a))


def _deviations(f: PLFunction, a: float, b: float):
    xs, vs = _chord_points(f, a, b)
    s = (vs[-1] - vs[0]) / (b - a)
    return xs, vs - (vs[0] + s * (xs - a))


def is_eps_linear(f: PLFunction, a: float, b: float, eps: float) -> bool:
    _, dev = _deviations(f, a, b)
    return bool(np.max(np.abs(dev)) <= eps * (b - a) + _TOL)


def is_eps_superlinear(f: PLFunction, a: float, b: float, eps: float) -> bool:
    _, dev = _deviations(f, a, b)
    return bool(np.min(dev) >= -eps * (b - a) - _TOL)


# ---------------------------------------------------------------------------
# Decomposition result
# ---------------------------------------------------------------------------

@dataclass
class IntervalDecomposition:
    intervals: List[Tuple[float, float]]
    kind: str                      # "linear" | "graded" | "superlinear" | "main"
    eps: float
    slopes: List[float]
    tau: float                     # guaranteed floor: lengths >= tau * domain length
    domain: Tuple[float, float]
    extras: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.intervals = sorted(self.intervals)
        for (c1, d1), (c2, d2) in zip(self.intervals, self.intervals[1:]):
            if d1 > c2 + _TOL:
                raise ValueError("intervals overlap")

    def leftover(self) -> float:
        a, b = self.domain
        return (b - a) - sum(d - c for c, d in self.intervals)

    def to_json(self) -> dict:
        return {"kind": self.kind, "eps": self.eps, "tau": self.tau,
                "domain": list(self.domain),
                "intervals": [list(iv) for iv in self.intervals],
                "slopes": list(self.slopes),
                "extras": {k: v for k, v in self.extras.items()
                           if isinstance(v, (int, float, str, bool, list))}}


# ---------------------------------------------------------------------------
# Single epsilon-linear subinterval
# ---------------------------------------------------------------------------

def find_linear_subinterval(f: PLFunction, a: float, b: float, eps: float
                            ) -> Tuple[float, float]:
    """Find (c,d) with (f,c,d) eps-linear and d-c >= eps^floor(1/eps) (b-a).

    Recursion: while not eps-linear, take the grid witness of maximal
    deviation (smallest x on ties); a positive deviation in the
    increasing-normalized frame shrinks to [a, x], a negative one to [x, b].
    Each step raises |s_f| on the current interval by at least eps, so the
    depth is at most floor(1/eps).
    """
    if not (0 < eps < 1):
        raise ValueError("need 0 < eps < 1")
    max_depth = int(1 / eps)
    depth = 0
    prev_slope = None
    while True:
        xs, dev = _deviations(f, a, b)
        if np.max(np.abs(dev)) <= eps * (b - a) + _TOL:
            return a, b
        cur = abs((f(b) - f(a)) / (b - a))
        if prev_slope is not None:
            assert cur >= prev_slope + eps - 1e-9, "slope must rise by eps each step"
        prev_slope = cur
        depth += 1
        assert depth <= max_depth, "recursion exceeded floor(1/eps)"
        w = int(np.argmax(np.abs(dev)))           # first max = smallest x
        # normalize so the function is non-decreasing across [a,b]
        sgn = 1.0 if f(b) >= f(a) else -1.0
        if sgn * dev[w] > 0:
            b = float(xs[w])
        else:
            a = float(xs[w])


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------

def cover_by_linear(f: PLFunction, a: float, b: float, eps: float
                    ) -> IntervalDecomposition:
    """Cover [a,b] by non-overlapping eps-linear intervals, leftover <= eps(b-a).

    Level-by-level bisection around the interval found in each active segment;
    after N levels the active remainder is <= (eps/2)(b-a); pieces shorter than
    tau(b-a), tau = eps*2^-(N+1), are dropped (their total is < (eps/2)(b-a)
    because at most 2^N pieces exist).
    """
    total = b - a
    active = [(a, b)]
    kept: List[Tuple[float, float]] = []
    levels = 0
    min_len = f.step - _TOL
    while active and sum(d - c for c, d in active) > (eps / 2) * total:
        levels += 1
        nxt: List[Tuple[float, float]] = []
        for (c, d) in active:
            if d - c <= min_len:       # single grid cell: exactly linear
                kept.append((c, d))
                continue
            x, y = find_linear_subinterval(f, c, d, eps)
            kept.append((x, y))
            if x - c > _TOL:
                nxt.append((c, x))
            if d - y > _TOL:
                nxt.append((y, d))
        active = nxt
    tau = eps * 2.0 ** (-(levels + 1))
    final = [iv for iv in kept if iv[1] - iv[0] >= tau * total - _TOL]
    dec = IntervalDecomposition(final, "linear", eps,
                                [slope(f, c, d) for c, d in sorted(final)],
                                tau, (a, b), {"levels": levels})
    assert dec.leftover() <= eps * total + 1e-9
    return dec


def cover_by_linear_graded(f: PLFunction, a: float, b: float, eps: float
                           ) -> IntervalDecomposition:
    """Graded cover: additionally d_j - c_j <= c_j - a for every piece.

    Dyadic annuli I_k = [a + 2^k(b-a), a + 2^(k+1)(b-a)] for k0 <= k <= -1
    (boundaries snapped up to the grid, which preserves the grading), each
    covered by ``cover_by_linear``; conclusions hold with 2*eps and eps*tau.
    """
    total = b - a
    L = int(round(total / f.step))
    k0 = int(math.floor(math.log2(eps))) - 1
    bounds = [min(int(math.ceil((2.0 ** k) * L)), L) for k in range(k0, 0)] + [L]
    intervals: List[Tuple[float, float]] = []
    taus = []
    for o1, o2 in zip(bounds, bounds[1:]):
        if o2 <= o1:
            continue
        c, d = a + o1 * f.step, a + o2 * f.step
        sub = cover_by_linear(f, c, d, eps)
        intervals.extend(sub.intervals)
        if sub.intervals:
            taus.append(sub.tau * (d - c) / total)
    tau = min(taus) if taus else eps
    dec = IntervalDecomposition(intervals, "graded", eps,
                                [slope(f, c, d) for c, d in sorted(intervals)],
                                tau, (a, b))
    for (c, d) in dec.intervals:
        assert d - c <= (c - a) + 1e-9, "grading violated"
    # one grid cell of slack: the innermost annulus boundary is snapped up,
    # and the first cell after a can never satisfy the grading
    assert dec.leftover() <= 2 * eps * total + f.step + 1e-9
    return dec


# ---------------------------------------------------------------------------
# Superlinear chain
# ---------------------------------------------------------------------------

def superlinear_chain(f: PLFunction, a: float, b: float, eps: float
                      ) -> IntervalDecomposition:
    """Chain of eps-superlinear intervals with non-decreasing slopes.

    Cover at eps^2/4, then walk the maximizing-predecessor map P over the
    endpoint set C from b down to a; drop intervals with >= eps/2 of their
    length in the uncovered set (J1) or shorter than tau(b-a) (J2).
    """
    total = b - a
    cov = cover_by_linear(f, a, b, eps * eps / 4.0)
    tau = cov.tau
    # uncovered set E as sorted gap segments
    gaps: List[Tuple[float, float]] = []
    cur = a
    for (c, d) in cov.intervals:
        if c > cur + _TOL:
            gaps.append((cur, c))
        cur = max(cur, d)
    if b > cur + _TOL:
        gaps.append((cur, b))

    def emeas(lo: float, hi: float) -> float:
        return sum(max(0.0, min(hi, g2) - max(lo, g1)) for g1, g2 in gaps)

    C = np.array(sorted({a} | {c for c, _ in cov.intervals} | {d for _, d in cov.intervals}))
    fC = f(C)
    kept: List[Tuple[float, float]] = []
    y = b
    fy = float(f(b))
    while y > a + _TOL:
        mask = C < y - _TOL
        xs = C[mask]
        sl = (fy - fC[mask]) / (y - xs)
        best = float(np.max(sl))
        x = float(xs[sl >= best - _TOL][-1])      # ties -> largest x
        seg = (x, y)
        ln = y - x
        j1 = emeas(x, y) >= (eps / 2.0) * ln - _TOL
        j2 = ln < tau * total - _TOL
        if not j1 and not j2:
            kept.append(seg)
        y = x
        fy = float(f(y))
    kept.sort()
    slopes = [slope(f, c, d) for c, d in kept]
    for s1, s2 in zip(slopes, slopes[1:]):
        assert s2 >= s1 - 1e-9, "chain slopes must be non-decreasing"
    for (c, d) in kept:
        assert is_eps_superlinear(f, c, d, eps), "kept interval not superlinear"
    dec = IntervalDecomposition(kept, "superlinear", eps, slopes, tau, (a, b))
    assert dec.leftover() <= eps * total + 1e-9
    return dec


# ---------------------------------------------------------------------------
# Main superlinear decomposition
# ---------------------------------------------------------------------------

def _split_blocks(i0: int, i1: int, lo: int, hi: int) -> List[int]:
    """Boundaries splitting [i0,i1] into integer blocks of length in [lo,hi]."""
    length = i1 - i0
    kmin = max(1, math.ceil(length / hi))
    kmax = length // lo
    if kmax < kmin:
        raise HypothesisFailed(
            f"BlockPartitionFailed: cannot split {length} cells into blocks of [{lo},{hi}]")
    k = min(max(kmin, round(length / ((lo + hi) / 2))), kmax)
    base, extra = divmod(length, k)
    bounds = [i0]
    for i in range(k):
        bounds.append(bounds[-1] + base + (1 if i < extra else 0))
    return bounds


def sigma_chain(s: float, t: float) -> Dict[str, float]:
    """The explicit constants used by ``superlinear_decomposition``."""
    first = 1.0 if t / s > 1.0 else 1.0 - math.sqrt(1.0 - t / s)
    sigma = 0.99 * min(first, t / 6.0, 1.0, (1.0 - s) / 5.0, s)
    zeta = sigma / 11.0
    xi = min(sigma * sigma / 4.0, zeta)
    eps1 = min(1.0, 4.0 * zeta / sigma)          # = 4/11
    return {"sigma": sigma, "zeta": zeta, "xi": xi, "eps1": eps1}


def superlinear_decomposition(f: PLFunction, B: float, s: float, t: float,
                              eps: float, min_sigma: float = 0.0
                              ) -> Tuple[IntervalDecomposition, float]:
    """Decompose [0,B] into eps-superlinear intervals, a definite fraction of
    which have slope in [xi, 1-xi].

    Partition into sigma-blocks, cover block 0 by the graded cover and each
    other block by a superlinear chain, classify blocks by how much of their
    length carries slope <= zeta / >= 1-zeta; either every interval already
    works (some block is slope-mixed) or a bridging interval is built across a
    high-slope -> low-slope block transition.

    ``min_sigma`` floors the block width for coarse grids; all conclusions are
    verified against the constants actually returned.
    """
    if not (f.a == 0.0 and abs(f.b - B) < 1e-12):
        raise ValueError("f must live on [0, B]")
    if not (0 < s < 1 and 0 < t < 1):
        raise HypothesisFailed("HypothesisFailed: s,t must lie in (0,1)")
    if abs(float(f(0.0))) > 1e-9 * B:
        raise HypothesisFailed("HypothesisFailed: f(0) = 0")
    if abs(float(f(B)) - s * B) > 1e-9 * B:
        raise HypothesisFailed("HypothesisFailed: f(B) = sB")
    if float(f((1 - s) * B)) < t * B - 1e-9 * B:
        raise HypothesisFailed("HypothesisFailed: f((1-s)B) >= tB")
    if np.min(np.diff(f.values)) < -1e-12:
        raise HypothesisFailed("HypothesisFailed: f non-decreasing")

    cs = sigma_chain(s, t)
    sigma, zeta = cs["sigma"], cs["zeta"]
    if eps > cs["eps1"] + _TOL:
        raise HypothesisFailed(f"HypothesisFailed: eps <= eps1 = {cs['eps1']:.4f}")
    sigma = max(sigma, min_sigma)
    zeta = sigma / 11.0
    xi = min(sigma * sigma / 4.0, zeta)
    eps0 = min(eps * sigma / 4.0, sigma / 4.0, zeta)

    G = f.G
    step = B / G
    blk_lo = max(1, math.ceil(sigma * G))
    blk_hi = max(blk_lo, math.floor(2 * sigma * G))
    c1 = min(int(math.ceil(4 * sigma * G)), G - 2)
    i1s = int(math.ceil((1 - s) * G))
    bounds = [0, c1]
    if i1s <= c1:
        raise HypothesisFailed("HypothesisFailed: 4*sigma < 1-s (block layout)")
    bounds += _split_blocks(c1, i1s, blk_lo, blk_hi)[1:]
    n0 = len(bounds) - 1                       # c_{n0} = (1-s)B (snapped up)
    bounds += _split_blocks(i1s, G, blk_lo, blk_hi)[1:]
    cgrid = [bb * step for bb in bounds]
    N = len(cgrid) - 2                         # blocks I_0..I_N

    block_ivs: List[List[Tuple[float, float]]] = []
    graded = cover_by_linear_graded(f, cgrid[0], cgrid[1], eps0)
    block_ivs.append(list(graded.intervals))
    for n in range(1, N + 1):
        ch = superlinear_chain(f, cgrid[n], cgrid[n + 1], eps0)
        block_ivs.append(list(ch.intervals))

    def class_of(n: int) -> int:
        In = cgrid[n + 1] - cgrid[n]
        low = sum(d - c for c, d in block_ivs[n] if slope(f, c, d) <= zeta + _TOL)
        high = sum(d - c for c, d in block_ivs[n] if slope(f, c, d) >= 1 - zeta - _TOL)
        out = sum(d - c for c, d in block_ivs[n]
                  if not (zeta - _TOL < slope(f, c, d) < 1 - zeta + _TOL))
        if low >= (1 - sigma) * In - _TOL:
            return 1
        if high >= (1 - sigma) * In - _TOL:
            return 2
        if out >= (1 - sigma / 2) * In - _TOL:
            return 3
        return 4

    classes = {n: class_of(n) for n in range(1, N + 1)}
    extras = {"sigma": sigma, "zeta": zeta, "xi": xi, "eps0": eps0,
              "n0": n0, "blocks": list(map(float, cgrid)),
              "classes": [classes[n] for n in range(1, N + 1)]}

    if any(c == 4 for c in classes.values()):
        intervals = [iv for ivs in block_ivs for iv in ivs]
        extras["branch"] = "mixed-block"
        dec = _finish(f, B, intervals, eps, xi, extras)
        return dec, xi

    # bridging branch: find n with n-1 in I2 u I3 and n in I1 u I3
    pick = None
    for n in range(2, N + 1):
        if classes[n - 1] in (2, 3) and classes[n] in (1, 3):
            pick = n
            break
    if pick is None:
        raise HypothesisFailed("HypothesisFailed: no block transition found "
                               f"(classes {extras['classes']})")
    n = pick
    hi_ivs = [iv for iv in block_ivs[n - 1] if slope(f, *iv) >= 1 - zeta - _TOL]
    lo_ivs = [iv for iv in block_ivs[n] if slope(f, *iv) <= zeta + _TOL]
    if not hi_ivs or not lo_ivs:
        raise HypothesisFailed("HypothesisFailed: transition blocks lack extreme slopes")
    a_t = hi_ivs[0][0]                          # first high-slope interval start
    b_t = lo_ivs[-1][1]                         # last low-slope interval end
    sab = slope(f, a_t, b_t)
    if not (zeta - 1e-9 <= sab <= 1 - zeta + 1e-9):
        raise HypothesisFailed(f"HypothesisFailed: bridging slope {sab:.4f} "
                               f"outside [{zeta:.4f}, {1-zeta:.4f}]")
    if not is_eps_superlinear(f, a_t, b_t, eps):
        raise HypothesisFailed("HypothesisFailed: bridging interval not eps-superlinear")
    intervals = [(a_t, b_t)]
    for ivs in block_ivs:
        for iv in ivs:
            if iv[1] <= a_t + _TOL or iv[0] >= b_t - _TOL:
                intervals.append(iv)
    extras["branch"] = "bridging"
    extras["bridge"] = (a_t, b_t)
    dec = _finish(f, B, intervals, eps, xi, extras)
    return dec, xi


def _finish(f: PLFunction, B: float, intervals, eps: float, xi: float, extras
            ) -> IntervalDecomposition:
    intervals = sorted(intervals)
    slopes = [slope(f, c, d) for c, d in intervals]
    tau = min((d - c) for c, d in intervals) / B if intervals else 0.0
    dec = IntervalDecomposition(intervals, "main", eps, slopes, tau, (0.0, B), extras)
    # conclusions (i)-(iv), asserted against the returned constants
    for (c, d), sl in zip(dec.intervals, dec.slopes):
        assert is_eps_superlinear(f, c, d, eps), "(i) failed"
        assert d - c <= c + 1e-9, "(ii) upper failed"
        assert d - c >= tau * B - 1e-9, "(ii) lower failed"
    # two grid cells of slack: the graded head annulus is snapped up and the
    # first cell after 0 can never satisfy the grading (negligible for G >> 1/eps)
    assert dec.leftover() <= eps * B + 2 * f.step + 1e-9, "(iii) failed"
    good = sum(d - c for (c, d), sl in zip(dec.intervals, dec.slopes)
               if xi - _TOL <= sl <= 1 - xi + _TOL)
    assert good >= xi * B - 1e-9, "(iv) failed"
    extras["good_mass"] = good
    return dec


def snap_endpoints(dec: IntervalDecomposition, f: PLFunction, B: float, ell: int
                   ) -> IntervalDecomposition:
    """Snap interval endpoints onto the lattice (B/ell)*N0: left endpoints up,
    right endpoints down; conclusions survive with (2*eps, tau/2, xi/2).
    Collapsed intervals are dropped and recorded under extras["dropped"].
    """
    g = B / ell
    out: List[Tuple[float, float]] = []
    dropped: List[Tuple[float, float]] = []
    floor_len = dec.tau / 2 * B
    for (c, d) in dec.intervals:
        c2 = math.ceil(c / g - 1e-9) * g
        d2 = math.floor(d / g + 1e-9) * g
        if d2 - c2 >= max(floor_len, g) - 1e-9:
            out.append((c2, d2))
        else:
            dropped.append((c, d))
    extras = dict(dec.extras)
    extras["dropped"] = dropped
    extras["ell"] = ell
    xi = extras.get("xi")
    new = IntervalDecomposition(out, dec.kind, 2 * dec.eps,
                                [slope(f, c, d) for c, d in sorted(out)],
                                dec.tau / 2, dec.domain, extras)
    for (c, d) in new.intervals:
        assert is_eps_superlinear(f, c, d, new.eps) or dec.kind == "graded"
    if xi is not None:
        extras["xi"] = xi / 2
    return new
