"""Experiment lab: deterministic generators, the incidence harness, sweep
experiments, and the end-to-end pipeline.

Counting exponents of projected / pinned-distance images are computed after
an affine normalization of the image to unit diameter, so that the reported
``log N / m`` is not contaminated by the O(1) diameter of the image (a
``log2(sqrt(d))/m`` artifact at desk scale).

Within-stage sweeps run on a thread pool sized by the ``FROSTLAB_THREADS``
environment variable (default 1); aggregation is order-preserving, so results
are byte-identical regardless of thread count.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dyadic import (CubeIndex, DyadicMeasure, DyadicSet, conditional,
                     count_cubes, uniform_on)
from .entropy import robust_check
from .liplib import HypothesisFailed
from .multiscale import (EpsTooSmallForT, NonConcentrationFailed,
                         ahlfors_multiscale, frostman_multiscale)
from .proj import gamma_exponent
from .regular import decompose_regular


def _thread_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving parallel map sized by FROSTLAB_THREADS."""
    n = int(os.environ.get("FROSTLAB_THREADS", "1") or "1")
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def generate(name: str, params: dict, m: int) -> DyadicSet:
    """Deterministic 2^-m set generators.

    - ``cantor_product``: per axis, base-4 expansions restricted to the digit
      set ``keep`` (d axes, m even);
    - ``ifs_self_similar``: all length-(m/bits) digit strings over the given
      d-dimensional digit alphabet at 2^-bits contraction;
    - ``train_track``: X of 2^{m/2} columns spaced 2^{-m/2}, each carrying the
      2^{m/2} cells of height j*2^-m — a maximal 2^-m-separated subset of
      X x [0, 2^{-m/2}];
    - ``grid``: the full level-m grid;
    - ``sphere_sample``: cells hit by n equally spaced points of a circle
      (d=2) or Fibonacci sphere (d=3).
    """
    if name == "cantor_product":
        d = int(params.get("d", 2))
        keeps = params.get("keeps") or [params.get("keep", (0, 3))] * d
        keeps = [sorted(int(k) for k in ks) for ks in keeps]
        if m % 2:
            raise ValueError("cantor_product needs even m")
        if len(keeps) != d or any(not 0 <= k < 4 for ks in keeps for k in ks):
            raise ValueError("keep digits must be base-4, one set per axis")
        cells = [()]
        for ks in keeps:
            axis = [0]
            for _ in range(m // 2):
                axis = [4 * v + k for v in axis for k in ks]
            cells = [c + (v,) for c in cells for v in axis]
        return DyadicSet(d, m, cells)
    if name == "ifs_self_similar":
        digits = [tuple(int(v) for v in t) for t in params["digits"]]
        bits = int(params.get("bits", 1))
        d = len(digits[0])
        if m % bits:
            raise ValueError("m must be a multiple of bits")
        if len(digits) ** (m // bits) > 1 << 22:
            raise ValueError("generator too large at this depth")
        cells = [tuple(0 for _ in range(d))]
        for _ in range(m // bits):
            cells = [tuple((c << bits) + g for c, g in zip(cell, dig))
                     for cell in cells for dig in digits]
        return DyadicSet(d, m, cells)
    if name == "train_track":
        if m % 2:
            raise ValueError("train_track needs even m")
        h = 1 << (m // 2)
        return DyadicSet(2, m, [(i * h, j) for i in range(h) for j in range(h)])
    if name == "grid":
        d = int(params.get("d", 2))
        n = 1 << m
        if n ** d > 1 << 24:
            raise ValueError("grid too large at this depth")
        cells = [()]
        for _ in range(d):
            cells = [c + (v,) for c in cells for v in range(n)]
        return DyadicSet(d, m, cells)
    if name == "sphere_sample":
        d = int(params.get("d", 2))
        n = int(params.get("n", 512))
        radius = float(params.get("radius", 0.35))
        center = np.full(d, 0.5)
        if d == 2:
            ang = (np.arange(n) + 0.5) * (2 * math.pi / n)
            pts = center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        elif d == 3:
            i = np.arange(n) + 0.5
            phi = math.pi * (1 + math.sqrt(5)) * i
            z = 1 - 2 * i / n
            r = np.sqrt(1 - z ** 2)
            pts = center + radius * np.stack(
                [r * np.cos(phi), r * np.sin(phi), z], axis=1)
        else:
            raise ValueError("sphere_sample implemented for d in {2,3}")
        cells = {tuple(np.clip((p * (1 << m)).astype(np.int64), 0, (1 << m) - 1))
                 for p in pts}
        return DyadicSet(d, m, cells)
    raise ValueError(f"unknown generator {name!r}")


# ---------------------------------------------------------------------------
# Curve families and incidences
# ---------------------------------------------------------------------------

@dataclass
class CurveFamily:
    """One-parameter family of curves y = G(x, a), a in [-1, 1].

    ``c`` lower-bounds |dG/da| (and 1/c upper-bounds it); ``slope`` maps a
    parameter to a bound on |dG/dx| over x in [0,1], used to convert vertical
    distance to a certified Euclidean graph distance.
    """

    name: str
    G: Callable[[np.ndarray, float], np.ndarray]
    dGda: Callable[[np.ndarray, float], np.ndarray]
    c: float
    slope: Callable[[float], float]

    def verify(self, n_samples: int = 64) -> bool:
        xs = (np.arange(n_samples) + 0.5) / n_samples
        for a in np.linspace(-1, 1, 9):
            dv = np.abs(np.asarray(self.dGda(xs, float(a)), dtype=float))
            if np.any(dv < self.c - 1e-9) or np.any(dv > 1 / self.c + 1e-9):
                return False
        return True


def horizontal_lines() -> CurveFamily:
    return CurveFamily("horizontal_lines",
                       lambda x, a: np.full_like(np.asarray(x, float), a),
                       lambda x, a: np.ones_like(np.asarray(x, float)),
                       1.0, lambda a: 0.0)


def sloped_lines(s: float) -> CurveFamily:
    return CurveFamily(f"lines_slope_{s}",
                       lambda x, a: s * np.asarray(x, float) + a,
                       lambda x, a: np.ones_like(np.asarray(x, float)),
                       1.0, lambda a: abs(s))


def _as_points(E) -> np.ndarray:
    if isinstance(E, (DyadicSet, DyadicMeasure)):
        return E.centers()
    return np.atleast_2d(np.asarray(E, dtype=float))


def _check_separated(pts: np.ndarray, delta: float, label: str) -> None:
    if len(pts) < 2:
        return
    if pts.ndim == 1:
        pts = pts[:, None]
    best = math.inf
    block = max(1, int(2e7) // len(pts))
    for i0 in range(0, len(pts), block):
        diff = pts[i0:i0 + block, None, :] - pts[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = np.arange(i0, min(i0 + block, len(pts)))
        d2[np.arange(len(idx)), idx] = math.inf
        best = min(best, float(np.sqrt(d2.min())))
    if best < delta * (1 - 1e-9):
        raise ValueError(f"{label} is not delta-separated "
                         f"(min distance {best:.3e} < {delta:.3e})")


def incidence_count(E, A: Sequence[float], fam: CurveFamily, delta: float
                    ) -> int:
    """Number of pairs (p, a) with Euclidean distance(p, graph of G_a) < delta.

    Distance is the vertical deviation |p_y - G_a(p_x)| scaled down by
    sqrt(1 + L_a^2) with L_a the family's slope bound for the parameter — a
    certified over-approximation of the graph distance, so the strict
    inequality is exact for bounded-slope families.  Both E and A must be
    delta-separated.
    """
    pts = _as_points(E)
    if pts.size == 0:
        return 0
    A = np.asarray(A, dtype=float)
    _check_separated(pts, delta, "E")
    _check_separated(A, delta, "A")

    def hits(a: float) -> int:
        y = np.asarray(fam.G(pts[:, 0], float(a)), dtype=float)
        L = fam.slope(float(a))
        return int(np.count_nonzero(
            np.abs(pts[:, 1] - y) < delta * math.sqrt(1 + L * L)))

    return int(sum(_thread_map(hits, list(A))))


def incidence_multiplicity(E, A: Sequence[float], fam: CurveFamily,
                           delta: float) -> int:
    """Max number of curves within delta of a single point (the measured
    multiplicity constant of the trivial incidence bound)."""
    pts = _as_points(E)
    if pts.size == 0:
        return 0
    mult = np.zeros(len(pts), dtype=np.int64)
    for a in np.asarray(A, dtype=float):
        y = np.asarray(fam.G(pts[:, 0], float(a)), dtype=float)
        L = fam.slope(float(a))
        mult += np.abs(pts[:, 1] - y) < delta * math.sqrt(1 + L * L)
    return int(mult.max())


def nonconcentration_audit(E, A: Sequence[float], X: Sequence[float],
                           delta: float, kappa: float,
                           tol: float = 0.05) -> dict:
    """Check the incidence-theorem hypotheses exactly and report witnesses.

    - size: |E| <= delta^-eps |X| |A|^{1/2}, reported as the measured eps;
    - A-balls: |A cap B(a, delta |A|^{1/2})| <= delta^kappa |A| for all a;
    - X-balls: |X cap B(x, r)| <= delta^-eps r^kappa |X| over dyadic r,
      reported as the measured eps.
    """
    pts = _as_points(E)
    A = np.sort(np.asarray(A, dtype=float))
    X = np.sort(np.asarray(X, dtype=float))
    nE, nA, nX = len(pts), len(A), len(X)
    log_inv = math.log2(1 / delta)

    eps_E = math.log2(max(nE, 1) / (nX * math.sqrt(nA))) / log_inv
    size = {"eps": eps_E, "tol": tol, "pass": eps_E <= tol + 1e-12,
            "counts": {"E": nE, "A": nA, "X": nX}}

    rA = delta * math.sqrt(nA)
    counts = np.searchsorted(A, A + rA, "right") - np.searchsorted(A, A - rA, "left")
    worst_i = int(np.argmax(counts))
    bound = delta ** kappa * nA
    a_ball = {"worst_count": int(counts[worst_i]), "bound": bound,
              "witness_a": float(A[worst_i]),
              "pass": counts[worst_i] <= bound + 1e-9}

    eps_X = -math.inf
    witness = None
    r = delta
    while r <= 1 + 1e-12:
        cnt = np.searchsorted(X, X + r, "right") - np.searchsorted(X, X - r, "left")
        i = int(np.argmax(cnt))
        e = math.log2(cnt[i] / (r ** kappa * nX)) / log_inv
        if e > eps_X:
            eps_X, witness = e, {"x": float(X[i]), "r": r, "count": int(cnt[i])}
        r *= 2
    x_ball = {"eps": eps_X, "tol": tol, "pass": eps_X <= tol + 1e-12,
              "witness": witness}

    return {"size": size, "A_ball": a_ball, "X_ball": x_ball,
            "pass": bool(size["pass"] and a_ball["pass"] and x_ball["pass"])}


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _binned_count(values: np.ndarray, m: int) -> int:
    """Distinct level-m bins of the values; images of diameter > 1 are
    contracted to unit diameter first (never dilated), so the count is not
    inflated by the O(1) diameter of the image."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-15:
        return 1
    scaled = (values - lo) / max(hi - lo, 1.0)
    idx = np.minimum((scaled * (1 << m)).astype(np.int64), (1 << m) - 1)
    return int(len(np.unique(idx)))


def _csv(header: Sequence[str], rows: Sequence[Sequence[float]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.12f}" for v in row))
    return "\n".join(lines) + "\n"


def _quantiles(vals: Sequence[float]) -> dict:
    q = np.quantile(np.asarray(vals, dtype=float), [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"min": float(q[0]), "q25": float(q[1]), "median": float(q[2]),
            "q75": float(q[3]), "max": float(q[4])}


def projection_gain_sweep(x, n_directions: int, m: int, seed: int = 0) -> dict:
    """Per-direction normalized counting exponents log2 N(P_theta X, m)/m of
    a planar set, over seeded random directions; returns rows, quantile
    summary, and the CSV text."""
    pts = _as_points(x)
    if pts.shape[1] != 2:
        raise ValueError("projection sweep implemented for d = 2")
    rng = np.random.default_rng(seed)
    thetas = np.sort(rng.uniform(0.0, math.pi, n_directions))

    def one(theta: float) -> float:
        v = pts @ np.array([math.cos(theta), math.sin(theta)])
        return math.log2(_binned_count(v, m)) / m

    exps = _thread_map(one, [float(t) for t in thetas])
    rows = list(zip([float(t) for t in thetas], exps))
    return {"rows": rows, "summary": _quantiles(exps),
            "csv": _csv(["theta", "exponent"], rows)}


def pinned_distance_experiment(mu, pins: Sequence[Sequence[float]], m: int
                               ) -> dict:
    """Per-pin normalized counting exponents log2 N(Delta^y X, m)/m; pins
    lying in a support cell are flagged."""
    pts = _as_points(mu)
    d = pts.shape[1]
    depth = mu.m if isinstance(mu, (DyadicSet, DyadicMeasure)) else m
    cells = (getattr(mu, "cells", None)
             or (set(mu.masses) if isinstance(mu, DyadicMeasure) else set()))
    flags = []
    rows = []

    def one(y: np.ndarray) -> float:
        dist = np.linalg.norm(pts - y, axis=1)
        return math.log2(_binned_count(dist, m)) / m

    ys = [np.asarray(y, dtype=float) for y in pins]
    exps = _thread_map(one, ys)
    for y, e in zip(ys, exps):
        cell = tuple(np.clip((y * (1 << depth)).astype(np.int64),
                             0, (1 << depth) - 1))
        if cells and cell in cells:
            flags.append(f"pin {y.tolist()} lies in a support cell")
        rows.append(tuple(float(v) for v in y) + (float(e),))
    header = [f"y{i}" for i in range(d)] + ["exponent"]
    return {"rows": rows, "summary": _quantiles(exps), "flags": flags,
            "csv": _csv(header, rows)}


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    generator: dict                  # {"name": ..., "params": {...}}
    m: int
    T: int = 2
    eps: float = 0.2
    u: float = 0.05
    kappa: float = 0.75
    delta: float = 0.02
    n_directions: int = 16
    pins: Optional[List[List[float]]] = None
    seed: int = 0
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.m <= 0 or self.n_directions <= 0:
            raise ValueError("counts must be positive")

    @staticmethod
    def from_json(obj: dict) -> "Scenario":
        return Scenario(**obj)

    def to_json(self) -> dict:
        return {"generator": self.generator, "m": self.m, "T": self.T,
                "eps": self.eps, "u": self.u, "kappa": self.kappa,
                "delta": self.delta, "n_directions": self.n_directions,
                "pins": self.pins, "seed": self.seed, "out_dir": self.out_dir}


def _persist(out_dir: Optional[str], name: str, obj) -> None:
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w") as fh:
            if isinstance(obj, str):
                fh.write(obj)
            else:
                json.dump(obj, fh, indent=1)


def pipeline_run(scenario: Scenario) -> dict:
    """End-to-end run: generate, regularize, multiscale-decompose, then audit
    per-scale projected robustness, and aggregate counting exponents.

    Stage errors are recorded under their stage tag and abort the later
    stages; the partial bundle is always returned.
    """
    bundle: dict = {"scenario": scenario.to_json(), "stages": {}}
    out = scenario.out_dir

    # stage: generate
    try:
        dset = generate(scenario.generator["name"],
                        scenario.generator.get("params", {}), scenario.m)
        mu = uniform_on(dset)
        bundle["stages"]["generate"] = {"cells": len(dset)}
    except Exception as e:
        bundle["stages"]["generate"] = {"error": f"generate: {e}"}
        return bundle
    d, m = mu.d, mu.m

    # stage: regularize
    try:
        ell = m // scenario.T
        if m % scenario.T:
            raise ValueError("m must be a multiple of T")
        dec = decompose_regular(mu, scenario.T, ell, scenario.eps)
        if not dec.pieces:
            bundle["stages"]["regularize"] = {
                "error": "regularize: no regular piece above the mass floor",
                "warnings": dec.warnings}
            return bundle
        piece = max(dec.pieces, key=lambda p: p.mass)
        bundle["stages"]["regularize"] = {
            "pieces": len(dec.pieces), "union_mass": dec.union_mass,
            "main_piece_mass": piece.mass, "sigma": list(piece.sigma)}
        _persist(out, "piece.json", piece.to_json())
    except Exception as e:
        bundle["stages"]["regularize"] = {"error": f"regularize: {e}"}
        return bundle

    # stage: multiscale (Frostman, falling back to the two-sided variant
    # when the single-scale non-concentration hypothesis fails)
    try:
        fallback = None
        try:
            sd, rep = frostman_multiscale(piece, scenario.u, scenario.eps)
            kind = "frostman"
        except (NonConcentrationFailed, HypothesisFailed) as e:
            # two-sided variant when the Frostman route is out of regime
            fallback = str(e)
            sd, rep = ahlfors_multiscale(piece, scenario.eps)
            kind = "ahlfors"
        bundle["stages"]["multiscale"] = {
            "kind": kind, "decomposition": sd.to_json(),
            "report": rep.to_json()}
        if fallback:
            bundle["stages"]["multiscale"]["fallback_reason"] = fallback
        _persist(out, "scales.json", sd.to_json())
        _persist(out, "multiscale_report.json", rep.to_json())
    except (HypothesisFailed, EpsTooSmallForT, Exception) as e:
        bundle["stages"]["multiscale"] = {"error": f"multiscale: {e}"}
        return bundle

    # stage: per-scale projected robustness
    try:
        rng = np.random.default_rng(scenario.seed)
        thetas = rng.uniform(0.0, math.pi, scenario.n_directions)
        per_scale = []
        for (A, B), alpha in zip(sd.intervals, sd.alphas):
            m_j = sd.T * (B - A)
            gamma = max(gamma_exponent(min(max(alpha, 0.0), float(d)),
                                       scenario.kappa, scenario.delta,
                                       d=d, k=1), 0.0)
            cubes = sorted(piece.measure.level_masses(sd.T * A).keys())
            idx = np.unique(np.linspace(0, len(cubes) - 1,
                                        min(8, len(cubes))).round().astype(int))
            passes = 0
            trials = 0
            for i in idx:
                cond = conditional(piece.measure, CubeIndex(sd.T * A, cubes[i]))
                centers, w = cond.centers(), cond.mass_array()
                for th in thetas:
                    v = centers @ np.array([math.cos(th), math.sin(th)]) \
                        if d == 2 else centers[:, 0]
                    lo, hi = float(v.min()), float(v.max())
                    span = max(hi - lo, 1e-15)
                    bins = np.minimum(((v - lo) / span * (1 << m_j)).astype(np.int64),
                                      (1 << m_j) - 1)
                    hist: Dict[tuple, float] = {}
                    for b, mass in zip(bins, w):
                        hist[(int(b),)] = hist.get((int(b),), 0.0) + float(mass)
                    if gamma <= 0:
                        passes += 1        # one cube always suffices
                    else:
                        pm = DyadicMeasure(1, m_j, hist)
                        passes += robust_check(pm, gamma, scenario.delta, m_j)
                    trials += 1
            per_scale.append({"interval": [A, B], "alpha": alpha,
                              "gamma": gamma, "m_j": m_j,
                              "pass_rate": passes / max(trials, 1)})
        bundle["stages"]["robustness"] = {"per_scale": per_scale}
    except Exception as e:
        bundle["stages"]["robustness"] = {"error": f"robustness: {e}"}
        return bundle

    # stage: aggregate
    try:
        count_exp = math.log2(count_cubes(mu, m)) / (d * m)
        tot = sum(s["m_j"] for s in per_scale) or 1
        predicted = sum(s["gamma"] * s["m_j"] for s in per_scale) / tot
        sweep = (projection_gain_sweep(piece.measure.support(),
                                       scenario.n_directions, m,
                                       seed=scenario.seed)
                 if d == 2 else None)
        agg = {"counting_exponent": count_exp,
               "predicted_projected_exponent": predicted,
               "mean_pass_rate": float(np.mean([s["pass_rate"]
                                                for s in per_scale]))}
        if sweep:
            agg["measured_projection"] = sweep["summary"]
            _persist(out, "sweep.csv", sweep["csv"])
        bundle["stages"]["aggregate"] = agg
        _persist(out, "bundle.json", bundle)
    except Exception as e:
        bundle["stages"]["aggregate"] = {"error": f"aggregate: {e}"}
    return bundle
