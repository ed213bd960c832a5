"""k-plates, the greedy heavy-plate structure theorem, and radial pruning.

A k-plate is the closed width-delta neighbourhood of an affine k-plane,
clipped to the unit ball centered at the box center (1/2, ..., 1/2) — the
smallest unit ball containing [0,1)^d for d <= 4, so the clip never cuts
dyadic support.  Plate membership uses the cell-center convention of
``dyadic``.

``heavy_plate_structure`` runs the greedy almost-disjoint selection over a
support-anchored candidate net and returns a small family of widened plates
containing every heavy net plate; the L^2 counting inequality that caps the
greedy is asserted numerically at every step.  ``radial_prune`` iterates the
single-scale step over a doubly-exponential scale schedule, pruning slabs of
nu and shrinking the center set of mu, and reports the measured hyperplane
decay of the surviving radial projections.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dyadic import (CubeIndex, DyadicMeasure, DyadicSet, all_ball_masses,
                     restrict_normalize, ZeroMassSet)
from .proj import SphereMeasure, _normal_net, hyperplane_nonconcentration

BALL_CENTER_OFFSET = 0.5          # clip ball center is (1/2, ..., 1/2)
MAX_NET_DIRECTIONS = 500_000
MAX_PRECHECK_CENTERS = 2048
NOMINAL_WIDEN_CD = 4.0


class NuDecayFailed(ValueError):
    """nu exceeds the claimed (k-1)-plate decay bound on the check net."""


@dataclass(frozen=True)
class Plate:
    """Width-``width`` neighbourhood of the affine k-plane base + span(basis),
    clipped to the unit ball around the box center.

    ``basis`` holds k orthonormal direction rows (empty tuple for a 0-plate,
    i.e. a ball around ``base``).
    """

    basis: tuple            # k rows of d floats, orthonormal (possibly empty)
    base: tuple             # d floats
    width: float

    def __post_init__(self):
        if not (0 < self.width <= 1):
            raise ValueError("width must be in (0, 1]")
        B = self.tangent
        if B.size and np.max(np.abs(B @ B.T - np.eye(len(B)))) > 1e-9:
            raise ValueError("plate basis must be orthonormal")
        c = np.full(self.d, BALL_CENTER_OFFSET)
        if np.linalg.norm(np.asarray(self.base) - c) > 1 + 1e-9:
            raise ValueError("plate base point outside the clip ball")

    @property
    def d(self) -> int:
        return len(self.base)

    @property
    def k(self) -> int:
        return len(self.basis)

    @property
    def tangent(self) -> np.ndarray:
        return np.asarray(self.basis, dtype=float).reshape(self.k, self.d)

    def distances(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance of points to the affine k-plane."""
        rel = np.atleast_2d(np.asarray(pts, dtype=float)) - np.asarray(self.base)
        if self.k:
            rel = rel - (rel @ self.tangent.T) @ self.tangent
        return np.sqrt(np.einsum("ij,ij->i", rel, rel))

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c = np.full(self.d, BALL_CENTER_OFFSET)
        in_ball = np.linalg.norm(pts - c, axis=1) <= 1 + 1e-12
        return (self.distances(pts) <= self.width + 1e-12) & in_ball

    def to_json(self) -> dict:
        return {"basis": [list(r) for r in self.basis],
                "base": list(self.base), "width": self.width}


def plate_mass(nu: DyadicMeasure, P: Plate) -> float:
    """nu-mass of cells whose center lies in the plate (inside the clip ball)."""
    if P.d != nu.d:
        raise ValueError("plate/measure dimension mismatch")
    sel = P.contains_points(nu.centers())
    return float(nu.mass_array()[sel].sum())


def plate_angle(P1: Plate, P2: Plate) -> float:
    """Largest principal angle between the planes of two k-plates."""
    if P1.k != P2.k or P1.d != P2.d:
        raise ValueError("plates must have matching dimensions")
    if P1.k == 0:
        return 0.0
    s = np.linalg.svd(P1.tangent @ P2.tangent.T, compute_uv=False)
    return float(math.acos(min(1.0, max(-1.0, s[-1]))))


def plate_contains(T: Plate, W: Plate) -> bool:
    """Certified sufficient test that W (clipped) lies inside T.

    Bounds sup over x in W of dist(x, plane of T) by the base offset plus the
    in-ball half-length of W times the tangent mismatch plus W's width.
    """
    z = np.full(W.d, BALL_CENTER_OFFSET)
    base_w = np.asarray(W.base, dtype=float)
    # nearest point of W's plane to the ball center, and the in-ball extent
    rel = z - base_w
    if W.k:
        p_star = base_w + (rel @ W.tangent.T) @ W.tangent
    else:
        p_star = base_w
    h = float(np.linalg.norm(z - p_star))
    L = math.sqrt(max(0.0, 1.0 - h * h))
    off = float(T.distances(p_star[None, :])[0])
    if W.k and T.k:
        # spectral norm of the T-normal component of W's tangent frame
        M = W.tangent - (W.tangent @ T.tangent.T) @ T.tangent
        mismatch = float(np.linalg.norm(M, 2))
    elif W.k:
        mismatch = 1.0
    else:
        mismatch = 0.0
    return off + L * mismatch + W.width <= T.width + 1e-12


# ---------------------------------------------------------------------------
# Candidate nets
# ---------------------------------------------------------------------------

def _plate_net_masses(nu: DyadicMeasure, k: int, delta: float
                      ) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Support-anchored net of k-plates of width delta with their nu-masses.

    Returns, per net direction frame, ``(normal_basis, offsets, masses)``
    where ``offsets`` has one row per candidate plate (coordinates of the
    plane in the normal frame, relative to the box center) and ``masses`` the
    plate masses.  Directions step delta/2; offsets step delta/2, covering the
    projections of supp(nu).
    """
    d = nu.d
    codim = d - k
    centers = nu.centers()
    w = nu.mass_array()
    step = delta / 2
    out = []
    if codim == 1:
        normals = _normal_net(d, step)
        if len(normals) > MAX_NET_DIRECTIONS:
            raise ValueError("plate net too large at this delta")
        for n in normals:
            proj = centers @ n
            order = np.argsort(proj, kind="stable")
            ps, ws = proj[order], w[order]
            cs = np.concatenate([[0.0], np.cumsum(ws)])
            lo = math.floor((ps[0] - delta) / step)
            hi = math.ceil((ps[-1] + delta) / step)
            offs = np.arange(lo, hi + 1) * step
            a = np.searchsorted(ps, offs - delta, side="left")
            b = np.searchsorted(ps, offs + delta, side="right")
            out.append((n.reshape(1, d), offs.reshape(-1, 1), cs[b] - cs[a]))
        return out
    if k == 0:
        # 0-plates are balls; anchor on (capped) support centers
        xs = centers
        if len(xs) > MAX_PRECHECK_CENTERS:
            idx = np.unique(np.linspace(0, len(xs) - 1,
                                        MAX_PRECHECK_CENTERS).round().astype(int))
            xs = xs[idx]
        masses = all_ball_masses(nu, xs, [delta])[:, 0]
        out.append((np.eye(d), xs, masses))
        return out
    # general codim >= 2 (e.g. line plates in d = 3): per tangent direction,
    # offsets on a grid over the projected support in the normal plane
    tangents = _normal_net(d, step)
    if len(tangents) > MAX_NET_DIRECTIONS:
        raise ValueError("plate net too large at this delta")
    for t in tangents:
        q, _ = np.linalg.qr(np.concatenate([t.reshape(1, d), np.eye(d)]).T)
        N = q.T[1:d]                                  # codim x d normal frame
        proj = centers @ N.T                          # (n, codim)
        grid = np.unique(np.round(proj / step).astype(np.int64), axis=0)
        offs = grid * step
        d2 = ((proj[None, :, :] - offs[:, None, :]) ** 2).sum(axis=2)
        masses = (w[None, :] * (d2 <= delta * delta)).sum(axis=1)
        out.append((N, offs, masses))
    return out


def _plate_from_normal(N: np.ndarray, off: np.ndarray, width: float, d: int) -> Plate:
    """Plate whose plane is {x : N x = off} (N rows orthonormal)."""
    N = np.atleast_2d(N)
    base = N.T @ np.asarray(off, dtype=float).reshape(len(N))
    if len(N) == d:                                    # 0-plate: base is the point
        basis: tuple = ()
    else:
        q, _ = np.linalg.qr(np.concatenate([N, np.eye(d)]).T)
        basis = tuple(tuple(row) for row in q.T[len(N):d])
    # pull the base point to the nearest plane point to the ball center
    z = np.full(d, BALL_CENTER_OFFSET)
    if basis:
        B = np.asarray(basis)
        base = base + ((z - base) @ B.T) @ B
    return Plate(basis, tuple(base), width)


def check_nu_decay(nu: DyadicMeasure, k: int, delta: float, kappa: float,
                   C_nu: float) -> float:
    """Verify nu(W) <= C_nu * delta^kappa for all (k-1)-plates of width delta
    on the candidate net; returns the worst measured ratio."""
    bound = C_nu * delta ** kappa
    worst = 0.0
    for _N, _offs, masses in _plate_net_masses(nu, k - 1, delta):
        worst = max(worst, float(np.max(masses)) / bound)
    if worst > 1 + 1e-9:
        raise NuDecayFailed(
            f"NuDecayFailed: measured (k-1)-plate mass exceeds C_nu*delta^kappa "
            f"by factor {worst:.3f}")
    return worst


# ---------------------------------------------------------------------------
# Heavy plate structure (greedy + widening)
# ---------------------------------------------------------------------------

def _heavy_structure(nu: DyadicMeasure, delta: float, eta: float, kappa: float,
                     C_nu: float) -> dict:
    d = nu.d
    k = 1 if d == 2 else d - 1   # default plate dimension per ambient dim
    return _heavy_structure_k(nu, k, delta, eta, kappa, C_nu)


def _heavy_structure_k(nu: DyadicMeasure, k: int, delta: float, eta: float,
                       kappa: float, C_nu: float) -> dict:
    if not (0 < delta < 1) or eta <= 0:
        raise ValueError("need 0 < delta < 1 and eta > 0")
    check_nu_decay(nu, k, delta, kappa, C_nu)
    d = nu.d
    centers = nu.centers()
    w = nu.mass_array()
    thr_heavy = delta ** eta
    thr_pair = delta ** (2 * eta) / 2

    # enumerate heavy net plates with their member cells
    heavy: List[dict] = []
    for N, offs, masses in _plate_net_masses(nu, k, delta):
        for i in np.flatnonzero(masses >= thr_heavy - 1e-12):
            P = _plate_from_normal(N, offs[i], delta, d)
            members = P.contains_points(centers)
            heavy.append({"plate": P, "mass": float(w[members].sum()),
                          "members": members})

    # greedy selection: highest-mass first, pairwise intersections capped
    order = sorted(range(len(heavy)), key=lambda i: (-heavy[i]["mass"], i))
    chosen: List[int] = []
    S = 0.0
    for i in order:
        mem = heavy[i]["members"]
        inter = [float(w[mem & heavy[j]["members"]].sum()) for j in chosen]
        if all(v <= thr_pair + 1e-15 for v in inter):
            chosen.append(i)
            S += heavy[i]["mass"]
            M = len(chosen)
            # the L^2 counting inequality that stops the greedy
            assert S * S - S < M * M * thr_pair + 1e-12, \
                "greedy L^2 inequality violated"
            assert M <= 2 / thr_heavy + 1e-9, "greedy family too large"

    # widen each selected plate; adaptively open up to contain every heavy
    # net plate assigned to it (nominal width from the angle bound)
    nominal = min(1.0, NOMINAL_WIDEN_CD * C_nu * delta ** (kappa - 2 * eta))
    widths = [max(nominal, 2 * delta)] * len(chosen)
    assign: List[int] = []
    for i in range(len(heavy)):
        mem = heavy[i]["members"]
        inter = np.array([float(w[mem & heavy[j]["members"]].sum())
                          for j in chosen])
        if len(inter) == 0:
            raise AssertionError("heavy plate with empty selected family")
        j_best = int(np.argmax(inter))
        assert inter[j_best] >= thr_pair - 1e-15, \
            "heavy plate nearly disjoint from every selected plate"
        assign.append(j_best)
    for i, j in enumerate(assign):
        Wp = heavy[i]["plate"]
        Yj = heavy[chosen[j]]["plate"]
        lo, hi = Yj.width, 1.0
        # smallest admissible width via the certified containment bound
        for _ in range(40):
            mid = (lo + hi) / 2
            if plate_contains(Plate(Yj.basis, Yj.base, mid), Wp):
                hi = mid
            else:
                lo = mid
        widths[j] = max(widths[j], min(1.0, hi * (1 + 1e-9)))
    plates = [Plate(heavy[chosen[j]]["plate"].basis,
                    heavy[chosen[j]]["plate"].base, widths[j])
              for j in range(len(chosen))]

    # containment postcondition, re-verified by net enumeration
    for h in heavy:
        if not any(plate_contains(T, h["plate"]) for T in plates):
            raise AssertionError("heavy net plate escapes every widened plate")
    return {"plates": plates, "heavy": heavy,
            "selected": [heavy[i]["plate"] for i in chosen],
            "S": S, "M": len(chosen)}


def heavy_plate_structure(nu: DyadicMeasure, delta: float, eta: float,
                          kappa: float, C_nu: float, k: Optional[int] = None
                          ) -> List[Plate]:
    """Greedy structure family for the heavy delta-plates of nu.

    Repeatedly selects a net k-plate Y of width delta with nu(Y) >= delta^eta
    whose intersections with the already-selected plates all have mass
    <= delta^{2 eta}/2; the selected family has size <= 2 delta^{-eta} (the
    L^2 argument, asserted at every step).  Each selected plate is widened to
    width >= C_d C_nu delta^{kappa - 2 eta} so that every heavy net plate is
    contained in one of the widened plates (verified by enumeration).

    Requires nu(W) <= C_nu delta^kappa for all (k-1)-plates of width delta,
    checked on a net (``NuDecayFailed`` otherwise).
    """
    kk = k if k is not None else (1 if nu.d == 2 else nu.d - 1)
    return _heavy_structure_k(nu, kk, delta, eta, kappa, C_nu)["plates"]


# ---------------------------------------------------------------------------
# Radial pruning
# ---------------------------------------------------------------------------

def measured_plate_decay(nu: DyadicMeasure, k: int,
                         radii: Sequence[float]) -> Tuple[float, float]:
    """Least-squares (kappa, C) with sup-plate-mass(r) <= C r^kappa on a net,
    fitted over the given widths; C is scaled so the bound holds exactly."""
    sups = []
    for r in radii:
        s = 0.0
        for _N, _offs, masses in _plate_net_masses(nu, k, r):
            s = max(s, float(np.max(masses)))
        sups.append(max(s, 1e-300))
    logr = np.log2(np.asarray(radii))
    logs = np.log2(np.asarray(sups))
    if len(radii) >= 2 and np.ptp(logr) > 0:
        A = np.stack([logr, np.ones_like(logr)], axis=1)
        coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
        kappa = max(float(coef[0]), 0.0)
    else:
        kappa = 0.0
    C = max(s / r ** kappa for s, r in zip(sups, radii)) if kappa > 0 else 1.0
    return kappa, float(C)


def radial_prune(mu: DyadicMeasure, nu: DyadicMeasure, delta0: float,
                 eta: float, depth: int, k: int = 1,
                 kappa: Optional[float] = None, C_nu: Optional[float] = None
                 ) -> Tuple[DyadicSet, Dict[tuple, DyadicSet], dict]:
    """Finite-depth radial pruning over the schedule delta_n = delta0^(2^n).

    At each stage the heavy-plate structure of the surviving nu is computed at
    width delta_n; centers of mu lying in a heavy plate form the bad set, and
    centers in two widened plates at angle >= delta_n^eta form the doubly-bad
    set.  If the bad set carries at most half the surviving mu-mass it is
    discarded; otherwise the construction zooms into the heaviest widened
    plate and prunes its delta_n^{eta/2}-neighbourhood from nu.

    Returns the surviving center set L, the map x -> surviving nu-support K,
    and a report with per-stage branches, the nu-mass budget, and the measured
    hyperplane decay of the radial projections e_x(nu_K) for sampled x in L.
    """
    if mu.d != nu.d:
        raise ValueError("mu/nu dimension mismatch")
    if not (0 < delta0 < 1):
        raise ValueError("delta0 must be in (0,1)")
    d = mu.d
    # cap the schedule at the 2^-20 feasibility floor
    N = 0
    for n in range(1, depth + 1):
        if delta0 ** (2 ** n) >= 2.0 ** -20:
            N = n
    stages: List[dict] = []
    flags: List[str] = []
    notes: List[str] = []
    losses: List[float] = []
    E = mu.support()
    K = nu.support()
    sched = [delta0 ** (2 ** n) for n in range(1, N + 1)]
    if kappa is None or C_nu is None:
        radii = sorted(set(sched + [sched[0] ** 0.5])) if sched else [delta0]
        kappa_m, C_m = measured_plate_decay(nu, k - 1, radii)
        kappa = kappa if kappa is not None else kappa_m
        C_nu = C_nu if C_nu is not None else C_m * 1.05
    if kappa < 0.05:
        # no measurable plate decay: the pruning target is the whole support
        flags.append("degenerate: nu shows no (k-1)-plate decay")
        K = DyadicSet(d, nu.m, [])
        N = 0

    mu_w = {tuple(c): float(v) for c, v in mu.masses.items()}
    deltas = []
    for n in range(1, N + 1):
        delta_n = sched[n - 1]
        deltas.append(delta_n)
        stage: dict = {"n": n, "delta": delta_n}
        if len(K) == 0:
            flags.append(f"degenerate: nu-support exhausted before stage {n}")
            break
        # the iteration restricts nu without renormalizing, so the decay
        # constant and the delta^eta mass thresholds keep their meaning
        nu_n = DyadicMeasure(d, nu.m,
                             {c: v for c, v in nu.masses.items()
                              if tuple(c) in K.cells}, normalized=False)
        try:
            st = _heavy_structure_k(nu_n, k, delta_n, eta, kappa, C_nu)
        except (NuDecayFailed, AssertionError) as e:
            stage["error"] = f"stage {n}: {e}"
            stages.append(stage)
            flags.append(stage["error"])
            break
        heavy_plates = [h["plate"] for h in st["heavy"]]
        widened = st["plates"]
        stage["heavy_count"] = len(heavy_plates)
        stage["family_size"] = len(widened)
        if heavy_plates:
            notes.append(f"concentration: {len(heavy_plates)} heavy plates at "
                         f"stage {n}")
        e_pts = np.array(sorted(E.cells), dtype=np.int64)
        e_centers = (e_pts + 0.5) * 2.0 ** (-mu.m)
        if not heavy_plates:
            stage["branch"] = "no-heavy"
            losses.append(0.0)
            stages.append(stage)
            continue
        in_heavy = np.zeros(len(e_pts), dtype=bool)
        for P in heavy_plates:
            in_heavy |= P.contains_points(e_centers)
        # doubly-bad: in two widened plates at angle >= delta^eta
        in_T = np.stack([T.contains_points(e_centers) for T in widened])
        ang_thr = delta_n ** eta
        badbad = np.zeros(len(e_pts), dtype=bool)
        for i in range(len(widened)):
            for j in range(i + 1, len(widened)):
                if plate_angle(widened[i], widened[j]) >= ang_thr:
                    badbad |= in_T[i] & in_T[j]
        masses_e = np.array([mu_w[tuple(c)] for c in e_pts])
        mu_E = float(masses_e.sum())
        mu_bad = float(masses_e[in_heavy].sum())
        stage["mu_E"] = mu_E
        stage["mu_bad"] = mu_bad
        if mu_bad <= mu_E / 2:
            stage["branch"] = "drop-bad"
            keep = ~in_heavy
            E = DyadicSet(d, mu.m, [tuple(c) for c in e_pts[keep]])
            losses.append(0.0)
        else:
            stage["branch"] = "zoom-and-prune"
            good = in_heavy & ~badbad
            # heaviest widened plate on the good set
            gmass = [float(masses_e[good & in_T[i]].sum())
                     for i in range(len(widened))]
            j0 = int(np.argmax(gmass))
            T0 = widened[j0]
            keep = good & in_T[j0]
            if not keep.any():
                flags.append(f"degenerate: stage {n} zoom leaves no centers")
                stages.append(stage)
                break
            E = DyadicSet(d, mu.m, [tuple(c) for c in e_pts[keep]])
            # prune the delta^{eta/2}-plate around T0 from nu
            P0 = Plate(T0.basis, T0.base, min(1.0, delta_n ** (eta / 2)))
            nu_centers = nu.centers()
            nu_cells = nu.cells_array()
            in_K = np.array([tuple(c) in K.cells for c in nu_cells])
            pruned = in_K & P0.contains_points(nu_centers)
            loss = float(nu.mass_array()[pruned].sum())
            losses.append(loss)
            stage["pruned_mass"] = loss
            surv = in_K & ~pruned
            if not surv.any():
                K = DyadicSet(d, nu.m, [])
                flags.append(f"degenerate: stage {n} pruning empties nu-support")
                stages.append(stage)
                break
            K = DyadicSet(d, nu.m, [tuple(c) for c in nu_cells[surv]])
        stages.append(stage)

    nu_K = float(sum(float(v) for c, v in nu.masses.items() if tuple(c) in K.cells))
    report: dict = {"stages": stages, "flags": flags, "notes": notes,
                    "losses": losses, "deltas": deltas, "kappa": kappa,
                    "C_nu": C_nu, "nu_K": nu_K, "depth_used": len(stages)}
    if not flags:
        # finite-depth analogue of the summed pruning budget
        budget = sum(dl ** eta for dl in deltas)
        report["budget"] = budget
        assert nu_K >= 1 - max(budget, 0.5) - 1e-12, \
            "pruned nu-mass exceeds the stage budget"
        assert nu_K >= 0.5 - 1e-12, "surviving nu-mass below 1/2"

    # measured decay of radial projections from sampled surviving centers
    report["decay"] = _radial_decay_report(mu, nu, E, K, deltas)
    L = E
    Kmap: Dict[tuple, DyadicSet] = {tuple(c): K for c in L.cells}
    return L, Kmap, report


def _radial_decay_report(mu: DyadicMeasure, nu: DyadicMeasure, E: DyadicSet,
                         K: DyadicSet, deltas: Sequence[float]) -> dict:
    if len(E) == 0 or len(K) == 0 or not deltas:
        return {"samples": [], "note": "no surviving centers or empty schedule"}
    r_hi = deltas[0]
    r_lo = math.sqrt(deltas[-1])
    r_list = sorted({2.0 ** -i for i in range(1, 24)
                     if r_lo <= 2.0 ** -i <= r_hi}, reverse=True)
    if len(r_list) < 2:
        # widen to the finest stage width so the exponent fit has a range
        r_list = sorted({2.0 ** -i for i in range(1, 24)
                         if deltas[-1] <= 2.0 ** -i <= r_hi}, reverse=True)
    if not r_list:
        r_list = [r_hi]
    if len(r_list) == 1:
        # a one-point fit has no exponent; add the half width below
        r_list = [r_list[0], r_list[0] / 2]
    try:
        nu_K = restrict_normalize(nu, K)
    except ZeroMassSet:
        return {"samples": [], "note": "nu vanishes on K"}
    xs = E.centers()
    idx = np.unique(np.linspace(0, len(xs) - 1, min(8, len(xs))).round().astype(int))
    samples = []
    for i in idx:
        x = xs[i]
        rel = nu_K.centers() - x
        norms = np.linalg.norm(rel, axis=1)
        ok = norms > 1e-12
        if not ok.any():
            continue
        ws = nu_K.mass_array()[ok]
        rho = SphereMeasure(rel[ok] / norms[ok, None], ws / ws.sum())
        rep = hyperplane_nonconcentration(rho, r_list)
        samples.append({"x": [float(v) for v in x], "r": rep["r"],
                        "sup": rep["sup"], "kappa_fit": rep["kappa_fit"]})
    return {"samples": samples, "r_list": r_list}
