"""Projections, sigma-energies, and the computable sides of the projection
regimes: the energy inequality behind Kaufman-type bounds, the L^2 inequality
behind Falconer-type bounds, the combined robust-exponent table, mass level
sets, hyperplane non-concentration of sphere measures, direction/k-plane
fields of smooth maps, and the plate distance between complementary planes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .dyadic import DyadicMeasure, DyadicSet
from .maps import SmoothMap, canonical_sign, make_map, unit


class RhoDecayFailed(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    theta: tuple

    def __post_init__(self):
        v = np.asarray(self.theta, dtype=float)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.theta, dtype=float)

    @staticmethod
    def from_vector(v: Sequence[float]) -> "Direction":
        return Direction(tuple(canonical_sign(unit(v))))


@dataclass(frozen=True)
class KPlane:
    basis: tuple   # k rows, each a d-tuple, orthonormal

    def __post_init__(self):
        B = self.matrix
        if np.max(np.abs(B @ B.T - np.eye(len(B)))) > 1e-9:
            raise ValueError("basis must be orthonormal")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.basis, dtype=float)

    @property
    def k(self) -> int:
        return len(self.basis)

    @property
    def d(self) -> int:
        return len(self.basis[0])

    @staticmethod
    def from_rows(rows: np.ndarray) -> "KPlane":
        q, _ = np.linalg.qr(np.asarray(rows, dtype=float).T)
        return KPlane(tuple(tuple(col) for col in q.T))

    def complement(self) -> "KPlane":
        B = self.matrix
        d = B.shape[1]
        q, _ = np.linalg.qr(np.concatenate([B, np.eye(d)]).T)
        return KPlane(tuple(tuple(col) for col in q.T[self.k:d]))


@dataclass
class SphereMeasure:
    thetas: np.ndarray    # (n, d) unit vectors
    weights: np.ndarray   # (n,) non-negative, sum 1

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if np.max(np.abs(np.linalg.norm(self.thetas, axis=1) - 1)) > 1e-9:
            raise ValueError("sphere points must be unit vectors")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1) > 1e-9:
            raise ValueError("weights must be a probability vector")

    @staticmethod
    def uniform_circle(n: int) -> "SphereMeasure":
        ang = (np.arange(n) + 0.5) * (2 * np.pi / n)
        return SphereMeasure(np.stack([np.cos(ang), np.sin(ang)], axis=1),
                             np.full(n, 1.0 / n))

    def to_json(self) -> dict:
        return {"thetas": self.thetas.tolist(), "weights": self.weights.tolist()}

    @staticmethod
    def from_json(obj) -> "SphereMeasure":
        return SphereMeasure(np.array(obj["thetas"]), np.array(obj["weights"]))


# ---------------------------------------------------------------------------
# Projection and energy
# ---------------------------------------------------------------------------

def _basis_of(V) -> np.ndarray:
    if isinstance(V, Direction):
        return V.vector.reshape(1, -1)
    if isinstance(V, KPlane):
        return V.matrix
    arr = np.atleast_2d(np.asarray(V, dtype=float))
    return arr


def project(mu: DyadicMeasure, V, out_level: int) -> DyadicMeasure:
    """Pushforward of mu by orthogonal projection onto V, binned on the
    level-out_level dyadic grid of the range box [-sqrt(d), sqrt(d))^k."""
    B = _basis_of(V)
    R = math.sqrt(mu.d)
    pts = (mu.centers() @ B.T + R) / (2 * R)            # into [0,1)^k
    idx = np.clip(np.floor(pts * 2 ** out_level).astype(np.int64),
                  0, 2 ** out_level - 1)
    masses: Dict[tuple, float] = {}
    for row, w in zip(map(tuple, idx), mu.mass_array()):
        masses[row] = masses.get(row, 0.0) + float(w)
    return DyadicMeasure(B.shape[0], out_level, masses)


class EnergyResult(NamedTuple):
    total: float
    offdiag: float
    self_term: float


def _energy_points(points: np.ndarray, weights: np.ndarray, sigma: float,
                   floor: float) -> EnergyResult:
    pts = np.atleast_2d(points)
    if pts.shape[0] == 1 and pts.shape[1] > 1 and points.ndim == 1:
        pts = points.reshape(-1, 1)
    w = np.asarray(weights, dtype=float)
    n = len(w)
    self_term = float(np.sum(w * w) * floor ** (-sigma))
    off = 0.0
    block = max(1, int(2e7) // max(n, 1))
    for i0 in range(0, n, block):
        chunk = pts[i0:i0 + block]
        diff = chunk[:, None, :] - pts[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.maximum(dist, floor, out=dist)
        kern = dist ** (-sigma)
        ww = w[i0:i0 + block, None] * w[None, :]
        off += float(np.sum(ww * kern))
        # remove the diagonal contribution counted in this chunk
        idx = np.arange(i0, min(i0 + block, n))
        off -= float(np.sum(w[idx] ** 2 * floor ** (-sigma)))
    return EnergyResult(off + self_term, off, self_term)


def energy(mu: DyadicMeasure, sigma: float) -> EnergyResult:
    """sigma-energy of the cell-center atomization, all pairwise distances
    floored at 2^{-m}; the diagonal (self-pair) term is reported separately."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return _energy_points(mu.centers(), mu.mass_array(), sigma, 2.0 ** (-mu.m))


def projected_energy(mu: DyadicMeasure, theta: Sequence[float], sigma: float
                     ) -> EnergyResult:
    """sigma-energy of P_theta mu, computed on exact projected points with the
    same 2^{-m} distance floor (no binning)."""
    th = unit(theta)
    vals = (mu.centers() @ th).reshape(-1, 1)
    return _energy_points(vals, mu.mass_array(), sigma, 2.0 ** (-mu.m))


# ---------------------------------------------------------------------------
# Kaufman / Falconer checks
# ---------------------------------------------------------------------------

def kaufman_check(mu: DyadicMeasure, rho: SphereMeasure, sigma: float,
                  kappa: float, C: float, tol: float = 1e-9) -> dict:
    """Average projected sigma-energy vs (1 + C*sigma/(kappa-sigma)) * E_sigma(mu).

    Both sides use off-diagonal energies (the floored self-pairs are an
    artifact of atomization and are reported separately).  rho must satisfy
    the hyperplane decay sup_H rho(H^(r)) <= C r^kappa, verified over a net.
    """
    if not (0 < sigma < kappa <= 1):
        raise ValueError("need 0 < sigma < kappa <= 1")
    decay = hyperplane_nonconcentration(rho, [2.0 ** (-i) for i in range(1, 7)])
    worst = max(s / (r ** kappa) for r, s in zip(decay["r"], decay["sup"]))
    if worst > C * (1 + 0.15):
        raise RhoDecayFailed(
            f"RhoDecayFailed: measured sup/r^kappa = {worst:.3f} > C = {C}")
    lhs = float(sum(w * projected_energy(mu, th, sigma).offdiag
                    for th, w in zip(rho.thetas, rho.weights)))
    rhs = (1 + C * sigma / (kappa - sigma)) * energy(mu, sigma).offdiag
    return {"lhs": lhs, "rhs": rhs, "pass": lhs <= rhs * (1 + tol)}


def falconer_l2_check(mu: DyadicMeasure, rho: SphereMeasure, kappa: float) -> dict:
    """Average discrete L^2 norm of projected densities vs E_{d-kappa}(mu)."""
    m, d = mu.m, mu.d
    lhs = 0.0
    for th, w in zip(rho.thetas, rho.weights):
        vals = mu.centers() @ unit(th)
        idx = np.floor(vals * 2 ** m).astype(np.int64)
        hist: Dict[int, float] = {}
        for i, mass in zip(idx, mu.mass_array()):
            hist[int(i)] = hist.get(int(i), 0.0) + float(mass)
        lhs += w * (2.0 ** m) * sum(v * v for v in hist.values())
    rhs = energy(mu, d - kappa).total
    return {"lhs": float(lhs), "rhs_scale": rhs, "ratio": float(lhs) / rhs}


def gamma_exponent(alpha: float, kappa: float, delta: float,
                   eta: float = 0.0, d: int = 2, k: int = 1) -> float:
    """Robust-exponent table for projections onto k-planes."""
    if not (0 < kappa < 1) or not (0 <= alpha <= d):
        raise ValueError("parameters out of range")
    if alpha < kappa / 2:
        return alpha - 6 * delta
    if alpha > d - kappa / 2:
        return k - 6 * delta
    return k * alpha / d + eta


# ---------------------------------------------------------------------------
# Level sets and hyperplane non-concentration
# ---------------------------------------------------------------------------

def level_set_decomposition(mu: DyadicMeasure, m: int,
                            delta: Optional[float] = None) -> dict:
    """Partition the level-m support into mass classes
    X_j = {Q : 2^{-j-1} < mu(Q) <= 2^{-j}}; with delta given, J keeps the
    classes of mass >= 2^{-2 delta m} and Z collects the rest
    (mu(Z) <= 3dm 2^{-2 delta m} is checked)."""
    classes: Dict[int, List[tuple]] = {}
    for cell, v in mu.level_masses(m).items():
        j = max(math.ceil(-math.log2(float(v)) - 1e-12) - 1, 0)
        classes.setdefault(j, []).append(cell)
    out = {j: DyadicSet(mu.d, m, cells) for j, cells in sorted(classes.items())}
    result = {"classes": out}
    if delta is not None:
        lm = mu.level_masses(m)
        masses = {j: float(sum(lm[c] for c in ds.cells)) for j, ds in out.items()}
        J = sorted(j for j, v in masses.items() if v >= 2.0 ** (-2 * delta * m))
        z_mass = float(sum(v for j, v in masses.items() if j not in J))
        bound = 3 * mu.d * m * 2.0 ** (-2 * delta * m)
        result.update({"J": J, "class_masses": masses, "Z_mass": z_mass,
                       "Z_bound": bound, "Z_ok": z_mass <= bound + 1e-12})
    return result


def _normal_net(d: int, step: float) -> np.ndarray:
    """Net of unit normals at angular resolution ~step (linear hyperplanes)."""
    if d == 2:
        n = max(8, int(math.ceil(math.pi / step)))
        ang = np.arange(n) * (math.pi / n)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci hemisphere net for d = 3
    if d == 3:
        n = max(32, int(math.ceil(8.0 / step ** 2)))
        i = np.arange(n) + 0.5
        phi = math.pi * (1 + math.sqrt(5)) * i
        z = i / n                       # hemisphere
        r = np.sqrt(1 - z ** 2)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("normal nets implemented for d in {2, 3}")


def hyperplane_nonconcentration(rho: SphereMeasure, r_list: Sequence[float]) -> dict:
    """For each r, the maximum rho-mass within distance r of a hyperplane
    through the origin, maximized over a normal net at resolution r/4; the
    true sup is sandwiched between the net value and the net value at 2r.
    A log-log least-squares fit of the sup gives the empirical kappa."""
    sups, sups2 = [], []
    for r in r_list:
        if not (0 < r <= 1):
            raise ValueError("r must be in (0,1]")
        normals = _normal_net(rho.thetas.shape[1], r / 4)
        dots = np.abs(rho.thetas @ normals.T)     # (n_pts, n_normals)
        sups.append(float(np.max(rho.weights @ (dots <= r))))
        sups2.append(float(np.max(rho.weights @ (dots <= 2 * r))))
    logs = np.log2(np.asarray(sups))
    logr = np.log2(np.asarray(r_list))
    if len(r_list) >= 2 and np.ptp(logr) > 0:
        A = np.stack([logr, np.ones_like(logr)], axis=1)
        coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
        kappa_fit = float(coef[0])
    else:
        kappa_fit = float("nan")
    return {"r": list(r_list), "sup": sups, "sup_2r": sups2, "kappa_fit": kappa_fit}


# ---------------------------------------------------------------------------
# Direction fields and plate distance
# ---------------------------------------------------------------------------

def direction_field(map_name: str, params: dict, x: Sequence[float],
                    d: Optional[int] = None) -> Direction:
    """theta_x = dir(grad F(x)) for a rank-1 registered map."""
    d = d if d is not None else len(x)
    F = make_map(map_name, d, **params)
    return Direction.from_vector(F.gradient_direction(x))


def kplane_field(map_name: str, params: dict, x: Sequence[float],
                 d: Optional[int] = None) -> KPlane:
    """V(x) = ker(DF(x))^perp for a registered map."""
    d = d if d is not None else len(x)
    F = make_map(map_name, d, **params)
    return KPlane(tuple(tuple(row) for row in F.row_space(x)))


def plate_distance(V: KPlane, W: KPlane) -> float:
    """d(V, W) = |det(P_{W^perp}|_V)| for dim V = k, dim W = d - k."""
    if V.k + W.k != V.d or V.d != W.d:
        raise ValueError("planes must have complementary dimensions")
    Wp = W.complement().matrix          # k x d
    M = Wp @ V.matrix.T                 # k x k
    return abs(float(np.linalg.det(M)))
