"""Smooth map handles: the maps whose images and linearizations are analyzed.

A ``SmoothMap`` bundles a vectorized evaluator R^d -> R^k with an exact
Jacobian evaluator.  Registered kinds:

- ``proj:theta`` — linear projection x -> <theta, x> (or onto a k-plane);
- ``dist:y``     — pinned distance x -> |x - y|;
- ``radial:y``   — direction map from the pin y in the affine chart
                   x -> ((x_i - y_i)/(x_d - y_d))_{i<d}  (rank d-1);
- ``custom``     — user-supplied callables.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


class SingularPoint(ValueError):
    """DF(x) is rank-deficient at a support point; message holds the location."""


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip sign so the first nonzero coordinate is positive."""
    for c in v:
        if abs(c) > 1e-12:
            return v if c > 0 else -v
    return v


def unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise SingularPoint("SingularPoint: zero gradient")
    return v / n


@dataclass
class SmoothMap:
    name: str
    d: int
    k: int
    func: Callable[[np.ndarray], np.ndarray]   # (n,d) -> (n,k)
    jac: Callable[[np.ndarray], np.ndarray]    # (d,) -> (k,d)
    is_linear: bool = False

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = self.func(pts)
        return out.reshape(len(pts), self.k)

    def row_space(self, x: Sequence[float]) -> np.ndarray:
        """Orthonormal basis (k rows) of V(x) = ker(DF(x))^perp = row space."""
        J = np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float)
        u, s, vt = np.linalg.svd(J.reshape(self.k, self.d), full_matrices=False)
        if s[-1] < 1e-9:
            raise SingularPoint(f"SingularPoint: rank-deficient Jacobian at {list(x)}")
        return vt[: self.k]

    def gradient_direction(self, x: Sequence[float]) -> np.ndarray:
        """dir(grad F(x)) for rank-1 maps, canonical sign not applied."""
        if self.k != 1:
            raise ValueError("gradient direction requires k = 1")
        return unit(np.asarray(self.jac(np.asarray(x, dtype=float))).reshape(self.d))


def make_map(name: str, d: int, theta: Optional[Sequence[float]] = None,
             y: Optional[Sequence[float]] = None,
             func: Optional[Callable] = None, jac: Optional[Callable] = None,
             k: Optional[int] = None) -> SmoothMap:
    if name == "proj":
        th = unit(theta)
        if len(th) != d:
            raise ValueError("theta dimension mismatch")
        return SmoothMap("proj", d, 1, lambda p: p @ th, lambda x: th.reshape(1, d),
                         is_linear=True)
    if name == "dist":
        yy = np.asarray(y, dtype=float)

        def f(p):
            return np.linalg.norm(p - yy, axis=1)

        def g(x):
            v = np.asarray(x, dtype=float) - yy
            n = np.linalg.norm(v)
            if n < 1e-12:
                raise SingularPoint(f"SingularPoint: pin coincides with {list(x)}")
            return (v / n).reshape(1, d)

        return SmoothMap("dist", d, 1, f, g)
    if name == "radial":
        yy = np.asarray(y, dtype=float)

        def f(p):
            rel = p - yy
            den = rel[:, d - 1]
            if np.any(np.abs(den) < 1e-12):
                raise SingularPoint("SingularPoint: chart denominator vanishes")
            return rel[:, : d - 1] / den[:, None]

        def g(x):
            rel = np.asarray(x, dtype=float) - yy
            den = rel[d - 1]
            if abs(den) < 1e-12:
                raise SingularPoint(f"SingularPoint: chart denominator vanishes at {list(x)}")
            J = np.zeros((d - 1, d))
            for i in range(d - 1):
                J[i, i] = 1.0 / den
                J[i, d - 1] = -rel[i] / den ** 2
            return J

        return SmoothMap("radial", d, d - 1, f, g)
    if name == "custom":
        if func is None or jac is None or k is None:
            raise ValueError("custom map needs func, jac and k")
        return SmoothMap("custom", d, k, func, jac)
    raise ValueError(f"unknown map kind {name!r}")
