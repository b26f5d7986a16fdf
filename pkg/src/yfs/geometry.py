"""Scalar curvature of the conformally flat metric ``g = u^(4/(N+2)) dx^2``.

With ``m = (N-2)/(N+2)`` the curvature is
``R = -(4(N-1)/(N-2)) u^-1 Lap(u^m)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .io import write_csv


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    """Scalar curvature sampled at interior grid radii."""

    r: np.ndarray
    R: np.ndarray
    N: int
    t: Optional[float] = None

    @property
    def min(self) -> float:
        return float(np.min(self.R))

    @property
    def max(self) -> float:
        return float(np.max(self.R))

    @property
    def sign_pattern(self) -> str:
        """Signs of consecutive runs, e.g. ``"+"`` or ``"+-"``; zeros count as ``0``."""
        s = np.sign(self.R).astype(int)
        sym = {1: "+", -1: "-", 0: "0"}
        out = []
        for v in s:
            c = sym[int(v)]
            if not out or out[-1] != c:
                out.append(c)
        return "".join(out)

    @property
    def relative_variation(self) -> float:
        """``(max - min) / |mean|``."""
        return float((self.max - self.min) / abs(np.mean(self.R)))

    def summary(self) -> dict:
        return {"min": self.min, "max": self.max, "sign_pattern": self.sign_pattern,
                "relative_variation": self.relative_variation}

    def write_csv(self, path, header=()):
        return write_csv(path, {"r": self.r, "R": self.R}, header)


def _radial_laplacian(r, w, N):
    """Three-point Laplacian of a radial function in ``s = log r``.

    ``Lap w = r^-2 (w_ss + (N-2) w_s)``; exact second order on any
    spacing in ``s``. Returns values at ``r[1:-1]``.
    """
    s = np.log(r)
    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    wm, w0, wp = w[:-2], w[1:-1], w[2:]
    ws = (hm**2 * wp - hp**2 * wm + (hp**2 - hm**2) * w0) / (hm * hp * (hm + hp))
    wss = 2 * (hm * wp - (hm + hp) * w0 + hp * wm) / (hm * hp * (hm + hp))
    return (wss + (N - 2) * ws) / r[1:-1] ** 2


def scalar_curvature(obj, r=None, N: Optional[int] = None, window: Optional[tuple] = None,
                     t: Optional[float] = None) -> CurvatureReport:
    """Scalar curvature of ``u^(4/(N+2)) dx^2`` by centered differences.

    Parameters
    ----------
    obj : RadialField, RadialProfile, callable or array
        A field (its grid and values are used), a profile (evaluated on its
        own grid unless ``r`` is given), a callable ``u(r)`` or an array of
        values on ``r``.
    r : array_like, optional
        Radii, required for callables and arrays.
    N : int, optional
        Dimension, required unless ``obj`` carries it.
    window : (float, float), optional
        Restrict to ``window[0] <= r <= window[1]``.

    Returns
    -------
    CurvatureReport
        Values at every sampled radius except the two ends; the origin is
        never used.
    """
    u, rr, dim, tt = _sample(obj, r, N)
    if t is not None:
        tt = t
    keep = rr > 0
    if window is not None:
        keep &= (rr >= window[0]) & (rr <= window[1])
    rr, u = rr[keep], u[keep]
    if rr.size < 3:
        raise DomainError("need at least three positive radii")
    if np.any(np.diff(rr) <= 0):
        raise DomainError("radii must be strictly increasing")
    if not np.all(u > 0) or not np.all(np.isfinite(u)):
        raise DomainError("curvature needs strictly positive finite values")
    m = (dim - 2) / (dim + 2)
    lap = _radial_laplacian(rr, u**m, dim)
    R = -(4 * (dim - 1) / (dim - 2)) * lap / u[1:-1]
    return CurvatureReport(r=rr[1:-1], R=R, N=dim, t=tt)


def _sample(obj, r, N):
    # RadialField
    if hasattr(obj, "grid") and hasattr(obj, "values") and hasattr(obj, "t"):
        if r is not None:
            raise DomainError("a field is sampled on its own grid")
        return np.asarray(obj.values, float), np.asarray(obj.r, float), obj.N, obj.t
    # RadialProfile
    if hasattr(obj, "params") and hasattr(obj, "kind"):
        dim = obj.params.N
        rr = np.asarray(obj.grid if r is None else r, dtype=float)
        return np.asarray(obj(rr), float), rr, dim, None
    if N is None or r is None:
        raise DomainError("callables and arrays need both r and N")
    rr = np.asarray(r, dtype=float)
    u = np.asarray(obj(rr) if callable(obj) else obj, dtype=float)
    if u.shape != rr.shape:
        raise DomainError("values and radii differ in shape")
    return u, rr, int(N), None


def cylinder_curvature(N: int, T: float, t: float) -> float:
    """Curvature ``(N-1)/(T-t)`` of the cylindrical solution.

    Examples
    --------
    >>> cylinder_curvature(3, 1.0, 0.0)
    2.0
    """
    if N < 3:
        raise DomainError("dimension must be ≥ 3")
    if not t < T:
        raise DomainError("cylinder curvature needs t < T")
    return (N - 1) / (T - t)
