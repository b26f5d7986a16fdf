"""Self-similar profiles and their tail asymptotics.

Shrinker profiles solve

    (1/m) Lap(f^m) + beta y.grad f + alpha f = 0,

so that ``U(x, t) = (T-t)^alpha f(x (T-t)^beta)`` solves the evolution. Expander
profiles come from the forward ansatz ``(t-T)^alpha h(x (t-T)^beta)``; putting
it into ``u_t = (1/m) Lap(u^m)`` flips the sign of both drift terms:

    (1/m) Lap(h^m) - beta y.grad h - alpha h = 0.

Integration is done in ``s = log r``. Shrinkers use the cylindrical variable
``v = C*^(-m/n) r^((N-2)/2) f^m``, for which the cylinder is ``v = 1`` and

    v'' + beta (N-2) v^(p-1) v' + abar (v^p - v) = 0.

Expanders use ``(log h, X)`` with ``X = r h'/h``, integrated backwards from
the critical point C where ``h ~ D r^-(N+2)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline

from .errors import (
    DomainError,
    NotApplicable,
    OrbitError,
    OscillatoryRegime,
    ShootingFailure,
    WindowError,
)
from .model import ModelParams, Regime, SimilarityParams, similarity_params

DEFAULT_POINTS = 4096
DEFAULT_SMAX = 12.0
SOLVER_TOL = 1e-6


class ProfileKind(enum.Enum):
    CYLINDER = "Cylinder"
    BARENBLATT = "Barenblatt"
    SMOOTH = "Smooth"
    SINGULAR = "Singular"
    EXPANDER = "Expander"


TAIL_KINDS = (
    ProfileKind.CYLINDER,
    ProfileKind.BARENBLATT,
    ProfileKind.SMOOTH,
    ProfileKind.SINGULAR,
)


@dataclass(frozen=True)
class PowerLaw:
    """Two-term asymptotic model ``A r^-P (1 + e r^Q)``."""

    A: float
    P: float
    e: float = 0.0
    Q: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self.A * r ** (-self.P) * (1 + self.e * r**self.Q)

    def scaled(self, lam: float, n: float) -> "PowerLaw":
        # lam^(2/n) F(lam r)
        return PowerLaw(self.A * lam ** (2 / n - self.P), self.P, self.e * lam**self.Q, self.Q)


@dataclass(frozen=True)
class TailFit:
    """Least-squares fit of ``log|dev| = log bHat - gammaHat s``.

    ``sign`` is the sign of the deviation ``r^(2/n) f C*^(-1/n) - 1``.
    """

    gammaHat: float
    bHat: float
    window: tuple
    residual: float
    sign: int

    def to_dict(self) -> dict:
        return dict(gammaHat=self.gammaHat, bHat=self.bHat, window=list(self.window),
                    residual=self.residual, sign=self.sign)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A profile sampled on a log-spaced grid.

    Calling the profile evaluates it anywhere in ``r >= 0``: closed forms are
    evaluated exactly, sampled profiles by a cubic spline of ``log f`` in
    ``log r`` and by their asymptotic models outside the grid.

    Attributes
    ----------
    amp : construction amplitude (``lambda`` for Barenblatt, ``f(0)`` for
        Smooth, ``K`` for Singular and Expander, unused for Cylinder).
    s_ref : log of the profile's length scale.
    s_span : log-radius span beyond ``s_ref`` used for tail fits.
    """

    kind: ProfileKind
    params: SimilarityParams
    grid: np.ndarray
    values: np.ndarray
    amp: float = 1.0
    s_ref: float = 0.0
    s_span: float = DEFAULT_SMAX
    origin_value: Optional[float] = None
    originAmplitude: Optional[float] = None
    farAmplitude: Optional[float] = None
    tailFit: Optional[TailFit] = None
    tol: float = SOLVER_TOL
    left: Optional[PowerLaw] = field(default=None, repr=False)
    right: Optional[PowerLaw] = field(default=None, repr=False)
    exact: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("grid", "values"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.grid) <= 0) or self.grid[0] <= 0:
            raise ValueError("grid must be positive and strictly increasing")
        if not np.all(self.values > 0):
            raise ValueError("profile values must be positive")
        object.__setattr__(
            self, "_spline", CubicSpline(np.log(self.grid), np.log(self.values))
        )

    @property
    def N(self) -> int:
        return self.params.model.N

    @property
    def s(self) -> np.ndarray:
        return np.log(self.grid)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.exact is not None:
            return self.exact(r)
        out = np.empty(r.shape)
        lo, hi = self.grid[0], self.grid[-1]
        inside = (r >= lo) & (r <= hi)
        below, above = r < lo, r > hi
        with np.errstate(divide="ignore"):
            out[inside] = np.exp(self._spline(np.log(r[inside])))
        out[below] = self.left(r[below]) if self.left is not None else np.nan
        out[above] = self.right(r[above]) if self.right is not None else np.nan
        return out


# ---------------------------------------------------------------- helpers


def _sp_for(mp: ModelParams, beta: Optional[float]) -> SimilarityParams:
    return similarity_params(mp, mp.p / 2 if beta is None else beta)


def _log_grid(s_lo: float, s_hi: float, num: int) -> np.ndarray:
    return np.exp(np.linspace(s_lo, s_hi, num))


def tail_exponent(sp: SimilarityParams) -> float:
    """Decay rate in log-radius of the leading tail correction."""
    if sp.regime is Regime.FAST_BARENBLATT:
        return 2.0
    if sp.gamma1 is None:
        raise NotApplicable("no real tail exponent for beta < beta0")
    return sp.gamma1


def default_tail_span(sp: SimilarityParams) -> float:
    """Log-radius span needed to resolve the leading tail mode.

    The next-order corrections decay like ``exp(-gap*s)`` relative to the
    leading mode, with ``gap = min(gamma1, gamma2 - gamma1)``; the span is
    stretched until they are negligible but capped where the deviation itself
    drops to about ``exp(-20)``.
    """
    if sp.regime is Regime.FAST_BARENBLATT:
        return DEFAULT_SMAX
    g1, g2 = sp.gamma1, sp.gamma2
    gap = min(g1, g2 - g1) if g2 > g1 else g1
    return min(max(DEFAULT_SMAX, DEFAULT_SMAX / gap), 20.0 / g1)


def _cylinder_amp(mp: ModelParams) -> float:
    return mp.cStar ** (1 / mp.n)


# ---------------------------------------------------------- closed forms


def cylinder_profile(mp: ModelParams, beta: Optional[float] = None,
                     num: int = DEFAULT_POINTS, r_lo: float = 1e-3,
                     r_hi: float = 1e3) -> RadialProfile:
    """Sample ``f = (C*/r^2)^(1/n)``, a static profile for every beta."""
    sp = _sp_for(mp, beta)
    r = _log_grid(math.log(r_lo), math.log(r_hi), num)
    c, q = mp.cStar, 1 / mp.n

    def exact(x):
        with np.errstate(divide="ignore"):
            return (c / np.asarray(x, dtype=float) ** 2) ** q

    return RadialProfile(
        ProfileKind.CYLINDER, sp, r, exact(r), s_ref=0.0, exact=exact,
        left=PowerLaw(c**q, 2 / mp.n), right=PowerLaw(c**q, 2 / mp.n),
    )


def barenblatt_profile(mp: ModelParams, lam: float = 1.0,
                       num: int = DEFAULT_POINTS, s_below: float = 8.0,
                       s_span: float = DEFAULT_SMAX) -> RadialProfile:
    """Sample ``f = (C*/(lam^2 + r^2))^(1/n)`` at ``beta = 1/(2m)``."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    sp = similarity_params(mp, mp.p / 2)
    c, q = mp.cStar, 1 / mp.n
    s_ref = math.log(lam)
    r = _log_grid(s_ref - s_below, s_ref + s_span, num)

    def exact(x):
        return (c / (lam**2 + np.asarray(x, dtype=float) ** 2)) ** q

    prof = RadialProfile(
        ProfileKind.BARENBLATT, sp, r, exact(r), amp=lam, s_ref=s_ref,
        s_span=s_span, origin_value=(c / lam**2) ** q, exact=exact, tol=1e-8,
    )
    return replace(prof, tailFit=fit_tail(prof))


# ------------------------------------------------------- shrinker ODE


def _z_rhs(sp: SimilarityParams):
    # z = log v: z'' = -beta(N-2) v^(p-1) z' - abar (v^(p-1) - 1) - z'^2
    mp = sp.model
    b = sp.beta * (mp.N - 2)
    ab, q = mp.alphaBar, mp.p - 1

    def rhs(s, y):
        z, zs = y
        e = math.exp(q * z)
        return [zs, -b * e * zs - ab * (e - 1) - zs * zs]

    def jac(s, y):
        z, zs = y
        e = math.exp(q * z)
        return [[0.0, 1.0], [-q * e * (b * zs + ab), -b * e - 2 * zs]]

    return rhs, jac


def _v_to_f(mp: ModelParams, s, v):
    # f^m = C*^(m/n) r^-(N-2)/2 v
    return mp.cStar ** (1 / mp.n) * np.exp(-2 * s / mp.n) * np.abs(v) ** mp.p


def _z_to_f(mp: ModelParams, s, z):
    return mp.cStar ** (1 / mp.n) * np.exp(mp.p * z - 2 * s / mp.n)


def _f_to_v(mp: ModelParams, s, f):
    return mp.cStar ** (-mp.m / mp.n) * np.exp(0.5 * (mp.N - 2) * s) * f**mp.m


def _integrate_z(sp, s0, s1, y0, method, rtol, atol, kind):
    rhs, jac = _z_rhs(sp)
    z_floor = y0[0] - 60.0

    def hit_zero(s, y):
        return y[0] - z_floor
    hit_zero.terminal = True
    hit_zero.direction = -1

    def blow_up(s, y):
        return y[0] - math.log(1e6)
    blow_up.terminal = True
    blow_up.direction = 1

    kw = dict(jac=jac) if method != "DOP853" else {}
    sol = solve_ivp(rhs, (s0, s1), y0, method=method, rtol=rtol, atol=atol,
                    dense_output=True, events=(hit_zero, blow_up), **kw)
    if sol.status != 0 or sol.t[-1] < s1:
        diag = dict(kind=kind, beta=sp.beta, N=sp.model.N, s_stop=float(sol.t[-1]),
                    log_v_stop=float(sol.y[0, -1]), message=sol.message)
        if sol.t_events[0].size:
            diag["reason"] = "profile reached zero"
        elif sol.t_events[1].size:
            diag["reason"] = "profile blew up"
        raise ShootingFailure(f"{kind} profile integration stopped at s={sol.t[-1]:.4g}", diag)
    return sol


def solve_smooth_profile(sp: SimilarityParams, f0: float = 1.0,
                         num: int = DEFAULT_POINTS, rtol: float = 1e-12,
                         atol: float = 1e-15, s_span: Optional[float] = None,
                         s_below: float = 8.0) -> RadialProfile:
    """Integrate the regular shrinker with ``f(0) = f0``.

    Starts from ``f = f0 + a r^2`` at ``r0 = 1e-6 L`` where
    ``L = sqrt(C*) f0^(-n/2)`` is the core size (``L = lambda`` for Barenblatt).
    """
    mp = sp.model
    if sp.gamma1 is None:
        raise OscillatoryRegime(f"beta={sp.beta} < beta0={sp.beta0}: no monotone smooth profile")
    if not f0 > 0:
        raise DomainError("f0 must be positive")
    span = default_tail_span(sp) if s_span is None else s_span
    s_ref = math.log(math.sqrt(mp.cStar) * f0 ** (-mp.n / 2))
    a2 = -sp.alpha * f0 ** (1 - mp.m) / (2 * mp.N)  # f = f0 (1 + a2 r^2)
    s0 = s_ref + math.log(1e-6)
    r0 = math.exp(s0)
    f_start = f0 * (1 + a2 * r0**2)
    X0 = 2 * a2 * r0**2 / (1 + a2 * r0**2)
    z0 = math.log(float(_f_to_v(mp, s0, f_start)))
    y0 = [z0, 0.5 * (mp.N - 2) + mp.m * X0]
    s_end = s_ref + span + 2.0
    sol = _integrate_z(sp, s0, s_end, y0, "DOP853", rtol, atol, "Smooth")
    if abs(mp.p * sol.y[0, -1]) > 1e-3:
        raise ShootingFailure("smooth profile did not reach the cylindrical tail",
                              dict(log_v_end=float(sol.y[0, -1]), s_end=s_end))
    s = np.linspace(s_ref - s_below, s_ref + span, num)
    f = _z_to_f(mp, s, sol.sol(s)[0])
    prof = RadialProfile(
        ProfileKind.SMOOTH, sp, np.exp(s), f, amp=f0, s_ref=s_ref, s_span=span,
        origin_value=f0, left=PowerLaw(f0, 0.0, a2, 2.0),
    )
    return _attach_tail(prof)


def _singular_origin_coeff(sp: SimilarityParams, K: float, sign: float = 1.0) -> float:
    # g = K r^-theta (1 + c r^(1/beta)); sign=-1 for the expander
    mp = sp.model
    th = sp.theta
    return sign * th * (mp.N - 2 - th * mp.m) * K ** (mp.m - 1)


def _crossing_scale(mp: ModelParams, sp: SimilarityParams, K: float) -> float:
    # radius where K r^-theta meets the cylinder
    return mp.n * sp.beta * math.log(K * mp.cStar ** (-1 / mp.n))


def solve_singular_profile(sp: SimilarityParams, K: float = 1.0,
                           num: int = DEFAULT_POINTS, delta: float = 1e-8,
                           rtol: float = 1e-11, atol: float = 1e-14,
                           s_span: Optional[float] = None) -> RadialProfile:
    """Integrate the shrinker with ``g ~ K r^-theta`` at the origin.

    The start point lies on the unstable manifold of ``X = -theta`` at offset
    ``delta``. The equation for ``v`` is stiff near the origin, so an implicit
    Radau method is used.
    """
    mp = sp.model
    if sp.beta < sp.beta1 and not math.isclose(sp.beta, sp.beta1, rel_tol=1e-10):
        raise DomainError(f"singular profiles need beta >= beta1={sp.beta1}")
    if math.isclose(sp.beta, sp.beta1, rel_tol=1e-10):
        warnings.warn("singular profile at beta == beta1 is experimental", stacklevel=2)
    if not K > 0:
        raise DomainError("K must be positive")
    th, sig = sp.theta, 1 / sp.beta
    span = default_tail_span(sp) if s_span is None else s_span
    c = _singular_origin_coeff(sp, K)
    s_ref = _crossing_scale(mp, sp, K)
    s0 = sp.beta * math.log(delta / abs(c))
    r0 = math.exp(s0)
    g0 = K * r0 ** (-th) * (1 + c * r0**sig)
    X0 = -th + c * sig * r0**sig / (1 + c * r0**sig)
    z0 = math.log(float(_f_to_v(mp, s0, g0)))
    y0 = [z0, 0.5 * (mp.N - 2) + mp.m * X0]
    s_end = s_ref + span + 2.0
    try:
        sol = _integrate_z(sp, s0, s_end, y0, "Radau", rtol, atol, "Singular")
    except ShootingFailure as exc:
        raise OrbitError(f"singular orbit does not reach D: {exc}") from exc
    v_end = math.exp(sol.y[0, -1])
    if abs(v_end - 1) > 1e-3:
        end = "C" if v_end < 1 else "Escaped"
        raise OrbitError(f"singular orbit ends near {end}, not D (v={v_end:.4g})")
    # sample from where the origin expansion is accurate to 1e-12
    s_lo = max(s0, sp.beta * math.log(1e-6 / abs(c)))
    s = np.linspace(s_lo, s_ref + span, num)
    g = _z_to_f(mp, s, sol.sol(s)[0])
    prof = RadialProfile(
        ProfileKind.SINGULAR, sp, np.exp(s), g, amp=K, s_ref=s_ref, s_span=span,
        originAmplitude=K, left=PowerLaw(K, th, c, sig),
    )
    return _attach_tail(prof)


def _attach_tail(prof: RadialProfile) -> RadialProfile:
    tf = fit_tail(prof)
    mp = prof.params.model
    right = PowerLaw(_cylinder_amp(mp), 2 / mp.n, tf.sign * tf.bHat, -tf.gammaHat)
    return replace(prof, tailFit=tf, right=right)


# -------------------------------------------------------------- expander


def _expander_unit(sp: SimilarityParams, Y0=1e-10, Y_stop=1e12, rtol=1e-11, atol=1e-13):
    """Expander with far-field amplitude D = 1, integrated backwards in s."""
    mp = sp.model
    N, m, n = mp.N, mp.m, mp.n
    al, be = sp.alpha, sp.beta

    def rhs(s, y):
        L, X = y
        Y = math.exp(2 * s + n * L)
        return [X, (2 - N) * X - m * X * X + (al + be * X) * Y]

    def jac(s, y):
        L, X = y
        Y = math.exp(2 * s + n * L)
        return [[0.0, 1.0], [(al + be * X) * Y * n, (2 - N) - 2 * m * X + be * Y]]

    def origin(s, y):
        return 2 * s + n * y[0] - math.log(Y_stop)
    origin.terminal = True

    cC = (be * (N + 2) - al) / N  # X = -(N+2) + cC Y on the slow manifold
    s1 = -0.5 * math.log(Y0)
    X0 = -(N + 2) + cC * Y0
    L0 = -(N + 2) * s1 - 0.5 * cC * Y0
    sol = solve_ivp(rhs, (s1, s1 - 400.0), [L0, X0], method="Radau", jac=jac,
                    rtol=rtol, atol=atol, dense_output=True, events=origin)
    if sol.status != 1:
        raise ShootingFailure("expander orbit did not reach the origin regime",
                              dict(s_stop=float(sol.t[-1]), message=sol.message))
    return sol, s1, cC


def solve_expander_profile(sp: SimilarityParams, K: float = 1.0,
                           num: int = DEFAULT_POINTS) -> RadialProfile:
    """Expander profile with ``h ~ K r^-theta`` at the origin.

    Forward integration from the origin is unstable, so the orbit is traced
    backwards from the critical point C, where ``h ~ D r^-(N+2)``, and then
    moved along the scaling family ``lam^(2/n) h(lam r)`` to match ``K``.
    """
    mp = sp.model
    if sp.beta < sp.beta1 and not math.isclose(sp.beta, sp.beta1, rel_tol=1e-10):
        raise DomainError(f"expander profiles need beta >= beta1={sp.beta1}")
    if not K > 0:
        raise DomainError("K must be positive")
    th, sig, n = sp.theta, 1 / sp.beta, mp.n
    sol, s1, cC = _expander_unit(sp)
    s_stop = sol.t[-1]
    L_stop = sol.y[0, -1]
    # K of the unit-D orbit, corrected for the next origin term
    K1 = math.exp(th * s_stop + L_stop)
    for _ in range(3):
        c1 = _singular_origin_coeff(sp, K1, sign=-1.0)
        K1 = math.exp(th * s_stop + L_stop) / (1 + c1 * math.exp(sig * s_stop))
    lam = (K / K1) ** (-n * sp.beta)  # K_lam = lam^(-1/(n beta)) K1
    c = _singular_origin_coeff(sp, K, sign=-1.0)
    s_lo_unit = max(s_stop, sp.beta * math.log(1e-6 / abs(_singular_origin_coeff(sp, K1, -1.0))))
    s_hi_unit = s1 - 1.0
    su = np.linspace(s_lo_unit, s_hi_unit, num)
    hu = np.exp(sol.sol(su)[0])
    D = lam ** (2 / n - (mp.N + 2))
    # far field: h = D r^-(N+2) (1 - cC/2 Y), Y = D^n r^-2
    right = PowerLaw(D, mp.N + 2, -0.5 * cC * D**n, -2.0)
    prof = RadialProfile(
        ProfileKind.EXPANDER, sp, np.exp(su) / lam, lam ** (2 / n) * hu, amp=K,
        s_ref=_crossing_scale(mp, sp, K), originAmplitude=K, farAmplitude=D,
        left=PowerLaw(K, th, c, sig), right=right,
    )
    return prof


# ------------------------------------------------------------- scaling


def rescaled(prof: RadialProfile, lam: float) -> RadialProfile:
    """Member ``lam^(2/n) f(lam r)`` of the scaling family through ``prof``."""
    if not lam > 0:
        raise DomainError("lambda must be positive")
    mp = prof.params.model
    if prof.kind is ProfileKind.CYLINDER:
        return prof
    if prof.kind is ProfileKind.BARENBLATT:
        return barenblatt_profile(mp, prof.amp / lam, num=prof.grid.size, s_span=prof.s_span)
    n, P = mp.n, 2 / mp.n
    fac = lam ** (2 / n)
    kw = {}
    if prof.tailFit is not None:
        tf = prof.tailFit
        sh = math.log(lam)
        kw["tailFit"] = replace(tf, bHat=tf.bHat * lam ** (-tf.gammaHat),
                                window=(tf.window[0] - sh, tf.window[1] - sh))
    amp = prof.amp
    if prof.kind is ProfileKind.SMOOTH:
        amp = prof.amp * fac
        kw["origin_value"] = amp
    elif prof.originAmplitude is not None:
        amp = prof.originAmplitude * lam ** (P - prof.params.theta)
        kw["originAmplitude"] = amp
    if prof.farAmplitude is not None:
        kw["farAmplitude"] = prof.farAmplitude * lam ** (P - (mp.N + 2))
    return replace(
        prof, grid=prof.grid / lam, values=prof.values * fac, amp=amp,
        s_ref=prof.s_ref - math.log(lam),
        left=prof.left.scaled(lam, n) if prof.left is not None else None,
        right=prof.right.scaled(lam, n) if prof.right is not None else None,
        **kw,
    )


def with_tail_amplitude(prof: RadialProfile, B: float) -> RadialProfile:
    """Rescale ``prof`` so that its fitted tail coefficient becomes ``B``.

    Uses ``B_lam = B lam^-gamma`` with the exact exponent of the regime.
    """
    if prof.tailFit is None:
        raise NotApplicable(f"{prof.kind.value} profile has no fitted tail")
    if not B > 0:
        raise DomainError("tail amplitude must be positive")
    g = tail_exponent(prof.params)
    return rescaled(prof, (prof.tailFit.bHat / B) ** (1 / g))


# ---------------------------------------------------------- diagnostics


def _tail_deviation(prof: RadialProfile, r):
    mp = prof.params.model
    return r ** (2 / mp.n) * prof(r) * mp.cStar ** (-1 / mp.n) - 1


def fit_tail(prof: RadialProfile, window: Optional[tuple] = None) -> TailFit:
    """Fit ``|r^(2/n) f / C*^(1/n) - 1| ~ bHat r^-gammaHat``.

    The default window is ``[0.55, 0.9] * s_span`` past the length scale,
    in log-radius. If the deviation changes sign there, the window is
    shrunk once to ``[0.7, 0.9] * s_span``.
    """
    if prof.kind not in TAIL_KINDS or prof.kind is ProfileKind.CYLINDER:
        raise NotApplicable(f"{prof.kind.value} profile has no tail deviation to fit")
    s_all = prof.s
    if window is None:
        windows = [(prof.s_ref + 0.55 * prof.s_span, prof.s_ref + 0.9 * prof.s_span),
                   (prof.s_ref + 0.7 * prof.s_span, prof.s_ref + 0.9 * prof.s_span)]
    else:
        windows = [tuple(window)]
    for lo, hi in windows:
        sel = (s_all >= lo) & (s_all <= hi)
        s = s_all[sel]
        if s.size < 3:
            raise WindowError(f"fit window [{lo:.3g}, {hi:.3g}] holds fewer than 3 samples")
        dev = prof.values[sel] * np.exp(2 * s / prof.params.model.n)
        dev = dev * prof.params.model.cStar ** (-1 / prof.params.model.n) - 1
        sgn = np.sign(dev)
        if np.all(sgn == sgn[0]) and sgn[0] != 0:
            break
    else:
        raise WindowError("tail deviation changes sign inside the fit window")
    coef, res, *_ = np.polyfit(s, np.log(np.abs(dev)), 1, full=True)
    resid = math.sqrt(float(res[0]) / s.size) if res.size else 0.0
    return TailFit(gammaHat=-float(coef[0]), bHat=float(np.exp(coef[1])),
                   window=(float(lo), float(hi)), residual=resid, sign=int(sgn[0]))


_D1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / 60.0
_D2 = np.array([2, -27, 270, -490, 270, -27, 2]) / 180.0


def _stencil(y, coef, h, order, k=1):
    # centered stencil with spacing k*h, evaluated at points k*3 .. n-1-k*3
    half = len(coef) // 2
    size = y.size - 2 * half * k
    out = np.zeros(size)
    for j, c in enumerate(coef):
        out += c * y[j * k: j * k + size]
    return out / (k * h) ** order


def ode_residual(prof: RadialProfile, spacing: float = 0.02,
                 core_cut: float = 0.1) -> float:
    """Max relative residual of the stationary profile equation.

    Derivatives in ``s = log r`` use sixth-order centered differences on the
    uniform log grid, with a stencil stride chosen so that the stencil
    spacing is close to ``spacing`` (fine grids otherwise amplify rounding
    errors by ``1/h^2``). Each point is normalized by its largest term, the
    terms being ``F_rr/m``, ``(N-1) F_r/(m r)``, ``beta r f'`` and
    ``alpha f`` with ``F = f^m``.

    Near a regular origin ``f^m`` is flat to order ``r^2`` and the Laplacian
    cancels catastrophically in floating point, so points with
    ``r < core_cut * L`` are skipped for Smooth and Barenblatt profiles.
    """
    mp, sp = prof.params.model, prof.params
    s = prof.s
    h = np.diff(s)
    if np.ptp(h) > 1e-9 * abs(h.mean()) + 1e-12:
        raise ValueError("ode_residual needs a uniform log-spaced grid")
    h = float(h.mean())
    k = max(1, min(int(round(spacing / h)), (s.size - 1) // 6))
    if s.size < 6 * k + 1:
        raise ValueError("ode_residual needs at least 7 grid points")
    # derivatives of l = log f: exact for pure powers, so the cylinder and
    # power-law ends carry no truncation error
    ell = np.log(prof.values)
    off = 3 * k
    sc = s[off: s.size - off]
    f = prof.values[off: s.size - off]
    l1 = _stencil(ell, _D1, h, 1, k)
    l2 = _stencil(ell, _D2, h, 2, k)
    # (1/m) F_rr and (1/m)(N-1) F_r / r with F = f^m, written through l
    pre = np.exp(-2 * sc) * f**mp.m
    ta = pre * (l2 + mp.m * l1**2 - l1)
    tb = pre * (mp.N - 1) * l1
    sign = -1.0 if prof.kind is ProfileKind.EXPANDER else 1.0
    tc = sign * sp.beta * f * l1
    td = sign * sp.alpha * f
    terms = np.abs(np.vstack([ta, tb, tc, td]))
    res = np.abs(ta + tb + tc + td) / terms.max(axis=0)
    if prof.kind in (ProfileKind.SMOOTH, ProfileKind.BARENBLATT):
        res = res[sc >= prof.s_ref + math.log(core_cut)]
    return float(np.max(res))


# ---------------------------------------------------------- phase plane


@dataclass(frozen=True, eq=False)
class PhaseOrbit:
    """Orbit ``(s, X, Y)`` with ``X = r f'/f`` and ``Y = r^2 f^(1-m)``."""

    s: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    endpoint: str
    start: str
    params: SimilarityParams

    def critical_points(self) -> dict:
        return critical_points(self.params.model)


def critical_points(mp: ModelParams) -> dict:
    """Critical points E, C, D of the phase system.

    With the diffusion coefficient 1/m the cylinder sits at D.
    """
    return {"E": (0.0, 0.0), "C": (-(mp.N + 2.0), 0.0), "D": (-2 / mp.n, mp.cStar)}


def _classify_point(mp: ModelParams, X: float, Y: float, rtol: float = 0.05) -> str:
    for name, (xc, yc) in critical_points(mp).items():
        if abs(X - xc) <= rtol * max(1.0, abs(xc)) and abs(Y - yc) <= rtol * max(1.0, abs(yc)):
            return name
    return "Escaped"


def phase_rhs(sp: SimilarityParams, X, Y, expander: bool = False):
    """Right-hand side of the autonomous phase system."""
    mp = sp.model
    sgn = -1.0 if expander else 1.0
    dX = (2 - mp.N) * X - mp.m * X**2 - sgn * (sp.alpha + sp.beta * X) * Y
    dY = (2 + mp.n * X) * Y
    return dX, dY


def to_phase_orbit(prof: RadialProfile) -> PhaseOrbit:
    """Map a sampled profile to the phase plane by finite differences."""
    if prof.grid.size < 3:
        raise ValueError("need at least 3 grid points")
    mp = prof.params.model
    s = prof.s
    X = np.gradient(np.log(prof.values), s, edge_order=2)
    Y = prof.grid**2 * prof.values ** mp.n
    end = _classify_point(mp, X[-1], Y[-1])
    start = _classify_point(mp, X[0], Y[0])
    if start == "Escaped" and abs(X[0] + prof.params.theta) <= 0.05 * prof.params.theta:
        start = "Origin"
    return PhaseOrbit(s=s, X=X, Y=Y, endpoint=end, start=start, params=prof.params)


# ------------------------------------------------------ cylindrical view


@dataclass(frozen=True, eq=False)
class CylindricalDeviation:
    """Samples ``(s, w)`` with ``w = C*^(-m/n) e^(2ms/n) f^m - 1``."""

    s: np.ndarray
    w: np.ndarray
    kind: ProfileKind
    params: SimilarityParams
    s_ref: float
    s_span: float


def to_cylindrical_deviation(prof: RadialProfile) -> CylindricalDeviation:
    if prof.kind not in TAIL_KINDS:
        raise NotApplicable(f"{prof.kind.value} profile has no cylindrical tail")
    mp = prof.params.model
    s = prof.s
    w = _f_to_v(mp, s, prof.values) - 1
    if prof.kind is ProfileKind.CYLINDER:
        w = np.zeros_like(s)
    return CylindricalDeviation(s=s, w=w, kind=prof.kind, params=prof.params,
                                s_ref=prof.s_ref, s_span=prof.s_span)


@dataclass(frozen=True)
class SlowModeCheck:
    """Comparison of the fitted w-amplitude with ``-CN A1 I1``."""

    I1: float
    predicted: float
    fitted: float
    mismatch: float
    degenerate: bool = False


def slow_mode_integral(dev: CylindricalDeviation, gamma1: float, p: float) -> float:
    """``I1 = int exp(gamma1 t) phi(w(t)) dt`` over the whole line.

    Simpson's rule on the samples plus closed-form end pieces: on the left
    ``1 + w`` is a pure exponential (regular origin), on the right ``phi`` is
    quadratic in a decaying exponential.
    """
    s, w = dev.s, dev.w
    phi = (1 + w) ** p - 1 - p * w
    core = simpson(np.exp(gamma1 * s) * phi, x=s)
    v0, v1 = 1 + w[0], 1 + w[1]
    k = math.log(v1 / v0) / (s[1] - s[0])
    e0 = math.exp(gamma1 * s[0])
    left = e0 * ((p - 1) / gamma1 - p * v0 / (gamma1 + k) + v0**p / (gamma1 + p * k))
    wr = w[-1]
    gr = -(math.log(abs(w[-1] / w[-2])) / (s[-1] - s[-2])) if w[-2] != 0 else gamma1
    right = 0.5 * p * (p - 1) * wr**2 * math.exp(gamma1 * s[-1]) / (2 * gr - gamma1)
    return float(core + left + right)


def verify_slow_mode_amplitude(dev: CylindricalDeviation,
                               sp: Optional[SimilarityParams] = None) -> SlowModeCheck:
    """Check ``w(s) ~ -CN A1 I1 exp(-gamma1 s)`` for a smooth profile.

    The fitted amplitude uses the exact exponent ``gamma1`` over the default
    tail window. Returns the relative mismatch between the two amplitudes.
    """
    sp = dev.params if sp is None else sp
    if sp.regime is Regime.FAST_BARENBLATT or (sp.A1 is not None and sp.A1 == 0):
        raise NotApplicable("A1 = 0 at beta = beta1: no slow mode")
    if sp.CN is None:
        raise NotApplicable("slow-mode identity needs beta > beta0")
    if dev.kind is ProfileKind.CYLINDER or np.all(np.abs(dev.w) < 1e-14):
        return SlowModeCheck(I1=0.0, predicted=0.0, fitted=0.0, mismatch=float("nan"),
                             degenerate=True)
    if dev.kind is not ProfileKind.SMOOTH:
        raise NotApplicable("slow-mode identity is checked on smooth profiles")
    g1 = sp.gamma1
    I1 = slow_mode_integral(dev, g1, sp.model.p)
    predicted = -sp.CN * sp.A1 * I1
    lo = dev.s_ref + 0.55 * dev.s_span
    hi = dev.s_ref + 0.9 * dev.s_span
    sel = (dev.s >= lo) & (dev.s <= hi)
    w = dev.w[sel]
    if not (np.all(w > 0) or np.all(w < 0)):
        raise WindowError("w changes sign inside the amplitude window")
    fitted = float(np.sign(w[0]) * np.exp(np.mean(np.log(np.abs(w)) + g1 * dev.s[sel])))
    return SlowModeCheck(I1=I1, predicted=float(predicted), fitted=fitted,
                         mismatch=abs(fitted - predicted) / abs(predicted))


# -------------------------------------------------------- local powers


def local_power(prof: RadialProfile, r) -> np.ndarray:
    """``-d log f / d log r`` evaluated through the profile interpolant."""
    r = np.asarray(r, dtype=float)
    h = 1e-4
    return -(np.log(prof(r * math.exp(h))) - np.log(prof(r * math.exp(-h)))) / (2 * h)


# ----------------------------------------------------------------- I/O


def profile_header(prof: RadialProfile) -> str:
    return f"kind,N,beta,amp\n# {prof.kind.value},{prof.N},{prof.params.beta!r},{prof.amp!r}"


def profile_diagnostics(prof: RadialProfile) -> dict:
    tf = prof.tailFit
    out = dict(
        kind=prof.kind.value,
        N=prof.N,
        beta=prof.params.beta,
        amp=prof.amp,
        gammaHat=tf.gammaHat if tf else None,
        bHat=tf.bHat if tf else None,
        tailSign=tf.sign if tf else None,
        residual=ode_residual(prof),
        endpoint=to_phase_orbit(prof).endpoint,
    )
    if prof.originAmplitude is not None:
        out["originAmplitude"] = prof.originAmplitude
    if prof.farAmplitude is not None:
        out["farAmplitude"] = prof.farAmplitude
    return out


def write_profile_csv(prof: RadialProfile, path) -> None:
    from .io import write_csv

    write_csv(path, {"r": prof.grid, "f": prof.values}, header=profile_header(prof).split("\n# "))


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Return ``(r, f, meta)`` from a profile CSV."""
    from .io import read_csv

    cols, header = read_csv(path)
    keys = header[0].split(",")
    vals = header[1].split(",")
    meta = dict(zip(keys, vals))
    meta["N"] = int(meta["N"])
    meta["beta"] = float(meta["beta"])
    meta["amp"] = float(meta["amp"])
    return cols["r"], cols["f"], meta
