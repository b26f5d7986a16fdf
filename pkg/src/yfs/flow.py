"""Radial evolution of ``u_t = (1/m) Lap(u^m)`` and convergence diagnostics.

Space is discretized by a vertex-centred finite-volume scheme on a fixed
log-spaced grid, in the variable ``w = u^m``. Each node ``r_i`` owns the shell
between the geometric means of its neighbours (the shell of the origin node
ends at ``r_1/2``), so interior fluxes telescope and the scheme conserves
mass up to boundary fluxes. Time stepping is backward Euler (one step) or
variable-step BDF2 (in :func:`evolve`), both solved by damped Newton
iteration on a tridiagonal system.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.optimize import curve_fit

from .errors import ConstructionError, DomainError, Inconclusive, StepError
from .model import ModelParams, SimilarityParams, derive_exponents

log = logging.getLogger(__name__)


# ----------------------------------------------------------------- grid


class RadialGrid:
    """Nodes, control volumes and face conductances for dimension ``N``."""

    def __init__(self, r, N: int):
        r = np.asarray(r, dtype=float)
        if r.ndim != 1 or r.size < 3 or np.any(np.diff(r) <= 0) or r[0] < 0:
            raise DomainError("grid must be nonnegative, strictly increasing, >= 3 nodes")
        self.r = r
        self.r.setflags(write=False)
        self.N = int(N)
        self.mp = derive_exponents(self.N)
        mid = np.sqrt(r[1:] * r[:-1])
        if r[0] == 0.0:
            mid[0] = 0.5 * r[1]
        faces = np.concatenate(([r[0]], mid, [r[-1]]))
        self.faces = faces
        self.volumes = (faces[1:] ** N - faces[:-1] ** N) / N
        # flux (1/m) r^(N-1) dw/dr across each interior face
        self.conductance = mid ** (N - 1) / np.diff(r) / self.mp.m

    @property
    def size(self) -> int:
        return self.r.size

    def __repr__(self):
        return f"RadialGrid(N={self.N}, r=[{self.r[0]:.3g}..{self.r[-1]:.3g}], size={self.size})"


def make_grid(N: int, r_in: float, r_max: float, points: int,
              r_first: float = 1e-3) -> RadialGrid:
    """Log-spaced grid on ``[r_in, r_max]``.

    With ``r_in = 0`` the origin is prepended to a log grid starting at
    ``r_first``.
    """
    if r_max <= max(r_in, 0.0):
        raise DomainError("r_max must exceed r_in")
    if r_in == 0:
        r = np.concatenate(([0.0], np.geomspace(r_first, r_max, points - 1)))
    else:
        r = np.geomspace(r_in, r_max, points)
    return RadialGrid(r, N)


# ------------------------------------------------------------ closures


class BoundaryKind(enum.Enum):
    EXACT_TRACE = "ExactTrace"
    CYLINDER_TAIL = "CylinderTail"
    NEUMANN = "Neumann"
    HARMONIC = "Harmonic"


@dataclass(frozen=True)
class BoundaryClosure:
    """Boundary condition at one end of the grid.

    ``ExactTrace`` and ``CylinderTail`` prescribe the node value through
    ``solution(r, t)``; ``Neumann`` imposes zero flux; ``Harmonic`` imposes
    ``d(u^m)/dr = -(N-2) u^m / r``, the outgoing condition for a far field
    ``u^m ~ r^-(N-2)``. A closure with ``switch_time`` hands over to
    ``after`` for steps ending after that time.
    """

    kind: BoundaryKind
    solution: Optional[Callable] = field(default=None, repr=False, compare=False)
    label: str = ""
    switch_time: Optional[float] = None
    after: Optional["BoundaryClosure"] = None

    def at(self, t: float) -> "BoundaryClosure":
        if self.switch_time is not None and t > self.switch_time:
            return self.after.at(t)
        return self

    @property
    def is_dirichlet(self) -> bool:
        return self.kind in (BoundaryKind.EXACT_TRACE, BoundaryKind.CYLINDER_TAIL)

    def value(self, r: float, t: float) -> float:
        return float(self.solution(np.array([r]), t)[0])

    def describe(self) -> str:
        text = self.kind.value + (f"({self.label})" if self.label else "")
        if self.switch_time is not None:
            text += f" until t={self.switch_time:g}, then {self.after.describe()}"
        return text


def neumann() -> BoundaryClosure:
    return BoundaryClosure(BoundaryKind.NEUMANN)


def harmonic() -> BoundaryClosure:
    return BoundaryClosure(BoundaryKind.HARMONIC)


def exact_trace(solution: Callable, label: str = "") -> BoundaryClosure:
    """Dirichlet data from an exact solution ``solution(r, t)``."""
    return BoundaryClosure(BoundaryKind.EXACT_TRACE, solution=solution, label=label)


def cylinder_tail(mp: ModelParams, T: float, B: float = 0.0, gamma: float = 2.0,
                  sign: int = -1) -> BoundaryClosure:
    """Dirichlet data ``(C*(T-t)/r^2)^(1/n) (1 + sign B r^-gamma)``."""
    def sol(r, t):
        r = np.asarray(r, dtype=float)
        base = (mp.cStar * max(T - t, 0.0) / r**2) ** (1 / mp.n)
        return base * (1 + sign * B * r ** (-gamma))
    return BoundaryClosure(BoundaryKind.CYLINDER_TAIL, solution=sol,
                           label=f"T={T:g},B={B:g},gamma={gamma:g},sign={sign:+d}")


def switched(before: BoundaryClosure, after: BoundaryClosure, t_switch: float) -> BoundaryClosure:
    return replace(before, switch_time=t_switch, after=after)


# ---------------------------------------------------------------- state


@dataclass(frozen=True, eq=False)
class RadialField:
    """Radial state ``u(r, t)`` with its boundary closures."""

    grid: RadialGrid
    values: np.ndarray
    t: float
    inner: BoundaryClosure
    outer: BoundaryClosure

    def __post_init__(self):
        u = np.array(self.values, dtype=float)
        if u.shape != self.grid.r.shape:
            raise ValueError("values must match the grid")
        if np.any(u < 0) or not np.all(np.isfinite(u)):
            raise ValueError("field values must be finite and nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "values", u)

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    @property
    def N(self) -> int:
        return self.grid.N

    def with_values(self, values, t: float) -> "RadialField":
        return replace(self, values=values, t=t)

    def sup(self) -> float:
        return float(self.values.max())


# ---------------------------------------------------------------- solver


def _solve_implicit(grid: RadialGrid, ustar, dt_eff, w0, inner, outer, t_new,
                    tol=1e-12, maxit=50):
    """Solve ``V (w^p - ustar)/dt_eff = div(flux(w))`` for ``w`` by Newton.

    ``p > 1``, so the Jacobian ``p w^(p-1)`` is bounded and needs no floor.
    Convergence is tested node by node in relative terms, which keeps far
    tails many decades below the peak accurate.
    """
    mp = grid.mp
    p, N = mp.p, grid.N
    V, k = grid.volumes, grid.conductance
    r = grid.r
    n = grid.size
    w = np.array(w0, dtype=float)
    lo, hi = 0, n
    if inner.is_dirichlet:
        w[0] = inner.value(r[0], t_new) ** mp.m
        lo = 1
    if outer.is_dirichlet:
        w[-1] = outer.value(r[-1], t_new) ** mp.m
        hi = n - 1
    # Robin coefficients for the harmonic closure, outward flux = h * w
    h_in = (N - 2) * r[0] ** (N - 2) / mp.m if inner.kind is BoundaryKind.HARMONIC else 0.0
    h_out = (N - 2) * r[-1] ** (N - 2) / mp.m if outer.kind is BoundaryKind.HARMONIC else 0.0
    sl = slice(lo, hi)
    for it in range(1, maxit + 1):
        flux = k * (w[1:] - w[:-1])
        div = np.zeros(n)
        div[:-1] += flux
        div[1:] -= flux
        div[-1] -= h_out * w[-1]
        div[0] -= h_in * w[0]
        wp = np.maximum(w, 0.0)
        R = V * (wp**p - ustar) / dt_eff - div
        diag = V * p * wp ** (p - 1) / dt_eff
        diag[:-1] += k
        diag[1:] += k
        diag[-1] += h_out
        diag[0] += h_in
        ab = np.zeros((3, n))
        ab[0, 1:] = -k
        ab[1] = diag
        ab[2, :-1] = -k
        dw = solve_banded((1, 1), ab[:, sl], -R[sl])
        ws = w[sl]
        neg = ws + dw < 0
        lam = 1.0
        if neg.any():
            lam = min(1.0, 0.9 * float(np.min(ws[neg] / -dw[neg])))
        w[sl] = ws + lam * dw
        if lam == 1.0 and np.all(np.abs(dw) <= tol * np.abs(w[sl]) + 1e-300):
            return np.maximum(w, 0.0) ** p, it
    raise StepError(f"Newton did not converge in {maxit} iterations (t={t_new:.6g})")


def step(field: RadialField, dt: float, previous: Optional[tuple] = None,
         tol: float = 1e-12, maxit: int = 50) -> RadialField:
    """Advance ``field`` by ``dt``.

    Without ``previous`` this is one backward-Euler step. With
    ``previous = (u_prev, dt_prev)`` it is a variable-step BDF2 step, written
    as a backward-Euler solve with effective step ``dt/a0`` and shifted data.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    u = field.values
    t_new = field.t + dt
    inner, outer = field.inner.at(t_new), field.outer.at(t_new)
    if previous is None:
        ustar, dt_eff = u, dt
    else:
        u_prev, dt_prev = previous
        om = dt / dt_prev
        a0 = (1 + 2 * om) / (1 + om)
        a1 = -(1 + om)
        a2 = om * om / (1 + om)
        ustar = -(a1 * u + a2 * np.asarray(u_prev)) / a0
        dt_eff = dt / a0
    w0 = u ** field.grid.mp.m
    u_new, _ = _solve_implicit(field.grid, ustar, dt_eff, w0, inner, outer, t_new,
                               tol=tol, maxit=maxit)
    return field.with_values(u_new, t_new)


@dataclass
class StepController:
    """Time-step policy for :func:`evolve`.

    ``dt = clip(frac * |T_hat - t|, dt_min, dt_max)`` when ``T_hat`` is set,
    never stepping across ``T_hat`` or a snapshot time. For BDF2 the step
    may grow by at most ``growth`` per step.
    """

    dt_max: float = 1e-2
    frac: float = 0.01
    T_hat: Optional[float] = None
    dt_min: float = 1e-8
    snapshot_times: Sequence[float] = ()
    scheme: str = "bdf2"
    stop_sup: float = 1e-10
    growth: float = 2.0
    tol: float = 1e-12
    dt_floor: float = 1e-15

    def proposal(self, t: float) -> float:
        dt = self.dt_max
        if self.T_hat is not None:
            dt = min(dt, max(self.frac * abs(self.T_hat - t), self.dt_min))
        return dt


@dataclass
class EvolutionRun:
    """Snapshots of an evolution plus its sup-norm history."""

    snapshots: list
    times: np.ndarray
    sups: np.ndarray
    steps: int
    rejected: int
    stopped_on_sup: bool = False

    def __iter__(self):
        return iter(self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, i):
        return self.snapshots[i]

    @property
    def final(self) -> RadialField:
        return self.snapshots[-1]

    def at(self, t: float) -> RadialField:
        best = min(self.snapshots, key=lambda f: abs(f.t - t))
        if abs(best.t - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return best


def evolve(field: RadialField, until: float, controller: Optional[StepController] = None,
           callback: Optional[Callable] = None) -> EvolutionRun:
    """Integrate to ``until`` and return snapshots at the requested times.

    The initial field is the first snapshot and the final state the last.
    Failed Newton solves are retried with half the step; a
    :class:`StepError` propagates once the step drops below ``dt_floor``.
    """
    ctl = controller or StepController()
    if ctl.scheme not in ("be", "bdf2"):
        raise DomainError("scheme must be 'be' or 'bdf2'")
    targets = sorted(t for t in ctl.snapshot_times if field.t < t < until)
    targets.append(until)
    stops = list(targets)
    if ctl.T_hat is not None and field.t < ctl.T_hat < until:
        stops.append(ctl.T_hat)
    stops = sorted(set(stops))
    snaps = [field]
    times, sups = [field.t], [field.sup()]
    cur, prev = field, None
    nsteps = rejected = 0
    dt_last = None
    stopped = False
    while cur.t < until - 1e-14 * max(1.0, abs(until)):
        dt = ctl.proposal(cur.t)
        if ctl.scheme == "bdf2" and dt_last is not None:
            dt = min(dt, ctl.growth * dt_last)
        nxt = next(s for s in stops if s > cur.t + 1e-15 * max(1.0, abs(s)))
        if cur.t + dt >= nxt - 1e-12 * dt or cur.t + 1.5 * dt > nxt:
            dt = nxt - cur.t if cur.t + dt >= nxt - 1e-12 * dt else 0.5 * (nxt - cur.t)
        while True:
            try:
                use_prev = prev if (ctl.scheme == "bdf2" and prev is not None) else None
                new = step(cur, dt, previous=use_prev, tol=ctl.tol)
                break
            except StepError:
                rejected += 1
                prev = None
                dt *= 0.5
                if dt < ctl.dt_floor:
                    raise
        prev = (cur.values, dt)
        cur = new
        dt_last = dt
        nsteps += 1
        times.append(cur.t)
        sups.append(cur.sup())
        if callback is not None:
            callback(cur)
        if any(abs(cur.t - s) <= 1e-12 * max(1.0, abs(s)) for s in targets):
            snaps.append(cur)
        if cur.sup() < ctl.stop_sup:
            stopped = True
            if snaps[-1] is not cur:
                snaps.append(cur)
            break
    log.debug("evolve: %d steps, %d rejected", nsteps, rejected)
    return EvolutionRun(snapshots=snaps, times=np.array(times), sups=np.array(sups),
                        steps=nsteps, rejected=rejected, stopped_on_sup=stopped)


# ------------------------------------------------------------ distances


def _values_and_grid(a, b):
    if isinstance(a, RadialField):
        r, N = a.r, a.N
        av = a.values
    else:
        raise TypeError("first argument must be a RadialField")
    bv = b.values if isinstance(b, RadialField) else np.asarray(b, dtype=float)
    if isinstance(b, RadialField) and not np.array_equal(b.r, r):
        raise DomainError("fields must share a grid")
    return r, N, av, bv


def radial_integral(values, r, N: int) -> float:
    """Trapezoidal ``int values r^(N-1) dr`` (no sphere-area factor)."""
    return float(trapezoid(np.asarray(values) * np.asarray(r) ** (N - 1), r))


def l1_distance(a, b) -> float:
    """``int |a - b| r^(N-1) dr`` on the common grid."""
    r, N, av, bv = _values_and_grid(a, b)
    return radial_integral(np.abs(av - bv), r, N)


def cylinder_weight(r, mp: ModelParams, p0: float):
    """``C(r)^p0 r^(N-1)`` with ``C(r) = (C*/r^2)^(1/n)``, finite at r=0."""
    r = np.asarray(r, dtype=float)
    e = mp.N - 1 - 2 * p0 / mp.n
    with np.errstate(divide="ignore", invalid="ignore"):
        out = mp.cStar ** (p0 / mp.n) * r**e
    return np.where(r > 0, out, 0.0 if e > 0 else np.inf)


def weighted_l1_distance(a, b, p0: float) -> float:
    """``int |a - b| C(r)^p0 r^(N-1) dr`` on the common grid."""
    r, N, av, bv = _values_and_grid(a, b)
    mp = derive_exponents(N)
    return float(trapezoid(np.abs(av - bv) * cylinder_weight(r, mp, p0), r))


# ------------------------------------------------------------ rescaling


class Direction(enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True, eq=False)
class RescaledField:
    """Rescaled state on a ``y`` grid; ``valid`` marks in-domain samples."""

    y: np.ndarray
    values: np.ndarray
    tau: float
    t: float
    direction: Direction
    valid: np.ndarray
    N: int


def left_tau(t: float, T: float) -> float:
    """``t = T (1 - exp(-tau))``."""
    return -math.log(1 - t / T)


def right_tau(t: float, T: float) -> float:
    """``t = T (1 + exp(tau))``."""
    return math.log(t / T - 1)


def _resample(fieldv: RadialField, x, closure: BoundaryClosure):
    r, u = fieldv.r, fieldv.values
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, np.nan)
    inside = (x >= r[0]) & (x <= r[-1])
    pos = r > 0
    if np.all(u[pos] > 0):
        spl = CubicSpline(np.log(r[pos]), np.log(u[pos]))
        xi = x[inside]
        small = xi < r[pos][0]
        vals = np.empty(xi.shape)
        vals[~small] = np.exp(spl(np.log(xi[~small])))
        vals[small] = np.interp(xi[small], r, u)
        out[inside] = vals
    else:
        out[inside] = np.interp(x[inside], r, u)
    outside = ~inside
    if outside.any() and closure is not None and closure.solution is not None:
        out[outside] = closure.solution(x[outside], fieldv.t)
    return out, inside


def rescale_left(field: RadialField, T: float, sp: SimilarityParams, y=None) -> RescaledField:
    """``u_bar(y) = (T-t)^-alpha u(y (T-t)^-beta)`` at ``tau = -log(1 - t/T)``.

    Without ``y`` the image ``y_i = r_i (T-t)^beta`` of the grid is used, so
    no interpolation happens. Outside the domain values come from the
    closure's exact solution when it has one and are flagged invalid.
    """
    if not field.t < T:
        raise DomainError("left rescaling needs t < T")
    d = T - field.t
    if y is None:
        y = field.r * d**sp.beta
        vals = field.values * d ** (-sp.alpha)
        valid = np.ones(y.shape, bool)
    else:
        y = np.asarray(y, dtype=float)
        u, valid = _resample(field, y * d ** (-sp.beta), field.outer.at(field.t))
        vals = u * d ** (-sp.alpha)
    return RescaledField(y=np.asarray(y, float), values=vals, tau=left_tau(field.t, T),
                         t=field.t, direction=Direction.LEFT, valid=valid, N=field.N)


def rescale_right(field: RadialField, T: float, sp: SimilarityParams, y=None) -> RescaledField:
    """``u_hat(y) = (t-T)^-alpha u(y (t-T)^-beta)`` at ``tau = log(t/T - 1)``.

    This is the forward ansatz ``u = (t-T)^alpha h(x (t-T)^beta)`` solved
    for ``h``.
    """
    if not field.t > T:
        raise DomainError("right rescaling needs t > T")
    d = field.t - T
    if y is None:
        y = field.r * d**sp.beta
        vals = field.values * d ** (-sp.alpha)
        valid = np.ones(y.shape, bool)
    else:
        y = np.asarray(y, dtype=float)
        u, valid = _resample(field, y * d ** (-sp.beta), field.outer.at(field.t))
        vals = u * d ** (-sp.alpha)
    return RescaledField(y=np.asarray(y, float), values=vals, tau=right_tau(field.t, T),
                         t=field.t, direction=Direction.RIGHT, valid=valid, N=field.N)


def fokker_planck_residual(prof, spacing: float = 0.02, core_cut: float = 0.1) -> float:
    """Max relative residual of the stationary left-rescaled equation.

    Evaluates ``(1/m) Lap(f^m) + beta div(y f) + (alpha - beta N) f`` in
    divergence form, ``div(y f) = r^(1-N) (r^N f)'``, with fourth-order
    differences in ``s = log r``; each point is normalized by its largest
    term. As in :func:`yfs.profiles.ode_residual`, points with
    ``r < core_cut * L`` are skipped for profiles with a regular origin.
    """
    from .profiles import ProfileKind

    sp = prof.params
    mp = sp.model
    s = np.log(prof.grid)
    h = float(np.mean(np.diff(s)))
    k = max(1, int(round(spacing / h)))
    f = prof.values
    F = f**mp.m
    c1 = np.array([1, -8, 0, 8, -1]) / 12.0
    c2 = np.array([-1, 16, -30, 16, -1]) / 12.0

    def d(y, c, order):
        size = y.size - 4 * k
        out = sum(cj * y[j * k: j * k + size] for j, cj in enumerate(c))
        return out / (k * h) ** order

    sc = s[2 * k: s.size - 2 * k]
    fc = f[2 * k: f.size - 2 * k]
    lap = np.exp(-2 * sc) * (d(F, c2, 2) + (mp.N - 2) * d(F, c1, 1)) / mp.m
    div = np.exp(-mp.N * sc) * d(np.exp(mp.N * s) * f, c1, 1)
    t1, t2, t3 = lap, sp.beta * div, (sp.alpha - sp.beta * mp.N) * fc
    scale = np.max(np.abs(np.vstack([t1, t2, t3])), axis=0)
    res = np.abs(t1 + t2 + t3) / scale
    if prof.kind in (ProfileKind.SMOOTH, ProfileKind.BARENBLATT):
        res = res[sc >= prof.s_ref + math.log(core_cut)]
    return float(np.max(res))


# ----------------------------------------------------------- trajectories


@dataclass(frozen=True, eq=False)
class RescaledTrajectory:
    direction: Direction
    tau: np.ndarray
    t: np.ndarray
    T: float
    distances: np.ndarray
    fields: tuple = ()
    weight_p0: Optional[float] = None
    expected_rate: Optional[float] = None


def rescaled_distance(a: RadialField, b, T: float, sp: SimilarityParams,
                      direction: Direction = Direction.LEFT,
                      p0: Optional[float] = None, window: Optional[tuple] = None) -> float:
    """L1 (or weighted L1) distance of the rescaled states.

    ``b`` is a field on the same grid or a callable ``b(r)``. The change of
    variables ``y = x |T-t|^beta`` gives
    ``int |a_bar - b_bar| dy = |T-t|^(beta N - alpha) int |a - b| dx``, and the
    weight picks up ``|T-t|^(-2 beta p0 / n)``. ``window = (y_lo, y_hi)``
    restricts the integral to an annulus in ``y``.
    """
    d = abs(T - a.t)
    r, N = a.r, a.N
    bv = b.values if isinstance(b, RadialField) else np.asarray(b(r), dtype=float)
    diff = np.abs(a.values - bv)
    mp = derive_exponents(N)
    if p0 is None:
        integrand = diff * r ** (N - 1)
        fac = d ** (sp.beta * N - sp.alpha)
    else:
        integrand = diff * cylinder_weight(r, mp, p0)
        fac = d ** (sp.beta * N - sp.alpha - 2 * sp.beta * p0 / mp.n)
    if window is not None:
        y = r * d**sp.beta
        sel = (y >= window[0]) & (y <= window[1])
        return float(fac * trapezoid(integrand[sel], r[sel]))
    return float(fac * trapezoid(integrand, r))


def compact_sup_distance(field: RadialField, profile, T: float, sp: SimilarityParams,
                         radius: float = 2.0) -> float:
    """``max |u_bar - f| / f(0)`` over ``|y| <= radius`` of the left rescaling.

    ``profile`` is a callable of ``y`` (a shrinker profile).
    """
    rf = rescale_left(field, T, sp)
    sel = rf.y <= radius
    if not sel.any():
        raise Inconclusive("no grid points inside the compact set")
    target = np.asarray(profile(rf.y[sel]), dtype=float)
    scale = float(profile(np.array([0.0]))[0]) if rf.y[0] == 0 else float(target[0])
    return float(np.max(np.abs(rf.values[sel] - target)) / scale)


def left_trajectory(snapshots: Sequence[RadialField], target, T: float,
                    sp: SimilarityParams, p0: Optional[float] = None) -> RescaledTrajectory:
    """Rescaled distances of ``snapshots`` (with ``t < T``) to ``target``.

    ``target`` is a sequence of reference fields at the same times (for
    example the self-similar solution evolved by the same scheme) or a
    callable ``target(r, t)``.
    """
    snaps = [f for f in snapshots if f.t < T]
    refs = _match_targets(snaps, target)
    dist = np.array([rescaled_distance(f, g, T, sp, Direction.LEFT, p0) for f, g in zip(snaps, refs)])
    return RescaledTrajectory(
        direction=Direction.LEFT, tau=np.array([left_tau(f.t, T) for f in snaps]),
        t=np.array([f.t for f in snaps]), T=T, distances=dist, weight_p0=p0,
        expected_rate=sp.decay_rate,
    )


def right_trajectory(snapshots: Sequence[RadialField], profile, T: float,
                     sp: SimilarityParams, window: tuple = (0.1, 10.0)) -> RescaledTrajectory:
    """Rescaled L1 distances of ``snapshots`` (``t > T``) to an expander profile.

    Distances are measured on the annulus ``window`` in ``y``.
    """
    snaps = [f for f in snapshots if f.t > T]
    dist = []
    for f in snaps:
        d = f.t - T
        target = lambda r, d=d: d**sp.alpha * profile(r * d**sp.beta)  # noqa: E731
        dist.append(rescaled_distance(f, target, T, sp, Direction.RIGHT, window=window))
    return RescaledTrajectory(
        direction=Direction.RIGHT, tau=np.array([right_tau(f.t, T) for f in snaps]),
        t=np.array([f.t for f in snaps]), T=T, distances=np.array(dist),
    )


def _match_targets(snaps, target):
    if callable(target):
        return [lambda r, f=f: target(r, f.t) for f in snaps]
    refs = list(target)
    out = []
    for f in snaps:
        g = min(refs, key=lambda g: abs(g.t - f.t))
        if abs(g.t - f.t) > 1e-9 * max(1.0, abs(f.t)):
            raise DomainError(f"no reference snapshot at t={f.t}")
        out.append(g)
    return out


@dataclass(frozen=True)
class RateFit:
    exponent: float
    expected: Optional[float]
    intercept: float
    contraction_only: bool
    samples: int


def convergence_rate(traj: RescaledTrajectory, min_samples: int = 5) -> RateFit:
    """Least-squares decay exponent of ``log distance`` against ``tau``.

    Left trajectories must decrease in ``tau``; right trajectories must
    decrease as ``tau`` decreases, and their exponent is the growth rate in
    ``tau``. When the expected exponent ``beta N - alpha`` vanishes the fit
    is reported as contraction only.
    """
    tau, d = np.asarray(traj.tau), np.asarray(traj.distances)
    if tau.size < min_samples:
        raise Inconclusive(f"need at least {min_samples} samples, got {tau.size}")
    order = np.argsort(tau)
    tau, d = tau[order], d[order]
    if np.any(d <= 0):
        raise Inconclusive("distances must be positive for a log fit")
    steps = np.diff(d)
    if traj.direction is Direction.LEFT and np.any(steps >= 0):
        raise Inconclusive("distances are not strictly decreasing in tau")
    if traj.direction is Direction.RIGHT and np.any(steps <= 0):
        raise Inconclusive("distances are not strictly decreasing as tau decreases")
    slope, icpt = np.polyfit(tau, np.log(d), 1)
    exponent = -slope if traj.direction is Direction.LEFT else slope
    expected = traj.expected_rate
    contraction_only = expected is not None and abs(expected) < 1e-12
    return RateFit(exponent=float(exponent), expected=expected, intercept=float(icpt),
                   contraction_only=contraction_only, samples=int(tau.size))


# ------------------------------------------------------------ extinction


@dataclass(frozen=True)
class ExtinctionEstimate:
    """Fit ``sup u = c (T* - t)^a``; ``lower`` never undercuts survival."""

    T_hat: float
    lower: float
    upper: float
    exponent: float
    alive_until: float

    def resolves_beyond(self, T: float) -> bool:
        return self.lower > T


def estimate_extinction_time(run: EvolutionRun, fraction: float = 0.5,
                             threshold: float = 1e-10) -> ExtinctionEstimate:
    """Extrapolate the extinction time from the sup-norm history.

    For self-similar decay ``sup u ~ c (T - t)^a`` the quantity
    ``-sup/sup'`` is linear in ``t`` and vanishes at ``T``, which seeds a
    nonlinear least-squares fit over the last ``fraction`` of the run.
    The interval combines the 95% fit interval with the last time the
    solution was seen alive.
    """
    t, s = np.asarray(run.times), np.asarray(run.sups)
    alive = t[s > threshold]
    alive_until = float(alive.max()) if alive.size else float(t[0])
    t0 = t[0] + (1 - fraction) * (t[-1] - t[0])
    sel = (t >= t0) & (s > threshold)
    tt, ss = t[sel], s[sel]
    if tt.size < 5 or not (ss[-1] < ss[0]):
        raise Inconclusive("no decay of the sup-norm in the fit window")
    ds = np.gradient(ss, tt)
    if not np.all(ds[-3:] < 0):
        raise Inconclusive("sup-norm is not decreasing at the end of the run")
    q = -ss / ds
    a_lin, b_lin = np.polyfit(tt, q, 1)
    T0 = -b_lin / a_lin
    a0 = -1 / a_lin
    if not np.isfinite(T0) or T0 <= tt[-1]:
        T0 = tt[-1] + (tt[-1] - tt[0]) * 0.1
        a0 = 1.0
    c0 = ss[-1] / (T0 - tt[-1]) ** a0

    def model(x, logc, T, a):
        return logc + a * np.log(np.maximum(T - x, 1e-300))

    try:
        popt, pcov = curve_fit(model, tt, np.log(ss), p0=[math.log(c0), T0, a0],
                               bounds=([-np.inf, tt[-1] + 1e-14, 0.0], [np.inf, np.inf, np.inf]),
                               maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise Inconclusive(f"extinction fit failed: {exc}") from exc
    T_hat = float(popt[1])
    sd = float(math.sqrt(max(pcov[1, 1], 0.0))) if np.all(np.isfinite(pcov)) else float("inf")
    lower = max(T_hat - 1.96 * sd, alive_until)
    upper = max(T_hat + 1.96 * sd, lower)
    return ExtinctionEstimate(T_hat=T_hat, lower=lower, upper=upper, exponent=float(popt[2]),
                              alive_until=alive_until)


# ------------------------------------------------------------------ tails


@dataclass(frozen=True)
class TailConstant:
    """``r^(2/n) u`` over the outer decade against ``(C*(T-t))^(1/n)``."""

    measured: float
    expected: float
    ratio_min: float
    ratio_max: float

    @property
    def ratio(self) -> float:
        return self.measured / self.expected


def tail_constant(field: RadialField, T: float, decade: float = 10.0) -> TailConstant:
    """Measure the cylindrical tail constant of ``field`` at time ``t < T``.

    The boundary node itself is excluded.
    """
    if not field.t < T:
        raise DomainError("tail constant needs t < T")
    mp = field.grid.mp
    r = field.r
    sel = (r >= r[-1] / decade) & (r < r[-1])
    vals = r[sel] ** (2 / mp.n) * field.values[sel]
    expected = (mp.cStar * (T - field.t)) ** (1 / mp.n)
    ratios = vals / expected
    return TailConstant(measured=float(np.median(vals)), expected=float(expected),
                        ratio_min=float(ratios.min()), ratio_max=float(ratios.max()))


def far_field_power(field: RadialField, window: tuple) -> float:
    """Least-squares slope of ``-log u`` against ``log r`` on ``window``."""
    r, u = field.r, field.values
    sel = (r >= window[0]) & (r <= window[1]) & (u > 0)
    if sel.sum() < 3:
        raise Inconclusive("too few positive samples in the window")
    return float(-np.polyfit(np.log(r[sel]), np.log(u[sel]), 1)[0])


# ------------------------------------------------------------ self-similar


def shrinker_solution(profile, T: float) -> Callable:
    """``U(r, t) = (T-t)^alpha f(r (T-t)^beta)``, with its limit at ``t = T``.

    At ``t >= T`` the value is ``K r^-theta`` for singular profiles (the
    pointwise limit) and zero otherwise.
    """
    from .profiles import ProfileKind

    sp = profile.params
    K = profile.originAmplitude if profile.kind is ProfileKind.SINGULAR else None

    def sol(r, t):
        r = np.asarray(r, dtype=float)
        d = T - t
        if d <= 0:
            if K is None:
                return np.zeros_like(r)
            with np.errstate(divide="ignore"):
                return K * r ** (-sp.theta)
        return d**sp.alpha * profile(r * d**sp.beta)

    return sol


def expander_solution(profile, T: float) -> Callable:
    """``W(r, t) = (t-T)^alpha h(r (t-T)^beta)`` for ``t > T``."""
    sp = profile.params

    def sol(r, t):
        r = np.asarray(r, dtype=float)
        d = t - T
        if d <= 0:
            with np.errstate(divide="ignore"):
                return profile.originAmplitude * r ** (-sp.theta)
        return d**sp.alpha * profile(r * d**sp.beta)

    return sol


def barenblatt_solution(mp: ModelParams, lam: float, T: float) -> Callable:
    """Closed-form ``(C*(T-t) / (lam^2 (T-t)^(-2 beta1) + r^2))^(1/n)``."""
    b1 = mp.p / 2

    def sol(r, t):
        r = np.asarray(r, dtype=float)
        d = max(T - t, 0.0)
        if d == 0:
            return np.zeros_like(r)
        return (mp.cStar * d / (lam**2 * d ** (-2 * b1) + r**2)) ** (1 / mp.n)

    return sol


def cylinder_solution(mp: ModelParams, T: float) -> Callable:
    def sol(r, t):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return (mp.cStar * max(T - t, 0.0) / r**2) ** (1 / mp.n)
    return sol


# ------------------------------------------------------------ initial data


@dataclass(frozen=True)
class Perturbation:
    """Compactly supported radial perturbation of prescribed mass.

    ``kind='bump'`` is ``(1 - ((r-c)/w)^2)^3`` on ``|r-c| < w``;
    ``kind='noise'`` is a seeded sum of such bumps with random centres,
    widths and weights inside the same support. Mass is measured as
    ``int phi r^(N-1) dr``.
    """

    kind: str = "bump"
    mass: float = 0.1
    center: float = 1.0
    width: float = 0.3
    seed: int = 0

    def shape(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "bump":
            return _bump(r, self.center, self.width)
        if self.kind == "noise":
            rng = np.random.default_rng(self.seed)
            lo = max(self.center - self.width, 0.0)
            hi = self.center + self.width
            out = np.zeros_like(r)
            for _ in range(5):
                c = rng.uniform(lo, hi)
                w = rng.uniform(0.1, 0.5) * self.width
                w = min(w, c - lo, hi - c) if c - lo > 0 and hi - c > 0 else w
                out += rng.uniform(0.2, 1.0) * _bump(r, c, max(w, 1e-3 * self.width))
            return out
        raise DomainError(f"unknown perturbation kind {self.kind!r}")


def _bump(r, c, w):
    z = (r - c) / w
    return np.where(np.abs(z) < 1, (1 - z * z) ** 3, 0.0)


@dataclass(frozen=True)
class InitialDataSpec:
    """Recipe for initial data of an evolution experiment.

    ``base`` is one of ``cylinder``, ``barenblatt``, ``smooth``,
    ``singular``; ``amp`` is ``lambda`` for Barenblatt and the tail
    coefficient ``B`` for smooth and singular bases. ``bound_amp`` is the
    tail coefficient ``B1 < B`` of the upper barrier ``U_{beta,B1}`` for
    smooth data.
    """

    N: int
    beta: Optional[float]
    T: float
    base: str
    amp: float = 1.0
    tail_sign: Optional[int] = None
    perturbation: Optional[Perturbation] = None
    bound_amp: Optional[float] = None
    r_in: float = 0.0
    r_max: float = 1e3
    points: int = 2000
    r_first: float = 1e-3
    outer: str = "exact"


@dataclass(frozen=True, eq=False)
class InitialData:
    """Assembled initial field plus the objects it was built from."""

    field: RadialField
    profile: object
    solution: Callable
    bound: Optional[Callable] = None
    perturbation_mass: float = 0.0
    clipped_fraction: float = 0.0


def make_initial_data(spec: InitialDataSpec) -> InitialData:
    """Build the initial field and closures described by ``spec``.

    Dirichlet data at the outer boundary follow the exact self-similar
    solution of the base (``outer='exact'``) or the two-term cylindrical
    tail (``outer='tail'``). Singular data switch to Neumann (inner) and
    harmonic (outer) closures after ``T``.
    """
    from . import profiles as P
    from .model import similarity_params

    mp = derive_exponents(spec.N)
    base = spec.base.lower()
    T = float(spec.T)
    if not T > 0:
        raise DomainError("T must be positive")
    grid = make_grid(spec.N, spec.r_in, spec.r_max, spec.points, spec.r_first)
    r = grid.r
    bound = None
    if base == "cylinder":
        if spec.r_in <= 0:
            raise DomainError("cylinder data need r_in > 0")
        prof = P.cylinder_profile(mp, spec.beta)
        sol = cylinder_solution(mp, T)
        sign = 0
        inner = exact_trace(sol, "cylinder")
    elif base == "barenblatt":
        prof = P.barenblatt_profile(mp, spec.amp)
        sol = barenblatt_solution(mp, spec.amp, T)
        sign = -1
        inner = neumann() if spec.r_in == 0 else exact_trace(sol, "barenblatt")
    elif base == "smooth":
        sp = similarity_params(mp, spec.beta)
        prof = P.with_tail_amplitude(P.solve_smooth_profile(sp, 1.0), spec.amp)
        sol = shrinker_solution(prof, T)
        sign = -1
        inner = neumann() if spec.r_in == 0 else exact_trace(sol, "smooth")
        if spec.bound_amp is not None:
            if not 0 < spec.bound_amp < spec.amp:
                raise ConstructionError("the barrier needs 0 < B1 < B")
            bprof = P.rescaled(prof, (spec.amp / spec.bound_amp) ** (1 / P.tail_exponent(sp)))
            bound = shrinker_solution(bprof, T)
    elif base == "singular":
        sp = similarity_params(mp, spec.beta)
        if spec.r_in <= 0:
            raise DomainError("singular data need r_in > 0")
        prof = P.with_tail_amplitude(P.solve_singular_profile(sp, 1.0), spec.amp)
        sol = shrinker_solution(prof, T)
        sign = +1
        inner = switched(exact_trace(sol, "singular"), neumann(), T)
    else:
        raise DomainError(f"unknown base profile {spec.base!r}")
    if spec.tail_sign is not None and sign != 0 and spec.tail_sign != sign:
        raise ConstructionError(f"{base} data have tail sign {sign:+d}, not {spec.tail_sign:+d}")

    if spec.outer == "exact":
        outer = exact_trace(sol, base)
    elif spec.outer == "tail":
        if base in ("smooth", "singular"):
            tf = prof.tailFit
            outer = cylinder_tail(mp, T, tf.bHat * T ** (-prof.params.beta * tf.gammaHat),
                                  tf.gammaHat, tf.sign)
        else:
            outer = cylinder_tail(mp, T)
    else:
        raise DomainError("outer closure must be 'exact' or 'tail'")
    if base == "singular":
        outer = switched(outer, harmonic(), T)

    u0 = np.array(sol(r, 0.0), dtype=float)
    pert_mass = clipped = 0.0
    if spec.perturbation is not None:
        pert = spec.perturbation
        phi = pert.shape(r)
        if spec.r_in == 0 and pert.center - pert.width <= 0:
            raise ConstructionError("perturbation support must avoid the origin")
        norm = radial_integral(phi, r, spec.N)
        if norm <= 0:
            raise ConstructionError("perturbation support misses the grid")
        phi = phi * (pert.mass / norm)
        raw = u0 + phi
        # keep the perturbation away from Dirichlet nodes
        if inner.is_dirichlet:
            raw[0] = u0[0]
        if outer.is_dirichlet:
            raw[-1] = u0[-1]
        raw = np.maximum(raw, 0.0)
        if bound is not None:
            ub = bound(r, 0.0)
            raw = np.minimum(raw, ub)
        pert_mass = radial_integral(raw - u0, r, spec.N)
        clipped = 1 - pert_mass / pert.mass if pert.mass else 0.0
        u0 = raw
    if bound is not None:
        ub = bound(r, 0.0)
        if np.any(u0 > ub * (1 + 1e-12)):
            raise ConstructionError("initial data exceed the upper barrier")
    if np.any(u0 < 0) or not np.all(np.isfinite(u0)):
        raise ConstructionError("initial data must be finite and nonnegative")
    field0 = RadialField(grid=grid, values=u0, t=0.0, inner=inner, outer=outer)
    return InitialData(field=field0, profile=prof, solution=sol, bound=bound,
                       perturbation_mass=pert_mass, clipped_fraction=clipped)


def reference_field(init: InitialData) -> RadialField:
    """The unperturbed self-similar data on the same grid and closures."""
    f = init.field
    return f.with_values(init.solution(f.r, f.t), f.t)


def barrier_field(init: InitialData) -> RadialField:
    """The upper barrier ``U_{beta,B1}`` as data with its own exact closures."""
    if init.bound is None:
        raise DomainError("these initial data carry no barrier")
    f = init.field
    inner = f.inner if not f.inner.is_dirichlet else exact_trace(init.bound, "barrier")
    outer = exact_trace(init.bound, "barrier")
    return RadialField(grid=f.grid, values=init.bound(f.r, f.t), t=f.t, inner=inner, outer=outer)
