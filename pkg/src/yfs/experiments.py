"""Scenario runners that evolve configured data and score the outcome.

Each runner returns an :class:`ExperimentResult` holding check records
(measured value, expected value, tolerance, verdict, source of the
expectation) and the arrays written by the command-line front end.
"""

from __future__ import annotations

import logging
import math
import platform
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy

from . import __version__
from . import profiles as P
from .config import RunConfig
from .errors import Inconclusive
from .flow import (
    barenblatt_solution,
    barrier_field,
    compact_sup_distance,
    convergence_rate,
    cylinder_solution,
    estimate_extinction_time,
    evolve,
    far_field_power,
    l1_distance,
    left_tau,
    left_trajectory,
    make_initial_data,
    reference_field,
    right_tau,
    right_trajectory,
    tail_constant,
)
from .geometry import cylinder_curvature, scalar_curvature
from .model import derive_exponents, similarity_params, weighted_contraction_params

log = logging.getLogger(__name__)


@dataclass
class Check:
    name: str
    measured: object
    expected: object
    tolerance: object
    passed: bool
    source: str

    def to_dict(self) -> dict:
        return {"name": self.name, "measured": _num(self.measured), "expected": _num(self.expected),
                "tolerance": _num(self.tolerance), "pass": bool(self.passed), "source": self.source}


def _num(x):
    if isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


@dataclass
class ExperimentResult:
    config: RunConfig
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, *args) -> Check:
        c = Check(*args)
        self.checks.append(c)
        log.info("%s: %s (measured %s, expected %s)", c.name, "pass" if c.passed else "FAIL",
                 c.measured, c.expected)
        return c


def versions() -> dict:
    return {"yfs": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_experiment(cfg: RunConfig) -> ExperimentResult:
    """Dispatch on ``cfg.experiment``."""
    runners = {"oracle": run_oracle, "shrinker": run_shrinker, "weighted": run_weighted,
               "long_lived": run_long_lived}
    res = runners[cfg.experiment](cfg)
    if cfg.checks["sensitivity"]:
        _sensitivity(cfg, res)
    return res


def _snapshot_table(snaps) -> dict:
    cols = {"r": snaps[0].r}
    for f in snaps:
        cols[f"u_t{f.t:.10g}"] = f.values
    return cols


def _tail_checks(res: ExperimentResult, run, T: float, times) -> None:
    for t in times:
        tc = tail_constant(run.at(t), T)
        worst = tc.ratio_min if abs(tc.ratio_min - 1) > abs(tc.ratio_max - 1) else tc.ratio_max
        res.add(f"tail_ratio_t={t:g}", worst, 1.0, 0.02, abs(worst - 1) <= 0.02,
                "persistent cylindrical tail (C*(T-t))^(1/n) |x|^(-2/n)")


def _extinction_check(res: ExperimentResult, run, T: float, tol: float = 0.02) -> None:
    try:
        est = estimate_extinction_time(run)
    except Inconclusive as exc:
        res.add("extinction_time", str(exc), T, tol, False, "extinction at the tail time T")
        return
    res.add("extinction_time", est.T_hat, T, tol, abs(est.T_hat - T) <= tol * T,
            "extinction at the tail time T")
    res.info["extinction"] = {"T_hat": est.T_hat, "lower": est.lower, "upper": est.upper,
                              "exponent": est.exponent}


def _barrier_check(res: ExperimentResult, cfg: RunConfig, init, run) -> None:
    """Compare with the barrier evolved by the same scheme.

    Far out the data and the barrier agree to rounding, so comparing with
    the exact barrier would only measure the discretization error of the
    common cylindrical tail.
    """
    if init.bound is None:
        return
    times = [f.t for f in run.snapshots[1:]]
    brun = evolve(barrier_field(init), max(times), cfg.controller(times))
    worst = max(float(np.max(f.values / g.values)) for f, g in zip(run.snapshots, brun.snapshots)
                if np.all(g.values > 0))
    exact = max(float(np.max(f.values / init.bound(f.r, f.t))) for f in run.snapshots)
    res.info["barrier_ratio_exact"] = exact
    res.add("below_barrier", worst, 1.0, 1e-9, worst <= 1 + 1e-9,
            "comparison with the upper barrier U_{beta,B1}")


# ---------------------------------------------------------------- oracle


def _oracle_error(run, sol):
    errs = []
    for f in run.snapshots[1:]:
        ex = sol(f.r, f.t)
        pos = ex > 0
        errs.append(float(np.max(np.abs(f.values[pos] / ex[pos] - 1))))
    return max(errs)


def run_oracle(cfg: RunConfig) -> ExperimentResult:
    """Evolve closed-form data and compare with the exact evolution."""
    res = ExperimentResult(cfg)
    spec = cfg.data
    if spec.base not in ("barenblatt", "cylinder"):
        raise ValueError("oracle runs need a barenblatt or cylinder base")
    T = spec.T
    mp = derive_exponents(spec.N)
    sol = (barenblatt_solution(mp, spec.amp, T) if spec.base == "barenblatt"
           else cylinder_solution(mp, T))
    t_end = cfg.checks.get("t_end", 0.5 * T)
    init = make_initial_data(spec)
    run = evolve(init.field, t_end, cfg.controller([t_end]))
    err = _oracle_error(run, sol)
    tol = cfg.checks["tolerance"]
    res.add("oracle_error", err, 0.0, tol, err < tol, "closed-form self-similar solution")
    res.tables["snapshots"] = _snapshot_table(run.snapshots)
    if cfg.checks["refine"]:
        coarse = cfg.with_grid(points=spec.points // 2)
        crun = evolve(make_initial_data(coarse.data).field, t_end, coarse.controller([t_end]))
        cerr = _oracle_error(crun, sol)
        order = math.log2(cerr / err)
        res.add("convergence_order", order, 2.0, 0.5, order >= 1.5,
                "second-order spatial discretization")
        res.info["coarse_error"] = cerr
    if cfg.checks["curvature"] and spec.base == "cylinder":
        expected = cylinder_curvature(spec.N, T, t_end)
        for label, values in (("exact", sol(run.final.r, t_end)), ("evolved", run.final.values)):
            rep = scalar_curvature(values, run.final.r, spec.N)
            res.add(f"curvature_{label}_variation", rep.relative_variation, 0.0, 1e-3,
                    rep.relative_variation < 1e-3, "cylinder curvature is spatially constant")
            rel = abs(float(np.mean(rep.R)) / expected - 1)
            res.add(f"curvature_{label}_value", float(np.mean(rep.R)), expected, 1e-3,
                    rel < 1e-3, "closed form (N-1)/(T-t)")
            if label == "evolved":
                res.tables["curvature"] = {"r": rep.r, "R": rep.R}
    if cfg.checks["extinction"]:
        t_ext = 0.99 * T
        times = list(T * (1 - np.geomspace(0.5, 0.01, 12)))
        erun = evolve(init.field, t_ext, cfg.controller(times))
        s0 = erun.snapshots[0].sup()
        worst = 0.0
        if spec.base == "barenblatt":
            alpha = similarity_params(mp, 1 / (2 * mp.m)).alpha
            for f in erun.snapshots[1:]:
                worst = max(worst, abs(f.sup() / (s0 * ((T - f.t) / T) ** alpha) - 1))
            res.add("sup_scaling", worst, 0.0, 0.02, worst <= 0.02,
                    "sup-norm of the Barenblatt solution scales like (T-t)^alpha")
        _extinction_check(res, erun, T)
    return res


# -------------------------------------------------------------- shrinker


def _left_times(cfg: RunConfig):
    T = cfg.T
    taus = cfg.checks.get("tau") or list(np.arange(0.5, 4.01, 0.5))
    left = [T * (1 - math.exp(-x)) for x in taus]
    tails = [x * T for x in cfg.checks["tail_times"]]
    return left, tails


def _paired_runs(cfg: RunConfig, extra=()):
    init = make_initial_data(cfg.data)
    left, tails = _left_times(cfg)
    times = sorted(set(left) | set(tails) | set(extra))
    ctl = cfg.controller(times)
    run = evolve(init.field, max(times), ctl)
    ref = evolve(reference_field(init), max(times), cfg.controller(times))
    return init, run, ref, left, tails


def run_shrinker(cfg: RunConfig) -> ExperimentResult:
    """Convergence of perturbed shrinker data to the shrinker (left rescaling)."""
    res = ExperimentResult(cfg)
    spec = cfg.data
    T = spec.T
    sp = similarity_params(derive_exponents(spec.N), spec.beta)
    init, run, ref, left, tails = _paired_runs(cfg)
    snaps = [run.at(t) for t in left]
    refs = [ref.at(t) for t in left]
    res.info["perturbation_mass"] = init.perturbation_mass
    res.info["clipped_fraction"] = init.clipped_fraction
    _barrier_check(res, cfg, init, run)
    _tail_checks(res, run, T, tails)

    raw = np.array([l1_distance(a, b) for a, b in zip(snaps, refs)])
    growth = float(np.max(np.diff(raw) / raw[:-1])) if raw.size > 1 else 0.0
    res.add("l1_contraction", growth, 0.0, 1e-6, growth <= 1e-6,
            "L1 contraction of two solutions")

    traj = left_trajectory(snaps, refs, T, sp)
    expected = sp.decay_rate
    try:
        fit = convergence_rate(traj)
        if fit.contraction_only:
            res.add("l1_rate", fit.exponent, 0.0, 0.05, abs(fit.exponent) <= 0.05,
                    "beta N - alpha = 0: contraction only")
        else:
            ok = abs(fit.exponent / expected - 1) <= 0.1
            res.add("l1_rate", fit.exponent, expected, 0.1, ok,
                    "rescaled L1 decay exponent beta N - alpha")
    except Inconclusive as exc:
        res.add("l1_rate", str(exc), expected, 0.1, False, "rescaled L1 decay exponent beta N - alpha")

    radius = cfg.checks["sup_radius"]
    sup = np.array([compact_sup_distance(f, init.profile, T, sp, radius) for f in snaps])
    worst = float(np.max(sup[1:] / sup[:-1]))
    res.add("sup_distance_decreasing", worst, "< 1", 0.0, worst < 1,
            "uniform convergence on compact sets to f_{beta,B}")
    if cfg.checks["extinction"]:
        _extinction_check(res, run, T)
    res.tables["distances"] = {"tau": traj.tau, "t": traj.t, "l1_rescaled": traj.distances,
                               "l1": raw, "sup_compact": sup}
    res.tables["snapshots"] = _snapshot_table(snaps)
    return res


def run_weighted(cfg: RunConfig) -> ExperimentResult:
    """Weighted L1 contraction toward the shrinker for ``beta0 < beta < beta1``."""
    res = ExperimentResult(cfg)
    spec = cfg.data
    T = spec.T
    sp = similarity_params(derive_exponents(spec.N), spec.beta)
    wc = weighted_contraction_params(spec.N, spec.beta)
    init, run, ref, left, tails = _paired_runs(cfg)
    snaps = [run.at(t) for t in left]
    refs = [ref.at(t) for t in left]
    _barrier_check(res, cfg, init, run)
    _tail_checks(res, run, T, tails)
    traj = left_trajectory(snaps, refs, T, sp, p0=wc.p0)
    d = traj.distances
    steps = np.diff(d)
    worst = float(np.max(steps / d[:-1]))
    ok = bool(np.all(steps < 0)) and d.size >= 10
    res.add("weighted_l1_decreasing", worst, "< 0", 0.0, ok,
            f"weighted L1 contraction with weight C^p0, p0={wc.p0:.5f}")
    res.add("weighted_samples", int(d.size), 10, 0, d.size >= 10, "at least ten snapshots")
    plain = left_trajectory(snaps, refs, T, sp)
    res.info["p0"] = wc.p0
    res.info["KN"] = wc.KN
    res.tables["distances"] = {"tau": traj.tau, "t": traj.t, "weighted_l1": d,
                               "l1_rescaled": plain.distances}
    res.tables["snapshots"] = _snapshot_table(snaps)
    return res


# ------------------------------------------------------------ long-lived


def run_long_lived(cfg: RunConfig) -> ExperimentResult:
    """Singular data: survival past ``T`` and matching with the expander."""
    res = ExperimentResult(cfg)
    spec = cfg.data
    T = spec.T
    mp = derive_exponents(spec.N)
    sp = similarity_params(mp, spec.beta)
    post = cfg.checks.get("post_times") or [0.02, 0.03, 0.05, 0.1, 0.2, 0.3, 0.5]
    post_t = [T + d for d in post]
    tails = [x * T for x in cfg.checks["tail_times"]]
    init = make_initial_data(spec)
    K = init.profile.originAmplitude
    times = sorted(set(tails) | {T} | set(post_t))
    run = evolve(init.field, max(times), cfg.controller(times))
    _tail_checks(res, run, T, tails)

    fT = run.at(T)
    sel = (fT.r >= 0.1) & (fT.r <= 1.0)
    ratio = float(np.min(fT.values[sel] / (K * fT.r[sel] ** (-sp.theta))))
    res.add("u_at_T_positive", ratio, 1.0, 0.5, ratio >= 0.5,
            "limit K |x|^(-alpha/beta) of the singular shrinker at time T")
    try:
        est = estimate_extinction_time(run)
        res.add("extinction_beyond_T", est.lower, f"> {T:g}", 0.0, est.resolves_beyond(T),
                "solution survives past the tail time T")
        res.info["extinction"] = {"T_hat": est.T_hat, "lower": est.lower, "upper": est.upper}
    except Inconclusive as exc:
        alive = bool(run.final.sup() > 0 and run.final.t > T)
        res.add("extinction_beyond_T", str(exc), f"> {T:g}", 0.0, alive,
                "solution survives past the tail time T")

    R = spec.r_max
    window = tuple(cfg.checks.get("far_window") or (R * 1e-6, R * 1e-4))
    power = far_field_power(run.final, window)
    res.add("far_field_power", power, mp.N + 2, 0.25, abs(power - (mp.N + 2)) <= 0.25,
            "far-field decay O(|x|^-(N+2)) after T")

    h = P.solve_expander_profile(sp, K)
    snaps = [run.at(t) for t in post_t]
    traj = right_trajectory(snaps, h, T, sp, window=tuple(cfg.checks["annulus"]))
    d = traj.distances
    ok = bool(np.all(np.diff(d) > 0))
    worst = float(np.max(d[:-1] / d[1:]))
    res.add("right_distance_monotone", worst, "< 1", 0.0, ok,
            "right rescaling converges to h_{beta,K} as tau -> -infinity")
    res.info["K"] = K
    res.info["expander_far_amplitude"] = h.farAmplitude
    res.tables["distances"] = {"tau": traj.tau, "t": traj.t, "l1_annulus": d}
    res.tables["snapshots"] = _snapshot_table([fT] + snaps)
    return res


# ----------------------------------------------------------- sensitivity


def _sensitivity(cfg: RunConfig, res: ExperimentResult) -> None:
    """Rerun with ``R_max/2`` (and ``2 r_in`` for singular data)."""
    variants = {"r_max_half": {"r_max": cfg.data.r_max / 2}}
    if cfg.data.r_in > 0:
        variants["r_in_double"] = {"r_in": 2 * cfg.data.r_in}
    base = {c.name: c.measured for c in res.checks if isinstance(c.measured, float)}
    out = {}
    for label, change in variants.items():
        alt = cfg.with_grid(**change)
        alt.checks["sensitivity"] = False
        other = run_experiment(alt)
        out[label] = {c.name: abs(c.measured - base[c.name]) for c in other.checks
                      if c.name in base and isinstance(c.measured, float)}
    res.info["sensitivity"] = out
