"""Ground truth and diagnostics for flow and iteration runs.

The anchor of everything here is the variational solution q*: the unique
fixed point of (projection onto Fix(T)) composed with f, found by Banach
iteration because that composition contracts with the same coefficient as f.
Rate fitting, boundedness and stability verdicts, and the integral-inequality
checker all consume recorded trajectories and report plain numbers plus a
pass/fail/floor/n-a verdict, never a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MembershipViolation, NonConvergence
from ._rng import derive_rng
from .sets import as_point, inner, norm

RESIDUAL_FLOOR = 1e-12


@dataclass
class VPSolution:
    """Solution of the variational problem at the fixed points of T."""

    q_star: np.ndarray
    iterations: int
    final_gap: float
    gamma: float
    gap_history: np.ndarray
    fix_residual: float

    def to_dict(self):
        return {
            "q_star": [float(v) for v in self.q_star],
            "iterations": self.iterations,
            "final_gap": self.final_gap,
            "gamma": self.gamma,
            "fix_residual": self.fix_residual,
        }


def solve_vp(problem, x_init=None, tol=1e-12, max_iter=10_000):
    """Banach-iterate q <- P_Fix(T)(f(q)) until the update gap falls below tol.

    The iteration contracts with coefficient alpha = 1 - gamma, so the gap
    history certifies geometric convergence and the a-priori bound
    alpha^k / (1 - alpha) * gap_1 controls the distance to the limit.

    Raises:
        NotImplementedError: the operator declares no fixed-point set.
        NonConvergence: iteration budget exhausted (carries the last gap).
    """
    fix = problem.T.fix_set
    if fix is None:
        raise NotImplementedError(
            "variational solution needs an analytic fixed-point set"
        )
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    q = fix.project(as_point(x_init, problem.dim) if x_init is not None
                    else np.zeros(problem.dim))
    gaps = []
    for _ in range(max_iter):
        q_next = fix.project(problem.f(q))
        gap = float(norm(q_next - q))
        gaps.append(gap)
        q = q_next
        if gap <= tol:
            return VPSolution(
                q_star=q,
                iterations=len(gaps),
                final_gap=gap,
                gamma=problem.gamma,
                gap_history=np.array(gaps),
                fix_residual=float(norm(problem.T(q) - q)),
            )
    raise NonConvergence(
        f"no convergence within {max_iter} iterations", last_gap=gaps[-1]
    )


@dataclass
class ProbeReport:
    """Largest value of <f(q) - q, z - q> over probe points z of Fix(T)."""

    max_value: float
    passed: bool
    probes: int

    def to_dict(self):
        return {"max_value": self.max_value, "pass": self.passed,
                "probes": self.probes}


def vp_residual(q, problem, probes=None, tol=1e-8, n_probes=100, seed=0):
    """Probe the variational inequality at q over points of Fix(T).

    Probes default to seeded samples of the declared fixed-point set; each
    probe must actually be fixed by T (within 1e-9), otherwise it cannot
    witness the inequality and is rejected as an input error.
    """
    q = as_point(q, problem.dim)
    if probes is None:
        fix = problem.T.fix_set
        if fix is None:
            raise NotImplementedError(
                "cannot generate probes without an analytic fixed-point set"
            )
        rng = derive_rng(seed, "vp-probes")
        probes = fix.sample_many(rng, n_probes)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    moved = norm(problem.T(probes) - probes)
    worst = float(np.max(moved))
    if worst > 1e-9:
        raise MembershipViolation(
            f"a probe moves by {worst:.3e} under T; probes must be fixed points"
        )
    values = inner(problem.f(q) - q, probes - q)
    max_value = float(np.max(values))
    return ProbeReport(max_value=max_value, passed=max_value <= tol,
                       probes=probes.shape[0])


@dataclass
class GronwallReport:
    """Checks of the square-root integral inequality on a sampled triple."""

    inequality_ok: bool
    bound_ok: bool | None
    max_inequality_violation: float
    max_bound_violation: float
    grid_points: int

    def to_dict(self):
        return {
            "inequality_ok": self.inequality_ok,
            "bound_ok": self.bound_ok,
            "max_inequality_violation": self.max_inequality_violation,
            "max_bound_violation": self.max_bound_violation,
            "grid_points": self.grid_points,
        }


def gronwall_check(grid, u, v, w, tol=1e-8):
    """Check u' + 2 v u <= 2 w sqrt(u) and its integrated consequence

        sqrt(u(t)) <= exp(-V(t)) sqrt(u(0)) + exp(-V(t)) * int_0^t exp(V) w,

    with V the running integral of v, on sampled data.

    u' comes from three-point differences on the (possibly nonuniform) grid,
    so the differential check carries discretization error of order h^2; pick
    ``tol`` accordingly.  The integrated bound is evaluated in a rescaled
    recurrence that never forms exp(V) itself, so it stays finite for large V.
    When the differential inequality fails on the data, the integrated bound
    is reported but not asserted (``bound_ok`` is None).
    """
    t = np.asarray(grid, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (t.ndim == 1 and t.size >= 3):
        raise ValueError("need a 1-d grid with at least three points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("grid must be strictly increasing")
    if u.shape != t.shape or v.shape != t.shape or w.shape != t.shape:
        raise ValueError("u, v, w must be sampled on the grid")
    if np.any(u < 0) or np.any(v < 0) or np.any(w < 0):
        raise ValueError("u, v, w must be nonnegative")

    hp = t[2:] - t[1:-1]
    hm = t[1:-1] - t[:-2]
    du = (hm ** 2 * u[2:] - hp ** 2 * u[:-2] + (hp ** 2 - hm ** 2) * u[1:-1]) / (
        hp * hm * (hp + hm)
    )
    lhs = du + 2.0 * v[1:-1] * u[1:-1] - 2.0 * w[1:-1] * np.sqrt(u[1:-1])
    max_ineq = float(np.max(lhs))

    dt = np.diff(t)
    dV = 0.5 * (v[1:] + v[:-1]) * dt
    # J_i = exp(-V_i) * int_0^{t_i} exp(V) w, advanced without forming exp(V)
    J = np.empty_like(u)
    J[0] = 0.0
    for i in range(1, t.size):
        decay = math.exp(-dV[i - 1])
        J[i] = decay * J[i - 1] + 0.5 * dt[i - 1] * (w[i] + decay * w[i - 1])
    V = np.concatenate([[0.0], np.cumsum(dV)])
    bound = np.exp(-V) * math.sqrt(u[0]) + J
    max_bound = float(np.max(np.sqrt(u) - bound))

    inequality_ok = max_ineq <= tol
    bound_ok = (max_bound <= tol) if inequality_ok else None
    return GronwallReport(
        inequality_ok=inequality_ok,
        bound_ok=bound_ok,
        max_inequality_violation=max_ineq,
        max_bound_violation=max_bound,
        grid_points=t.size,
    )


def trajectory_gronwall_triple(traj, vp):
    """The canonical (grid, u, v, w) triple of a recorded run.

    u is the squared distance to q*, v = gamma * theta, and w scales theta by
    the anchor drift ||f(q*) - q*||; the flow satisfies the differential
    inequality with exactly this triple.
    """
    dist = traj.distances_to(vp.q_star)
    theta = np.asarray(traj.schedule.theta(traj.times))
    drift = float(norm(traj.problem.f(vp.q_star) - vp.q_star))
    return traj.times, dist ** 2, vp.gamma * theta, theta * drift


@dataclass
class RateReport:
    """Fit of the residual decay against a claimed power 1 / (1 + t)^nu."""

    nu_claimed: float
    window: tuple
    fitted_slope: float | None
    sup_scaled_residual: float
    verdict: str  # "pass" | "fail" | "floor"
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "nu_claimed": self.nu_claimed,
            "window": list(self.window),
            "fitted_slope": self.fitted_slope,
            "sup_scaled_residual": self.sup_scaled_residual,
            "verdict": self.verdict,
            "diagnostics": self.diagnostics,
        }


def fit_rate(traj, nu, window_fraction=0.5):
    """Least-squares slope of log residual against log(1 + t) on a tail window.

    The window is [t_end * (1 - window_fraction), t_end].  Residuals at or
    below the double-precision floor are excluded from the fit (they carry no
    decay information); if the whole window sits on the floor the verdict is
    "floor" rather than pass or fail.  The verdict passes when the slope is
    at most -nu + 0.1 and the sup of (1 + t)^nu * residual does not increase
    between the two geometric halves of the window.
    """
    if not 0 < window_fraction < 1:
        raise ValueError("window_fraction must lie in (0, 1)")
    t_end = float(traj.times[-1])
    t_lo = t_end * (1.0 - window_fraction)
    mask = traj.times >= t_lo
    if int(np.sum(mask)) < 30:
        raise ValueError(
            f"window [{t_lo:.6g}, {t_end:.6g}] holds {int(np.sum(mask))} samples, "
            "need at least 30"
        )
    ts = traj.times[mask]
    res = traj.residuals[mask]
    scaled = (1.0 + ts) ** nu * res
    sup_scaled = float(np.max(scaled))

    mid = math.sqrt((1.0 + t_lo) * (1.0 + t_end)) - 1.0
    first = ts <= mid
    sup_first = float(np.max(scaled[first])) if np.any(first) else 0.0
    sup_second = float(np.max(scaled[~first])) if np.any(~first) else 0.0
    non_increasing = sup_second <= sup_first * (1.0 + 1e-9)

    diagnostics = {
        "n_window": int(ts.size),
        "sup_scaled_first_half": sup_first,
        "sup_scaled_second_half": sup_second,
        "M_measured": float(np.max(
            norm(traj.problem.f(traj.states)) + norm(traj.problem.T(traj.states))
        )),
        "slope_threshold": -nu + 0.1,
    }
    schedule = traj.schedule
    if getattr(schedule, "kind", None) == "power":
        diagnostics["kappa"] = traj.problem.gamma * schedule.K / schedule.nu

    usable = res > RESIDUAL_FLOOR
    n_floor = int(ts.size - np.sum(usable))
    diagnostics["n_floor_excluded"] = n_floor
    if int(np.sum(usable)) < 5:
        return RateReport(nu_claimed=nu, window=(t_lo, t_end), fitted_slope=None,
                          sup_scaled_residual=sup_scaled, verdict="floor",
                          diagnostics=diagnostics)

    slope, _ = np.polyfit(np.log1p(ts[usable]), np.log(res[usable]), 1)
    slope = float(slope)
    passed = (
        slope <= -nu + 0.1
        and math.isfinite(sup_scaled)
        and non_increasing
    )
    return RateReport(nu_claimed=nu, window=(t_lo, t_end), fitted_slope=slope,
                      sup_scaled_residual=sup_scaled,
                      verdict="pass" if passed else "fail",
                      diagnostics=diagnostics)


@dataclass
class BoundednessReport:
    sup_distance: float
    bound: float
    slack: float
    passed: bool

    def to_dict(self):
        return {"sup_distance": self.sup_distance, "bound": self.bound,
                "slack": self.slack, "pass": self.passed}


def _default_slack(solver):
    if solver.method == "rk45":
        return 10.0 * (solver.abs_tol + solver.rel_tol)
    return 10.0 * solver.h


def boundedness_verdict(traj, vp, slack=None):
    """sup ||x(t) - q*|| against max(||x0 - q*||, ||f(q*) - q*|| / gamma)."""
    dist = traj.distances_to(vp.q_star)
    drift = float(norm(traj.problem.f(vp.q_star) - vp.q_star))
    bound = max(float(dist[0]), drift / vp.gamma)
    if slack is None:
        slack = _default_slack(traj.solver)
    sup = float(np.max(dist))
    return BoundednessReport(sup_distance=sup, bound=bound, slack=slack,
                             passed=sup <= bound + slack)


@dataclass
class StabilityReport:
    sup_gap_tail: float
    median_first_decade: float
    median_last_decade: float
    perturbation_class: str
    verdict: str  # "pass" | "fail" | "n/a"
    claim: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "sup_gap_tail": self.sup_gap_tail,
            "median_first_decade": self.median_first_decade,
            "median_last_decade": self.median_last_decade,
            "perturbation_class": self.perturbation_class,
            "verdict": self.verdict,
            "claim": self.claim,
        }


def _schedule_key(s):
    kind = getattr(s, "kind", "?")
    if kind == "power":
        return (kind, s.K, s.nu, s.clamp)
    if kind == "constant":
        return (kind, s.c)
    if kind == "table":
        return (kind, tuple(s.knot_times), tuple(s.knot_values), s.clamp)
    return (kind, id(s))


def stability_verdict(traj_plain, traj_forced):
    """Gap between a plain run and a forced run of the same problem.

    Passes when the gap median over the last time decade falls below a tenth
    of the median over the first decade; reports "n/a" when the forcing is
    neither absolutely integrable nor small next to theta, because then no
    vanishing is promised.
    """
    if traj_plain.dim != traj_forced.dim:
        raise ValueError("trajectory dimensions differ")
    if _schedule_key(traj_plain.schedule) != _schedule_key(traj_forced.schedule):
        raise ValueError("trajectories use different schedules")
    if not np.allclose(traj_plain.states[0], traj_forced.states[0], atol=1e-12):
        raise ValueError("trajectories start from different states")
    t_end = float(traj_plain.times[-1])
    if t_end < 100.0:
        raise ValueError("need a horizon of at least two time decades")

    times = traj_plain.times
    if np.array_equal(times, traj_forced.times):
        forced_states = traj_forced.states
    else:
        forced_states = traj_forced.values_at(times)
    g = norm(traj_plain.states - forced_states)

    decades = int(math.floor(math.log10(t_end) + 1e-12))
    first_hi = t_end / 10.0 ** (decades - 1)
    last_lo = t_end / 10.0
    med_first = float(np.median(g[times <= first_hi]))
    med_last = float(np.median(g[times >= last_lo]))
    sup_tail = float(np.max(g[times >= last_lo]))

    pert = traj_forced.perturbation
    pclass = pert.classify(traj_plain.schedule) if pert is not None else "L1"
    claim = {}
    if pert is not None and hasattr(pert, "claim_report"):
        claim = pert.claim_report(traj_plain.schedule)

    if pclass == "neither":
        verdict = "n/a"
    elif med_first <= 1e-12:
        verdict = "pass" if med_last <= 1e-12 else "fail"
    else:
        verdict = "pass" if med_last <= med_first / 10.0 else "fail"
    return StabilityReport(
        sup_gap_tail=sup_tail,
        median_first_decade=med_first,
        median_last_decade=med_last,
        perturbation_class=pclass,
        verdict=verdict,
        claim=claim,
    )
