"""Relaxation schedules theta(t) with derivatives, running integrals, and
checkers for the asymptotic conditions that the convergence statements assume.

The power family theta(t) = K / (1 + t)^nu may exceed 1 near t = 0 when K > 1
while the dynamics requires values in (0, 1]; with ``clamp=True`` (default)
the schedule is held at 1 on the interval [0, K^(1/nu) - 1] and that interval
is recorded.  ``clamp=False`` keeps the raw formula, which is what the
closed-form integral identities assume, and is flagged with a warning when it
violates the (0, 1] range.
"""

from __future__ import annotations

import abc
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _sci_integrate
from scipy.interpolate import CubicSpline

_CONTINUOUS = ("C'1", "C'2", "C'5")
_DISCRETE = ("C0", "C1", "C2", "C3", "C4", "C5")


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("schedule evaluated at negative time")
    return t


@dataclass
class ConditionFlag:
    value: bool
    method: str  # "analytic" or "numeric-evidence"
    evidence: float | None = None
    note: str = ""

    def to_dict(self):
        return {
            "value": self.value,
            "method": self.method,
            "evidence": self.evidence,
            "note": self.note,
        }


@dataclass
class ConditionReport:
    """Flags for the named asymptotic conditions of a schedule."""

    flags: dict
    horizon: float | None = None
    n_terms: int | None = None

    def __getitem__(self, name):
        return self.flags[name]

    def true_names(self):
        return sorted(name for name, f in self.flags.items() if f.value)

    def to_dict(self):
        out = {name: f.to_dict() for name, f in self.flags.items()}
        return {"flags": out, "horizon": self.horizon, "N": self.n_terms}


class ThetaSchedule(abc.ABC):
    """A relaxation schedule on [0, infinity) with values in (0, 1]."""

    kind = "abstract"
    clamp = True

    @property
    def clamp_interval(self):
        """(0, t*) where the schedule is held at 1, or None."""
        return None

    @abc.abstractmethod
    def theta(self, t):
        ...

    @abc.abstractmethod
    def theta_prime_flagged(self, t):
        """(derivative, at_breakpoint) at scalar t; one-sided on a breakpoint."""

    def theta_prime(self, t):
        t = _check_time(t)
        if t.ndim == 0:
            return self.theta_prime_flagged(float(t))[0]
        return np.array([self.theta_prime_flagged(float(s))[0] for s in t])

    @abc.abstractmethod
    def big_theta(self, t):
        """Integral of theta from 0 to t."""

    @abc.abstractmethod
    def continuous_conditions(self, horizon=1e6):
        """ConditionReport for C'1 (vanishing), C'2 (divergent integral),
        C'5 (integrable derivative or derivative small next to theta)."""

    def theta_at_index(self, n):
        """Discrete sample theta_n := theta(n)."""
        return self.theta(float(n))


@dataclass(eq=False)
class PowerSchedule(ThetaSchedule):
    K: float
    nu: float
    clamp: bool = True
    kind = "power"

    def __post_init__(self):
        self.K = float(self.K)
        self.nu = float(self.nu)
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must lie in (0, 1], got {self.nu}")
        if self.K > 1.0:
            self._t_star = self.K ** (1.0 / self.nu) - 1.0
            if self.clamp:
                warnings.warn(
                    f"power schedule with K={self.K} exceeds 1 near t=0; "
                    f"holding the value at 1 on [0, {self._t_star:.6g}]",
                    stacklevel=2,
                )
            else:
                warnings.warn(
                    f"unclamped power schedule with K={self.K} leaves (0, 1] "
                    f"on [0, {self._t_star:.6g}]",
                    stacklevel=2,
                )
        else:
            self._t_star = None

    @property
    def clamp_interval(self):
        if self.clamp and self._t_star is not None:
            return (0.0, self._t_star)
        return None

    def _raw(self, t):
        return self.K * (1.0 + t) ** (-self.nu)

    def theta(self, t):
        t = _check_time(t)
        raw = self._raw(t)
        if self.clamp:
            raw = np.minimum(1.0, raw)
        return float(raw) if raw.ndim == 0 else raw

    def _raw_prime(self, t):
        return -self.K * self.nu * (1.0 + t) ** (-self.nu - 1.0)

    def theta_prime_flagged(self, t):
        t = float(_check_time(t))
        interval = self.clamp_interval
        if interval is None:
            return self._raw_prime(t), False
        t_star = interval[1]
        if t < t_star:
            return 0.0, False
        if t == t_star:
            # right-sided derivative; the left-sided one is 0
            return self._raw_prime(t), True
        return self._raw_prime(t), False

    def theta_prime(self, t):
        t = _check_time(t)
        deriv = self._raw_prime(t)
        interval = self.clamp_interval
        if interval is not None:
            deriv = np.where(t < interval[1], 0.0, deriv)
        return float(deriv) if deriv.ndim == 0 else deriv

    def _raw_integral(self, t):
        if self.nu == 1.0:
            return self.K * np.log1p(t)
        return self.K * ((1.0 + t) ** (1.0 - self.nu) - 1.0) / (1.0 - self.nu)

    def big_theta(self, t):
        t = _check_time(t)
        interval = self.clamp_interval
        if interval is None:
            out = self._raw_integral(t)
        else:
            t_star = interval[1]
            out = np.where(
                t <= t_star,
                t,
                t_star + self._raw_integral(t) - self._raw_integral(t_star),
            )
        return float(out) if np.ndim(out) == 0 else out

    def continuous_conditions(self, horizon=1e6):
        flags = {
            # theta -> 0 since nu > 0
            "C'1": ConditionFlag(True, "analytic", evidence=0.0),
            # the integral diverges for nu <= 1
            "C'2": ConditionFlag(True, "analytic"),
            # |theta'| integrates to theta(0) and theta'/theta = -nu/(1+t) -> 0
            "C'5": ConditionFlag(True, "analytic", evidence=0.0,
                                 note="both branches hold"),
        }
        return ConditionReport(flags=flags, horizon=float(horizon))


@dataclass(eq=False)
class ConstantSchedule(ThetaSchedule):
    """theta(t) = c.  c = 0 is allowed as the unanchored endpoint used by the
    relaxed fixed-point iteration; the anchored schemes need c > 0."""

    c: float
    kind = "constant"
    clamp = True

    def __post_init__(self):
        self.c = float(self.c)
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"constant schedule value must lie in [0, 1], got {self.c}")

    def theta(self, t):
        t = _check_time(t)
        out = np.full_like(t, self.c, dtype=float)
        return float(out) if out.ndim == 0 else out

    def theta_prime_flagged(self, t):
        _check_time(t)
        return 0.0, False

    def theta_prime(self, t):
        t = _check_time(t)
        out = np.zeros_like(t, dtype=float)
        return float(out) if out.ndim == 0 else out

    def big_theta(self, t):
        t = _check_time(t)
        out = self.c * t
        return float(out) if out.ndim == 0 else out

    def continuous_conditions(self, horizon=1e6):
        flags = {
            "C'1": ConditionFlag(self.c == 0.0, "analytic", evidence=self.c,
                                 note="limit equals the constant"),
            "C'2": ConditionFlag(self.c > 0.0, "analytic"),
            "C'5": ConditionFlag(True, "analytic", evidence=0.0),
        }
        return ConditionReport(flags=flags, horizon=float(horizon))


@dataclass(eq=False)
class TableSchedule(ThetaSchedule):
    """A schedule interpolated from (time, value) knots by a cubic spline.

    Values are held constant beyond the last knot.  Condition checks are
    numeric evidence over a horizon, never analytic claims.
    """

    knot_times: np.ndarray
    knot_values: np.ndarray
    clamp: bool = True
    kind = "table"

    def __post_init__(self):
        t = np.asarray(self.knot_times, dtype=float)
        v = np.asarray(self.knot_values, dtype=float)
        if t.ndim != 1 or t.size < 4 or v.shape != t.shape:
            raise ValueError("need matching 1-d knot arrays with at least 4 points")
        if np.any(np.diff(t) <= 0) or t[0] < 0:
            raise ValueError("knot times must be increasing and nonnegative")
        self.knot_times = t
        self.knot_values = v
        self._spline = CubicSpline(t, v, bc_type="natural")
        self._dspline = self._spline.derivative()
        probe = self._raw(np.linspace(t[0], t[-1], 2001))
        if np.min(probe) <= 0:
            raise ValueError("table schedule must stay strictly positive")
        if not self.clamp and np.max(probe) > 1.0:
            warnings.warn("table schedule leaves (0, 1] and clamping is off",
                          stacklevel=2)

    def _raw(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.knot_times[0], self.knot_times[-1]
        clipped = np.clip(t, lo, hi)
        return np.asarray(self._spline(clipped), dtype=float)

    def theta(self, t):
        t = _check_time(t)
        raw = self._raw(t)
        if self.clamp:
            raw = np.minimum(1.0, raw)
        return float(raw) if raw.ndim == 0 else raw

    def theta_prime_flagged(self, t):
        t = float(_check_time(t))
        lo, hi = self.knot_times[0], self.knot_times[-1]
        if t < lo or t > hi:
            return 0.0, False
        raw = float(self._spline(t))
        deriv = float(self._dspline(t))
        if self.clamp:
            if raw > 1.0:
                return 0.0, False
            if abs(raw - 1.0) <= 1e-12:
                return deriv, True
        return deriv, False

    def big_theta(self, t):
        t = _check_time(t)

        def _one(s):
            if s == 0.0:
                return 0.0
            val, _ = _sci_integrate.quad(
                lambda u: float(np.asarray(self.theta(u))),
                0.0, s, epsabs=0.0, epsrel=1e-10, limit=500,
            )
            return val

        if t.ndim == 0:
            return _one(float(t))
        return np.array([_one(float(s)) for s in t])

    def continuous_conditions(self, horizon=1e6):
        return _numeric_continuous_conditions(self, horizon)


def _numeric_continuous_conditions(schedule, horizon):
    """Evidence-only condition flags from a log-spaced grid over [0, horizon]."""
    grid = np.expm1(np.linspace(0.0, np.log1p(horizon), 4001))
    th = np.asarray(schedule.theta(grid))
    dth = np.abs(np.asarray(schedule.theta_prime(grid)))
    tail = grid >= horizon / 10.0

    tail_max = float(np.max(th[tail]))
    c1 = tail_max <= max(1e-3, 1e-2 * float(np.max(th)))

    big = np.concatenate([[0.0], np.cumsum(0.5 * (th[1:] + th[:-1]) * np.diff(grid))])
    total = float(big[-1])
    half = float(np.interp(horizon / 2.0, grid, big))
    c2 = (total - half) >= max(0.1, 1e-3 * total)

    abs_int = np.concatenate(
        [[0.0], np.cumsum(0.5 * (dth[1:] + dth[:-1]) * np.diff(grid))]
    )
    tail_mass = float(abs_int[-1] - np.interp(horizon / 2.0, grid, abs_int))
    branch_int = tail_mass <= max(1e-6, 1e-2 * float(abs_int[-1]))
    ratio_tail = float(np.max(dth[tail] / np.maximum(th[tail], 1e-300)))
    branch_ratio = ratio_tail <= 1e-2

    flags = {
        "C'1": ConditionFlag(bool(c1), "numeric-evidence", evidence=tail_max),
        "C'2": ConditionFlag(bool(c2), "numeric-evidence", evidence=total),
        "C'5": ConditionFlag(bool(branch_int or branch_ratio), "numeric-evidence",
                             evidence=ratio_tail),
    }
    return ConditionReport(flags=flags, horizon=float(horizon))


def check_continuous_conditions(schedule, horizon=1e6):
    """ConditionReport for C'1, C'2, C'5; free-function form of the method."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return schedule.continuous_conditions(horizon=horizon)


def theta_sequence(source):
    """Coerce a schedule, callable, or array into a function of the index n >= 1."""
    if isinstance(source, ThetaSchedule):
        return lambda n: float(source.theta_at_index(n))
    if callable(source):
        return lambda n: float(source(n))
    arr = np.asarray(source, dtype=float)
    if arr.ndim != 1:
        raise ValueError("sequence source must be 1-d")

    def from_array(n):
        if not 1 <= n <= arr.size:
            raise IndexError(f"sequence of length {arr.size} has no term {n}")
        return float(arr[n - 1])

    return from_array


def check_discrete_conditions(source, N=10_000):
    """ConditionReport for the discrete conditions C0 through C5.

    Power and constant schedules get analytic flags; anything else is judged
    from the sampled terms theta_1 .. theta_N and flagged as numeric evidence,
    with the last-window estimate of each limit recorded alongside the flag.
    """
    if N < 10:
        raise ValueError("need at least 10 terms")

    if isinstance(source, PowerSchedule):
        k, nu = source.K, source.nu
        shrinking = nu < 1.0
        limit = 0.0 if shrinking else 1.0 / k
        note = "" if shrinking else f"ratio tends to 1/K = {limit:.6g}, not 0"
        flags = {
            "C0": ConditionFlag(True, "analytic"),
            "C1": ConditionFlag(True, "analytic", evidence=0.0),
            "C2": ConditionFlag(True, "analytic"),
            "C3": ConditionFlag(shrinking, "analytic", evidence=limit, note=note),
            "C4": ConditionFlag(shrinking, "analytic", evidence=limit, note=note),
            "C5": ConditionFlag(True, "analytic", evidence=0.0,
                                note="both branches hold"),
        }
        return ConditionReport(flags=flags, n_terms=N)

    if isinstance(source, ConstantSchedule):
        c = source.c
        zero_note = "increments are identically zero"
        flags = {
            "C0": ConditionFlag(0.0 < c < 1.0, "analytic"),
            "C1": ConditionFlag(c == 0.0, "analytic", evidence=c),
            "C2": ConditionFlag(c > 0.0, "analytic"),
            "C3": ConditionFlag(True, "analytic", evidence=0.0, note=zero_note),
            "C4": ConditionFlag(True, "analytic", evidence=0.0, note=zero_note),
            "C5": ConditionFlag(True, "analytic", evidence=0.0, note=zero_note),
        }
        return ConditionReport(flags=flags, n_terms=N)

    fn = theta_sequence(source)
    th = np.array([fn(n) for n in range(1, N + 1)])
    diff = np.abs(np.diff(th))
    window = slice(max(0, N - max(10, N // 10)), N - 1)

    sum_c0 = np.cumsum((1.0 - th) * th)
    sum_c2 = np.cumsum(th)
    sum_c5 = np.cumsum(diff)

    def diverging(partial):
        total = float(partial[-1])
        half = float(partial[len(partial) // 2])
        return (total - half) >= max(0.05, 1e-3 * total), total

    def vanishing(ratios):
        est = float(np.max(ratios[window])) if ratios[window].size else 0.0
        return est <= 1e-2, est

    c0, e0 = diverging(sum_c0)
    c2, e2 = diverging(sum_c2)
    e1 = float(th[-1])
    c1 = e1 <= max(1e-3, 1e-2 * float(th[0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        r3 = diff / th[:-1] ** 2
        r4 = diff / (th[:-1] * th[1:])
        r5 = diff / th[:-1]
    c3, e3 = vanishing(np.nan_to_num(r3, nan=np.inf))
    c4, e4 = vanishing(np.nan_to_num(r4, nan=np.inf))
    c5a, e5 = vanishing(np.nan_to_num(r5, nan=np.inf))
    c5b, _ = diverging(sum_c5)
    c5 = c5a or (not c5b)  # second branch: the increment series converges

    flags = {
        "C0": ConditionFlag(bool(c0), "numeric-evidence", evidence=e0),
        "C1": ConditionFlag(bool(c1), "numeric-evidence", evidence=e1),
        "C2": ConditionFlag(bool(c2), "numeric-evidence", evidence=e2),
        "C3": ConditionFlag(bool(c3), "numeric-evidence", evidence=e3),
        "C4": ConditionFlag(bool(c4), "numeric-evidence", evidence=e4),
        "C5": ConditionFlag(bool(c5), "numeric-evidence", evidence=e5),
    }
    return ConditionReport(flags=flags, n_terms=N)
