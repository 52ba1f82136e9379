"""The four discrete fixed-point iterations, recorded like trajectories.

All anchored schemes share one update kernel, so the identities
"halpern = anchored scheme with f = 0" and "lions = anchored scheme with a
constant f" hold bitwise, not just approximately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MembershipViolation
from .operators import ConstantMap, Operator, Problem
from .sets import MEMBERSHIP_TOL, as_point, norm
from .schedules import theta_sequence


@dataclass(eq=False)
class IterateSequence:
    """States x_1 .. x_N of a scheme plus per-iterate diagnostics.

    ``step_norms[n-1]`` is the displacement the scheme's update applies at
    x_n, the discrete counterpart of a derivative norm.
    """

    scheme: str
    states: np.ndarray
    residuals: np.ndarray
    step_norms: np.ndarray
    thetas: np.ndarray
    operator: Operator
    problem: Problem | None = None
    anchor: np.ndarray | None = None
    theta_source: object = None

    @property
    def indices(self):
        return np.arange(1, len(self.states) + 1)

    @property
    def dim(self):
        return self.states.shape[1]

    def distances_to(self, q):
        return norm(self.states - as_point(q, self.dim))

    def to_csv(self, path, q_star=None):
        write_series_csv(
            path,
            index_name="n",
            index_values=self.indices,
            states=self.states,
            residuals=self.residuals,
            deriv_norms=self.step_norms,
            dist_qstar=None if q_star is None else self.distances_to(q_star),
            index_format="d",
        )


def render_series_csv(index_name, index_values, states, residuals,
                      deriv_norms, dist_qstar=None, index_format=".17g", dim=None):
    """Shared CSV layout: index, coordinates, residual, deriv_norm, dist_qstar."""
    d = states.shape[1] if len(states) else (dim or 0)
    header = [index_name] + [f"x_{i}" for i in range(d)] + [
        "residual", "deriv_norm", "dist_qstar"]
    lines = [",".join(header)]
    for row in range(len(states)):
        cells = [format(index_values[row], index_format)]
        cells += [format(v, ".17g") for v in states[row]]
        cells.append(format(residuals[row], ".17g"))
        cells.append(format(deriv_norms[row], ".17g"))
        cells.append("" if dist_qstar is None else format(dist_qstar[row], ".17g"))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_series_csv(path, index_name, index_values, states, residuals,
                     deriv_norms, dist_qstar=None, index_format=".17g"):
    text = render_series_csv(index_name, index_values, states, residuals,
                             deriv_norms, dist_qstar, index_format)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _check_theta(value, n, lo_open):
    if lo_open:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"theta_{n} = {value} outside (0, 1]")
    else:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"theta_{n} = {value} outside [0, 1]")
    return value


def _run_anchored(T, f, theta_source, x1, n_states, scheme,
                  problem=None, anchor=None, source=None):
    """x_{n+1} = theta_n f(x_n) + (1 - theta_n) T(x_n), states 1..n_states."""
    theta_of = theta_sequence(theta_source)
    x = as_point(x1, T.dim)
    states = np.empty((n_states, T.dim))
    residuals = np.empty(n_states)
    step_norms = np.empty(n_states)
    thetas = np.empty(max(n_states - 1, 0))
    for n in range(1, n_states + 1):
        states[n - 1] = x
        Tx = T(x)
        residuals[n - 1] = norm(x - Tx)
        th = _check_theta(theta_of(n), n, lo_open=True)
        x_next = th * f(x) + (1.0 - th) * Tx
        step_norms[n - 1] = norm(x_next - x)
        if n < n_states:
            thetas[n - 1] = th
            x = x_next
    return IterateSequence(scheme=scheme, states=states, residuals=residuals,
                           step_norms=step_norms, thetas=thetas, operator=T,
                           problem=problem, anchor=anchor, theta_source=source)


def iterate_dds(problem, theta_source, x1, n_states):
    """Anchored contraction (viscosity) iteration on a full problem.

    Requires x_1 in the constraint set and theta_n in (0, 1].
    """
    if n_states < 1:
        raise ValueError("need at least one state")
    x1 = as_point(x1, problem.dim)
    dist = float(problem.set.distance(x1))
    if dist > MEMBERSHIP_TOL:
        raise MembershipViolation(
            f"x1 lies {dist:.3e} outside the constraint set"
        )
    return _run_anchored(problem.T, problem.f, theta_source, x1, n_states,
                         scheme="dds", problem=problem, source=theta_source)


def iterate_halpern(T, theta_source, x1, n_states):
    """x_{n+1} = (1 - theta_n) T(x_n): the anchored scheme with f = 0."""
    if n_states < 1:
        raise ValueError("need at least one state")
    zero = ConstantMap(np.zeros(T.dim))
    seq = _run_anchored(T, zero, theta_source, x1, n_states, scheme="halpern",
                        source=theta_source)
    return seq


def iterate_lions(T, u, theta_source, x1, n_states):
    """x_{n+1} = theta_n u + (1 - theta_n) T(x_n): anchored at the point u."""
    if n_states < 1:
        raise ValueError("need at least one state")
    u = as_point(u, T.dim)
    seq = _run_anchored(T, ConstantMap(u), theta_source, x1, n_states,
                        scheme="lions", anchor=u, source=theta_source)
    return seq


def iterate_km(T, theta_source, x1, n_states):
    """Relaxed iteration x_{n+1} = theta_n x_n + (1 - theta_n) T(x_n).

    theta_n may touch 0 (pure Picard step) or 1 (no move).  Read as an
    explicit Euler step of x' + x = T(x), the effective step size of the
    update is 1 - theta_n, not theta_n; keep that in mind when matching the
    family against a variable-step discretization.
    """
    if n_states < 1:
        raise ValueError("need at least one state")
    theta_of = theta_sequence(theta_source)
    x = as_point(x1, T.dim)
    states = np.empty((n_states, T.dim))
    residuals = np.empty(n_states)
    step_norms = np.empty(n_states)
    thetas = np.empty(max(n_states - 1, 0))
    for n in range(1, n_states + 1):
        states[n - 1] = x
        Tx = T(x)
        residuals[n - 1] = norm(x - Tx)
        th = _check_theta(theta_of(n), n, lo_open=False)
        x_next = th * x + (1.0 - th) * Tx
        step_norms[n - 1] = norm(x_next - x)
        if n < n_states:
            thetas[n - 1] = th
            x = x_next
    return IterateSequence(scheme="km", states=states, residuals=residuals,
                           step_norms=step_norms, thetas=thetas, operator=T,
                           theta_source=theta_source)
