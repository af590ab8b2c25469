"""Ekeland-principle refinement on finitely sampled metric spaces.

From a point u with value(u) <= inf + eps, iterated penalized descent
produces a point v with value(v) <= value(u), dist(u, v) <= lambda, and
value(w) >= value(v) - (eps/lambda) dist(v, w) for every inspected witness.
The three clauses are packaged as a re-checkable certificate rather than a
proof: exactly what the minimax construction consumes downstream.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class MetricSpaceView:
    """A metric space sampled through callables.

    `dist` must be symmetric with dist(x, x) = 0 and satisfy the triangle
    inequality within the declared estimator slack; `neighbors(x, radius)`
    returns the finite candidate list explored from x (for grid spaces this
    is usually the whole grid; the radius only informs the generator).
    """

    dist: Callable[[Any, Any], float]
    value: Callable[[Any], float]
    neighbors: Callable[[Any, float], Sequence]
    name: str = ""


@dataclass
class EkelandCertificate:
    start: Any
    result: Any
    epsilon: float
    lam: float
    witnesses_checked: int
    max_violation: float
    value_start: float
    value_result: float
    dist_start_result: float
    steps: int
    terminated: bool
    slack: float
    step_distance_sum: float = 0.0
    precondition_note: str = "caller asserts value(start) <= inf + epsilon on the reachable sample"


@dataclass
class ClauseCheck:
    name: str
    ok: bool
    margin: float
    worst_witness: int = -1


@dataclass
class VerificationReport:
    clauses: list[ClauseCheck] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.clauses)

    def worst(self) -> ClauseCheck:
        return min(self.clauses, key=lambda c: c.margin)


def _slack_for(value_start: float) -> float:
    return 1e-10 * (1.0 + abs(value_start))


def ekeland_refine(space: MetricSpaceView, u, epsilon: float, lam: float,
                   budget: int = 200) -> EkelandCertificate:
    """Penalized descent v_{k+1} = argmin_w value(w) + (eps/lam) dist(v_k, w).

    A step is accepted only when the penalized score improves on value(v_k)
    by more than the slack, so the value sequence is strictly decreasing and
    the total step distance telescopes to at most lam whenever the entry
    precondition value(u) <= inf + eps holds on the explored sample.  On
    exit the final candidate scan doubles as the clause-3 witness set.
    """
    if epsilon <= 0 or lam <= 0:
        raise ValueError("epsilon and lambda must be positive")
    v = u
    value_v = float(space.value(u))
    if not np.isfinite(value_v):
        raise ValueError("value(start) must be finite")
    value_start = value_v
    slack = _slack_for(value_start)
    ratio = epsilon / lam
    steps = 0
    moved = 0.0
    terminated = False
    witnesses: list = []
    while True:
        cands = list(space.neighbors(v, lam))
        if not cands:
            terminated = True
            break
        vals = np.array([float(space.value(w)) for w in cands])
        dists = np.array([float(space.dist(v, w)) for w in cands])
        scores = vals + ratio * dists
        feasible = scores < value_v - slack
        if np.any(feasible):
            if steps >= budget:
                witnesses = cands
                break  # still improving: non-terminated certificate
            # near-infimum selection: among candidates whose penalized score
            # improves, take the smallest value (ties to the lowest index)
            masked = np.where(feasible, vals, np.inf)
            best = int(np.argmin(masked))
            v = cands[best]
            value_v = float(vals[best])
            moved += float(dists[best])
            steps += 1
            continue
        witnesses = cands
        terminated = True
        break
    # clause-3 violations over the final scan: value(v) - ratio*d - value(w)
    if witnesses:
        wvals = np.array([float(space.value(w)) for w in witnesses])
        wdist = np.array([float(space.dist(v, w)) for w in witnesses])
        keep = wdist > 0.0  # w != result
        if np.any(keep):
            violation = float(np.max(value_v - ratio * wdist[keep] - wvals[keep]))
        else:
            violation = 0.0
        checked = int(np.sum(keep))
    else:
        violation = 0.0
        checked = 0
    return EkelandCertificate(
        start=u,
        result=v,
        epsilon=epsilon,
        lam=lam,
        witnesses_checked=checked,
        max_violation=violation,
        value_start=value_start,
        value_result=value_v,
        dist_start_result=float(space.dist(u, v)),
        steps=steps,
        terminated=terminated,
        slack=slack,
        step_distance_sum=moved,
    )


def verify_certificate(space: MetricSpaceView, cert: EkelandCertificate,
                       extra_witnesses: Sequence = ()) -> VerificationReport:
    """Re-check the three clauses; reports margins and never aborts.

    Margins are signed so that nonnegative (within certificate slack) means
    the clause holds; clause 3 is evaluated on `extra_witnesses`.
    """
    report = VerificationReport()
    slack = cert.slack
    v_start = float(space.value(cert.start))
    v_res = float(space.value(cert.result))
    m1 = v_start - v_res
    report.clauses.append(ClauseCheck("value(result) <= value(start)", m1 >= -slack, m1))
    d = float(space.dist(cert.start, cert.result))
    m2 = cert.lam - d
    report.clauses.append(ClauseCheck("dist(start, result) <= lambda", m2 >= -slack, m2))
    ratio = cert.epsilon / cert.lam
    worst_margin = np.inf
    worst_idx = -1
    for i, w in enumerate(extra_witnesses):
        dw = float(space.dist(cert.result, w))
        if dw == 0.0:
            continue
        margin = float(space.value(w)) - v_res + ratio * dw
        if margin < worst_margin:
            worst_margin = margin
            worst_idx = i
    if worst_idx < 0:
        report.clauses.append(ClauseCheck("value(w) > value(result) - (eps/lam) d(result, w)", True, np.inf))
    else:
        report.clauses.append(ClauseCheck(
            "value(w) > value(result) - (eps/lam) d(result, w)",
            worst_margin >= -slack, float(worst_margin), worst_idx))
    return report


def grid_space_1d(xs, values) -> MetricSpaceView:
    """Complete 1D grid space with |.| metric; neighbors = the whole grid."""
    xs = np.asarray(xs, dtype=float)
    values = np.asarray(values, dtype=float)
    if xs.shape != values.shape:
        raise ValueError("grid and values must have matching shapes")
    handles = list(range(len(xs)))

    def dist(i, j):
        return abs(float(xs[i] - xs[j]))

    def value(i):
        return float(values[i])

    def neighbors(i, radius):
        return handles

    return MetricSpaceView(dist=dist, value=value, neighbors=neighbors, name="grid1d")
