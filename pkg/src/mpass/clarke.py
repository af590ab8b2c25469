"""Sampled Clarke calculus: generalized directional derivatives, finite
subdifferential estimates, their min-norm element, and the scaled residual
(1 + |x|) * min |y*| that the critical-point machinery drives to zero.

Gradient sampling realizes the subdifferential: gradients of a locally
Lipschitz map at nearby points of differentiability span, in the limit of
small radius, the generalized gradient at the base point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import Array, Functional, SamplingError, SolverConfig, rng_for, sample_in_ball

#: Radius levels r * 2^-k used both for the w-offsets of the directional
#: derivative and for shrinking-radius diagnostics.
RADIUS_LEVELS = 4


@dataclass(frozen=True)
class SubdifferentialEstimate:
    """Finite gradient sample near a base point plus its min-norm element.

    `weights` is the simplex certificate: nonnegative, summing to one, with
    gradients.T @ weights == min_norm_point (re-checkable via `certified`).
    """

    base_point: Array
    gradients: Array          # (k, dim)
    min_norm_point: Array
    min_norm_value: float
    sampling_radius: float
    weights: Array            # (k,)

    def certified(self, tol: float = 1e-8) -> bool:
        w = self.weights
        if np.any(w < -tol) or abs(float(np.sum(w)) - 1.0) > tol:
            return False
        recon = self.gradients.T @ w
        scale = 1.0 + float(np.max(np.abs(self.gradients), initial=0.0))
        return bool(np.linalg.norm(recon - self.min_norm_point) <= tol * scale)

    @property
    def gradient_spread(self) -> float:
        """Max deviation of the sampled gradients from their mean; at smooth
        points this is about (local Hessian norm) * sampling_radius."""
        mean = np.mean(self.gradients, axis=0)
        return float(np.max(np.linalg.norm(self.gradients - mean, axis=1), initial=0.0))


# ---------------------------------------------------------------------------
# generalized directional derivative
# ---------------------------------------------------------------------------

def directional_derivative_detailed(f: Functional, x: Array, v: Array, cfg: SolverConfig):
    """Estimate of Phi^0(x, v) with per-level values and a stabilization flag.

    The limsup over w -> x, t -> 0+ is realized as a max of difference
    quotients over a two-parameter grid: offset radii r * 2^-k and steps
    t in {rho, rho/2, rho/4} at each level, with the step normalized by
    |v| so the quotient grid is shared across directions at the same base
    point.  The returned value is the max over the finest two levels.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        raise ValueError("direction v must be nonzero")
    r = cfg.sampling_radius
    levels = []
    for k in range(RADIUS_LEVELS):
        rho = r * 0.5 ** k
        rng = rng_for(cfg.rng_seed, f"clarke.dd.level{k}", x, np.array([rho]))
        w = np.vstack([x[None, :], sample_in_ball(rng, x, rho, cfg.sample_count)])
        best = -np.inf
        for t in (rho, rho / 2.0, rho / 4.0):
            th = t / vnorm
            quot = (f.values(w + th * v) - f.values(w)) / th
            best = max(best, float(np.max(quot)))
        levels.append(best)
    value = max(levels[-2], levels[-1])
    stabilized = abs(levels[-1] - levels[-2]) <= cfg.tol("dd_stabilize") * (1.0 + abs(value))
    return value, stabilized, levels


def directional_derivative(f: Functional, x: Array, v: Array, cfg: SolverConfig) -> float:
    """Phi^0(x, v) estimate; see `directional_derivative_detailed`."""
    value, _, _ = directional_derivative_detailed(f, x, v, cfg)
    return value


# ---------------------------------------------------------------------------
# min-norm element of a convex hull
# ---------------------------------------------------------------------------

def _face_minimizer(Q: Array, idx: Array) -> Array:
    # minimize |sum a_i g_i|^2 over the affine hull sum a_i = 1 (KKT system);
    # lstsq tolerates rank-deficient faces from duplicate gradients
    k = len(idx)
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = 2.0 * Q[np.ix_(idx, idx)]
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return sol[:k]


def min_norm_element(gradients, gap_tol: float = 1e-10, max_iter: int = 10_000):
    """Minimum-norm point of conv(gradients) with its simplex weights.

    Monotone convex-combination descent in Wolfe's minimum-norm-point
    style: a major cycle adds the vertex minimizing <x, g_i> (first minimal
    index on ties), minor cycles minimize exactly over the active face and
    back-track to the simplex, dropping vertices whose weight hits zero.
    Terminates when the duality gap |x|^2 - min_i <x, g_i> falls below
    `gap_tol`.  The initial vertex is the first gradient of minimal norm,
    so the path is deterministic.
    """
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    if G.shape[0] == 0:
        raise ValueError("gradient list must be nonempty")
    m = G.shape[0]
    Q = G @ G.T
    lam = np.zeros(m)
    lam[int(np.argmin(np.diag(Q)))] = 1.0
    for _ in range(max_iter):
        p = Q @ lam                       # p_i = <x, g_i> for x = lam @ G
        xx = float(lam @ p)
        s = int(np.argmin(p))
        if xx - float(p[s]) <= gap_tol:
            break
        active = np.flatnonzero(lam > 0.0)
        if s not in active:
            active = np.sort(np.append(active, s))
        w = lam[active]
        for _ in range(m + 1):            # minor cycles
            alpha = _face_minimizer(Q, active)
            if np.all(alpha >= -1e-14):
                w = np.maximum(alpha, 0.0)
                break
            shrink = alpha < w
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(shrink & (alpha < 0.0), w / (w - alpha), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            w = (1.0 - theta) * w + theta * alpha
            w[w < 1e-15] = 0.0
            keep = w > 0.0
            if np.all(keep):
                break
            active = active[keep]
            w = w[keep]
        lam[:] = 0.0
        lam[active] = w
    total = float(np.sum(lam))
    if total > 0:
        lam = lam / total
    point = G.T @ lam
    return point, lam


# ---------------------------------------------------------------------------
# subdifferential sampling
# ---------------------------------------------------------------------------

def subdifferential_sample(f: Functional, x: Array, cfg: SolverConfig,
                           radius: float | None = None) -> SubdifferentialEstimate:
    """Gradient sample at `sample_count` points uniform in the ball around x.

    Draws where `grad_ae` declines (near a catalogued kink) are redrawn; if
    the redraw budget is exhausted the base point is reported, since that
    only happens when the oracle declines on a set of positive measure.
    """
    x = np.asarray(x, dtype=float)
    r = cfg.sampling_radius if radius is None else float(radius)
    rng = rng_for(cfg.rng_seed, "clarke.subdiff", x, np.array([r]))
    grads = []
    attempts = 0
    limit = 60 * cfg.sample_count
    while len(grads) < cfg.sample_count:
        need = cfg.sample_count - len(grads)
        attempts += need
        if attempts > limit:
            raise SamplingError(
                f"could not sample {cfg.sample_count} gradients near {x.tolist()}: "
                "the a.e. gradient oracle keeps declining")
        pts = sample_in_ball(rng, x, r, need)
        for p in pts:
            g = f.gradient(p)
            if g is not None:
                grads.append(g)
    G = np.asarray(grads[: cfg.sample_count], dtype=float)
    point, weights = min_norm_element(G, gap_tol=cfg.tol("min_norm_gap"))
    return SubdifferentialEstimate(
        base_point=x,
        gradients=G,
        min_norm_point=point,
        min_norm_value=float(np.linalg.norm(point)),
        sampling_radius=r,
        weights=weights,
    )


def scaled_residual(f: Functional, x: Array, cfg: SolverConfig,
                    radius: float | None = None) -> float:
    """(1 + |x|) * min-norm of the sampled subdifferential at x."""
    est = subdifferential_sample(f, x, cfg, radius=radius)
    return (1.0 + float(np.linalg.norm(np.asarray(x, dtype=float)))) * est.min_norm_value
