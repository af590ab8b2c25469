"""Minimax construction on discrete path space.

Pipeline: estimate the mountain-pass level gamma by descent on the nodewise
path maximum; intersect the separating set with the super-level set
{Phi >= gamma}; for each epsilon of a decreasing schedule trim the best
path where it leaves the epsilon-neighborhood of that intersection, add the
hinge penalty Psi(x) = max(0, eps^2 - eps dist_delta(x, F_gamma)), refine
with the Ekeland principle under the path metric rho, and extract from the
refined path's max-set a point carrying the quantitative bounds

    (1 + |x|) min|y*|  <= 3 eps / 2,
    dist_delta(x, F_gamma) <= 3 eps / 2,
    gamma + eps^2 <= Phi(x) + Psi(x) <= gamma + 5 eps^2 / 4,

each checked with explicitly reported slack.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import clarke, ekeland, geodesic
from .oracle import (Array, BOUNDARY, ClosedSetOracle, ContractViolation,
                     Functional, SolverConfig, rng_for)


class TrimError(RuntimeError):
    """The path never leaves the epsilon-neighborhood of F_gamma on the
    required sides; retry with a smaller epsilon."""


class EpsilonInadmissible(ValueError):
    """epsilon violates 0 < eps < min(1, dist(z0), dist(z1)) / 2."""

    def __init__(self, epsilon: float, bound: float):
        self.epsilon = epsilon
        self.bound = bound
        super().__init__(f"epsilon={epsilon} outside admissible range (0, {bound})")


# ---------------------------------------------------------------------------
# discrete paths
# ---------------------------------------------------------------------------

@dataclass
class DiscretePath:
    """Polygonal path: strictly increasing grid in [0, 1], nodes with fixed
    endpoints, and cached functional values."""

    grid: Array      # (N+1,)
    nodes: Array     # (N+1, dim)
    values: Array    # (N+1,) cached Phi(node)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.grid) < 3:
            raise ValueError("a discrete path needs at least 3 nodes")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("path grid must be strictly increasing")

    @property
    def n_segments(self) -> int:
        return len(self.grid) - 1

    def copy(self) -> "DiscretePath":
        return DiscretePath(self.grid.copy(), self.nodes.copy(), self.values.copy())

    @staticmethod
    def straight(f: Functional, z0: Array, z1: Array, n_nodes: int) -> "DiscretePath":
        z0 = np.asarray(z0, dtype=float)
        z1 = np.asarray(z1, dtype=float)
        grid = np.linspace(0.0, 1.0, n_nodes + 1)
        nodes = z0[None, :] + grid[:, None] * (z1 - z0)[None, :]
        return DiscretePath(grid, nodes, f.values(nodes))

    def with_node(self, i: int, x: Array, f: Functional) -> "DiscretePath":
        p = self.copy()
        p.nodes[i] = x
        p.values[i] = f.value(x)
        return p


def path_max(f: Functional, p: DiscretePath):
    """Maximum cached node value and every index attaining it within the
    relative tie tolerance 1e-12 (1 + |max|)."""
    m = float(np.max(p.values))
    tie = 1e-12 * (1.0 + abs(m))
    idx = tuple(int(i) for i in np.flatnonzero(p.values >= m - tie))
    return m, idx


def _respace(path: DiscretePath, f: Functional) -> DiscretePath:
    # redistribute nodes to near-equal chord length (string-method style)
    seg = np.linalg.norm(np.diff(path.nodes, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return path
    targets = np.linspace(0.0, total, len(path.grid))
    new_nodes = np.empty_like(path.nodes)
    for j in range(path.nodes.shape[1]):
        new_nodes[:, j] = np.interp(targets, cum, path.nodes[:, j])
    new_nodes[0] = path.nodes[0]
    new_nodes[-1] = path.nodes[-1]
    return DiscretePath(path.grid.copy(), new_nodes, f.values(new_nodes))


# ---------------------------------------------------------------------------
# minimax level
# ---------------------------------------------------------------------------

@dataclass
class MinimaxEstimate:
    gamma: float
    best_path: DiscretePath
    history: list[tuple[int, float]]
    stagnant: bool = False
    geometry_ok: bool = True


def gamma_estimate(f: Functional, z0: Array, z1: Array, cfg: SolverConfig) -> MinimaxEstimate:
    """Descent on the discrete minimax inf over paths of max node value.

    Each iteration moves every interior max-set node along the negative
    min-norm sampled subgradient with backtracking on the path maximum,
    then tries an equal-chord redistribution; the best path so far is kept,
    so the recorded history is nonincreasing.  Nodes whose min-norm value
    falls below the stationarity tolerance are pinned (they are numerically
    Clarke-critical, and moving them would only let the nodewise maximum
    slip below the saddle value).
    """
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    if np.array_equal(z0, z1):
        grid = np.linspace(0.0, 1.0, cfg.path_nodes + 1)
        nodes = np.repeat(z0[None, :], cfg.path_nodes + 1, axis=0)
        path = DiscretePath(grid, nodes, f.values(nodes))
        gamma = float(f.value(z0))
        return MinimaxEstimate(gamma, path, [(0, gamma)])
    path = DiscretePath.straight(f, z0, z1, cfg.path_nodes)
    best = path.copy()
    best_max, _ = path_max(f, best)
    history = [(0, best_max)]
    geometry_ok = max(float(f.value(z0)), float(f.value(z1))) < best_max
    stationarity = cfg.tol("stationarity")
    improve_tol = cfg.tol("gamma_improve")
    patience = cfg.itol("gamma_patience")
    since_improvement = 0
    n_iters = cfg.itol("gamma_iters")
    for it in range(1, n_iters + 1):
        cur_max, max_idx = path_max(f, path)
        moved = False
        for i in max_idx:
            if i == 0 or i == path.n_segments:
                continue
            est = clarke.subdifferential_sample(f, path.nodes[i], cfg)
            if est.min_norm_value <= stationarity:
                continue
            direction = -est.min_norm_point / est.min_norm_value
            step = float(np.linalg.norm(z1 - z0)) / max(1, path.n_segments)
            for _ in range(25):
                cand = path.nodes[i] + step * direction
                cand_val = f.value(cand)
                new_max = max(float(np.max(np.delete(path.values, i))), cand_val)
                if new_max < cur_max - 1e-15 * (1.0 + abs(cur_max)):
                    path.nodes[i] = cand
                    path.values[i] = cand_val
                    cur_max = new_max
                    moved = True
                    break
                step *= 0.5
        if moved:
            spaced = _respace(path, f)
            if float(np.max(spaced.values)) <= float(np.max(path.values)) + 1e-15 * (1.0 + abs(cur_max)):
                path = spaced
        cur_max, _ = path_max(f, path)
        if cur_max < best_max - improve_tol * (1.0 + abs(best_max)):
            best = path.copy()
            best_max = cur_max
            since_improvement = 0
        else:
            since_improvement += 1
        history.append((it, best_max))
        if since_improvement >= patience:
            return MinimaxEstimate(best_max, best, history, stagnant=True, geometry_ok=geometry_ok)
    return MinimaxEstimate(best_max, best, history, stagnant=False, geometry_ok=geometry_ok)


# ---------------------------------------------------------------------------
# separating set intersected with the super-level set
# ---------------------------------------------------------------------------

def f_gamma_oracle(F: ClosedSetOracle, f: Functional, gamma: float,
                   level_cut_tol: float) -> ClosedSetOracle:
    """Oracle for F_gamma = F intersect {Phi >= gamma - level_cut_tol}.

    The augmented gap keeps the sign of the base gap and adds the level
    deficit, so its zero set is exactly the intersection while sign changes
    still witness transitions between the two complement components.
    """
    def gap(x):
        g = F.gap(x)
        s = 1.0 if g >= 0 else -1.0
        deficit = max(0.0, gamma - level_cut_tol - f.value(x))
        return s * (abs(g) + deficit)

    def gap_batch(pts):
        g = F.gaps(pts)
        s = np.where(g >= 0, 1.0, -1.0)
        deficit = np.maximum(0.0, gamma - level_cut_tol - f.values(pts))
        return s * (np.abs(g) + deficit)

    lip = None
    if F.gap_lipschitz_hint is not None and f.lipschitz_hint is not None:
        lip = F.gap_lipschitz_hint + f.lipschitz_hint
    return ClosedSetOracle(indicator_gap=gap, level_tol=F.level_tol,
                           gap_batch=gap_batch, gap_lipschitz_hint=lip,
                           name=f"{F.name}&level")


@dataclass
class Crossing:
    segment: int
    point: Array
    phi: float
    in_level_set: bool


@dataclass
class CrossingReport:
    crossings: list[Crossing]
    applicable: bool
    all_in_level_set: bool

    @property
    def verdict(self) -> str:
        if not self.applicable:
            return "not-applicable"
        return "separates" if self.all_in_level_set else "crossings-below-level"


def _bisect_segment(F: ClosedSetOracle, a: Array, b: Array, tol: float) -> Array:
    ga, gb = F.gap(a), F.gap(b)
    if abs(ga) <= F.level_tol:
        return a.copy()
    if abs(gb) <= F.level_tol:
        return b.copy()
    lo, hi = 0.0, 1.0
    s_lo = np.sign(ga)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = F.gap(a + mid * (b - a))
        if abs(g) <= F.level_tol or hi - lo <= tol:
            return a + mid * (b - a)
        if np.sign(g) == s_lo:
            lo = mid
        else:
            hi = mid
    return a + 0.5 * (lo + hi) * (b - a)


def separation_check(F: ClosedSetOracle, f: Functional, gamma: float,
                     p: DiscretePath, cfg: SolverConfig) -> CrossingReport:
    """Locate every sign change of the level gap along p and report whether
    each crossing lies in {Phi >= gamma - tol}.

    Raises ContractViolation when the endpoints sit in different components
    yet no crossing is found (the oracle is inconsistent with itself).
    """
    tol = cfg.tol("bisect")
    level_tol = cfg.tol("fgamma_tol")
    gaps = F.gaps(p.nodes)
    signs = np.where(np.abs(gaps) <= F.level_tol, 0.0, np.sign(gaps))
    crossings: list[Crossing] = []
    for i in range(p.n_segments):
        if signs[i] == 0.0:
            y = p.nodes[i].copy()
        elif signs[i + 1] == 0.0:
            continue  # handled when the next segment starts at the boundary
        elif signs[i] * signs[i + 1] < 0:
            y = _bisect_segment(F, p.nodes[i], p.nodes[i + 1], tol)
        else:
            continue
        phi = f.value(y)
        crossings.append(Crossing(i, y, phi, phi >= gamma - level_tol))
    comp0 = F.component_of(p.nodes[0])
    comp1 = F.component_of(p.nodes[-1])
    applicable = comp0 != comp1 and BOUNDARY not in (comp0, comp1)
    if applicable and not crossings:
        raise ContractViolation(
            "endpoints lie in different components but the path shows no sign change")
    all_in = bool(crossings) and all(c.in_level_set for c in crossings)
    return CrossingReport(crossings, applicable, all_in)


# ---------------------------------------------------------------------------
# penalty
# ---------------------------------------------------------------------------

def admissible_epsilon(f: Functional, F: ClosedSetOracle, gamma: float,
                       z0: Array, z1: Array, cfg: SolverConfig,
                       gcfg: Optional[geodesic.GeodesicConfig] = None) -> float:
    """Upper end of the admissible epsilon range:
    (1/2) min(1, dist_delta(z0, F_gamma), dist_delta(z1, F_gamma))."""
    gcfg = gcfg or _fast_geodesic_cfg(cfg)
    Fg = f_gamma_oracle(F, f, gamma, cfg.tol("fgamma_tol"))
    d0 = geodesic.dist_delta_to_set(np.asarray(z0, float), Fg, gcfg)
    d1 = geodesic.dist_delta_to_set(np.asarray(z1, float), Fg, gcfg)
    return 0.5 * min(1.0, d0, d1)


def penalty_psi(x: Array, F: ClosedSetOracle, f: Functional, gamma: float,
                epsilon: float, cfg: SolverConfig,
                eps_bound: Optional[float] = None,
                gcfg: Optional[geodesic.GeodesicConfig] = None) -> float:
    """Psi(x) = max(0, eps^2 - eps dist_delta(x, F_gamma)).

    When `eps_bound` (from `admissible_epsilon`) is supplied the epsilon is
    validated against it and rejected with the computed admissible range.
    """
    if epsilon <= 0:
        raise EpsilonInadmissible(epsilon, eps_bound if eps_bound is not None else np.inf)
    if eps_bound is not None and epsilon >= eps_bound:
        raise EpsilonInadmissible(epsilon, eps_bound)
    gcfg = gcfg or _fast_geodesic_cfg(cfg)
    Fg = f_gamma_oracle(F, f, gamma, cfg.tol("fgamma_tol"))
    d = geodesic.dist_delta_to_set(np.asarray(x, float), Fg, gcfg)
    return max(0.0, epsilon * epsilon - epsilon * d)


def _fast_geodesic_cfg(cfg: SolverConfig) -> geodesic.GeodesicConfig:
    # straight-chord deltas inside the hot loops; the slack ledger carries
    # the upper-bound character of the estimate
    return geodesic.GeodesicConfig(
        quadrature_points=cfg.quadrature_points, refine_nodes=0, refine_iters=0,
        probe_count=cfg.itol("dist_probes"), rng_seed=cfg.rng_seed)


# ---------------------------------------------------------------------------
# trimming
# ---------------------------------------------------------------------------

@dataclass
class TrimmedSegment:
    t0_index: int
    t1_index: int


def _node_distances(path: DiscretePath, Fg: ClosedSetOracle, epsilon: float,
                    gcfg: geodesic.GeodesicConfig) -> Array:
    """Per-node dist_delta to F_gamma, with a cheap certified lower bound
    short-circuiting nodes that are clearly farther than 3 eps / 2."""
    out = np.empty(len(path.grid))
    gaps = None
    if Fg.gap_lipschitz_hint is not None and Fg.gap_lipschitz_hint > 0:
        gaps = np.abs(Fg.gaps(path.nodes)) / Fg.gap_lipschitz_hint
    for i, x in enumerate(path.nodes):
        if gaps is not None:
            lower = geodesic.delta_lower_bound(x, float(gaps[i]))
            if lower > 1.5 * epsilon:
                out[i] = lower
                continue
        out[i] = geodesic.dist_delta_to_set(x, Fg, gcfg)
    return out


def trim_path(path: DiscretePath, Fg: ClosedSetOracle, epsilon: float,
              node_dists: Array) -> TrimmedSegment:
    """t0 = last node in component 0 with dist >= eps; t1 = first node after
    it in component 1 with dist >= eps.  Both must be interior."""
    comps = [Fg.component_of(x) for x in path.nodes]
    t0 = None
    for i in range(len(path.grid)):
        if comps[i] == 0 and node_dists[i] >= epsilon:
            t0 = i
    if t0 is None:
        raise TrimError("no node lies in component 0 at distance >= epsilon; use a smaller epsilon")
    t1 = None
    for i in range(t0 + 1, len(path.grid)):
        if comps[i] == 1 and node_dists[i] >= epsilon:
            t1 = i
            break
    if t1 is None:
        raise TrimError("no node past t0 lies in component 1 at distance >= epsilon; use a smaller epsilon")
    if t0 == 0 and t1 == len(path.grid) - 1:
        raise TrimError("trim produced the full path; refine the grid or shrink epsilon")
    return TrimmedSegment(t0, t1)


# ---------------------------------------------------------------------------
# path refinement helpers
# ---------------------------------------------------------------------------

def insert_level_crossings(path: DiscretePath, Fg: ClosedSetOracle, f: Functional,
                           tol: float) -> DiscretePath:
    """Insert the bisected F_gamma crossing of every sign-change segment as
    an actual path node, so the nodewise maximum sees the crossing value."""
    gaps = Fg.gaps(path.nodes)
    signs = np.where(np.abs(gaps) <= Fg.level_tol, 0.0, np.sign(gaps))
    new_params = []
    new_nodes = []
    for i in range(path.n_segments):
        if signs[i] != 0.0 and signs[i + 1] != 0.0 and signs[i] * signs[i + 1] < 0:
            y = _bisect_segment(Fg, path.nodes[i], path.nodes[i + 1], tol)
            lam = _segment_parameter(path.nodes[i], path.nodes[i + 1], y)
            s = path.grid[i] + lam * (path.grid[i + 1] - path.grid[i])
            if path.grid[i] + 1e-12 < s < path.grid[i + 1] - 1e-12:
                new_params.append(s)
                new_nodes.append(y)
    if not new_params:
        return path
    grid = np.concatenate([path.grid, new_params])
    nodes = np.vstack([path.nodes, new_nodes])
    order = np.argsort(grid, kind="stable")
    return DiscretePath(grid[order], nodes[order], f.values(nodes[order]))


def _segment_parameter(a: Array, b: Array, y: Array) -> float:
    d = b - a
    dn = float(np.dot(d, d))
    if dn == 0:
        return 0.5
    return float(np.clip(np.dot(y - a, d) / dn, 0.0, 1.0))


def refine_top_band(path: DiscretePath, f: Functional, band: float,
                    max_len: float, max_new: int = 64) -> DiscretePath:
    """Insert midpoints into segments adjacent to near-maximal nodes until
    those segments are shorter than max_len, bounding the gap between the
    nodewise maximum and the true polygon supremum near the top."""
    path = path.copy()
    added = 0
    while added < max_new:
        m = float(np.max(path.values))
        seg_len = np.linalg.norm(np.diff(path.nodes, axis=0), axis=1)
        top = path.values >= m - band
        split = [i for i in range(path.n_segments)
                 if seg_len[i] > max_len and (top[i] or top[i + 1])]
        if not split:
            break
        params = [(path.grid[i] + path.grid[i + 1]) / 2.0 for i in split]
        mids = [(path.nodes[i] + path.nodes[i + 1]) / 2.0 for i in split]
        grid = np.concatenate([path.grid, params])
        nodes = np.vstack([path.nodes, mids])
        order = np.argsort(grid, kind="stable")
        path = DiscretePath(grid[order], nodes[order], f.values(nodes[order]))
        added += len(split)
    return path


# ---------------------------------------------------------------------------
# the epsilon step
# ---------------------------------------------------------------------------

@dataclass
class CeramiPoint:
    """A point extracted at one epsilon, carrying the three checked bounds.

    `bounds` maps a short name to (lhs, rhs, ok); `slack` itemizes the
    reported slack terms entering each check.
    """

    x: Array
    epsilon: float
    phi_value: float
    dist_delta_F: float
    scaled_residual: float
    penalty_value: float
    gamma: float
    bounds: dict = field(default_factory=dict)
    slack: dict = field(default_factory=dict)
    certificate: Optional[ekeland.EkelandCertificate] = None
    trim: Optional[TrimmedSegment] = None
    max_set: tuple = ()
    path: Optional[DiscretePath] = None

    @property
    def all_bounds_ok(self) -> bool:
        return all(ok for (_, _, ok) in self.bounds.values())


def _phi_psi_values(nodes: Array, f: Functional, Fg: ClosedSetOracle,
                    epsilon: float, gcfg: geodesic.GeodesicConfig) -> Array:
    """Phi + Psi at stacked points, with the certified lower-bound prefilter
    skipping the distance estimate wherever Psi is provably zero."""
    phi = f.values(nodes)
    psi = np.zeros(len(nodes))
    lower = None
    if Fg.gap_lipschitz_hint is not None and Fg.gap_lipschitz_hint > 0:
        eucl = np.abs(Fg.gaps(nodes)) / Fg.gap_lipschitz_hint
        norms = np.linalg.norm(nodes, axis=1)
        lower = eucl / (1.0 + norms + eucl)
    for i, x in enumerate(nodes):
        if lower is not None and lower[i] >= epsilon:
            continue
        d = geodesic.dist_delta_to_set(x, Fg, gcfg)
        psi[i] = max(0.0, epsilon * epsilon - epsilon * d)
    return phi + psi


def _taper_weights(n_nodes: int, ramp: int = 4) -> Array:
    # 0 at the trim endpoints, 1 in the interior, linear ramps in between
    w = np.ones(n_nodes)
    ramp = min(ramp, max(1, (n_nodes - 1) // 2))
    for j in range(n_nodes):
        w[j] = min(1.0, j / ramp, (n_nodes - 1 - j) / ramp)
    w[0] = w[-1] = 0.0
    return w


def _descent_fields(path: DiscretePath, phipsi: Array, f: Functional,
                    cfg: SolverConfig, thetas, taper: Array) -> list[Array]:
    """Pseudo-gradient fields, one per working-set threshold: at nodes
    within theta of the maximum take the negative min-norm sampled
    subgradient scaled to 1 + |node|, tapered to zero at the trim
    endpoints; other nodes stay put.  This is the discrete stand-in for the
    partition-of-unity descent construction.  Subgradient samples are
    shared across thresholds (the working sets nest)."""
    m = float(np.max(phipsi))
    widest = np.flatnonzero(phipsi >= m - max(thetas))
    cache: dict[int, Array] = {}
    for j in widest:
        if taper[j] == 0.0:
            continue
        est = clarke.subdifferential_sample(f, path.nodes[j], cfg)
        if est.min_norm_value <= 0.0:
            cache[int(j)] = np.zeros(path.nodes.shape[1])
            continue
        scale = (1.0 + float(np.linalg.norm(path.nodes[j]))) * taper[j]
        cache[int(j)] = -est.min_norm_point / est.min_norm_value * scale
    fields = []
    for theta in thetas:
        v = np.zeros_like(path.nodes)
        for j in np.flatnonzero(phipsi >= m - theta):
            if int(j) in cache:
                v[j] = cache[int(j)]
        fields.append(v)
    return fields


def cerami_step(f: Functional, F: ClosedSetOracle, gamma_est: MinimaxEstimate,
                epsilon: float, cfg: SolverConfig,
                sampling_radius: Optional[float] = None) -> CeramiPoint:
    """One epsilon of the construction; see the module docstring.

    The working path is the minimax best path with its F_gamma crossings
    inserted as nodes and the segments near the top locally refined; the
    Ekeland step runs with eps^2/4 in place of eps and lambda = eps/2.
    """
    gamma = gamma_est.gamma
    path = gamma_est.best_path.copy()
    z0, z1 = path.nodes[0], path.nodes[-1]
    gcfg = _fast_geodesic_cfg(cfg)
    level_cut = cfg.tol("fgamma_tol")
    Fg = f_gamma_oracle(F, f, gamma, level_cut)

    eps_bound = admissible_epsilon(f, F, gamma, z0, z1, cfg, gcfg)
    if not (0.0 < epsilon < eps_bound):
        raise EpsilonInadmissible(epsilon, eps_bound)

    # make the crossing visible to the nodewise max, then keep the top of
    # the path finely resolved so the premise max Phi < gamma + eps^2/4
    # survives node insertion
    r_eff = sampling_radius if sampling_radius is not None else min(
        cfg.sampling_radius, epsilon / 200.0)
    path = insert_level_crossings(path, Fg, f, cfg.tol("bisect"))
    curv = f.curvature_hint or 10.0
    target_len = np.sqrt(epsilon ** 2 / (2.0 * max(curv, 1e-9)))
    path = refine_top_band(path, f, band=epsilon ** 2, max_len=target_len)
    premise_margin = float(np.max(path.values)) - gamma
    if premise_margin >= epsilon ** 2 / 4.0:
        raise TrimError(
            f"refined path maximum exceeds gamma + eps^2/4 by {premise_margin - epsilon**2/4.0:.3e}; "
            "the minimax estimate needs more iterations or a finer grid")

    node_dists = _node_distances(path, Fg, epsilon, gcfg)
    trim = trim_path(path, Fg, epsilon, node_dists)
    sub_grid = path.grid[trim.t0_index:trim.t1_index + 1]
    sub_nodes = path.nodes[trim.t0_index:trim.t1_index + 1]
    trimmed = DiscretePath(sub_grid, sub_nodes, path.values[trim.t0_index:trim.t1_index + 1])

    taper = _taper_weights(len(sub_grid))
    ek_eps = epsilon ** 2 / 4.0
    lam = epsilon / 2.0

    def value(p: DiscretePath) -> float:
        return float(np.max(_phi_psi_values(p.nodes, f, Fg, epsilon, gcfg)))

    def dist(p: DiscretePath, q: DiscretePath) -> float:
        return geodesic.path_metric_rho(p, q, gcfg)

    def neighbors(p: DiscretePath, radius: float):
        phipsi = _phi_psi_values(p.nodes, f, Fg, epsilon, gcfg)
        thetas = (0.0, epsilon ** 2 / 16.0, epsilon ** 2 / 4.0, epsilon ** 2)
        cands = []
        seen = set()
        for v in _descent_fields(p, phipsi, f, cfg, thetas, taper):
            if not np.any(v):
                continue
            key = v.tobytes()
            if key in seen:
                continue  # nested working sets often coincide
            seen.add(key)
            # |v_j| <= 1 + |node_j|, so a spatial step of h*radius moves the
            # path by about h*radius in the metric rho
            for h in (1.0, 0.5, 0.25, 0.125, 0.03125, 0.0078125):
                nodes = p.nodes + (h * radius) * v
                nodes[0] = p.nodes[0]
                nodes[-1] = p.nodes[-1]
                cands.append(DiscretePath(p.grid.copy(), nodes, f.values(nodes)))
        return cands

    space = ekeland.MetricSpaceView(dist=dist, value=value, neighbors=neighbors,
                                    name="trimmed-path-space")
    cert = ekeland.ekeland_refine(space, trimmed, ek_eps, lam,
                                  budget=cfg.itol("ekeland_budget"))
    fhat: DiscretePath = cert.result

    # extraction: over the max-set of Phi + Psi pick the node of smallest
    # scaled residual (ties to the lowest index)
    phipsi = _phi_psi_values(fhat.nodes, f, Fg, epsilon, gcfg)
    m = float(np.max(phipsi))
    tie = cfg.tol("tie") * (1.0 + abs(m))
    max_set = tuple(int(i) for i in np.flatnonzero(phipsi >= m - tie))
    estimates = {i: clarke.subdifferential_sample(f, fhat.nodes[i], cfg, radius=r_eff)
                 for i in max_set}
    residuals = {i: (1.0 + float(np.linalg.norm(fhat.nodes[i]))) * estimates[i].min_norm_value
                 for i in max_set}
    tbar = min(max_set, key=lambda i: (residuals[i], i))
    x = fhat.nodes[tbar].copy()

    phi_x = float(f.value(x))
    dist_x = geodesic.dist_delta_to_set(x, Fg, gcfg)
    psi_x = max(0.0, epsilon ** 2 - epsilon * dist_x)
    res_x = residuals[tbar]

    # measured slack: how far the nodewise max sits below the crossing
    # witness of the refined path, plus the level-cut tolerance
    crossing_excess = 0.0
    refined_crossings = insert_level_crossings(fhat, Fg, f, cfg.tol("bisect"))
    if refined_crossings is not fhat:
        cross_phipsi = _phi_psi_values(refined_crossings.nodes, f, Fg, epsilon, gcfg)
        crossing_excess = max(0.0, float(np.max(cross_phipsi)) - m)
    slack_lower = crossing_excess + level_cut + tie
    slack_upper = max(0.0, premise_margin - epsilon ** 2 / 4.0) + tie
    # residual-check slack: sampling bias of the min-norm estimate; the
    # measured gradient spread is ~ (local curvature) * radius at smooth
    # points but measures the subdifferential diameter at kinks, so the
    # catalogued curvature hint caps it there
    spread = estimates[tbar].gradient_spread
    if f.curvature_hint is not None:
        spread = min(spread, f.curvature_hint * r_eff)
    slack_res = (1.0 + float(np.linalg.norm(x))) * spread
    slack_dist = cert.slack + 1e-8

    val_x = phi_x + psi_x
    bounds = {
        "scaled_residual": (res_x, 1.5 * epsilon + slack_res,
                            res_x <= 1.5 * epsilon + slack_res),
        "dist_delta": (dist_x, 1.5 * epsilon + slack_dist, dist_x <= 1.5 * epsilon + slack_dist),
        "phi_plus_psi_lower": (gamma + epsilon ** 2 - slack_lower, val_x,
                               val_x >= gamma + epsilon ** 2 - slack_lower),
        "phi_plus_psi_upper": (val_x, gamma + 1.25 * epsilon ** 2 + slack_upper,
                               val_x <= gamma + 1.25 * epsilon ** 2 + slack_upper),
    }
    slack = {
        "lower": slack_lower,
        "upper": slack_upper,
        "residual": slack_res,
        "dist": slack_dist,
        "crossing_excess": crossing_excess,
        "premise_margin": premise_margin,
        "sampling_radius": r_eff,
    }
    return CeramiPoint(
        x=x, epsilon=epsilon, phi_value=phi_x, dist_delta_F=dist_x,
        scaled_residual=res_x, penalty_value=psi_x, gamma=gamma,
        bounds=bounds, slack=slack, certificate=cert, trim=trim,
        max_set=max_set, path=fhat,
    )


# ---------------------------------------------------------------------------
# the full sequence
# ---------------------------------------------------------------------------

@dataclass
class CeramiDiagnostics:
    epsilons: list[float]
    phi_values: list[float]
    dist_values: list[float]
    residuals: list[float]
    tail_pairwise_delta: float
    tail_pairwise_norm: float
    clipped_schedule: bool


def cerami_sequence(f: Functional, F: ClosedSetOracle, z0: Array, z1: Array,
                    cfg: SolverConfig):
    """One CeramiPoint per epsilon of the schedule plus clustering
    diagnostics over the tail (the empirical compactness check)."""
    gamma_est = gamma_estimate(f, z0, z1, cfg)
    gcfg = _fast_geodesic_cfg(cfg)
    bound = admissible_epsilon(f, F, gamma_est.gamma, z0, z1, cfg, gcfg)
    schedule = [e for e in cfg.epsilon_schedule if e < bound]
    clipped = len(schedule) != len(cfg.epsilon_schedule)
    if clipped:
        import warnings
        warnings.warn(
            f"epsilon schedule clipped to the admissible range (0, {bound:.6g})",
            RuntimeWarning, stacklevel=2)
    points = [cerami_step(f, F, gamma_est, e, cfg) for e in schedule]
    tail = points[len(points) // 2:]
    tail_delta = 0.0
    tail_norm = 0.0
    for i in range(len(tail)):
        for j in range(i + 1, len(tail)):
            tail_delta = max(tail_delta, geodesic.delta_estimate(tail[i].x, tail[j].x, gcfg))
            tail_norm = max(tail_norm, float(np.linalg.norm(tail[i].x - tail[j].x)))
    diags = CeramiDiagnostics(
        epsilons=[p.epsilon for p in points],
        phi_values=[p.phi_value for p in points],
        dist_values=[p.dist_delta_F for p in points],
        residuals=[p.scaled_residual for p in points],
        tail_pairwise_delta=tail_delta,
        tail_pairwise_norm=tail_norm,
        clipped_schedule=clipped,
    )
    return points, diags, gamma_est
