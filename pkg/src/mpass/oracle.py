"""Functional and closed-set oracles shared by every solver module.

A `Functional` wraps a locally Lipschitz map on R^n together with an
almost-everywhere gradient oracle; a `ClosedSetOracle` represents a closed
set F through a signed level function g with F = {g = 0}, the sign of g
distinguishing the two components of the complement.  `SolverConfig` holds
the seeded sampling/quadrature/path knobs used everywhere else.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

Array = np.ndarray

BOUNDARY = "boundary"


class EvaluationError(RuntimeError):
    """A functional evaluation came back non-finite."""

    def __init__(self, point: Array, value: float):
        self.point = np.asarray(point, dtype=float)
        self.value = value
        super().__init__(f"non-finite evaluation {value!r} at {self.point.tolist()}")


class SamplingError(RuntimeError):
    """Gradient sampling could not find points of differentiability."""


class ContractViolation(RuntimeError):
    """An oracle broke one of its declared invariants."""


# ---------------------------------------------------------------------------
# deterministic RNG splitting
# ---------------------------------------------------------------------------

def rng_for(seed: int, label: str, *arrays: Array) -> np.random.Generator:
    """Deterministic per-call-site generator.

    The stream is derived from the solver seed, a call-site label and the
    bytes of any arrays that identify the call (typically the base point),
    so repeated runs with one config are bit-identical while distinct call
    sites stay decorrelated.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(label.encode("utf-8"))
    for a in arrays:
        arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(arr.tobytes())
    words = [int(w) for w in np.frombuffer(h.digest(), dtype=np.uint64)]
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words))


def sample_in_ball(rng: np.random.Generator, center: Array, radius: float, count: int) -> Array:
    """`count` points uniform in the closed ball around `center`."""
    center = np.asarray(center, dtype=float)
    n = center.size
    g = rng.standard_normal((count, n))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = radius * rng.random(count) ** (1.0 / n)
    return center + g / norms * radii[:, None]


# ---------------------------------------------------------------------------
# solver configuration
# ---------------------------------------------------------------------------

#: Default named tolerances.  Integer-valued knobs (iteration counts,
#: patience, probe counts) live here too, stored as nonnegative reals.
DEFAULT_TOLERANCES: dict[str, float] = {
    "dd_stabilize": 1e-3,    # directional-derivative level agreement
    "hom": 1e-2,             # homogeneity / subadditivity check slack
    "support": 1e-2,         # <g, v> <= Phi^0(x, v) + support slack
    "kink_radius": 1e-9,     # grad_ae declines within this distance of a kink
    "min_norm_gap": 1e-10,   # duality gap for the min-norm element
    "tie": 1e-12,            # relative tie tolerance for path maxima
    "stationarity": 1e-2,    # min-norm value below which a node is pinned
    "level": 1e-8,           # |gap| <= level  <=>  on the set
    "bisect": 1e-12,         # parameter tolerance for crossing bisection
    "quad_rel": 1e-10,       # relative quadrature doubling tolerance
    "gamma_iters": 200.0,    # minimax descent iterations
    "gamma_patience": 30.0,  # iterations without improvement before stagnation
    "gamma_improve": 1e-12,  # minimal relative improvement that resets patience
    "ekeland_budget": 200.0, # accepted Ekeland steps
    "dist_probes": 0.0,      # probe directions for dist_delta_to_set (0 = 2*dim+8)
    "fgamma_tol": 1e-9,      # Phi >= gamma - fgamma_tol defines the level cut
}


@dataclass(frozen=True)
class SolverConfig:
    """Seeded knobs shared across the solver pipeline.

    `epsilon_schedule` must be strictly decreasing and positive; all counts
    must be at least 2.  `tolerances` entries override `DEFAULT_TOLERANCES`.
    """

    rng_seed: int = 0
    sampling_radius: float = 1e-3
    sample_count: int = 16
    quadrature_points: int = 16
    path_nodes: int = 64
    epsilon_schedule: tuple[float, ...] = (0.1, 0.05, 0.02, 0.01)
    tolerances: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.sampling_radius <= 0:
            raise ValueError("sampling_radius must be positive")
        for name in ("sample_count", "quadrature_points", "path_nodes"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched or any(e <= 0 for e in sched):
            raise ValueError("epsilon_schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("epsilon_schedule must be strictly decreasing")
        merged = dict(DEFAULT_TOLERANCES)
        for k, v in dict(self.tolerances).items():
            if v < 0:
                raise ValueError(f"tolerance {k!r} must be nonnegative")
            merged[k] = float(v)
        object.__setattr__(self, "epsilon_schedule", sched)
        object.__setattr__(self, "tolerances", merged)

    def tol(self, name: str) -> float:
        return self.tolerances[name]

    def itol(self, name: str) -> int:
        return int(round(self.tolerances[name]))


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Functional:
    """Locally Lipschitz map on R^dim with an a.e. gradient oracle.

    `eval` maps a point of shape (dim,) to a float.  `grad_ae` returns the
    gradient where the map is differentiable and None within `kink_radius`
    of the catalogued nonsmooth set.  `eval_batch` / `grad_batch`, when
    given, accept stacked points of shape (..., dim).  The hints bound the
    gradient norm / Hessian norm on the ball `hint_radius` and feed slack
    accounting; they are not required for correctness.
    """

    dim: int
    eval: Callable[[Array], float]
    grad_ae: Callable[[Array], Optional[Array]]
    lipschitz_hint: Optional[float] = None
    curvature_hint: Optional[float] = None
    hint_radius: float = 2.5
    eval_batch: Optional[Callable[[Array], Array]] = None
    grad_batch: Optional[Callable[[Array], Array]] = None
    name: str = ""

    def value(self, x: Array) -> float:
        v = float(self.eval(np.asarray(x, dtype=float)))
        if not np.isfinite(v):
            raise EvaluationError(x, v)
        return v

    def values(self, pts: Array) -> Array:
        """Evaluate on stacked points (..., dim)."""
        pts = np.asarray(pts, dtype=float)
        if self.eval_batch is not None:
            out = np.asarray(self.eval_batch(pts), dtype=float)
        else:
            flat = pts.reshape(-1, self.dim)
            out = np.array([self.eval(p) for p in flat]).reshape(pts.shape[:-1])
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(out)))[0]
            raise EvaluationError(pts.reshape(-1, self.dim)[bad[0]], float(np.atleast_1d(out)[tuple(bad)]))
        return out

    def gradient(self, x: Array) -> Optional[Array]:
        g = self.grad_ae(np.asarray(x, dtype=float))
        return None if g is None else np.asarray(g, dtype=float)

    def negated(self) -> "Functional":
        """The functional -f with the matching gradient oracle."""
        neg_batch = None
        if self.eval_batch is not None:
            ev = self.eval_batch
            neg_batch = lambda pts: -np.asarray(ev(pts))
        def neg_grad(x, _g=self.grad_ae):
            g = _g(x)
            return None if g is None else -np.asarray(g)
        return Functional(
            dim=self.dim,
            eval=lambda x, _e=self.eval: -float(_e(x)),
            grad_ae=neg_grad,
            lipschitz_hint=self.lipschitz_hint,
            curvature_hint=self.curvature_hint,
            hint_radius=self.hint_radius,
            eval_batch=neg_batch,
            name=f"neg_{self.name}" if self.name else "negated",
        )


def finite_difference_gradient(f: Functional, x: Array, step: float) -> Array:
    """Central-difference gradient, component i = (f(x+h e_i) - f(x-h e_i)) / 2h."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty(f.dim)
    for i in range(f.dim):
        e = np.zeros(f.dim)
        e[i] = step
        g[i] = (f.value(x + e) - f.value(x - e)) / (2.0 * step)
    return g


# ---------------------------------------------------------------------------
# closed-set oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedSetOracle:
    """Closed set F = {x : g(x) = 0} through a signed level function g.

    Component 0 of the complement is {g < 0}, component 1 is {g > 0};
    points with |g| <= level_tol count as boundary.  `gap_lipschitz_hint`,
    when present, upper-bounds the Lipschitz constant of g and enables a
    cheap lower bound on distances to F.
    """

    indicator_gap: Callable[[Array], float]
    level_tol: float = 1e-8
    gap_batch: Optional[Callable[[Array], Array]] = None
    gap_lipschitz_hint: Optional[float] = None
    name: str = ""

    def gap(self, x: Array) -> float:
        return float(self.indicator_gap(np.asarray(x, dtype=float)))

    def gaps(self, pts: Array) -> Array:
        pts = np.asarray(pts, dtype=float)
        if self.gap_batch is not None:
            return np.asarray(self.gap_batch(pts), dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        return np.array([self.gap(p) for p in flat]).reshape(pts.shape[:-1])

    def component_of(self, x: Array):
        g = self.gap(x)
        if abs(g) <= self.level_tol:
            return BOUNDARY
        return 1 if g > 0 else 0


def hyperplane_oracle(normal: Array, offset: float = 0.0, level_tol: float = 1e-8) -> ClosedSetOracle:
    """F = {x : <n, x> = offset} with the normal rescaled to unit length."""
    normal = np.asarray(normal, dtype=float)
    nrm = np.linalg.norm(normal)
    if nrm == 0:
        raise ValueError("normal must be nonzero")
    unit = normal / nrm
    off = float(offset) / nrm
    return ClosedSetOracle(
        indicator_gap=lambda x: float(np.dot(unit, x) - off),
        level_tol=level_tol,
        gap_batch=lambda pts: np.tensordot(np.asarray(pts, dtype=float), unit, axes=([-1], [0])) - off,
        gap_lipschitz_hint=1.0,
        name="hyperplane",
    )


# ---------------------------------------------------------------------------
# built-in functionals
# ---------------------------------------------------------------------------

def _kinked(dim, ev, ev_b, gr, gr_b, kink_dist, kink_radius, lip, curv, name):
    def grad_ae(x):
        if kink_dist is not None and kink_dist(x) <= kink_radius:
            return None
        return gr(x)
    return Functional(dim=dim, eval=ev, grad_ae=grad_ae, lipschitz_hint=lip,
                      curvature_hint=curv, eval_batch=ev_b, grad_batch=gr_b, name=name)


def _double_well(kink_radius: float) -> Functional:
    # Phi(x, y) = x^4 - x^2 + y^2; saddle at the origin with value 0.
    ev_b = lambda p: p[..., 0] ** 4 - p[..., 0] ** 2 + p[..., 1] ** 2
    gr_b = lambda p: np.stack([4 * p[..., 0] ** 3 - 2 * p[..., 0], 2 * p[..., 1]], axis=-1)
    return _kinked(2, lambda x: float(ev_b(x)), ev_b, lambda x: gr_b(x), gr_b,
                   None, kink_radius, lip=68.0, curv=74.0, name="double_well")


def _kink_well(kink_radius: float) -> Functional:
    # Phi(x, y) = (|x| - 1)^2 + y^2; kink along {x = 0}, saddle value 1.
    ev_b = lambda p: (np.abs(p[..., 0]) - 1.0) ** 2 + p[..., 1] ** 2
    gr_b = lambda p: np.stack([2.0 * (np.abs(p[..., 0]) - 1.0) * np.sign(p[..., 0]), 2 * p[..., 1]], axis=-1)
    return _kinked(2, lambda x: float(ev_b(x)), ev_b, lambda x: gr_b(x), gr_b,
                   lambda x: abs(float(x[0])), kink_radius, lip=9.0, curv=2.5, name="kink_well")


def _abs_functional(kink_radius: float) -> Functional:
    ev_b = lambda p: np.abs(p[..., 0])
    gr_b = lambda p: np.sign(p[..., 0])[..., None]
    return _kinked(1, lambda x: float(ev_b(x)), ev_b, lambda x: gr_b(x), gr_b,
                   lambda x: abs(float(x[0])), kink_radius, lip=1.0, curv=0.0, name="abs")


def _norm_sq(dim: int, kink_radius: float) -> Functional:
    ev_b = lambda p: np.sum(p * p, axis=-1)
    gr_b = lambda p: 2.0 * p
    return _kinked(dim, lambda x: float(ev_b(x)), ev_b, lambda x: gr_b(x), gr_b,
                   None, kink_radius, lip=6.0, curv=2.0, name="norm_sq")


#: Builders addressable by name.  The hamiltonian module registers its
#: action functional here on import.
FUNCTIONAL_BUILDERS: dict[str, Callable[..., Functional]] = {
    "double_well": lambda dim=2, kink_radius=1e-9: _double_well(kink_radius),
    "kink_well": lambda dim=2, kink_radius=1e-9: _kink_well(kink_radius),
    "abs": lambda dim=1, kink_radius=1e-9: _abs_functional(kink_radius),
    "norm_sq": lambda dim=2, kink_radius=1e-9: _norm_sq(dim, kink_radius),
}


def builtin_functional(name: str, dim: Optional[int] = None, kink_radius: float = 1e-9) -> Functional:
    """Look up a built-in functional by registry name."""
    try:
        builder = FUNCTIONAL_BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown functional {name!r}; known: {sorted(FUNCTIONAL_BUILDERS)}") from None
    if dim is None:
        return builder(kink_radius=kink_radius)
    return builder(dim=dim, kink_radius=kink_radius)
