"""Cyclic configurations of bounce points and the length functional on them.

A configuration q = (q_0, ..., q_{n-1}) lives on S^n with q_j != q_{j+1}
(indices mod n). Its length is the perimeter of the inscribed closed
polygon; critical points of the length are exactly the bounce sequences
of periodic billiard trajectories.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AmbientDimension,
    BilliardError,
    InvalidConfiguration,
    NoConvergence,
    OutOfChart,
    SeedCollapsed,
)
from .geometry import (
    ConvexBody,
    SurfacePoint,
    billiard_flow,
    make_chart,
    chart_to_surface,
    radial_point,
    surface_point,
    tangent_frame,
)

logger = logging.getLogger(__name__)

TOL_CRITICAL = 1e-9
TOL_ADJACENT_REL = 1e-6
TOL_GEO = 1e-8
TOL_LEN = 1e-8
ARMIJO = 1e-4


@dataclass(frozen=True, eq=False)
class Configuration:
    """Point of the cyclic configuration space Conf_n(S)."""

    body: ConvexBody
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.body.ambient_dim:
            raise InvalidConfiguration("points must be an (n, N+1) array")
        if pts.shape[0] < 2:
            raise InvalidConfiguration("a configuration needs n >= 2 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        gap = np.min(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1))
        if gap <= self.tol_adjacent:
            raise InvalidConfiguration(f"adjacent bounce points coincide (gap {gap:.3e})")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.body.N

    @property
    def tol_adjacent(self) -> float:
        return TOL_ADJACENT_REL * self.body.scale

    @cached_property
    def surface_points(self) -> tuple[SurfacePoint, ...]:
        return tuple(surface_point(self.body, p) for p in self.points)

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([sp.normal for sp in self.surface_points])

    @cached_property
    def frames(self) -> np.ndarray:
        """(n, N+1, N) stack of orthonormal tangent frames, one per point."""
        return np.array([tangent_frame(nv) for nv in self.normals])

    @classmethod
    def from_surface_points(cls, body: ConvexBody, pts: Sequence[SurfacePoint]) -> "Configuration":
        return cls(body, np.array([p.coords for p in pts]))


@dataclass(frozen=True)
class TangentField:
    """Tangent vectors v_j in T_{q_j}S, stored in the per-point frames."""

    components: np.ndarray
    frames: np.ndarray

    @property
    def ambient(self) -> np.ndarray:
        return np.einsum("jak,jk->ja", self.frames, self.components)

    def flat(self) -> np.ndarray:
        return self.components.reshape(-1)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.components)))


@dataclass(frozen=True, eq=False)
class CriticalOrbit:
    config: Configuration
    length: float
    grad_residual: float
    canonical_key: tuple
    rotation_number: int | None = None
    prime_period: int | None = None

    @property
    def n(self) -> int:
        return self.config.n

    def to_dict(self) -> dict:
        rec = {
            "body": self.config.body.describe(),
            "n": self.n,
            "points": self.config.points.tolist(),
            "length": self.length,
            "grad_residual": self.grad_residual,
            "canonical_key": [list(t) for t in self.canonical_key],
            "prime_period": self.prime_period,
        }
        if self.rotation_number is not None:
            rec["rotation_number"] = self.rotation_number
        return rec

    @classmethod
    def from_dict(cls, rec: dict, body: ConvexBody | None = None) -> "CriticalOrbit":
        from .geometry import body_from_spec

        body = body_from_spec(rec["body"]) if body is None else body
        return make_orbit(Configuration(body, np.array(rec["points"])))


# -- length and gradient ---------------------------------------------------------


def chords(config: Configuration) -> np.ndarray:
    """Chord vectors q_{j+1} - q_j."""
    return np.roll(config.points, -1, axis=0) - config.points


def _length_of(points: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)))


def length(config: Configuration) -> float:
    return _length_of(config.points)


def bisector_defects(config: Configuration) -> np.ndarray:
    """q'_j = u_{j-1} - u_j with u_j the unit chord from q_j to q_{j+1}."""
    c = chords(config)
    u = c / np.linalg.norm(c, axis=1)[:, None]
    return np.roll(u, 1, axis=0) - u


def gradient(config: Configuration) -> TangentField:
    """Differential of the length as a tangent field in the point frames."""
    qp = bisector_defects(config)
    comps = np.einsum("jak,ja->jk", config.frames, qp)
    return TangentField(comps, config.frames)


def grad_residual(config: Configuration) -> float:
    return gradient(config).sup_norm()


# -- dihedral action and comparisons -----------------------------------------


def dihedral_relabelings(n: int) -> list[np.ndarray]:
    """Index maps for the 2n elements of D_n acting on Z_n."""
    j = np.arange(n)
    rots = [(j + s) % n for s in range(n)]
    refl = [(s - j) % n for s in range(n)]
    return rots + refl


def relabel(config: Configuration, sigma) -> Configuration:
    return Configuration(config.body, config.points[np.asarray(sigma)])


def canonicalize(config: Configuration, tol_geo: float = TOL_GEO) -> tuple:
    """Lexicographically least rounded coordinate sequence over D_n."""
    grid = np.rint(config.points / tol_geo).astype(np.int64)
    best = None
    for sigma in dihedral_relabelings(config.n):
        key = tuple(tuple(int(v) for v in row) for row in grid[sigma])
        if best is None or key < best:
            best = key
    return best


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def aligned_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest sup-distance between ``a`` and the D_n relabelings of ``b``."""
    if a.shape != b.shape:
        return math.inf
    return min(float(np.max(np.linalg.norm(a - b[s], axis=1))) for s in dihedral_relabelings(len(b)))


def iterate(config: Configuration, m: int) -> Configuration:
    """m-fold iterate: the configuration repeated m times."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return config
    return Configuration(config.body, np.tile(config.points, (m, 1)))


def prime_period(config: Configuration, tol_geo: float = TOL_GEO) -> int:
    n = config.n
    for d in range(1, n + 1):
        if n % d == 0 and d >= 2:
            base = config.points[:d]
            if np.max(np.linalg.norm(config.points - np.tile(base, (n // d, 1)), axis=1)) <= tol_geo:
                return d
    return n


def distinct(a: CriticalOrbit, b: CriticalOrbit, tol_geo: float = TOL_GEO, tol_len: float = TOL_LEN) -> bool:
    """Whether two critical orbits are geometrically distinct trajectories."""
    na, nb = a.n, b.n
    if na != nb:
        hi, lo = (a, b) if na > nb else (b, a)
        if hi.n % lo.n == 0:
            m = hi.n // lo.n
            if aligned_distance(hi.config.points, iterate(lo.config, m).points) <= tol_geo:
                return False
        return True
    if a.canonical_key == b.canonical_key:
        return False
    if abs(a.length - b.length) > tol_len:
        return True
    return hausdorff(a.config.points, b.config.points) > tol_geo


def congruence_key(config: Configuration, grid: float = 1e-6) -> tuple:
    """D_n-canonical rounded distance matrix; equal for configurations that
    differ by an isometry fixing a round body's centre."""
    P = config.points - config.body.interior_point
    best = None
    for sigma in dihedral_relabelings(config.n):
        Q = P[sigma]
        D = np.linalg.norm(Q[:, None, :] - Q[None, :, :], axis=2)
        key = tuple(int(v) for v in np.rint(D / grid).ravel())
        if best is None or key < best:
            best = key
    return best


def rotation_number(config: Configuration) -> int:
    """Rotation number of a plane polygon about the body's interior point,
    normalised to 1 <= r <= n/2 (orientation is not recorded)."""
    if config.body.ambient_dim != 2:
        raise AmbientDimension("rotation number is defined for plane billiards only")
    rel = config.points - config.body.interior_point
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    steps = np.mod(np.roll(phi, -1) - phi, 2 * np.pi)
    r = int(round(np.sum(steps) / (2 * np.pi)))
    return min(r, config.n - r)


def make_orbit(config: Configuration, tol_geo: float = TOL_GEO) -> CriticalOrbit:
    rot = rotation_number(config) if config.body.ambient_dim == 2 else None
    return CriticalOrbit(
        config=config,
        length=length(config),
        grad_residual=grad_residual(config),
        canonical_key=canonicalize(config, tol_geo),
        rotation_number=rot,
        prime_period=prime_period(config, tol_geo),
    )


def reflow_deviation(orbit: CriticalOrbit) -> float:
    """Max distance between the bounce points of the billiard flow started at
    (q_0, q_1 - q_0) and the orbit's own sequence q_1, ..., q_{n-1}, q_0."""
    cfg = orbit.config
    p0 = cfg.surface_points[0]
    d0 = cfg.points[1] - cfg.points[0]
    d0 = d0 / np.linalg.norm(d0)
    flow = billiard_flow(cfg.body, p0, d0, cfg.n)
    target = np.roll(cfg.points, -1, axis=0)
    return float(np.max(np.linalg.norm(np.array([p.coords for p in flow]) - target, axis=1)))


# -- seeds ---------------------------------------------------------------------------


def polygon_seed(body: ConvexBody, n: int, r: int, phase: float = 0.0, plane: tuple[int, int] = (0, 1)) -> Configuration:
    """Radial projection of the (n, r) star polygon drawn in a coordinate plane."""
    i, k = plane
    pts = []
    for j in range(n):
        th = phase + 2 * np.pi * r * j / n
        u = np.zeros(body.ambient_dim)
        u[i], u[k] = np.cos(th), np.sin(th)
        pts.append(radial_point(body, u).coords)
    return Configuration(body, np.array(pts))


def random_configuration(body: ConvexBody, n: int, rng: np.random.Generator) -> Configuration:
    for _ in range(100):
        u = rng.standard_normal((n, body.ambient_dim))
        try:
            return Configuration(body, np.array([radial_point(body, v).coords for v in u]))
        except InvalidConfiguration:
            continue
    raise InvalidConfiguration("could not draw a random configuration")


def perturb(config: Configuration, size: float, rng: np.random.Generator) -> Configuration:
    body = config.body
    pts = []
    for sp in config.surface_points:
        ch = make_chart(body, sp)
        x = size * body.scale * rng.standard_normal(body.N)
        pts.append(chart_to_surface(ch, x).coords)
    return Configuration(body, np.array(pts))


def make_seeds(body: ConvexBody, n: int, count: int = 10, strategy: str = "mixed",
               rng_seed: int = 0, rotations: Iterable[int] | None = None) -> list[Configuration]:
    """Deterministic list of seeds.

    ``structured`` gives (n, r) star polygons in every coordinate plane at two
    phases; ``random`` gives ``count`` uniformly drawn configurations; ``mixed``
    gives the structured seeds, ``count`` perturbations of them and ``count``
    random ones.
    """
    rng = np.random.default_rng(rng_seed)
    rs = [r for r in range(1, n // 2 + 1) if math.gcd(n, r) == 1] if rotations is None else list(rotations)
    d = body.ambient_dim
    planes = [(i, k) for i in range(d) for k in range(i + 1, d)]
    structured = []
    if strategy in ("structured", "mixed"):
        for plane in planes:
            for r in rs:
                for phase in (0.0, np.pi / n):
                    try:
                        structured.append(polygon_seed(body, n, r, phase, plane))
                    except BilliardError:
                        pass
    seeds = list(structured)
    if strategy == "mixed" and structured:
        for i in range(count):
            base = structured[i % len(structured)]
            try:
                seeds.append(perturb(base, 0.02, rng))
            except BilliardError:
                pass
    if strategy in ("random", "mixed"):
        seeds.extend(random_configuration(body, n, rng) for _ in range(count))
    if strategy not in ("structured", "random", "mixed"):
        raise ValueError(f"unknown seeding strategy {strategy!r}")
    return seeds


# -- solvers ---------------------------------------------------------------------


def _chart_step(config: Configuration, delta: np.ndarray) -> Configuration:
    """Move every point by its chart displacement ``delta[j]`` (in frame coordinates)."""
    body = config.body
    pts = np.empty_like(config.points)
    for j, sp in enumerate(config.surface_points):
        ch = make_chart(body, sp)
        pts[j] = chart_to_surface(ch, delta[j]).coords
    gap = np.min(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1))
    if gap <= config.tol_adjacent:
        raise SeedCollapsed(f"adjacent points merged (gap {gap:.3e})")
    return Configuration(body, pts)


def _cap(delta: np.ndarray, limit: float) -> np.ndarray:
    big = np.max(np.linalg.norm(delta, axis=1))
    return delta if big <= limit else delta * (limit / big)


def gradient_ascent(config: Configuration, tol: float, max_iter: int = 5000) -> Configuration:
    """Armijo-backtracked ascent of the length; charts re-centred every step."""
    alpha = 0.1 * config.body.scale
    limit = 0.1 * config.body.scale
    L = length(config)
    for _ in range(max_iter):
        g = gradient(config).components
        if np.max(np.abs(g)) <= tol:
            return config
        while True:
            step = _cap(alpha * g, limit)
            try:
                trial = _chart_step(config, step)
                Lt = length(trial)
                ok = Lt >= L + ARMIJO * float(np.sum(step * g))
            except (OutOfChart, SeedCollapsed, InvalidConfiguration):
                ok = False
            if ok:
                config, L = trial, Lt
                alpha *= 1.5
                break
            alpha *= 0.5
            if alpha < 1e-14 * config.body.scale:
                return config
    return config


def newton_solve(config: Configuration, tol: float = TOL_CRITICAL, max_iter: int = 200,
                 polish: float = 1e-15) -> Configuration:
    """Levenberg-Marquardt damped Newton on the tangential gradient.

    Uses the exact chart Hessian, so it converges to saddles as well as to
    maxima. Iterates past ``tol`` down to ``polish`` (or until no further
    decrease) because degenerate orbits need near-exact criticality for
    their monodromy spectrum to be resolved.
    """
    from .spectral import chart_hessian

    limit = 0.1 * config.body.scale
    g = gradient(config).components
    res = float(np.linalg.norm(g))
    lam = 1e-6
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= polish:
            return config
        H = chart_hessian(config)
        Hn = np.linalg.norm(H, 2)
        gv = g.reshape(-1)
        while True:
            A = H @ H + lam * Hn**2 * np.eye(H.shape[0])
            delta = np.linalg.solve(A, -H @ gv).reshape(g.shape)
            delta = _cap(delta, limit)
            try:
                trial = _chart_step(config, delta)
                gt = gradient(trial).components
                rt = float(np.linalg.norm(gt))
                ok = rt < res
            except (OutOfChart, InvalidConfiguration):
                ok = False
            if ok:
                config, g, res = trial, gt, rt
                lam = max(lam / 10.0, 1e-16)
                break
            lam *= 8.0
            if lam > 1e8:
                if np.max(np.abs(g)) <= tol:
                    return config
                raise NoConvergence(f"damping blew up at gradient residual {np.max(np.abs(g)):.3e}")
    if np.max(np.abs(g)) <= tol:
        return config
    raise NoConvergence(f"gradient residual {np.max(np.abs(g)):.3e} after {max_iter} iterations")


@dataclass
class SeedFailure:
    index: int
    error: BilliardError

    def __str__(self):
        return f"seed {self.index}: {type(self.error).__name__}: {self.error}"


def solve_seed(seed: Configuration, mode: str = "newton", tol_critical: float = TOL_CRITICAL) -> CriticalOrbit:
    if mode == "maximize":
        cfg = gradient_ascent(seed, tol=max(tol_critical, 1e-5))
        cfg = newton_solve(cfg, tol_critical)
    elif mode == "newton":
        try:
            cfg = newton_solve(seed, tol_critical)
        except NoConvergence:
            # stalled in a local minimum of |grad L| far from any orbit: climb first
            cfg = newton_solve(gradient_ascent(seed, tol=1e-5), tol_critical)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return make_orbit(cfg)


def find_critical(body: ConvexBody, n: int, seeds: Sequence[Configuration], mode: str = "newton",
                  tol_critical: float = TOL_CRITICAL, tol_geo: float = TOL_GEO, tol_len: float = TOL_LEN,
                  failures: list | None = None, workers: int = 1) -> list[CriticalOrbit]:
    """Critical points of the length functional on Conf_n(S) reached from ``seeds``.

    Per-seed failures are logged and appended to ``failures`` when given.
    On round bodies orbits congruent under rotations are reported once.
    """
    if n < 2:
        raise ValueError("n must be >= 2")

    def run(item):
        i, seed = item
        if seed.n != n or seed.body is not body:
            return i, InvalidConfiguration("seed does not match body / n")
        try:
            return i, solve_seed(seed, mode, tol_critical)
        except BilliardError as exc:
            return i, exc

    items = list(enumerate(seeds))
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]

    kept: list[CriticalOrbit] = []
    seen_congruent = set()
    for i, res in sorted(results, key=lambda t: t[0]):
        if isinstance(res, BilliardError):
            logger.info("seed %d failed: %s", i, res)
            if failures is not None:
                failures.append(SeedFailure(i, res))
            continue
        if res.grad_residual > tol_critical:
            continue
        if body.isotropic:
            ck = congruence_key(res.config)
            if ck in seen_congruent:
                continue
            seen_congruent.add(ck)
        if all(distinct(res, k, tol_geo, tol_len) for k in kept):
            kept.append(res)
    return kept
