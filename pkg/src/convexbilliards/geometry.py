"""Implicit strictly convex hypersurfaces and the billiard map on them.

A body is the zero set S = {F = 0} of a smooth level function with F < 0
inside. Everything downstream (normals, shape operators, charts, the
reflection law) is derived from F, its gradient and its Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateGradient,
    GeometryError,
    GrazingRay,
    NoConvergence,
    NotOnSurface,
    NotStrictlyConvex,
    OutOfChart,
)

logger = logging.getLogger(__name__)

TOL_SURFACE_REL = 1e-10
TOL_GRAZING = 1e-8
TOL_UNIT = 1e-10
RETRACTION_MAX_STEPS = 50
RAY_MAX_ITERS = 100


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """A smooth strictly convex hypersurface given implicitly.

    Parameters
    ----------
    ambient_dim : int
        Dimension N+1 of the ambient space (>= 2).
    level_function, gradient, hessian : callable
        F, grad F and the Hessian of F as functions of a point in R^{N+1}.
    interior_point : array_like
        Any point with F < 0; used to orient normals outward and as the
        centre for radial projection and winding numbers.
    name, params : str, tuple
        Identification used in serialized records.
    scale : float, optional
        Diameter scale of the body. Estimated from radial shots along the
        coordinate axes when omitted.
    isotropic : bool
        True for round spheres, whose critical sets are whole orbits of the
        rotation group.

    Notes
    -----
    If F is positive at ``interior_point`` the sign of F (and of its
    derivatives) is flipped once at construction.
    """

    ambient_dim: int
    level_function: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    interior_point: np.ndarray
    name: str = "custom"
    params: tuple = ()
    scale: float | None = None
    isotropic: bool = False
    _sign: float = field(default=1.0, repr=False)

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ValueError("ambient dimension must be at least 2")
        c = _frozen(self.interior_point)
        if c.shape != (self.ambient_dim,):
            raise ValueError("interior_point has the wrong dimension")
        object.__setattr__(self, "interior_point", c)
        f0 = float(self.level_function(c))
        if f0 == 0.0:
            raise GeometryError("interior_point lies on the surface")
        if f0 > 0:
            object.__setattr__(self, "_sign", -1.0)
        if self.scale is None:
            reach = []
            for i in range(self.ambient_dim):
                e = np.zeros(self.ambient_dim)
                e[i] = 1.0
                reach.append(_radial_param(self, e, 1.0) + _radial_param(self, -e, 1.0))
            object.__setattr__(self, "scale", float(max(reach)))
        # outward orientation check at one surface point
        e0 = np.zeros(self.ambient_dim)
        e0[0] = 1.0
        p = c + _radial_param(self, e0, self.scale) * e0
        if np.dot(self.grad(p), p - c) <= 0:
            raise GeometryError("gradient does not point outward; level function is not convex-like")

    @property
    def N(self) -> int:
        """Dimension of the hypersurface."""
        return self.ambient_dim - 1

    @property
    def tol_surface(self) -> float:
        return TOL_SURFACE_REL * self.scale

    def F(self, x) -> float:
        return self._sign * float(self.level_function(np.asarray(x, dtype=float)))

    def grad(self, x) -> np.ndarray:
        return self._sign * np.asarray(self.gradient(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x) -> np.ndarray:
        return self._sign * np.asarray(self.hessian(np.asarray(x, dtype=float)), dtype=float)

    def describe(self) -> dict:
        return {"name": self.name, "params": [float(v) for v in self.params]}


@dataclass(frozen=True, eq=False)
class SurfacePoint:
    coords: np.ndarray
    unit_outward_normal: np.ndarray
    on_surface_residual: float

    @property
    def normal(self) -> np.ndarray:
        return self.unit_outward_normal


@dataclass(frozen=True, eq=False)
class Chart:
    """Graph chart over the tangent plane at ``base``.

    A chart coordinate x in R^N is sent to ``base + E x`` and then pushed
    along the normal line of the base point onto S.
    """

    body: ConvexBody
    base: SurfacePoint
    tangent_basis: np.ndarray
    radius: float
    retraction_tol: float = 1e-10


# -- root finding -----------------------------------------------------------


def _safeguarded_newton(f, df, lo, hi, ftol, max_iter):
    """Root of f in [lo, hi] with f(lo) < 0 < f(hi); Newton steps that leave
    the bracket (or stall) are replaced by bisection."""
    t = 0.5 * (lo + hi)
    dx_old = hi - lo
    for _ in range(max_iter):
        ft = f(t)
        if abs(ft) <= ftol:
            return t, True
        if ft < 0:
            lo = t
        else:
            hi = t
        dft = df(t)
        newton_ok = dft != 0.0
        if newton_ok:
            t_new = t - ft / dft
            newton_ok = lo < t_new < hi and abs(t_new - t) < 0.5 * dx_old
        if not newton_ok:
            t_new = 0.5 * (lo + hi)
        dx_old = abs(t_new - t)
        t = t_new
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(hi), 1.0):
            return t, abs(f(t)) <= ftol
    return t, abs(f(t)) <= ftol


def _radial_param(body: ConvexBody, u: np.ndarray, guess: float) -> float:
    c = body.interior_point
    f = lambda t: body.F(c + t * u)
    df = lambda t: float(np.dot(body.grad(c + t * u), u))
    hi = guess
    for _ in range(200):
        if f(hi) > 0:
            break
        hi *= 2.0
    else:
        raise GeometryError("body appears unbounded along a ray")
    ftol = 1e-15 * max(1.0, abs(f(hi)))
    t, _ = _safeguarded_newton(f, df, 0.0, hi, ftol, 200)
    return t


# -- points, frames, shape operator -----------------------------------------


def tangent_frame(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the hyperplane orthogonal to ``normal``.

    Gram-Schmidt on the N coordinate axes least aligned with the normal;
    ties go to the lowest axis index. Deterministic in the normal.
    """
    normal = np.asarray(normal, dtype=float)
    d = normal.size
    order = sorted(range(d), key=lambda i: (abs(normal[i]), i))
    axes = sorted(order[: d - 1])
    M = np.zeros((d, d))
    M[:, 0] = normal
    for k, i in enumerate(axes, start=1):
        M[i, k] = 1.0
    Q, R = np.linalg.qr(M)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q[:, 1:]


def shape_operator(body: ConvexBody, p: SurfacePoint, frame: np.ndarray | None = None) -> np.ndarray:
    """Second fundamental form in a tangent frame (positive definite on a
    strictly convex body with outward normal)."""
    E = tangent_frame(p.normal) if frame is None else frame
    g = np.linalg.norm(body.grad(p.coords))
    II = E.T @ body.hess(p.coords) @ E / g
    return 0.5 * (II + II.T)


def surface_point(body: ConvexBody, x, tol: float | None = None, check_convexity: bool = True) -> SurfacePoint:
    """Validate ``x`` as a point of S and attach its outward normal."""
    x = _frozen(x)
    if x.shape != (body.ambient_dim,):
        raise ValueError(f"expected a point in R^{body.ambient_dim}")
    tol = body.tol_surface if tol is None else tol
    r = abs(body.F(x))
    if r > tol:
        raise NotOnSurface(f"|F| = {r:.3e} exceeds {tol:.3e}")
    g = body.grad(x)
    gn = np.linalg.norm(g)
    if gn <= 1e-14:
        raise DegenerateGradient("gradient vanishes on the surface")
    sp = SurfacePoint(x, _frozen(g / gn), r)
    if check_convexity:
        ev = np.linalg.eigvalsh(shape_operator(body, sp))
        if ev[0] <= 0:
            raise NotStrictlyConvex(
                f"second fundamental form not positive definite at {x.tolist()} (min eig {ev[0]:.3e})"
            )
    return sp


def radial_point(body: ConvexBody, direction) -> SurfacePoint:
    """Intersection of S with the ray from the interior point along ``direction``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    t = _radial_param(body, u, 0.5 * body.scale)
    x = body.interior_point + t * u
    return surface_point(body, x)


# -- projections -------------------------------------------------------------


def project_tangent(body: ConvexBody, p: SurfacePoint, v) -> np.ndarray:
    """Orthogonal projection of an ambient vector onto T_p S."""
    v = np.asarray(v, dtype=float)
    n = p.normal
    return v - np.dot(v, n) * n


def project_chord_orthogonal(u, v) -> np.ndarray:
    """Projection of ``v`` onto the hyperplane orthogonal to the unit vector ``u``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > TOL_UNIT:
        raise ValueError("chord direction must be a unit vector")
    return v - np.dot(v, u) * u


# -- billiard map --------------------------------------------------------------


def ray_intersect(body: ConvexBody, p: SurfacePoint, d, tol_grazing: float = TOL_GRAZING,
                  max_iters: int = RAY_MAX_ITERS) -> SurfacePoint:
    """Second intersection of the chord from ``p`` in the inward direction ``d``."""
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > TOL_UNIT:
        raise ValueError("direction must be a unit vector")
    cos_in = float(np.dot(d, p.normal))
    if cos_in >= -tol_grazing:
        raise GrazingRay(f"direction not strictly inward (<d, n> = {cos_in:.3e})")
    x0 = p.coords
    f = lambda t: body.F(x0 + t * d)
    df = lambda t: float(np.dot(body.grad(x0 + t * d), d))

    hi = 1.01 * body.scale
    for _ in range(60):
        if f(hi) > 0:
            break
        hi *= 2.0
    else:
        raise NoConvergence("could not leave the body along the ray")
    lo = 0.5 * hi
    for _ in range(200):
        if f(lo) < 0:
            break
        lo *= 0.5
    else:
        raise NoConvergence("could not locate the interior part of the chord")
    ftol = 1e-3 * body.tol_surface
    t, ok = _safeguarded_newton(f, df, lo, hi, ftol, max_iters)
    q = x0 + t * d
    if abs(body.F(q)) > body.tol_surface:
        raise NoConvergence(f"ray intersection residual {abs(body.F(q)):.3e} after {max_iters} iterations")
    if t <= tol_grazing:
        raise GrazingRay("degenerate chord length")
    return surface_point(body, q)


def reflect(p: SurfacePoint, d, tol_grazing: float = TOL_GRAZING) -> np.ndarray:
    """Specular reflection of an incoming unit direction at ``p``."""
    d = np.asarray(d, dtype=float)
    dn = float(np.dot(d, p.normal))
    if dn <= tol_grazing:
        raise GrazingRay(f"incoming direction does not hit the wall from inside (<d, n> = {dn:.3e})")
    return d - 2.0 * dn * p.normal


def billiard_flow(body: ConvexBody, p0: SurfacePoint, d0, k: int) -> list[SurfacePoint]:
    """Follow the billiard for ``k`` bounces starting at ``p0`` along ``d0``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    d = np.asarray(d0, dtype=float)
    d = d / np.linalg.norm(d)
    p = p0
    out = []
    for i in range(k):
        try:
            q = ray_intersect(body, p, d)
            out.append(q)
            if i + 1 < k:
                d = reflect(q, d)
        except (GrazingRay, NoConvergence) as exc:
            exc.bounce = i
            raise
        p = q
    return out


# -- charts ----------------------------------------------------------------------


def make_chart(body: ConvexBody, p: SurfacePoint, radius: float | None = None,
               retraction_tol: float = 1e-10) -> Chart:
    radius = 0.25 * body.scale if radius is None else radius
    return Chart(body, p, _frozen(tangent_frame(p.normal)), radius, retraction_tol)


def chart_to_surface(chart: Chart, x, check_convexity: bool = True) -> SurfacePoint:
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) > chart.radius:
        raise OutOfChart(f"|x| = {np.linalg.norm(x):.3e} beyond chart radius {chart.radius:.3e}")
    body = chart.body
    n = chart.base.normal
    y = chart.base.coords + chart.tangent_basis @ x
    t = 0.0
    tol = 1e-3 * body.tol_surface
    for _ in range(RETRACTION_MAX_STEPS):
        z = y + t * n
        fz = body.F(z)
        if abs(fz) <= tol:
            break
        dfz = float(np.dot(body.grad(z), n))
        if dfz <= 0:
            raise OutOfChart("normal line leaves the chart domain")
        t -= fz / dfz
    else:
        z = y + t * n
        if abs(body.F(z)) > body.tol_surface:
            raise OutOfChart("retraction to the surface did not converge")
    return surface_point(body, y + t * n, check_convexity=check_convexity)


def surface_to_chart(chart: Chart, p: SurfacePoint) -> np.ndarray:
    coords = p.coords if isinstance(p, SurfacePoint) else np.asarray(p, dtype=float)
    x = chart.tangent_basis.T @ (coords - chart.base.coords)
    if np.linalg.norm(x) > chart.radius:
        raise OutOfChart("point outside the chart domain")
    return x


# -- built-in bodies ----------------------------------------------------------------


def sphere(radius: float = 1.0, dim: int = 3, center: Sequence[float] | None = None) -> ConvexBody:
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    return ConvexBody(
        ambient_dim=dim,
        level_function=lambda x: float(np.dot(x - c, x - c) / r2 - 1.0),
        gradient=lambda x: 2.0 * (x - c) / r2,
        hessian=lambda x: 2.0 * np.eye(dim) / r2,
        interior_point=c,
        name="circle" if dim == 2 else "sphere",
        params=(float(radius),),
        scale=2.0 * float(radius),
        isotropic=True,
    )


def circle(radius: float = 1.0) -> ConvexBody:
    return sphere(radius, dim=2)


def ellipsoid(*semi_axes: float) -> ConvexBody:
    a = np.asarray(semi_axes, dtype=float)
    if a.size < 2 or np.any(a <= 0):
        raise ValueError("need at least two positive semi-axes")
    inv2 = 1.0 / a**2
    return ConvexBody(
        ambient_dim=a.size,
        level_function=lambda x: float(np.sum(x * x * inv2) - 1.0),
        gradient=lambda x: 2.0 * x * inv2,
        hessian=lambda x: np.diag(2.0 * inv2),
        interior_point=np.zeros(a.size),
        name="ellipse" if a.size == 2 else "ellipsoid",
        params=tuple(float(v) for v in a),
        scale=2.0 * float(a.max()),
        isotropic=bool(np.all(a == a[0])),
    )


def superellipsoid(semi_axes: Sequence[float], exponent: int) -> ConvexBody:
    """sum (x_i/a_i)^p = 1 for an even exponent p >= 2.

    For p > 2 the curvature vanishes where a coordinate is zero, so the
    strict-convexity check fails at those points.
    """
    a = np.asarray(semi_axes, dtype=float)
    p = int(exponent)
    if p < 2 or p % 2:
        raise ValueError("exponent must be an even integer >= 2")
    return ConvexBody(
        ambient_dim=a.size,
        level_function=lambda x: float(np.sum((x / a) ** p) - 1.0),
        gradient=lambda x: p * (x / a) ** (p - 1) / a,
        hessian=lambda x: np.diag(p * (p - 1) * (x / a) ** (p - 2) / a**2),
        interior_point=np.zeros(a.size),
        name="superellipsoid",
        params=tuple(float(v) for v in a) + (float(p),),
        scale=2.0 * float(a.max()),
    )


def quartic(semi_axes: Sequence[float], kappa: float) -> ConvexBody:
    """Ellipsoid with a quartic correction, sum u^2 + kappa sum u^4 = 1 + kappa,
    u_i = x_i/a_i. Strictly convex for kappa >= 0 and not integrable for
    kappa > 0, which makes it a useful generic test table."""
    a = np.asarray(semi_axes, dtype=float)
    k = float(kappa)
    if k < 0:
        raise ValueError("kappa must be nonnegative")
    return ConvexBody(
        ambient_dim=a.size,
        level_function=lambda x: float(np.sum((x / a) ** 2) + k * np.sum((x / a) ** 4) - 1.0 - k),
        gradient=lambda x: (2.0 * x / a + 4.0 * k * (x / a) ** 3) / a,
        hessian=lambda x: np.diag((2.0 + 12.0 * k * (x / a) ** 2) / a**2),
        interior_point=np.zeros(a.size),
        name="quartic",
        params=tuple(float(v) for v in a) + (k,),
        scale=2.0 * float(a.max()),
    )


BODY_REGISTRY: dict[str, Callable[..., ConvexBody]] = {}


def register_body(name: str, factory: Callable[..., ConvexBody]) -> None:
    """Make a body factory available to :func:`body_from_spec` by name.

    The factory receives the numeric parameters that follow the name.
    """
    BODY_REGISTRY[name] = factory


register_body("circle", lambda *p: circle(*(p or (1.0,))))
register_body("sphere", lambda *p: sphere(*(p or (1.0,))))
register_body("ellipse", lambda *p: ellipsoid(*(p or (2.0, 1.0))))
register_body("ellipsoid", lambda *p: ellipsoid(*(p or (1.0, 1.3, 1.7))))
register_body("superellipsoid", lambda *p: superellipsoid(p[:-1], int(p[-1])))
register_body("quartic", lambda *p: quartic(p[:-1], p[-1]))


def body_from_spec(spec) -> ConvexBody:
    """Build a body from ``"ellipsoid 1 1.3 1.7"``-style text, a list, or a
    ``{"name": ..., "params": [...]}`` mapping."""
    if isinstance(spec, ConvexBody):
        return spec
    if isinstance(spec, dict):
        name, params = spec["name"], list(spec.get("params", []))
    else:
        tokens = spec.split() if isinstance(spec, str) else list(spec)
        if not tokens:
            raise ValueError("empty body specification")
        name, params = tokens[0], tokens[1:]
    try:
        factory = BODY_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown body {name!r}; known: {sorted(BODY_REGISTRY)}") from None
    return factory(*(float(v) for v in params))
