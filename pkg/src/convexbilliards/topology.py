"""Poincare polynomials of cyclic configuration spaces, the epsilon-thickened
configuration space, and the iterated-path construction with its length
lower bound.

Polynomials are tuples of Python ints indexed by degree; no floating point
is involved anywhere in the polynomial code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .configuration import Configuration, length
from .errors import AdjacencyViolation, DomainError
from .geometry import radial_point


# -- integer polynomial arithmetic --------------------------------------------------


def _trim(c: Sequence[int]) -> tuple[int, ...]:
    c = list(c)
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(int(v) for v in c)


def poly_mul(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _trim(out)


def poly_divmod(num: Sequence[int], den: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Long division over the integers; the divisor must be monic up to sign."""
    num, den = list(_trim(num)), _trim(den)
    lead = den[-1]
    if abs(lead) != 1:
        raise ValueError("divisor must have leading coefficient +-1")
    if len(num) < len(den):
        return (0,), _trim(num)
    q = [0] * (len(num) - len(den) + 1)
    for k in range(len(q) - 1, -1, -1):
        coef = num[k + len(den) - 1] * lead
        q[k] = coef
        for i, d in enumerate(den):
            num[k + i] -= coef * d
    return _trim(q), _trim(num[: len(den) - 1] or [0])


def monomial(k: int, coef: int = 1) -> tuple[int, ...]:
    return tuple([0] * k + [coef])


def poly_add(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    n = max(len(a), len(b))
    return _trim([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)])


def geometric_sum(step: int, terms: int) -> tuple[int, ...]:
    """1 + t^step + ... + t^{step (terms - 1)}."""
    out = [0] * (step * (terms - 1) + 1)
    for j in range(terms):
        out[step * j] += 1
    return _trim(out)


@dataclass(frozen=True)
class PoincarePolynomial:
    """Betti numbers (Z_2 coefficients) indexed by degree."""

    coeffs: tuple

    def __post_init__(self):
        c = _trim(self.coeffs)
        if any(v < 0 for v in c):
            raise ValueError("Betti numbers are nonnegative")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, k: int) -> int:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else 0

    def __call__(self, t):
        return sum(c * t**k for k, c in enumerate(self.coeffs))

    def rank_sum(self, upto: int | None = None) -> int:
        stop = len(self.coeffs) if upto is None else upto + 1
        return sum(self.coeffs[:stop])

    def __str__(self) -> str:
        terms = []
        for k, c in enumerate(self.coeffs):
            if c == 0:
                continue
            mono = "" if k == 0 else ("t" if k == 1 else f"t^{k}")
            if k == 0:
                terms.append(str(c))
            else:
                terms.append(mono if c == 1 else f"{c}{mono}")
        return " + ".join(terms) if terms else "0"


def betti_polynomial(N: int, n: int) -> PoincarePolynomial:
    """Poincare polynomial of Conf_n(S^N): (t^N + 1)(1 + t^{N-1} + ... + t^{(N-1)(n-2)})."""
    if N < 2:
        raise DomainError("the closed form needs N >= 2")
    if n < 2:
        raise DomainError("n must be >= 2")
    return PoincarePolynomial(poly_mul(poly_add(monomial(N), (1,)), geometric_sum(N - 1, n - 1)))


def betti_rational_form(N: int, n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Numerator and denominator of (t^N + 1)(t^{(n-1)(N-1)} - 1) / (t^{N-1} - 1)."""
    num = poly_mul(poly_add(monomial(N), (1,)), poly_add(monomial((n - 1) * (N - 1)), (-1,)))
    den = poly_add(monomial(N - 1), (-1,))
    return num, den


def equivariant_polynomial(N: int, n: int) -> PoincarePolynomial:
    """Poincare polynomial of the D_n-equivariant cohomology, n odd, N >= 3."""
    if N < 3:
        raise DomainError("the closed form needs N >= 3")
    if n < 3 or n % 2 == 0:
        raise DomainError("n must be odd and >= 3")
    a = geometric_sum(2 * (N - 1), (n - 3) // 2 + 1)
    b = geometric_sum(1, N)
    c = poly_add(monomial(N), (1,))
    return PoincarePolynomial(poly_mul(poly_mul(a, b), c))


def equivariant_rational_form(N: int, n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    num = poly_mul(
        poly_mul(poly_add(monomial((n - 1) * (N - 1)), (-1,)), poly_add(monomial(N), (-1,))),
        poly_add(monomial(N), (1,)),
    )
    den = poly_mul(poly_add(monomial(2 * (N - 1)), (-1,)), poly_add(monomial(1), (-1,)))
    return num, den


def factored_matches_rational(poly: PoincarePolynomial, form: tuple) -> bool:
    q, r = poly_divmod(*form)
    return r == (0,) and q == poly.coeffs


def equivariant_rank_sum(N: int, n: int) -> int:
    """Total rank of equivariant cohomology in degrees 0..N."""
    return equivariant_polynomial(N, n).rank_sum(N)


# -- epsilon-thickened configuration space ------------------------------------------


def epsilon_membership(config: Configuration, epsilon: float, rtol: float = 1e-12) -> bool:
    """Whether the product of the chord lengths is at least epsilon^n.

    Compared in log space; ``rtol`` absorbs rounding in the equality case.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ell = np.linalg.norm(np.roll(config.points, -1, axis=0) - config.points, axis=1)
    lhs = float(np.sum(np.log(ell)))
    rhs = config.n * math.log(epsilon)
    return lhs >= rhs - rtol * max(1.0, abs(rhs))


# -- iterated path lift ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BangertPath:
    """Samples of a path in Conf_n and of its lift to Conf_{nm}.

    ``xs`` are the lifted parameters in [x0, x1]; ``blocks`` records (k, i),
    the subinterval index and the path sample used in it.
    """

    samples: tuple
    m: int
    lifted: tuple
    xs: np.ndarray
    blocks: tuple

    @property
    def n(self) -> int:
        return self.samples[0].n

    def lengths(self) -> np.ndarray:
        return np.array([length(c) for c in self.lifted])

    def bound(self) -> float:
        return (self.m - 3) * min(length(self.samples[0]), length(self.samples[-1]))

    def estimate_rows(self) -> list[tuple[float, float, float, bool]]:
        """(x, lifted length, lower bound, holds) per lifted sample."""
        b = self.bound()
        return [(float(x), float(L), b, bool(L >= b - 1e-12 * max(1.0, abs(b))))
                for x, L in zip(self.xs, self.lengths())]

    def estimate_holds(self) -> bool:
        return all(r[3] for r in self.estimate_rows())


def _check_junctions(points: np.ndarray, n: int, tol: float) -> None:
    gaps = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    bad = np.nonzero(gaps <= tol)[0]
    if bad.size:
        j = int(bad[0])
        raise AdjacencyViolation(
            f"consecutive points {j} and {(j + 1) % len(points)} coincide (block {j // n})", junction=j
        )


def bangert_lift(path: Sequence[Configuration], m: int, x0: float = 0.0, x1: float = 1.0) -> BangertPath:
    """Lift a sampled path gamma: [x0, x1] -> Conf_n to Conf_{nm}.

    On the k-th of m equal subintervals the lift is
    (gamma(x1) repeated k times, gamma(y), gamma(x0) repeated m-k-1 times),
    with y the rescaled local parameter. ``path`` holds gamma at K+1 uniform
    parameters; the lift is sampled where y hits those parameters, so no
    interpolation is needed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    samples = tuple(path)
    if len(samples) < 2:
        raise ValueError("need at least two path samples")
    n = samples[0].n
    body = samples[0].body
    if any(s.n != n for s in samples):
        raise ValueError("all path samples must have the same n")
    K = len(samples) - 1
    q0, q1 = samples[0].points, samples[-1].points
    tol = samples[0].tol_adjacent
    lifted, xs, blocks = [], [], []
    for k in range(m):
        for i in range(K + 1):
            if k > 0 and i == 0:
                continue  # same configuration as (k - 1, K)
            pts = np.concatenate([np.tile(q1, (k, 1)), samples[i].points, np.tile(q0, (m - k - 1, 1))])
            _check_junctions(pts, n, tol)
            lifted.append(Configuration(body, pts))
            xs.append(x0 + (x1 - x0) * (k + i / K) / m)
            blocks.append((k, i))
    return BangertPath(samples, m, tuple(lifted), np.array(xs), tuple(blocks))


def sample_path(gamma: Callable[[float], Configuration], samples: int = 64,
                x0: float = 0.0, x1: float = 1.0) -> list[Configuration]:
    """Evaluate a path at ``samples + 1`` uniform parameters."""
    if samples < 1:
        raise ValueError("samples must be positive")
    return [gamma(x0 + (x1 - x0) * i / samples) for i in range(samples + 1)]


def angle_path(body, start: Sequence[float], end: Sequence[float], elevation: float = 0.0,
               plane: tuple[int, int] = (0, 1)) -> Callable[[float], Configuration]:
    """Path in Conf_n(S) moving the polar angles of n points from ``start`` to ``end``.

    Points are radial projections of directions in ``plane``. With a third
    ambient axis available, ``elevation`` lifts point j out of the plane by
    (-1)^j elevation sin(pi x), so the path leaves the planar configurations
    and returns to them at its endpoints.
    """
    a0, a1 = np.asarray(start, float), np.asarray(end, float)
    if a0.shape != a1.shape:
        raise ValueError("start and end need the same number of angles")
    d = body.ambient_dim
    extra = next((k for k in range(d) if k not in plane), None)
    if elevation and extra is None:
        raise ValueError("elevation needs a third ambient axis")
    signs = (-1.0) ** np.arange(len(a0))

    def gamma(x: float) -> Configuration:
        th = (1 - x) * a0 + x * a1
        u = np.zeros((len(th), d))
        u[:, plane[0]], u[:, plane[1]] = np.cos(th), np.sin(th)
        if elevation:
            u[:, extra] = signs * elevation * math.sin(math.pi * x)
        return Configuration(body, np.array([radial_point(body, v).coords for v in u]))

    return gamma


_THIRD = 2 * np.pi / 3
# The lift glues the last point of gamma(x1) to the first point of gamma(y) and
# the last of gamma(y) to the first of gamma(x0); presets pin the first point at
# angle 0 and keep the last one away from it.
PATH_PRESETS = {
    # nearly doubled diameter opening up into the equilateral triangle
    "diameter-triangle": dict(start=(0.0, np.pi - 0.3, np.pi + 0.3), end=(0.0, _THIRD, 2 * _THIRD)),
    # regular pentagon bending into an irregular one
    "skew-pentagon": dict(start=tuple(2 * np.pi * np.arange(5) / 5), end=(0.0, 1.0, 2.2, 3.6, 5.0)),
    # square squashed into a thin kite
    "square-kite": dict(start=(0.0, np.pi / 2, np.pi, 1.5 * np.pi), end=(0.0, 1.2, np.pi, 2 * np.pi - 1.2)),
}


def preset_path(body, name: str, elevation: float | None = None) -> Callable[[float], Configuration]:
    """One of :data:`PATH_PRESETS`; bodies of dimension >= 3 get an elevation of 0.3 by default."""
    try:
        p = PATH_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown path {name!r}; known: {sorted(PATH_PRESETS)}") from None
    if elevation is None:
        elevation = 0.3 if body.ambient_dim >= 3 else 0.0
    return angle_path(body, p["start"], p["end"], elevation)
