"""Hessian of the length at a critical configuration and its iteration theory.

The Hessian is a cyclic block-tridiagonal operator on T_{q_0}S x ... x
T_{q_{n-1}}S. Twisting the wrap-around blocks by a unit complex number z
realises the boundary condition nu_{j+n} = z nu_j; counting eigenvalue signs
of the twisted matrices gives ind_z, coind_z and nul_z, from which the
indices of every iterate follow by summing over m-th roots.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .configuration import (
    TOL_CRITICAL,
    Configuration,
    CriticalOrbit,
    bisector_defects,
    chords,
    grad_residual,
    iterate,
)
from .errors import EigenFailure, NonUnitTwist, NotCritical, TransferSingular
from .geometry import chart_to_surface, make_chart, shape_operator

logger = logging.getLogger(__name__)

ZERO_REL = 1e-7
TOL_CIRCLE = 1e-7
CLUSTER_TOL = 1e-5
KERNEL_REL = 1e-7
TRANSFER_COND_MAX = 1e12
FD_STEP = 1e-4
QUADRATURE_POINTS = 1024


# -- assembly -----------------------------------------------------------------------


def hessian_blocks(config: Configuration) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal blocks D_j and forward coupling blocks W_j (block (j, j+1)).

    The quadratic form is sum_j |pi~_j (v_{j+1} - v_j)|^2 / l_j minus the
    second fundamental forms weighted by <q'_j, n_j>. The curvature part is
    what turns the ambient second derivative into the Hessian of the length
    restricted to S^n.
    """
    n, N = config.n, config.N
    E = config.frames
    c = chords(config)
    ell = np.linalg.norm(c, axis=1)
    u = c / ell[:, None]
    P = np.eye(config.body.ambient_dim)[None] - u[:, :, None] * u[:, None, :]
    weight = np.einsum("ja,ja->j", bisector_defects(config), config.normals)
    diag = np.empty((n, N, N))
    coup = np.empty((n, N, N))
    for j in range(n):
        k, i = (j + 1) % n, (j - 1) % n
        II = shape_operator(config.body, config.surface_points[j], E[j])
        diag[j] = (E[j].T @ P[j] @ E[j]) / ell[j] + (E[j].T @ P[i] @ E[j]) / ell[i] - weight[j] * II
        coup[j] = -(E[j].T @ P[j] @ E[k]) / ell[j]
    return diag, coup


def _assemble(diag: np.ndarray, coup: np.ndarray, z: complex = 1.0) -> np.ndarray:
    n, N, _ = diag.shape
    dtype = float if z == 1.0 and not isinstance(z, complex) else complex
    M = np.zeros((n * N, n * N), dtype=dtype)
    for j in range(n):
        k = (j + 1) % n
        sj, sk = slice(j * N, (j + 1) * N), slice(k * N, (k + 1) * N)
        M[sj, sj] += diag[j]
        phase = z if j == n - 1 else 1.0
        M[sj, sk] += phase * coup[j]
        M[sk, sj] += np.conj(phase) * coup[j].T
    return M


def chart_hessian(config: Configuration) -> np.ndarray:
    """Hessian of the length in graph charts centred at the current points.

    Valid at any configuration (not only at critical ones) because the charts'
    second derivatives are normal to S at the base points.
    """
    return _assemble(*hessian_blocks(config))


def fd_hessian(config: Configuration, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Hessian of the length in the same charts and frames.

    Only blocks coupling a point with itself or a cyclic neighbour are
    differenced; all other entries of the true Hessian vanish.
    """
    n, N = config.n, config.N
    body = config.body
    charts = [make_chart(body, sp) for sp in config.surface_points]
    base = config.points

    def moved(j, x):
        return chart_to_surface(charts[j], x, check_convexity=False).coords

    def local_length(pts, idx):
        # chords touching any index in idx; the rest cancel in differences
        js = sorted({(i - 1) % n for i in idx} | set(idx))
        return sum(np.linalg.norm(pts[(j + 1) % n] - pts[j]) for j in js)

    dim = n * N
    Hfd = np.zeros((dim, dim))
    eye = np.eye(N)
    for p in range(n):
        for q in {p, (p + 1) % n}:
            for a in range(N):
                for b in range(N):
                    r, s = p * N + a, q * N + b
                    if Hfd[r, s] != 0.0:
                        continue
                    vals = {}
                    for sa in (1, -1):
                        for sb in (1, -1):
                            pts = base.copy()
                            if p == q:
                                pts[p] = moved(p, h * (sa * eye[a] + sb * eye[b]))
                            else:
                                pts[p] = moved(p, sa * h * eye[a])
                                pts[q] = moved(q, sb * h * eye[b])
                            vals[sa, sb] = local_length(pts, {p, q})
                    val = (vals[1, 1] - vals[1, -1] - vals[-1, 1] + vals[-1, -1]) / (4 * h * h)
                    Hfd[r, s] = Hfd[s, r] = val
    return Hfd


@dataclass(frozen=True, eq=False)
class HessianOperator:
    config: Configuration
    frames: np.ndarray
    real_matrix: np.ndarray
    diag_blocks: np.ndarray
    coupling_blocks: np.ndarray
    fd_matrix: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def dim(self) -> int:
        return self.n * self.N

    def fd_relative_error(self) -> float:
        if self.fd_matrix is None:
            raise ValueError("no finite-difference matrix was built")
        return float(np.linalg.norm(self.real_matrix - self.fd_matrix) / np.linalg.norm(self.fd_matrix))

    def symmetry_error(self) -> float:
        M = self.real_matrix
        return float(np.linalg.norm(M - M.T, 2) / np.linalg.norm(M, 2))


def assemble_hessian(config: Configuration, with_fd: bool = True, tol_critical: float = TOL_CRITICAL,
                     fd_step: float = FD_STEP) -> HessianOperator:
    """Hessian operator of the length at a critical configuration."""
    res = grad_residual(config)
    if res > tol_critical:
        raise NotCritical(f"gradient residual {res:.3e} exceeds {tol_critical:.1e}")
    diag, coup = hessian_blocks(config)
    M = _assemble(diag, coup)
    fd = fd_hessian(config, fd_step) if with_fd else None
    return HessianOperator(config, config.frames, M, diag, coup, fd)


@dataclass(frozen=True, eq=False)
class TwistedHessian:
    z: complex
    matrix: np.ndarray
    n: int
    N: int


def twisted_hessian(H: HessianOperator, z: complex) -> TwistedHessian:
    """Hessian on sequences with nu_{j+n} = z nu_j."""
    if abs(abs(z) - 1.0) > 1e-12:
        raise NonUnitTwist(f"|z| = {abs(z)!r} is not 1")
    if z == 1:
        M = H.real_matrix.astype(complex)
    else:
        M = _assemble(H.diag_blocks, H.coupling_blocks, complex(z))
    return TwistedHessian(complex(z), M, H.n, H.N)


@dataclass(frozen=True)
class IndexTriple:
    ind: int
    coind: int
    nul: int
    z: complex = 1.0
    zero_threshold: float = 0.0
    gap_warning: bool = False

    def counts(self) -> tuple[int, int, int]:
        return self.ind, self.coind, self.nul

    def __add__(self, other: "IndexTriple") -> "IndexTriple":
        return IndexTriple(
            self.ind + other.ind, self.coind + other.coind, self.nul + other.nul,
            self.z, max(self.zero_threshold, other.zero_threshold),
            self.gap_warning or other.gap_warning,
        )


def _count(eigs: np.ndarray, z: complex, threshold: float | None = None) -> IndexTriple:
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    theta = ZERO_REL * scale if threshold is None else threshold
    ind = int(np.sum(eigs < -theta))
    coind = int(np.sum(eigs > theta))
    nul = eigs.size - ind - coind
    a = np.abs(eigs)
    gap = bool(np.any((a > theta) & (a <= 10 * theta)))
    if gap:
        warnings.warn(f"eigenvalue within a decade of the zero threshold at z={z}", RuntimeWarning, stacklevel=3)
    return IndexTriple(ind, coind, nul, z, theta, gap)


def twisted_spectrum(Hz: TwistedHessian) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(Hz.matrix)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc


def index_triple(Hz: TwistedHessian) -> IndexTriple:
    """(ind_z, coind_z, nul_z) with zero threshold 1e-7 * ||H_z||_2."""
    return _count(twisted_spectrum(Hz), Hz.z)


def direct_triple(config: Configuration, z: complex = 1.0) -> IndexTriple:
    """Index triple of a (possibly iterated) configuration from its own matrix."""
    return index_triple(twisted_hessian(assemble_hessian(config, with_fd=False), z))


# -- Bott splitting -------------------------------------------------------------------


def roots_of(z: complex, m: int) -> np.ndarray:
    base = np.angle(z) / m
    return np.exp(1j * (base + 2 * np.pi * np.arange(m) / m))


def bott_split(H: HessianOperator, m: int, z: complex = 1.0) -> IndexTriple:
    """Index triple of the m-th iterate at twist z as a sum over m-th roots of z."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return index_triple(twisted_hessian(H, z))
    total = None
    for w in roots_of(z, m):
        # exact ±1 keeps the real-root matrices identical to the untwisted ones
        w = complex(np.round(w.real)) if abs(abs(w.real) - 1) < 1e-15 else w
        t = index_triple(twisted_hessian(H, w))
        total = t if total is None else total + t
    return IndexTriple(total.ind, total.coind, total.nul, complex(z), total.zero_threshold, total.gap_warning)


# -- monodromy ----------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Monodromy:
    """Transfer map (v_0, v_1) -> (v_n, v_{n+1}) of kernel sequences of H.

    ``forward`` holds the pairs (A_j, B_j) with v_{j+1} = A_j v_j + B_j v_{j-1};
    ``backward`` holds (C_j, D_j) with v_{j-1} = C_j v_{j+1} + D_j v_j and is
    only used to check that the recursion can be run both ways.
    """

    phi: np.ndarray
    eigenvalues: np.ndarray
    poincare_points: list
    forward: list
    backward: list
    transfer_condition: float

    @property
    def poincare_angles(self) -> np.ndarray:
        return np.array([np.angle(z) % (2 * np.pi) for z, _ in self.poincare_points])

    def total_nullity(self) -> int:
        return int(sum(mult for _, mult in self.poincare_points))


def kernel_dim(phi: np.ndarray, z: complex, rtol: float = KERNEL_REL) -> int:
    A = phi.astype(complex) - z * np.eye(phi.shape[0])
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s <= rtol * max(1.0, np.linalg.norm(phi, 2))))


def _cluster(values: np.ndarray, tol: float) -> list[np.ndarray]:
    groups: list[list[complex]] = []
    for v in sorted(values, key=lambda x: (np.angle(x), abs(x))):
        for g in groups:
            if min(abs(v - w) for w in g) <= tol:
                g.append(v)
                break
        else:
            groups.append([v])
    return [np.array(g) for g in groups]


def find_poincare_points(phi: np.ndarray, eigenvalues: np.ndarray, tol_circle: float = TOL_CIRCLE) -> list:
    """Unit-circle eigenvalues of ``phi`` with kernel multiplicities.

    Nearly equal eigenvalues are merged first; the cluster mean is far more
    accurate than its members when the eigenvalue is defective.
    """
    points = []
    for g in _cluster(eigenvalues, CLUSTER_TOL):
        c = complex(np.mean(g))
        if abs(abs(c) - 1.0) > tol_circle:
            continue
        c = c / abs(c)
        if abs(c - 1) <= CLUSTER_TOL:
            c = 1.0 + 0j
        elif abs(c + 1) <= CLUSTER_TOL:
            c = -1.0 + 0j
        mult = kernel_dim(phi, c)
        if mult > 0:
            points.append((c, mult))
    points.sort(key=lambda t: np.angle(t[0]) % (2 * np.pi))
    return points


def monodromy(H: HessianOperator) -> Monodromy:
    n, N = H.n, H.N
    D, W = H.diag_blocks, H.coupling_blocks
    forward, backward = [], []
    worst = 0.0
    phi = np.eye(2 * N)
    for j in range(1, n + 1):
        jj, prev = j % n, (j - 1) % n
        Wj = W[jj]
        cond = np.linalg.cond(Wj)
        worst = max(worst, cond)
        if not np.isfinite(cond) or cond > TRANSFER_COND_MAX:
            raise TransferSingular(f"transfer block {jj} has condition number {cond:.3e}")
        A = -np.linalg.solve(Wj, D[jj])
        B = -np.linalg.solve(Wj, W[prev].T)
        forward.append((A, B))
        Wp = W[prev].T
        cond_b = np.linalg.cond(Wp)
        if not np.isfinite(cond_b) or cond_b > TRANSFER_COND_MAX:
            raise TransferSingular(f"backward transfer block {jj} has condition number {cond_b:.3e}")
        backward.append((-np.linalg.solve(Wp, Wj), -np.linalg.solve(Wp, D[jj])))
        step = np.zeros((2 * N, 2 * N))
        step[:N, N:] = np.eye(N)
        step[N:, :N] = B
        step[N:, N:] = A
        phi = step @ phi
    eig = np.linalg.eigvals(phi)
    return Monodromy(phi, eig, find_poincare_points(phi, eig), forward, backward, worst)


# -- mean index and semicontinuity ----------------------------------------------------


class MeanIndex(NamedTuple):
    avind: float
    avcoind: float
    quadrature: bool
    poincare_angles: tuple


def _arcs(angles: np.ndarray) -> list[tuple[float, float]]:
    """Open arcs (start, end) of the circle cut at ``angles``; end may exceed 2pi."""
    if len(angles) == 0:
        return [(0.0, 2 * np.pi)]
    a = np.sort(np.asarray(angles))
    return [(a[i], a[i + 1] if i + 1 < len(a) else a[0] + 2 * np.pi) for i in range(len(a))]


def triple_at_angle(H: HessianOperator, theta: float) -> IndexTriple:
    return index_triple(twisted_hessian(H, complex(np.exp(1j * theta))))


def mean_index(H: HessianOperator, mono: Monodromy | None = None) -> MeanIndex:
    """Average of ind_z and coind_z over the unit circle.

    Exact on the arcs cut out by the Poincare points; falls back to a
    uniform midpoint rule when the arcs look inconsistent.
    """
    try:
        mono = monodromy(H) if mono is None else mono
        angles = mono.poincare_angles
    except TransferSingular:
        angles = None
    if angles is not None:
        avind = avcoind = 0.0
        ok = True
        for a, b in _arcs(angles):
            mid = 0.5 * (a + b) if len(angles) else 0.5 * np.pi
            t = triple_at_angle(H, mid)
            if t.nul:
                ok = False
                break
            w = (b - a) / (2 * np.pi)
            avind += w * t.ind
            avcoind += w * t.coind
        if ok:
            return MeanIndex(avind, avcoind, False, tuple(angles))
    logger.warning("Poincare points ambiguous; using %d-point quadrature", QUADRATURE_POINTS)
    thetas = 2 * np.pi * (np.arange(QUADRATURE_POINTS) + 0.5) / QUADRATURE_POINTS
    ts = [triple_at_angle(H, th) for th in thetas]
    return MeanIndex(
        float(np.mean([t.ind for t in ts])),
        float(np.mean([t.coind for t in ts])),
        True,
        tuple(() if angles is None else angles),
    )


@dataclass
class JumpRecord:
    z: complex
    at: IndexTriple
    left: list
    right: list
    constant_left: bool
    constant_right: bool
    jump_ok: bool
    inconclusive: bool = False


@dataclass
class SemicontinuityReport:
    records: list
    arcs_constant: bool
    inconclusive: list

    @property
    def ok(self) -> bool:
        return self.arcs_constant and all(r.jump_ok for r in self.records if not r.inconclusive)


def semicontinuity_scan(H: HessianOperator, samples: int = 5, mono: Monodromy | None = None,
                        min_arc: float = 1e-4) -> SemicontinuityReport:
    """Check local constancy of ind_z / coind_z on arcs and the jump bounds
    at every Poincare point."""
    if samples < 3:
        raise ValueError("need at least 3 samples per arc")
    mono = monodromy(H) if mono is None else mono
    angles = mono.poincare_angles
    arcs = _arcs(angles)
    arc_samples = []
    constant = []
    for a, b in arcs:
        if b - a < min_arc:
            arc_samples.append(None)
            constant.append(True)
            continue
        th = a + (b - a) * (np.arange(samples) + 1) / (samples + 1)
        ts = [triple_at_angle(H, t) for t in th]
        arc_samples.append(ts)
        constant.append(all(t.counts() == ts[0].counts() and t.nul == 0 for t in ts))
    records, inconclusive = [], []
    k = len(angles)
    for i, (z, _) in enumerate(mono.poincare_points):
        at = index_triple(twisted_hessian(H, z))
        right_i, left_i = i, (i - 1) % k
        right, left = arc_samples[right_i], arc_samples[left_i]
        if right is None or left is None:
            records.append(JumpRecord(z, at, left or [], right or [], True, True, True, True))
            inconclusive.append(z)
            continue
        ok = True
        # nearest samples: first of the arc starting at z, last of the arc ending at z
        for lim in (left[-1], right[0]):
            ok &= at.ind <= lim.ind <= at.ind + at.nul
            ok &= at.coind <= lim.coind <= at.coind + at.nul
        records.append(JumpRecord(z, at, left, right, constant[left_i], constant[right_i], bool(ok)))
    return SemicontinuityReport(records, all(constant), inconclusive)


# -- iteration report -------------------------------------------------------------------


@dataclass
class IterationRow:
    m: int
    ind: int
    coind: int
    nul: int
    bott_ind: int
    bott_coind: int
    bott_nul: int
    ind_lower: float
    ind_upper: float
    coind_lower: float
    coind_upper: float
    nul_bound: int
    limit_gap: float
    coind_preserved: bool
    nul_preserved: bool
    verdicts: dict = field(default_factory=dict)

    @property
    def hypothesis_holds(self) -> bool:
        """Coindex and nullity equal to those of the non-iterated orbit."""
        return self.coind_preserved and self.nul_preserved

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


@dataclass
class IterationReport:
    base: CriticalOrbit
    rows: list
    mean_ind: float
    mean_coind: float
    base_triple: IndexTriple
    quadrature: bool = False

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failing_rows(self) -> list:
        return [r for r in self.rows if not r.passed]

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "N": self.base.config.N,
            "mean_ind": self.mean_ind,
            "mean_coind": self.mean_coind,
            "mean_index_quadrature": self.quadrature,
            "base_triple": {"ind": self.base_triple.ind, "coind": self.base_triple.coind,
                            "nul": self.base_triple.nul},
            "rows": [dict(asdict(r), hypothesis_holds=r.hypothesis_holds) for r in self.rows],
            "passed": self.passed,
        }


SLACK = 1e-9


def iteration_report(orbit: CriticalOrbit, m_list: Sequence[int]) -> IterationReport:
    """Direct and Bott-split indices of iterates together with the
    iteration inequalities, the nullity bound and the limit law."""
    cfg = orbit.config
    N = cfg.N
    H = assemble_hessian(cfg, with_fd=False)
    mean = mean_index(H)
    base = index_triple(twisted_hessian(H, 1.0))
    rows = []
    for m in m_list:
        direct = base if m == 1 else direct_triple(iterate(cfg, m), 1.0)
        split = bott_split(H, m, 1.0)
        ind_lo = m * mean.avind - 2 * N
        ind_hi = m * mean.avind + 2 * N - direct.nul
        co_lo = m * mean.avcoind - 2 * N
        co_hi = m * mean.avcoind + 2 * N - direct.nul
        gap = abs(direct.ind / m - mean.avind)
        verdicts = {
            "bott_match": direct.counts() == split.counts(),
            "nul_bound": direct.nul <= 2 * N,
            "ind_chain": ind_lo - SLACK <= direct.ind <= ind_hi + SLACK,
            "coind_chain": co_lo - SLACK <= direct.coind <= co_hi + SLACK,
            "limit_law": gap <= 2 * N / m + SLACK,
            "dimension": direct.ind + direct.coind + direct.nul == m * cfg.n * N,
        }
        rows.append(IterationRow(
            m, direct.ind, direct.coind, direct.nul, split.ind, split.coind, split.nul,
            ind_lo, ind_hi, co_lo, co_hi, 2 * N, gap,
            direct.coind == base.coind, direct.nul == base.nul, verdicts,
        ))
    return IterationReport(orbit, rows, mean.avind, mean.avcoind, base, mean.quadrature)


def sample_twists(mono: Monodromy, count: int = 16) -> list[complex]:
    """Poincare points (with conjugates), +-1, then evenly spread fillers."""
    zs: list[complex] = []

    def add(z):
        if all(abs(z - w) > 1e-9 for w in zs):
            zs.append(z)

    for z, _ in mono.poincare_points:
        add(z)
        add(np.conj(z))
    add(1.0 + 0j)
    add(-1.0 + 0j)
    k = 0
    while len(zs) < count:
        add(complex(np.exp(1j * (2 * np.pi * (k + 0.37) / count))))
        k += 1
    return zs[:max(count, len(zs))]
