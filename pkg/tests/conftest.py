import numpy as np
import pytest

from convexbilliards.configuration import find_critical, make_seeds
from convexbilliards.geometry import body_from_spec, chart_to_surface, make_chart


@pytest.fixture(scope="session")
def ellipse():
    return body_from_spec("ellipse 2 1")


@pytest.fixture(scope="session")
def ellipsoid3():
    return body_from_spec("ellipsoid 1 1.3 1.7")


def search(body, n, count=6, rng_seed=0, **kw):
    return find_critical(body, n, make_seeds(body, n, count=count, rng_seed=rng_seed, **kw))


@pytest.fixture(scope="session")
def ellipse_axes(ellipse):
    """(major, minor) axis 2-orbits of the 2:1 ellipse."""
    orbits = sorted(search(ellipse, 2), key=lambda o: -o.length)
    assert [round(o.length, 8) for o in orbits] == [8.0, 4.0]
    return orbits


@pytest.fixture(scope="session")
def tested_orbits(ellipse, ellipsoid3):
    """A handful of distinct critical orbits on the ellipse and the ellipsoid."""
    out = list(search(ellipse, 2))
    out += search(ellipse, 3)[:2]
    out += search(ellipsoid3, 2)[:3]
    out += search(ellipsoid3, 3)[:2]
    return out


def chart_length(config, flat, length_fn):
    """Length after moving every point by its chart coordinates ``flat``."""
    body = config.body
    x = np.asarray(flat).reshape(config.n, body.N)
    pts = [chart_to_surface(make_chart(body, sp), x[j]).coords for j, sp in enumerate(config.surface_points)]
    return length_fn(np.array(pts))


def polygon_length(pts):
    return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def fd_gradient(config, h=1e-5):
    """Central differences of the length in the per-point charts."""
    d = config.n * config.N
    g = np.zeros(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        g[k] = (chart_length(config, e, polygon_length) - chart_length(config, -e, polygon_length)) / (2 * h)
    return g


def fd_full_hessian(config, h=1e-4):
    """Second differences of the length over all pairs of chart coordinates."""
    d = config.n * config.N
    L = lambda v: chart_length(config, v, polygon_length)  # noqa: E731
    H = np.zeros((d, d))
    E = np.eye(d) * h
    L0 = L(np.zeros(d))
    for a in range(d):
        H[a, a] = (L(E[a]) - 2 * L0 + L(-E[a])) / h**2
        for b in range(a + 1, d):
            H[a, b] = H[b, a] = (L(E[a] + E[b]) - L(E[a] - E[b]) - L(E[b] - E[a]) + L(-E[a] - E[b])) / (4 * h**2)
    return H


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
