import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexbilliards.errors import GrazingRay, NotOnSurface, NotStrictlyConvex
from convexbilliards.geometry import (
    ConvexBody,
    billiard_flow,
    body_from_spec,
    chart_to_surface,
    circle,
    ellipsoid,
    make_chart,
    project_chord_orthogonal,
    project_tangent,
    radial_point,
    ray_intersect,
    reflect,
    sphere,
    superellipsoid,
    surface_point,
    surface_to_chart,
    tangent_frame,
)

unit = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_project_tangent_sphere():
    S = sphere()
    p = surface_point(S, [1, 0, 0])
    assert np.allclose(project_tangent(S, p, [1, 0, 0]), 0)
    assert np.allclose(project_tangent(S, p, [0, 1, 0]), [0, 1, 0])
    assert np.allclose(project_tangent(S, p, [1, 1, 0]), [0, 1, 0])


def test_project_chord_orthogonal():
    assert np.allclose(project_chord_orthogonal([1, 0], [1, 0]), [0, 0])
    assert np.allclose(project_chord_orthogonal([1, 0], [0, 3]), [0, 3])
    u = np.array([1, 1]) / math.sqrt(2)
    assert np.allclose(project_chord_orthogonal(u, [1, 0]), [0.5, -0.5])
    with pytest.raises(ValueError):
        project_chord_orthogonal([2, 0], [1, 0])


def _shot(body, p, d):
    q = ray_intersect(body, p, d)
    return q, float(np.linalg.norm(q.coords - p.coords))


def test_ray_intersect_examples():
    C = circle()
    q, t = _shot(C, surface_point(C, [1, 0]), [-1, 0])
    assert np.allclose(q.coords, [-1, 0], atol=1e-12) and t == pytest.approx(2, abs=1e-12)
    d = np.array([-1, 1]) / math.sqrt(2)
    q, t = _shot(C, surface_point(C, [1, 0]), d)
    assert np.allclose(q.coords, [0, 1], atol=1e-12) and t == pytest.approx(math.sqrt(2), abs=1e-12)
    E = ellipsoid(2, 1)
    q, t = _shot(E, surface_point(E, [2, 0]), [-1, 0])
    assert np.allclose(q.coords, [-2, 0], atol=1e-12) and t == pytest.approx(4, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(unit, unit)
def test_ray_intersect_matches_quadratic_on_ellipsoid(a, b):
    # x = A y maps the unit sphere onto the ellipsoid; the chord solves a quadratic
    axes = np.array([1.0, 1.3, 1.7])
    E = ellipsoid(*axes)
    p = radial_point(E, a)
    d = np.asarray(b, float) / np.linalg.norm(b)
    if np.dot(d, p.normal) > -1e-3:
        d = d - 2 * max(np.dot(d, p.normal), 0) * p.normal - 0.5 * p.normal
        d /= np.linalg.norm(d)
    y, w = p.coords / axes, d / axes
    t_exact = -2 * np.dot(y, w) / np.dot(w, w)
    q, t = _shot(E, p, d)
    assert t == pytest.approx(t_exact, rel=1e-9)
    assert abs(E.F(q.coords)) <= E.tol_surface


def test_grazing_ray_raises():
    C = circle()
    with pytest.raises(GrazingRay):
        ray_intersect(C, surface_point(C, [1, 0]), [0, 1])


def test_reflect_examples():
    C = circle()
    p = surface_point(C, [1, 0])
    assert np.allclose(reflect(p, [1, 0]), [-1, 0])
    s = math.sqrt(2) / 2
    assert np.allclose(reflect(p, [s, s]), [-s, s])
    S = sphere()
    assert np.allclose(reflect(surface_point(S, [0, 0, 1]), [0, s, s]), [0, s, -s])


def test_billiard_flow_examples():
    C = circle()
    out = billiard_flow(C, surface_point(C, [1, 0]), [-1, 0], 2)
    assert np.allclose([p.coords for p in out], [[-1, 0], [1, 0]], atol=1e-12)
    target = np.array([math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3)])
    d = target - [1, 0]
    out = billiard_flow(C, surface_point(C, [1, 0]), d / np.linalg.norm(d), 3)
    angles = [math.atan2(p.coords[1], p.coords[0]) % (2 * math.pi) for p in out]
    assert np.allclose(angles[:2], [2 * math.pi / 3, 4 * math.pi / 3], atol=1e-9)
    assert np.linalg.norm(out[-1].coords - [1, 0]) <= 1e-9
    E = ellipsoid(2, 1)
    out = billiard_flow(E, surface_point(E, [2, 0]), [-1, 0], 4)
    assert np.allclose([p.coords for p in out], [[-2, 0], [2, 0], [-2, 0], [2, 0]], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(0.05, math.pi - 0.05))
def test_circle_flow_advances_by_constant_angle(phi, alpha):
    # a chord making angle alpha with the tangent subtends 2 alpha at the centre
    C = circle()
    p = surface_point(C, [math.cos(phi), math.sin(phi)])
    tang = np.array([-math.sin(phi), math.cos(phi)])
    d = math.cos(alpha) * tang - math.sin(alpha) * p.coords
    out = billiard_flow(C, p, d, 5)
    for k, q in enumerate(out, 1):
        want = phi + 2 * alpha * k
        assert np.allclose(q.coords, [math.cos(want), math.sin(want)], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(unit, unit)
def test_reflection_preserves_speed_and_flips_normal(a, b):
    S = ellipsoid(1, 1.3, 1.7)
    p = radial_point(S, a)
    d = np.asarray(b) / np.linalg.norm(b)
    if np.dot(d, p.normal) <= 1e-6:
        d = -d
    if np.dot(d, p.normal) <= 1e-6:
        return
    r = reflect(p, d)
    assert np.linalg.norm(r) == pytest.approx(1, abs=1e-12)
    assert np.dot(r, p.normal) == pytest.approx(-np.dot(d, p.normal), abs=1e-12)
    assert np.allclose(r - np.dot(r, p.normal) * p.normal, d - np.dot(d, p.normal) * p.normal)


def test_chart_examples():
    C = circle()
    ch = make_chart(C, surface_point(C, [1, 0]))
    assert np.allclose(chart_to_surface(ch, [0.0]).coords, [1, 0])
    e = ch.tangent_basis[:, 0]
    q = chart_to_surface(ch, [0.1]).coords
    assert np.allclose(q, [math.sqrt(1 - 0.01), 0.1 * e[1]], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(unit, st.lists(st.floats(-0.07, 0.07), min_size=2, max_size=2))
def test_chart_round_trip_sphere(a, x):
    S = sphere()
    ch = make_chart(S, radial_point(S, a))
    assert np.allclose(surface_to_chart(ch, chart_to_surface(ch, x)), x, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
def test_tangent_frame_orthonormal(v):
    n = np.asarray(v) / np.linalg.norm(v)
    E = tangent_frame(n)
    assert np.allclose(E.T @ E, np.eye(2), atol=1e-12)
    assert np.allclose(E.T @ n, 0, atol=1e-12)
    assert np.allclose(tangent_frame(n), E)  # deterministic


def test_surface_point_rejects_off_surface():
    with pytest.raises(NotOnSurface):
        surface_point(circle(), [1.1, 0])


def test_superellipsoid_flat_point_rejected():
    # |x|^4 + |y|^4 = 1 has vanishing curvature at the axis points
    B = superellipsoid([1, 1], 4)
    with pytest.raises(NotStrictlyConvex):
        surface_point(B, [1, 0])


def test_body_from_spec_variants():
    assert body_from_spec("ellipsoid 1 1.3 1.7").ambient_dim == 3
    assert body_from_spec({"name": "ellipse", "params": [3, 1]}).describe()["params"] == [3.0, 1.0]
    assert body_from_spec(["sphere", 2]).scale == pytest.approx(4)  # diameter
    with pytest.raises(ValueError):
        body_from_spec("blob 1")


def test_custom_body_interior_sign_normalised():
    # level function negative outside; the body flips it so normals point out
    B = ConvexBody(2, lambda x: 1 - x @ x, lambda x: -2 * x, lambda x: -2 * np.eye(2), np.zeros(2))
    p = surface_point(B, [0, 1])
    assert np.allclose(p.normal, [0, 1])
