import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convexbilliards.configuration import Configuration, iterate, length
from convexbilliards.errors import AdjacencyViolation, DomainError
from convexbilliards.geometry import circle, sphere
from convexbilliards.topology import (
    PATH_PRESETS,
    bangert_lift,
    betti_polynomial,
    betti_rational_form,
    epsilon_membership,
    equivariant_polynomial,
    equivariant_rank_sum,
    equivariant_rational_form,
    factored_matches_rational,
    poly_divmod,
    poly_mul,
    preset_path,
    sample_path,
)


def test_betti_examples():
    assert str(betti_polynomial(2, 2)) == "1 + t^2"
    assert str(betti_polynomial(2, 3)) == "1 + t + t^2 + t^3"


def test_equivariant_example():
    assert str(equivariant_polynomial(3, 3)) == "1 + t + t^2 + t^3 + t^4 + t^5"


@pytest.mark.parametrize("N", [3, 4, 5])
@pytest.mark.parametrize("n", [3, 5, 7, 9])
def test_rank_sum(N, n):
    assert equivariant_rank_sum(N, n) == N + 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(2, 50))
def test_betti_factored_equals_rational(N, n):
    assert factored_matches_rational(betti_polynomial(N, n), betti_rational_form(N, n))


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 8), st.integers(1, 20))
def test_equivariant_factored_equals_rational(N, k):
    n = 2 * k + 1
    assert factored_matches_rational(equivariant_polynomial(N, n), equivariant_rational_form(N, n))


@pytest.mark.parametrize("N", [2, 3, 4])
def test_middle_class_present(N):
    for n in range(3, 51):
        assert betti_polynomial(N, n).coefficient(N - 1) >= 1


def test_domain_errors():
    with pytest.raises(DomainError):
        betti_polynomial(1, 3)
    with pytest.raises(DomainError):
        equivariant_polynomial(3, 4)
    with pytest.raises(DomainError):
        equivariant_polynomial(2, 5)


def test_poly_division():
    a, b = (1, 2, 1), (-1, 0, 1)
    q, r = poly_divmod(poly_mul(a, b), b)
    assert q == a and r == (0,)
    with pytest.raises(ValueError):
        poly_divmod((1, 1), (1, 2))


def test_epsilon_membership():
    dia = Configuration(circle(), np.array([[1.0, 0], [-1.0, 0]]))
    assert epsilon_membership(dia, 1.0)
    assert not epsilon_membership(dia, 3.0)
    n = 7
    th = 2 * np.pi * np.arange(n) / n
    gon = Configuration(circle(), np.c_[np.cos(th), np.sin(th)])
    assert epsilon_membership(gon, 2 * math.sin(math.pi / n))


def _path(body, name="diameter-triangle", samples=16):
    return sample_path(preset_path(body, name), samples)


def test_lift_identity_and_endpoints():
    path = _path(circle())
    one = bangert_lift(path, 1)
    assert all(np.array_equal(a.points, b.points) for a, b in zip(one.lifted, path))
    lift = bangert_lift(path, 5)
    assert np.array_equal(lift.lifted[0].points, iterate(path[0], 5).points)
    assert np.array_equal(lift.lifted[-1].points, iterate(path[-1], 5).points)
    assert lift.xs[0] == 0 and lift.xs[-1] == 1 and np.all(np.diff(lift.xs) > 0)


@pytest.mark.parametrize("body", [circle(), sphere()], ids=["circle", "sphere"])
@pytest.mark.parametrize("name", sorted(PATH_PRESETS))
def test_lift_estimate(body, name):
    path = _path(body, name)
    lift = bangert_lift(path, 10)
    assert min(lift.lengths()) >= (10 - 3) * min(length(path[0]), length(path[-1]))
    assert lift.estimate_holds()


def test_lift_junction_collision():
    # gamma(x0) ends where gamma(x1) starts: the junction points coincide
    C = circle()
    a = Configuration(C, np.array([[1.0, 0], [0, 1.0], [-1.0, 0]]))
    b = Configuration(C, np.array([[0, -1.0], [0.6, 0.8], [1.0, 0]]))
    with pytest.raises(AdjacencyViolation):
        bangert_lift([a, b], 2)
