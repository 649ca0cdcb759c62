import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtocap.geometry import (DirectedLink, Point2D, RadioConfig, delta_margin, make_link,
                             pairwise_compatible, received_power, violated_inequalities,
                             within_cs)

coord = st.floats(-2000, 2000, allow_nan=False)


def test_delta_default():
    assert delta_margin(10, 4) == pytest.approx(0.7783, abs=1e-4)
    assert RadioConfig().delta == pytest.approx(10 ** 0.25 - 1)


@pytest.mark.parametrize("sir,alpha", [(0.5, 4), (10, 0), (10, -1)])
def test_delta_rejects(sir, alpha):
    with pytest.raises(ValueError):
        delta_margin(sir, alpha)


def test_delta_sir_one_is_zero():
    assert delta_margin(1, 4) == 0


def test_received_power():
    assert received_power(1.0, 2.0, 4) == pytest.approx(1 / 16)
    with pytest.raises(ValueError):
        received_power(1.0, 0.0, 4)


def test_config_validation():
    with pytest.raises(ValueError):
        RadioConfig(cs_range=100)
    with pytest.raises(ValueError):
        RadioConfig(tx_range=0)
    with pytest.raises(ValueError):
        RadioConfig(path_loss_exp=7)
    c = RadioConfig(delta=0.5).with_cs(900)
    assert c.cs_range == 900 and c.delta == 0.5


def test_link_self_loop():
    with pytest.raises(ValueError):
        DirectedLink(3, 3)


def _pos(*pts):
    return {i: Point2D(*p) for i, p in enumerate(pts)}


def test_far_links_compatible():
    pos = _pos((0, 0), (200, 0), (2000, 0), (2200, 0))
    a, b = make_link(1, 0, pos), make_link(3, 2, pos)
    assert pairwise_compatible(a, b, pos, 0.78)


def test_close_links_violate():
    pos = _pos((0, 0), (200, 0), (400, 0), (600, 0))
    a, b = make_link(1, 0, pos), make_link(3, 2, pos)
    v = violated_inequalities(a, b, pos, 0.78)
    assert v and all(1 <= i <= 8 for i in v)


def test_boundary_is_collision():
    # receiver of b exactly (1+Δ)·|a| away from a's receiver
    d = 1.0
    pos = _pos((0, 0), (d, 0), (-1.78 * d, 0), (-2.78 * d, 0))
    a, b = make_link(1, 0, pos), make_link(3, 2, pos)
    assert 2 in violated_inequalities(a, b, pos, 0.78)


def test_within_cs_inclusive():
    assert within_cs(Point2D(0, 0), Point2D(550, 0), 550)
    assert not within_cs(Point2D(0, 0), Point2D(550.001, 0), 550)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=4, max_size=4, unique=True),
       st.floats(0.1, 2.0))
def test_compatibility_symmetric(pts, delta):
    pos = _pos(*pts)
    a, b = make_link(0, 1, pos), make_link(2, 3, pos)
    assert pairwise_compatible(a, b, pos, delta) == pairwise_compatible(b, a, pos, delta)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=4, max_size=4, unique=True),
       st.floats(0.1, 1.0), st.floats(0.0, 1.0))
def test_compatibility_monotone_in_delta(pts, d1, extra):
    pos = _pos(*pts)
    a, b = make_link(0, 1, pos), make_link(2, 3, pos)
    if pairwise_compatible(a, b, pos, d1 + extra):
        assert pairwise_compatible(a, b, pos, d1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(coord, coord), min_size=4, max_size=4, unique=True),
       st.floats(0.1, 2.0))
def test_eight_inequalities_match_min_distance_rule(pts, delta):
    pos = _pos(*pts)
    a, b = make_link(0, 1, pos), make_link(2, 3, pos)
    cross = min(pos[i].dist(pos[j]) for i in (0, 1) for j in (2, 3))
    ok = cross > (1 + delta) * max(a.length, b.length)
    assert pairwise_compatible(a, b, pos, delta) == ok


def test_point_dist():
    assert Point2D(0, 0).dist(Point2D(3, 4)) == 5
    assert math.isclose(Point2D(1, 1).dist(Point2D(1, 1)), 0)
