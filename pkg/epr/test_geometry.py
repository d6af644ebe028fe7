import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from epr.errors import GeometryError
from epr.geometry import (TAU, Direction, Point, angular_distance, canonical, reflect,
                          rotate_cw, to_upper_half, upper_half)


@pytest.mark.parametrize("p, alpha, expected", [
    ((1.0, 0.0), 0.0, (1.0, 0.0)),
    ((1.0, 0.0), math.pi / 2, (0.0, -1.0)),
    ((0.5, 0.1), math.pi / 2, (0.1, -0.5)),
])
def test_rotate_cw_applies_printed_matrix(p, alpha, expected):
    out = rotate_cw(Point(*p), alpha)
    assert out.x == pytest.approx(expected[0], abs=1e-15)
    assert out.y == pytest.approx(expected[1], abs=1e-15)


def test_rotate_cw_round_trip_and_norm():
    rng = np.random.default_rng(7)
    for _ in range(500):
        r, phi = math.sqrt(rng.uniform()), rng.uniform(0, TAU)
        p = Point(r * math.cos(phi), r * math.sin(phi))
        alpha = rng.uniform(-10, 10)
        q = rotate_cw(p, alpha)
        back = rotate_cw(q, -alpha)
        assert abs(q.norm - p.norm) <= 1e-12
        assert abs(back.x - p.x) <= 1e-12 and abs(back.y - p.y) <= 1e-12


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_rotate_cw_rejects_non_finite_angle(bad):
    with pytest.raises(GeometryError):
        rotate_cw(Point(0.1, 0.2), bad)


def test_point_outside_disk_rejected():
    with pytest.raises(GeometryError):
        Point(0.8, 0.8)
    with pytest.raises(GeometryError):
        Point(math.nan, 0.0)
    # boundary within tolerance is accepted
    Point(1.0, 0.0)


@pytest.mark.parametrize("angle, expected", [
    (0.0, math.pi),
    (math.pi / 4, 5 * math.pi / 4),
    (3 * math.pi / 2, math.pi / 2),
])
def test_reflect_examples(angle, expected):
    assert reflect(Direction.from_angle(angle)).angle_rad == pytest.approx(expected, abs=1e-15)


def test_reflect_is_an_exact_involution():
    rng = np.random.default_rng(3)
    for angle in rng.uniform(-20, 20, size=1000):
        d = Direction.from_angle(float(angle))
        assert reflect(reflect(d)) == d
        assert Direction.from_angle(d.angle_rad) == d


def test_canonical_range_and_upper_half():
    for angle in (-1e-300, -0.5, 0.0, math.pi, 7.0, 100.0, TAU):
        d = canonical(angle)
        assert 0.0 <= d.angle_rad < TAU
        assert upper_half(d) == (d.angle_rad < math.pi)
    assert canonical(-1e-300).angle_rad == 0.0


def test_to_upper_half_sign():
    d = Direction.from_angle(4.0)
    rep, sign = to_upper_half(d)
    assert rep.upper_half and sign == -1
    assert to_upper_half(rep) == (rep, 1)


@pytest.mark.parametrize("a, b, expected", [
    (0.0, 0.3141593, 0.3141593),
    (0.0, math.pi, math.pi),
    (0.1, TAU - 0.1, 0.2),
])
def test_angular_distance_examples(a, b, expected):
    gap = angular_distance(Direction.from_angle(a), Direction.from_angle(b))
    assert gap == pytest.approx(expected, abs=1e-12)


def test_angular_distance_symmetry_and_triangle():
    rng = np.random.default_rng(11)
    for a, b, c in rng.uniform(0, TAU, size=(1000, 3)):
        da, db, dc = (Direction.from_angle(float(x)) for x in (a, b, c))
        ab = angular_distance(da, db)
        assert ab == angular_distance(db, da)
        assert 0.0 <= ab <= math.pi
        assert ab <= angular_distance(da, dc) + angular_distance(dc, db) + 1e-12


def test_direction_rejects_bad_base():
    with pytest.raises(GeometryError):
        Direction(math.pi)
    with pytest.raises(GeometryError):
        Direction.from_angle(math.inf)
