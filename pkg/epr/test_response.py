import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from epr.errors import GeometryError
from epr.geometry import Direction, Point, reflect
from epr.response import (SEMIDISK_RULE, Sign, StationId, chameleon_flip, hidden_s,
                          measured_observable, station_response, station_responses)
from epr.source import SourceConfig, stream_arrays


@pytest.mark.parametrize("angle, p, expected", [
    (0.0, (0.3, 0.5), Sign.PLUS),
    (math.pi, (0.3, 0.5), Sign.MINUS),
    (math.pi / 2, (0.5, 0.1), Sign.MINUS),
])
def test_hidden_s_examples(angle, p, expected):
    assert hidden_s(Direction.from_angle(angle), Point(*p)) is expected


def test_hidden_s_tie_break_and_origin():
    up = Direction.from_angle(0.0)
    assert hidden_s(up, Point(0.5, 0.0)) is Sign.PLUS
    assert hidden_s(up, Point(-0.5, 0.0)) is Sign.MINUS
    assert hidden_s(up, Point(0.0, 0.0)) is Sign.PLUS
    # antisymmetry holds on the boundary too
    down = reflect(up)
    for p in (Point(0.5, 0.0), Point(-0.5, 0.0), Point(0.0, 0.0)):
        assert hidden_s(down, p) == -hidden_s(up, p)


def test_hidden_s_rejects_points_outside_disk():
    with pytest.raises(GeometryError):
        hidden_s(Direction.from_angle(0.0), Point(1.0, 1.0))


def test_station_response_examples():
    a, p = Direction.from_angle(0.0), Point(0.3, 0.5)
    assert station_response(StationId.STATION_1, a, p) is Sign.PLUS
    assert station_response(StationId.STATION_2, a, p) is Sign.PLUS
    with pytest.raises(ValueError):
        station_response(3, a, p)


def test_singlet_exactness():
    rng = np.random.default_rng(5)
    xs, ys = stream_arrays(SourceConfig(seed=9, n_trials=10_000))
    for angle in rng.uniform(0, 2 * math.pi, size=100):
        c = Direction.from_angle(float(angle))
        s1 = station_responses(StationId.STATION_1, c, xs, ys).astype(np.int64)
        s2 = station_responses(StationId.STATION_2, reflect(c), xs, ys)
        assert np.all(s1 * s2 == -1)


def test_antisymmetry_and_scaling():
    rng = np.random.default_rng(8)
    for angle, r, phi, t in rng.uniform(0, 1, size=(500, 4)):
        a = Direction.from_angle(float(angle) * 2 * math.pi)
        p = Point(math.sqrt(r) * math.cos(phi * 2 * math.pi), math.sqrt(r) * math.sin(phi * 2 * math.pi))
        assert hidden_s(reflect(a), p) == -hidden_s(a, p)
        scale = max(float(t), 1e-3)
        assert hidden_s(a, Point(scale * p.x, scale * p.y)) == hidden_s(a, p)


def test_vectorised_matches_scalar():
    xs, ys = stream_arrays(SourceConfig(seed=21, n_trials=2_000))
    xs = np.concatenate([xs, [0.0, 0.5, -0.5]])
    ys = np.concatenate([ys, [0.0, 0.0, 0.0]])
    for angle in (0.0, 0.3141593, 1.989675, 3.5, 5.9):
        a = Direction.from_angle(angle)
        vec = SEMIDISK_RULE.signs(a, xs, ys)
        scalar = [int(SEMIDISK_RULE.sign(a, Point(float(x), float(y)))) for x, y in zip(xs, ys)]
        assert vec.tolist() == scalar


def test_product_symmetric_in_settings():
    xs, ys = stream_arrays(SourceConfig(seed=4, n_trials=5_000))
    a, b = Direction.from_angle(0.4), Direction.from_angle(2.2)
    ab = station_responses(1, a, xs, ys).astype(np.int64) * station_responses(2, b, xs, ys)
    ba = station_responses(1, b, xs, ys).astype(np.int64) * station_responses(2, a, xs, ys)
    assert np.array_equal(ab, ba)


@pytest.mark.parametrize("measured, other, raw, expected", [
    (0.0, 0.0, Sign.PLUS, Sign.PLUS),
    (0.0, 0.3, Sign.PLUS, Sign.MINUS),
    (0.0, 0.3, Sign.MINUS, Sign.PLUS),
])
def test_chameleon_flip(measured, other, raw, expected):
    assert chameleon_flip(Direction.from_angle(measured), Direction.from_angle(other), raw) is expected


def test_sign_only_plus_or_minus_one():
    assert -Sign.PLUS is Sign.MINUS
    assert Sign.of(-1) is Sign.MINUS
    with pytest.raises(ValueError):
        Sign.of(0)


def test_measured_observable():
    x = Direction.from_angle(0.7)
    assert measured_observable(StationId.STATION_1, x) == x
    assert measured_observable(StationId.STATION_2, x) == reflect(x)
