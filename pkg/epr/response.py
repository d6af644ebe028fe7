import math
from enum import IntEnum
from typing import Protocol

import numpy as np

from epr.geometry import Direction, Point, reflect


class Sign(IntEnum):
    """A +1/-1 answer; no other value is representable."""

    PLUS = 1
    MINUS = -1

    def __neg__(self) -> "Sign":
        return Sign.MINUS if self is Sign.PLUS else Sign.PLUS

    @classmethod
    def of(cls, value: int) -> "Sign":
        if value == 1:
            return cls.PLUS
        if value == -1:
            return cls.MINUS
        raise ValueError(f"a sign must be +1 or -1, got {value!r}")


class StationId(IntEnum):
    STATION_1 = 1
    STATION_2 = 2


class ResponseRule(Protocol):
    """How a station turns (own setting, point) into an answer."""

    name: str

    def sign(self, setting: Direction, p: Point) -> Sign:
        ...

    def signs(self, setting: Direction, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        ...


def _semidisk_sign(rx: float, ry: float) -> int:
    if ry > 0.0:
        return 1
    if ry < 0.0:
        return -1
    # boundary of the semidisk; the origin itself is assigned +1
    return 1 if rx >= 0.0 else -1


class SemidiskRule:
    """
    Rotate p by the setting's upper-half angle and read off the semidisk it lands in.

    Lower-half settings are answered through S_Ra = -S_a. The scalar and vectorised
    paths use the same cos/sin values and the same operation order, so they agree
    bit for bit.
    """

    name = "semidisk"

    def sign(self, setting: Direction, p: Point) -> Sign:
        c, s = math.cos(setting.base), math.sin(setting.base)
        rx = p.x * c + p.y * s
        ry = -p.x * s + p.y * c
        value = _semidisk_sign(rx, ry)
        return Sign.of(-value if setting.reflected else value)

    def signs(self, setting: Direction, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        c, s = math.cos(setting.base), math.sin(setting.base)
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        rx = xs * c + ys * s
        ry = -xs * s + ys * c
        out = np.where(ry > 0.0, 1, -1).astype(np.int8)
        on_line = ry == 0.0
        if on_line.any():
            out[on_line] = np.where(rx[on_line] >= 0.0, 1, -1)
        return -out if setting.reflected else out


SEMIDISK_RULE = SemidiskRule()


def hidden_s(a: Direction, p: Point, rule: ResponseRule = SEMIDISK_RULE) -> Sign:
    """
    Hidden response function S_a(p).

    Args:
        a: Setting direction
        p: Point of the disk (validated on construction)
        rule: Response rule (the semidisk rule unless a caller plugs in another)

    Returns:
        Sign of S_a(p)
    """
    return rule.sign(a, p)


def station_response(station: StationId, setting: Direction, p: Point,
                     rule: ResponseRule = SEMIDISK_RULE) -> Sign:
    """Answer of one station; depends only on its own setting and the shared point."""
    StationId(station)
    return rule.sign(setting, p)


def station_responses(station: StationId, setting: Direction, xs: np.ndarray, ys: np.ndarray,
                      rule: ResponseRule = SEMIDISK_RULE) -> np.ndarray:
    """Vectorised `station_response` over coordinate arrays (int8 of +1/-1)."""
    StationId(station)
    return rule.signs(setting, xs, ys)


def measured_observable(station: StationId, setting: Direction) -> Direction:
    """Station 1 with setting x measures the observable of x, station 2 the one of Rx."""
    if StationId(station) is StationId.STATION_1:
        return setting
    return reflect(setting)


def chameleon_flip(measured: Direction, other: Direction, raw: Sign) -> Sign:
    """Value of `other` after `measured` was measured: unchanged if same, else flipped."""
    return raw if other == measured else -raw
