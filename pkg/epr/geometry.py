import math
from dataclasses import dataclass
from typing import Tuple

from epr.errors import GeometryError

TAU = 2.0 * math.pi
DISK_TOLERANCE = 1e-12


def _require_finite(name: str, *values: float):
    for value in values:
        if not math.isfinite(value):
            raise GeometryError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Point:
    """A point of the closed unit disk; one singlet pair of the experiment."""

    x: float
    y: float

    def __post_init__(self):
        _require_finite("point coordinate", self.x, self.y)
        if self.x * self.x + self.y * self.y > 1.0 + DISK_TOLERANCE:
            raise GeometryError(f"point ({self.x!r}, {self.y!r}) lies outside the unit disk")

    @property
    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True)
class Direction:
    """
    A measurement setting on the unit circle.

    Stored as an upper-half angle `base` in [0, pi) plus a `reflected` flag, so the
    reflection through the origin is an exact involution. `angle_rad` is the
    counterclockwise angle from the positive x-axis in [0, 2*pi).
    """

    base: float
    reflected: bool = False

    def __post_init__(self):
        _require_finite("direction angle", self.base)
        if not 0.0 <= self.base < math.pi:
            raise GeometryError(f"direction base angle must lie in [0, pi), got {self.base!r}")

    @classmethod
    def from_angle(cls, angle_rad: float) -> "Direction":
        """Build the canonical direction for any finite angle (radians)."""
        _require_finite("direction angle", angle_rad)
        theta = angle_rad % TAU
        if theta >= TAU:
            # a tiny negative angle wraps onto 2*pi itself
            theta = 0.0
        if theta < math.pi:
            return cls(theta, False)
        # exact for theta in [pi, 2*pi)
        return cls(theta - math.pi, True)

    @property
    def angle_rad(self) -> float:
        if not self.reflected:
            return self.base
        angle = self.base + math.pi
        return angle if angle < TAU else math.nextafter(TAU, 0.0)

    @property
    def upper_half(self) -> bool:
        return not self.reflected

    def __str__(self) -> str:
        return f"{self.angle_rad:.7g} rad"


def canonical(angle_rad: float) -> Direction:
    return Direction.from_angle(angle_rad)


def upper_half(d: Direction) -> bool:
    return d.upper_half


def to_upper_half(d: Direction) -> Tuple[Direction, int]:
    """Split a direction into its upper-half representative and the sign relating them."""
    return Direction(d.base, False), (-1 if d.reflected else 1)


def rotate_cw(p: Point, alpha: float) -> Point:
    """
    Apply the matrix [[cos a, sin a], [-sin a, cos a]] to p.

    Args:
        p: Point of the disk
        alpha: Angle in radians

    Returns:
        The rotated point (norm preserved up to rounding)
    """
    _require_finite("rotation angle", alpha)
    c, s = math.cos(alpha), math.sin(alpha)
    return Point(p.x * c + p.y * s, -p.x * s + p.y * c)


def reflect(d: Direction) -> Direction:
    """Reflection through the origin (angle shifted by pi)."""
    return Direction(d.base, not d.reflected)


def angular_distance(d1: Direction, d2: Direction) -> float:
    """Smallest angle between two directions, in [0, pi]."""
    gap = abs(d1.base - d2.base)
    if d1.reflected == d2.reflected:
        return gap
    return math.pi - gap


if __name__ == "__main__":
    print("=" * 70)
    print("GEOMETRY PRIMITIVES")
    print("=" * 70)

    p = Point(0.5, 0.1)
    print(f"\n📐 rotate_cw({p}, pi/2) = {rotate_cw(p, math.pi / 2)}")
    for angle in (0.0, math.pi / 4, 3 * math.pi / 2):
        d = Direction.from_angle(angle)
        print(f"   reflect({d}) = {reflect(d)}")
    print(f"   angular_distance(0, 2pi-0.1) = "
          f"{angular_distance(Direction.from_angle(0.1), Direction.from_angle(TAU - 0.1)):.6f}")
