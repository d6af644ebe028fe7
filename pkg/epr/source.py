"""
Seeded source of singlet pairs: uniform points of the unit disk.

The generator is a SplitMix64 recurrence, fixed bit for bit so that every role
process (and any other implementation) regenerates the same point stream from a
seed. Because SplitMix64 is counter based, draw k of a stream seeded with s is
mix(s + k * GAMMA); `stream_arrays` uses that to fill whole blocks with numpy
while `prng_next`/`sample_disk` thread the state one draw at a time.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from epr.errors import ConfigError, SamplerError
from epr.geometry import Point

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
UNIT = 2.0 ** -53
MAX_REJECTIONS = 1024
DEFAULT_N_TRIALS = 50_000


@dataclass(frozen=True)
class SourceConfig:
    seed: int
    n_trials: int = DEFAULT_N_TRIALS

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.n_trials < 1:
            raise ConfigError(f"n_trials must be >= 1, got {self.n_trials!r}")


@dataclass(frozen=True)
class TrialPoint:
    trial_id: int
    point: Point


def prng_next(state: int) -> Tuple[int, int]:
    """
    Advance a SplitMix64 state by one draw.

    Returns:
        (new_state, 64-bit output)
    """
    state = (state + GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return state, z ^ (z >> 31)


def uniform01(output: int) -> float:
    return (output >> 11) * UNIT


def sample_disk(state: int) -> Tuple[int, Point]:
    """Draw (u, v) pairs until one lands in the disk; both coordinates are redrawn on rejection."""
    for _ in range(MAX_REJECTIONS + 1):
        state, out_u = prng_next(state)
        state, out_v = prng_next(state)
        x = 2.0 * uniform01(out_u) - 1.0
        y = 2.0 * uniform01(out_v) - 1.0
        if x * x + y * y <= 1.0:
            return state, Point(x, y)
    raise SamplerError(f"more than {MAX_REJECTIONS} consecutive rejections; the generator is broken")


def _mix_block(seed: int, first_draw: int, count: int) -> np.ndarray:
    """Outputs of draws first_draw .. first_draw + count - 1 (1-based draw index)."""
    idx = np.arange(first_draw, first_draw + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + idx * np.uint64(GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def stream_arrays(config: SourceConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coordinates of the first n_trials accepted points, as float64 arrays.

    Bitwise identical to calling `sample_disk` n_trials times from state = seed.
    """
    xs_parts, ys_parts = [], []
    remaining = config.n_trials
    next_draw = 1
    carry = 0
    while remaining > 0:
        n_pairs = max(1024, int(remaining * 1.35) + 64)
        out = _mix_block(config.seed, next_draw, 2 * n_pairs)
        uv = (out >> np.uint64(11)).astype(np.float64) * UNIT
        x = 2.0 * uv[0::2] - 1.0
        y = 2.0 * uv[1::2] - 1.0
        accepted = x * x + y * y <= 1.0
        keep = np.flatnonzero(accepted)[:remaining]
        # rejection runs ending at each kept point, then the run still open at the block end
        gaps = np.diff(np.concatenate(([-1 - carry], keep))) - 1
        carry = carry + accepted.size if keep.size == 0 else accepted.size - 1 - int(keep[-1])
        if (gaps.size and gaps.max() > MAX_REJECTIONS) or (keep.size < remaining and carry > MAX_REJECTIONS):
            raise SamplerError(f"more than {MAX_REJECTIONS} consecutive rejections; the generator is broken")
        xs_parts.append(x[keep])
        ys_parts.append(y[keep])
        remaining -= keep.size
        if remaining > 0:
            next_draw += 2 * n_pairs
    return np.concatenate(xs_parts), np.concatenate(ys_parts)


def stream(config: SourceConfig) -> List[TrialPoint]:
    """Ordered trial points 0 .. n_trials-1 for a seed."""
    xs, ys = stream_arrays(config)
    return [TrialPoint(i, Point(float(x), float(y))) for i, (x, y) in enumerate(zip(xs, ys))]


def derive_seed(seed: int, offset: int) -> int:
    return (seed + offset) & MASK64


if __name__ == "__main__":
    print("=" * 70)
    print("SOURCE: SEEDED POINTS IN THE UNIT DISK")
    print("=" * 70)

    state, out = prng_next(0)
    print(f"\n🎲 prng_next(0) -> {out:#018x}")
    _, p = sample_disk(0)
    print(f"   first point for seed 0: ({p.x:.10f}, {p.y:.10f})")

    points = stream(SourceConfig(seed=1, n_trials=5))
    for tp in points:
        print(f"   #{tp.trial_id}: ({tp.point.x:+.6f}, {tp.point.y:+.6f})")
