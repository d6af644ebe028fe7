import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats
from tqdm import tqdm

from epr.geometry import Direction, Point, reflect
from epr.oracle import exact_corr
from epr.response import (SEMIDISK_RULE, ResponseRule, Sign, StationId, chameleon_flip,
                          measured_observable, station_response, station_responses)
from epr.source import SourceConfig, TrialPoint, derive_seed, stream, stream_arrays

# Which setting each station uses in experiments I, II, III
SCHEME = {"I": ("a", "b"), "II": ("c", "b"), "III": ("a", "c")}
SEED_OFFSETS = {"I": 0, "II": 1, "III": 2}


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    point: Point
    setting1: Direction
    setting2: Direction
    answer1: Sign
    answer2: Sign

    @property
    def product(self) -> int:
        return int(self.answer1) * int(self.answer2)


@dataclass(frozen=True)
class CorrelationEstimate:
    """Empirical correlation of n +1/-1 products with its standard error."""

    value: float
    n: int
    stderr: float

    @classmethod
    def from_tally(cls, product_sum: int, n: int) -> "CorrelationEstimate":
        if n < 1:
            raise ValueError("a correlation needs at least one trial")
        if abs(product_sum) > n or (product_sum + n) % 2:
            raise ValueError(f"{product_sum} is not a sum of {n} products of +1/-1 answers")
        value = product_sum / n
        return cls(value=value, n=n, stderr=math.sqrt((1.0 - value * value) / n))

    def to_dict(self) -> Dict[str, float]:
        return {"value": self.value, "n": self.n, "stderr": self.stderr}


class BellMode(Enum):
    EXACT = "EXACT"
    EMPIRICAL = "EMPIRICAL"


Correlation = Union[float, CorrelationEstimate]


def _value(e: Correlation) -> float:
    return e.value if isinstance(e, CorrelationEstimate) else e


@dataclass(frozen=True)
class BellReport:
    """Both sides of |E(a,b) - E(c,b)| <= 1 + E(a,c) and their difference."""

    e_ab: Correlation
    e_cb: Correlation
    e_ac: Correlation
    lhs: float
    rhs: float
    violation: float
    mode: BellMode
    combined_stderr: Optional[float] = None
    z_score: Optional[float] = None
    p_value: Optional[float] = None

    @classmethod
    def from_correlations(cls, e_ab: Correlation, e_cb: Correlation, e_ac: Correlation,
                          mode: BellMode) -> "BellReport":
        lhs = abs(_value(e_ab) - _value(e_cb))
        rhs = 1.0 + _value(e_ac)
        violation = lhs - rhs
        combined = z = p = None
        if mode is BellMode.EMPIRICAL:
            combined = math.sqrt(e_ab.stderr ** 2 + e_cb.stderr ** 2 + e_ac.stderr ** 2)
            if combined > 0.0:
                z = violation / combined
                p = float(stats.norm.sf(z))
        return cls(e_ab, e_cb, e_ac, lhs, rhs, violation, mode, combined, z, p)

    def to_dict(self) -> Dict:
        def dump(e):
            return e.to_dict() if isinstance(e, CorrelationEstimate) else e

        out = {
            "mode": self.mode.value,
            "e_ab": dump(self.e_ab),
            "e_cb": dump(self.e_cb),
            "e_ac": dump(self.e_ac),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "violation": self.violation,
        }
        if self.mode is BellMode.EMPIRICAL:
            out.update(combined_stderr=self.combined_stderr, z_score=self.z_score,
                       p_value=self.p_value)
        return out


def _coordinates(points: Sequence[TrialPoint]) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.fromiter((tp.point.x for tp in points), dtype=np.float64, count=len(points))
    ys = np.fromiter((tp.point.y for tp in points), dtype=np.float64, count=len(points))
    return xs, ys


def answer_arrays(xs: np.ndarray, ys: np.ndarray, setting1: Direction, setting2: Direction,
                  rule: ResponseRule = SEMIDISK_RULE) -> Tuple[np.ndarray, np.ndarray]:
    """Answers of both stations for coordinate arrays; each sees only its own setting."""
    return (station_responses(StationId.STATION_1, setting1, xs, ys, rule),
            station_responses(StationId.STATION_2, setting2, xs, ys, rule))


def run_experiment(points: Sequence[TrialPoint], setting1: Direction, setting2: Direction,
                   rule: ResponseRule = SEMIDISK_RULE, verbose: bool = False) -> List[TrialRecord]:
    """
    Ask every point the same pair of local questions.

    Args:
        points: Trial points from the source
        setting1: Station 1 setting, fixed for the run
        setting2: Station 2 setting, fixed for the run
        rule: Response rule of the stations
        verbose: Print progress

    Returns:
        One TrialRecord per point, in input order
    """
    if len(points) == 0:
        raise ValueError("run_experiment needs at least one point")
    xs, ys = _coordinates(points)
    ans1, ans2 = answer_arrays(xs, ys, setting1, setting2, rule)
    rows = zip(points, ans1.tolist(), ans2.tolist())
    if verbose:
        print(f"🔬 Measuring {len(points)} pairs with settings ({setting1}, {setting2})")
        rows = tqdm(rows, total=len(points), desc="trials")
    return [
        TrialRecord(tp.trial_id, tp.point, setting1, setting2, Sign.of(s1), Sign.of(s2))
        for tp, s1, s2 in rows
    ]


def empirical_corr(records: Sequence[TrialRecord]) -> CorrelationEstimate:
    """Mean of answer1 * answer2 over the records."""
    if len(records) == 0:
        raise ValueError("empirical_corr needs at least one record")
    return CorrelationEstimate.from_tally(sum(r.product for r in records), len(records))


def bell_report(a: Direction, b: Direction, c: Direction,
                runs: Optional[Dict[str, Sequence[TrialRecord]]] = None) -> BellReport:
    """
    Bell report for experiments I=(a,b), II=(c,b), III=(a,c).

    Without `runs` the exact correlations are used; with them, `runs` maps the
    experiment tags "I", "II", "III" to their records.
    """
    if runs is None:
        return BellReport.from_correlations(exact_corr(a, b), exact_corr(c, b), exact_corr(a, c),
                                            BellMode.EXACT)
    missing = set(SCHEME) - set(runs)
    if missing:
        raise ValueError(f"missing runs for experiments {sorted(missing)}")
    sizes = {tag: len(runs[tag]) for tag in SCHEME}
    if len(set(sizes.values())) != 1:
        raise ValueError(f"experiments have mismatched trial counts: {sizes}")
    return BellReport.from_correlations(empirical_corr(runs["I"]), empirical_corr(runs["II"]),
                                        empirical_corr(runs["III"]), BellMode.EMPIRICAL)


def pointwise_bell_identity(p: Point, a: Direction, b: Direction, c: Direction,
                            rule: ResponseRule = SEMIDISK_RULE) -> Tuple[int, int, bool]:
    """Both sides of |A B - C B| <= 1 - A C for A=S1_a(p), B=S2_b(p), C=S1_c(p)."""
    A = int(station_response(StationId.STATION_1, a, p, rule))
    B = int(station_response(StationId.STATION_2, b, p, rule))
    C = int(station_response(StationId.STATION_1, c, p, rule))
    lhs, rhs = abs(A * B - C * B), 1 - A * C
    return lhs, rhs, lhs <= rhs


def _check_shared_stream(*runs: Sequence[TrialRecord]):
    n = len(runs[0])
    if n == 0 or any(len(run) != n for run in runs):
        raise ValueError("runs must be non-empty and of equal length")
    for records in zip(*runs):
        first = records[0]
        if any(r.trial_id != first.trial_id or r.point != first.point for r in records[1:]):
            raise ValueError(f"runs do not share one point stream (trial {first.trial_id})")


def chameleon_substitution_audit(run_i: Sequence[TrialRecord], run_ii: Sequence[TrialRecord],
                                 run_iii: Sequence[TrialRecord]) -> float:
    """
    Fraction of trials breaking the bound obtained by the chameleon substitution.

    Per trial, with A B from experiment I, C B from experiment II and the station 2
    answer at c from experiment III: S1_c is replaced by the value of S2_c after the
    flip caused by measuring b, giving |A B - C B| <= 1 - A * flip(S2_c).
    """
    _check_shared_stream(run_i, run_ii, run_iii)
    failures = 0
    for r1, r2, r3 in zip(run_i, run_ii, run_iii):
        flipped = chameleon_flip(r2.setting2, r3.setting2, r3.answer2)
        if abs(r1.product - r2.product) > 1 - int(r3.answer1) * int(flipped):
            failures += 1
    return failures / len(run_i)


def singlet_audit(n: int, seed: int, c: Direction, setting2: Optional[Direction] = None,
                  rule: ResponseRule = SEMIDISK_RULE) -> bool:
    """True iff every trial with settings (c, Rc) gives opposite answers."""
    if n < 1:
        raise ValueError("singlet_audit needs n >= 1")
    setting2 = reflect(c) if setting2 is None else setting2
    xs, ys = stream_arrays(SourceConfig(seed=seed, n_trials=n))
    ans1, ans2 = answer_arrays(xs, ys, c, setting2, rule)
    return bool(np.all(ans1.astype(np.int64) * ans2 == -1))


def scheme_settings(a: Direction, b: Direction, c: Direction) -> Dict[str, Tuple[Direction, Direction]]:
    named = {"a": a, "b": b, "c": c}
    return {tag: (named[s1], named[s2]) for tag, (s1, s2) in SCHEME.items()}


def scheme_seeds(seed: int, share_stream: bool) -> Dict[str, int]:
    if share_stream:
        return {tag: seed for tag in SCHEME}
    return {tag: derive_seed(seed, offset) for tag, offset in SEED_OFFSETS.items()}


def run_scheme(a: Direction, b: Direction, c: Direction, n_trials: int, seed: int,
               share_stream: bool = False, rule: ResponseRule = SEMIDISK_RULE,
               verbose: bool = False) -> Dict[str, List[TrialRecord]]:
    """Run experiments I, II, III; independent seeds unless `share_stream`."""
    seeds = scheme_seeds(seed, share_stream)
    streams: Dict[int, List[TrialPoint]] = {}
    runs = {}
    for tag, (s1, s2) in scheme_settings(a, b, c).items():
        if seeds[tag] not in streams:
            streams[seeds[tag]] = stream(SourceConfig(seed=seeds[tag], n_trials=n_trials))
        if verbose:
            print(f"\n🧪 Experiment {tag} (seed {seeds[tag]})")
        runs[tag] = run_experiment(streams[seeds[tag]], s1, s2, rule, verbose)
    return runs


def observables_for_scheme(a: Direction, b: Direction, c: Direction) -> Dict[str, Direction]:
    """
    Observables actually measured by the three experiments.

    Three settings are used but station 2 measures the reflected observable, so
    four observables appear: S_a, S_Rb, S_c, S_Rc.
    """
    named = {"a": a, "b": b, "c": c}
    out: Dict[str, Direction] = {}
    for s1, s2 in SCHEME.values():
        out.setdefault(f"S_{s1}", measured_observable(StationId.STATION_1, named[s1]))
        out.setdefault(f"S_R{s2}", measured_observable(StationId.STATION_2, named[s2]))
    return out


PERTURBATION_MODELS = ("l1", "box")


def perturbation_scan(a: Direction, b: Direction, c: Direction, eps: float = 0.01,
                      n_samples: int = 100, seed: int = 0, model: str = "l1") -> np.ndarray:
    """
    Exact violations for random perturbations of the three angles.

    model "l1": the absolute components of each shift sum to at most `eps` radians.
    model "box": each angle moves independently by up to +/-`eps` radians.
    """
    if eps < 0 or n_samples < 1:
        raise ValueError("perturbation_scan needs eps >= 0 and n_samples >= 1")
    if model not in PERTURBATION_MODELS:
        raise ValueError(f"model must be one of {PERTURBATION_MODELS}, got {model!r}")
    rng = np.random.default_rng(seed)
    base = np.array([a.angle_rad, b.angle_rad, c.angle_rad])
    shifts = rng.uniform(-1.0, 1.0, size=(n_samples, 3))
    if model == "l1":
        shifts *= (eps * rng.uniform(size=(n_samples, 1))) / np.abs(shifts).sum(axis=1, keepdims=True)
    else:
        shifts *= eps
    violations = np.empty(n_samples)
    for i, shift in enumerate(shifts):
        pa, pb, pc = (Direction.from_angle(float(v)) for v in base + shift)
        violations[i] = bell_report(pa, pb, pc).violation
    return violations


def convergence_scan(a: Direction, b: Direction, c: Direction, sizes: Sequence[int], seed: int,
                     share_stream: bool = False, verbose: bool = False) -> pd.DataFrame:
    """Empirical violation as the number of pairs grows, next to the exact value."""
    exact = bell_report(a, b, c).violation
    rows = []
    iterator = tqdm(sizes, desc="sizes") if verbose else sizes
    for n in iterator:
        report = bell_report(a, b, c, run_scheme(a, b, c, n, seed, share_stream))
        rows.append({
            "n_trials": n,
            "violation": report.violation,
            "combined_stderr": report.combined_stderr,
            "z_score": report.z_score,
            "exact_violation": exact,
            "abs_error": abs(report.violation - exact),
        })
    return pd.DataFrame(rows)


if __name__ == "__main__":
    a, b, c = (Direction.from_angle(x) for x in (0.0, 0.3141593, 1.989675))

    print("=" * 70)
    print("THREE-EXPERIMENT BELL TEST")
    print("=" * 70)

    exact = bell_report(a, b, c)
    print(f"\n📐 Exact: lhs={exact.lhs:.5f} rhs={exact.rhs:.5f} violation={exact.violation:+.5f}")

    runs = run_scheme(a, b, c, n_trials=50_000, seed=1, verbose=True)
    report = bell_report(a, b, c, runs)
    print(f"\n📊 Empirical: violation={report.violation:+.5f} "
          f"+/- {report.combined_stderr:.5f} (z={report.z_score:.1f})")
