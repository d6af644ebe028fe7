"""
Run artefacts: one trial CSV per experiment and the Bell report JSON.

Both are byte-for-byte reproducible from (angles, n_trials, seed, share_stream);
nothing time- or host-dependent is written.
"""

import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
from scipy import stats

from epr.errors import VerificationError
from epr.experiment import (SCHEME, CorrelationEstimate, TrialRecord, bell_report,
                            chameleon_substitution_audit, empirical_corr, observables_for_scheme,
                            pointwise_bell_identity, scheme_seeds)
from epr.geometry import Direction, Point
from epr.oracle import ordered_concordance_report
from epr.response import Sign

CSV_COLUMNS = ["trial", "x", "y", "setting1_rad", "setting2_rad", "answer1", "answer2"]
FLOAT_FORMAT = "%.17g"
PUBLISHED_VIOLATION = 0.521
DISCREPANCY_NOTE = (
    "The published magnitude of about 0.521 is not reproduced by the semidisk response "
    "rule; with that rule every correlation equals 1 - 2*delta/pi and the exact "
    "violation is the reconstructed value reported here. Acceptance requires a strictly positive "
    "violation, not the published magnitude."
)
VERIFY_TOLERANCE = 1e-12


def trial_csv_path(csv_dir: Path, tag: str) -> Path:
    return Path(csv_dir) / f"experiment_{tag}.csv"


def records_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "trial": [r.trial_id for r in records],
            "x": [r.point.x for r in records],
            "y": [r.point.y for r in records],
            "setting1_rad": [r.setting1.angle_rad for r in records],
            "setting2_rad": [r.setting2.angle_rad for r in records],
            "answer1": [int(r.answer1) for r in records],
            "answer2": [int(r.answer2) for r in records],
        },
        columns=CSV_COLUMNS,
    )


def write_trial_csv(records: Sequence[TrialRecord], path: Path) -> Path:
    """Write records with 17 significant digits so every double reads back exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_trial_csv(path: Path) -> List[TrialRecord]:
    """
    Read a trial CSV back into records.

    Raises:
        VerificationError: wrong header or an answer outside {-1, 1}
    """
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != CSV_COLUMNS:
        raise VerificationError(f"{path} has columns {list(df.columns)}, expected {CSV_COLUMNS}")
    records = []
    try:
        for row in df.itertuples(index=False):
            records.append(TrialRecord(
                trial_id=int(row.trial),
                point=Point(float(row.x), float(row.y)),
                setting1=Direction.from_angle(float(row.setting1_rad)),
                setting2=Direction.from_angle(float(row.setting2_rad)),
                answer1=Sign.of(int(row.answer1)),
                answer2=Sign.of(int(row.answer2)),
            ))
    except ValueError as e:
        raise VerificationError(f"{path}: {e}") from e
    return records


def build_report(a: Direction, b: Direction, c: Direction, runs: Dict[str, Sequence[TrialRecord]],
                 seed: int, share_stream: bool) -> Dict:
    """
    Assemble the report of one three-experiment run.

    Carries the exact and empirical Bell reports, the per-experiment seeds, the
    concordances, the four measured observables and, for a shared stream, the
    pointwise identity and substitution audits.
    """
    exact = bell_report(a, b, c)
    empirical = bell_report(a, b, c, runs)
    n_trials = len(runs["I"])
    report = {
        "angles_rad": {"a": a.angle_rad, "b": b.angle_rad, "c": c.angle_rad},
        "n_trials": n_trials,
        "seed": seed,
        "share_stream": share_stream,
        "seeds": scheme_seeds(seed, share_stream),
        "scheme": {tag: list(pair) for tag, pair in SCHEME.items()},
        "exact": exact.to_dict(),
        "empirical": empirical.to_dict(),
        "concordance": ordered_concordance_report(a, b, c),
        "observables_rad": {name: d.angle_rad for name, d in observables_for_scheme(a, b, c).items()},
        "published_comparison": {
            "published_violation": PUBLISHED_VIOLATION,
            "reconstructed_violation": exact.violation,
            "note": DISCREPANCY_NOTE,
        },
    }
    if share_stream:
        holds = all(pointwise_bell_identity(r.point, a, b, c)[2] for r in runs["I"])
        report["pointwise_identity_holds"] = holds
        report["substitution_failure_fraction"] = chameleon_substitution_audit(
            runs["I"], runs["II"], runs["III"])
    return report


def write_report(report: Dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def load_report(path: Path) -> Dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _check(name: str, reported: float, recomputed: float):
    if not math.isclose(reported, recomputed, rel_tol=0.0, abs_tol=VERIFY_TOLERANCE):
        raise VerificationError(f"{name}: report says {reported!r}, recomputed {recomputed!r}")


def _check_close(name: str, reported: Optional[float], recomputed: float):
    if reported is None or not math.isclose(reported, recomputed, rel_tol=1e-9, abs_tol=0.0):
        raise VerificationError(f"{name}: report says {reported!r}, recomputed {recomputed!r}")


def _verify_block(label: str, block: Dict):
    def value(key):
        e = block[key]
        return e["value"] if isinstance(e, dict) else e

    lhs = abs(value("e_ab") - value("e_cb"))
    rhs = 1.0 + value("e_ac")
    _check(f"{label}.lhs", block["lhs"], lhs)
    _check(f"{label}.rhs", block["rhs"], rhs)
    _check(f"{label}.violation", block["violation"], lhs - rhs)
    if block["mode"] == "EMPIRICAL":
        combined = math.sqrt(sum(block[k]["stderr"] ** 2 for k in ("e_ab", "e_cb", "e_ac")))
        _check(f"{label}.combined_stderr", block["combined_stderr"], combined)
        if combined > 0.0:
            z = block["violation"] / combined
            _check_close(f"{label}.z_score", block["z_score"], z)
            _check_close(f"{label}.p_value", block["p_value"], float(stats.norm.sf(z)))
        elif block["z_score"] is not None or block["p_value"] is not None:
            raise VerificationError(f"{label}: z_score and p_value must be null when combined_stderr is 0")


def verify_report(report: Union[Dict, Path], csv_dir: Optional[Path] = None) -> bool:
    """
    Recompute lhs, rhs, violation, combined_stderr, z_score and p_value from a report.

    With `csv_dir` the empirical correlations are also recomputed from the trial CSVs.

    Raises:
        VerificationError: any mismatch
    """
    if not isinstance(report, dict):
        report = load_report(report)
    try:
        _verify_block("exact", report["exact"])
        _verify_block("empirical", report["empirical"])
    except KeyError as e:
        raise VerificationError(f"report is missing field {e}") from e

    if csv_dir is not None:
        keys = {"I": "e_ab", "II": "e_cb", "III": "e_ac"}
        for tag, key in keys.items():
            estimate: CorrelationEstimate = empirical_corr(read_trial_csv(trial_csv_path(csv_dir, tag)))
            _check(f"empirical.{key} from {tag}", report["empirical"][key]["value"], estimate.value)
    return True
