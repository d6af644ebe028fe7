import sys
import time
from pathlib import Path

import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from epr.ghz import (CROSS_PARTICLE, SAME_PARTICLE_A, SAME_PARTICLE_RA, VARIABLES, Constraint,
                     ConstraintSystem, Relation, SignVar, all_assignments, cross_particle_system,
                     full_attribution_system, solve)
from epr.response import Sign


def test_cross_particle_system_is_satisfiable():
    result = solve(cross_particle_system())
    assert result.satisfiable
    assert all(c.holds(result.witness) for c in CROSS_PARTICLE)
    assert result.witness == {
        SignVar.S1_a: Sign.PLUS, SignVar.S1_Ra: Sign.MINUS,
        SignVar.S2_a: Sign.PLUS, SignVar.S2_Ra: Sign.MINUS,
    }


def test_full_system_is_unsatisfiable_with_checked_certificate():
    system = full_attribution_system()
    result = solve(system)
    assert not result.satisfiable
    assert len(result.certificate) == 16
    by_label = {c.label: c for c in system.constraints}
    seen = set()
    for assignment, label in result.certificate:
        assert not by_label[label].holds(assignment)
        seen.add(tuple(assignment[v] for v in VARIABLES))
    assert len(seen) == 16


@pytest.mark.parametrize("extra", [SAME_PARTICLE_A, SAME_PARTICLE_RA])
def test_each_same_particle_attribution_contradicts(extra):
    assert not solve(cross_particle_system().plus(extra)).satisfiable


def test_dropping_three_alone_stays_unsatisfiable():
    # (2) and (4) already force S1_a = S2_a
    assert not solve(full_attribution_system().without("(3)")).satisfiable


def test_dropping_three_and_four_restores_satisfiability():
    result = solve(full_attribution_system().without("(3)", "(4)"))
    assert result.satisfiable
    assert full_attribution_system().without("(3)", "(4)").first_violated(result.witness) is None


def test_enumeration_order_and_count():
    assignments = list(all_assignments())
    assert len(assignments) == 16
    assert all(v is Sign.PLUS for v in assignments[0].values())
    assert all(v is Sign.MINUS for v in assignments[-1].values())


def test_constraint_validation():
    with pytest.raises(ValueError):
        Constraint(SignVar.S1_a, SignVar.S1_a, Relation.EQUAL, "(x)")
    with pytest.raises(ValueError):
        ConstraintSystem(())
    with pytest.raises(ValueError):
        full_attribution_system().without("(9)")


def test_solve_is_fast():
    start = time.perf_counter()
    for _ in range(100):
        solve(full_attribution_system())
    assert (time.perf_counter() - start) / 100 < 0.01


def test_single_equality_is_satisfiable():
    system = ConstraintSystem((Constraint(SignVar.S1_a, SignVar.S2_a, Relation.EQUAL, "(eq)"),))
    result = solve(system)
    assert result.satisfiable
    assert result.witness[SignVar.S1_a] == result.witness[SignVar.S2_a]
