"""
Finite +1/-1 value attributions and their exhaustive satisfiability check.

Four variables (S1_a, S1_Ra, S2_a, S2_Ra) and equality/negation constraints. The
cross-particle relations are satisfiable; adding the same-particle attributions
makes the set contradictory without any statistics involved.
"""

from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Dict, Iterable, List, Optional, Tuple

from epr.response import Sign


class SignVar(Enum):
    S1_a = "S1_a"
    S1_Ra = "S1_Ra"
    S2_a = "S2_a"
    S2_Ra = "S2_Ra"


VARIABLES: Tuple[SignVar, ...] = tuple(SignVar)


class Relation(Enum):
    EQUAL = "EQUAL"
    NEGATION = "NEGATION"


Assignment = Dict[SignVar, Sign]


@dataclass(frozen=True)
class Constraint:
    left: SignVar
    right: SignVar
    relation: Relation
    label: str

    def __post_init__(self):
        if self.left == self.right:
            raise ValueError(f"constraint {self.label} relates {self.left.value} to itself")

    def holds(self, assignment: Assignment) -> bool:
        same = assignment[self.left] == assignment[self.right]
        return same if self.relation is Relation.EQUAL else not same

    def __str__(self) -> str:
        op = "=" if self.relation is Relation.EQUAL else "= -"
        return f"{self.label} {self.left.value} {op}{self.right.value}"


@dataclass(frozen=True)
class ConstraintSystem:
    constraints: Tuple[Constraint, ...]

    def __post_init__(self):
        if not self.constraints:
            raise ValueError("a constraint system needs at least one constraint")

    def __len__(self) -> int:
        return len(self.constraints)

    def __contains__(self, item) -> bool:
        return item in self.constraints

    @property
    def labels(self) -> List[str]:
        return [c.label for c in self.constraints]

    def without(self, *labels: str) -> "ConstraintSystem":
        unknown = set(labels) - set(self.labels)
        if unknown:
            raise ValueError(f"unknown constraint labels: {sorted(unknown)}")
        return ConstraintSystem(tuple(c for c in self.constraints if c.label not in labels))

    def plus(self, *extra: Constraint) -> "ConstraintSystem":
        return ConstraintSystem(self.constraints + tuple(extra))

    def first_violated(self, assignment: Assignment) -> Optional[Constraint]:
        for constraint in self.constraints:
            if not constraint.holds(assignment):
                return constraint
        return None


V = SignVar
CROSS_PARTICLE = (
    Constraint(V.S1_a, V.S1_Ra, Relation.NEGATION, "(1)"),
    Constraint(V.S2_a, V.S2_Ra, Relation.NEGATION, "(2)"),
    Constraint(V.S1_a, V.S2_a, Relation.EQUAL, "(3)"),
    Constraint(V.S1_a, V.S2_Ra, Relation.NEGATION, "(4)"),
)
SAME_PARTICLE_A = Constraint(V.S1_a, V.S2_a, Relation.NEGATION, "(5)+(6)")
SAME_PARTICLE_RA = Constraint(V.S1_Ra, V.S2_Ra, Relation.NEGATION, "(7)+(8)")


def cross_particle_system() -> ConstraintSystem:
    return ConstraintSystem(CROSS_PARTICLE)


def full_attribution_system() -> ConstraintSystem:
    return cross_particle_system().plus(SAME_PARTICLE_A, SAME_PARTICLE_RA)


@dataclass(frozen=True)
class Satisfiable:
    witness: Assignment

    satisfiable = True


@dataclass(frozen=True)
class Unsatisfiable:
    # one (assignment, violated constraint label) row per assignment
    certificate: Tuple[Tuple[Assignment, str], ...] = field(default_factory=tuple)

    satisfiable = False


def all_assignments() -> Iterable[Assignment]:
    """All 16 assignments, +1 before -1, variables in declaration order."""
    for values in product((Sign.PLUS, Sign.MINUS), repeat=len(VARIABLES)):
        yield dict(zip(VARIABLES, values))


def solve(system: ConstraintSystem):
    """
    Decide a constraint system by enumerating every assignment.

    Returns:
        Satisfiable with the first satisfying assignment, or Unsatisfiable with
        one violated constraint label for each of the 16 assignments
    """
    rows = []
    for assignment in all_assignments():
        violated = system.first_violated(assignment)
        if violated is None:
            return Satisfiable(assignment)
        rows.append((assignment, violated.label))
    return Unsatisfiable(tuple(rows))


def format_assignment(assignment: Assignment) -> str:
    return " ".join(f"{var.value}={int(sign):+d}" for var, sign in assignment.items())


if __name__ == "__main__":
    print("=" * 70)
    print("SIMULTANEOUS VALUE ATTRIBUTIONS")
    print("=" * 70)

    for name, system in (("cross-particle", cross_particle_system()),
                         ("full attribution", full_attribution_system())):
        result = solve(system)
        print(f"\n🧩 {name}: {'SATISFIABLE' if result.satisfiable else 'UNSATISFIABLE'}")
        if result.satisfiable:
            print(f"   witness: {format_assignment(result.witness)}")
        else:
            for assignment, label in result.certificate:
                print(f"   {format_assignment(assignment)}  violates {label}")
