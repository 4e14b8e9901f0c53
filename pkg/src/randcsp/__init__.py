"""Counting and sampling for atomic CSPs via recursive coupling and linear programming."""
from .csp import (AtomicConstraint, AtomicFormula, PartialAssignment, PinnedConstraint, SATISFIED, VIOLATED,
                  build_graphs, concat, constraint_order, evaluate, pin_constraint, pin_formula)
from .errors import (BudgetExceeded, CSPError, EmptySupport, InfeasibleCount, InputError, NoFeasibleCell,
                     NumericalFailure, OverlapError, PinningViolation, Unsatisfiable, ZeroDenominator)
from .generators import Hypergraph, coloring_to_atomic, gen_ksat, gen_uniform_hypergraph

__version__ = "0.1.0"
