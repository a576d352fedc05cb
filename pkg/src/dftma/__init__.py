"""Dynamic fault tree analysis via Markov automata.

Parses Galileo-dialect fault trees, generates reduced state spaces
(symmetry reduction, partial-order reduction over dependencies, don't-care
propagation, modularisation), computes reliability-class measures on the
resulting CTMC/MA, and synthesises sound parameter regions for symbolic
failure rates via exact rational functions.
"""

from .galileo import (DftError, DftParseError, DftValidationError, Kind,
                      parse_dft, print_dft, validate)
from .model import (DftModel, SymmetryGroup, build_model,
                    detect_independent_modules, detect_symmetries)
from .state_space import (BLOCKED, FtState, GenOptions, MarkovAutomaton,
                          StateBudgetExceeded, apply_be_failure, canonicalize,
                          generate, initial_state, successors)
from .measures import (CompatibilityError, MeasureKind, MeasureSpec,
                       OptimisationFlags, check_compatibility, parse_event)
from .analysis import (Ctmc, NondeterminismRemains, NotModular,
                       UndefinedMeasure, eliminate_immediate, expected_faults,
                       importance_crit, importance_fv, modular_reliability,
                       mttf, mttf_bounds, prob_fail, prob_fail_bounds,
                       reliability, vttf)
from .poly import Polynomial, RationalFunction
from .synth import (DenominatorMayVanish, Interval, RegionVerdict,
                    interval_eval, param_eliminate, partition, sensitivity)

__version__ = "0.1.0"
