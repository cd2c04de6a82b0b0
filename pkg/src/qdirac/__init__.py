"""Numerical toolkit for the q-Dirac boundary value problem on a q-geometric lattice."""
from .errors import (BracketError, ConvergenceError, DegenerateNormalizationError, DomainError,
                     LatticeIndexError, MissedEigenvalueWarning, NumericalError,
                     PrecisionLossWarning, QDiracError)
from .qcore import (LatticeFn, QLattice, Spinor, ZeroDerivative, build_lattice,
                    format_lattice_fn, jackson_integral, q_diff, q_diff_at_zero, q_diff_values,
                    q_inv_diff, read_lattice_fn, write_lattice_fn)
from .qtrig import (QTrigContext, SeriesValue, ZeroTable, evaluate, growth_envelope, q_cos,
                    q_pochhammer, q_sin, trig_zeros, zero_seed)
from .solver import (BoundarySpec, Problem, SolutionAtLambda, SolverOverflowError,
                     free_solutions, make_potential, propagate, solution_mp, successive_approx,
                     system_defect, wronskian)
from .spectrum import (CASES, Check, EigenResult, SpectrumReport, asymptotic_eigenvalue,
                       boundary_case, char_delta, eigenfunction_asymptotics_check,
                       find_eigenvalues, q_inner_product, simplicity_check)

__version__ = "0.1.0"
