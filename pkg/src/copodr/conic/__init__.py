"""Standard-form conic programs: assembly, solution and file interchange."""
from .program import ConicBuilder, ConicProgram, Solution
from .solver import SolveOptions, presolve, residuals, solve
from .assemble import Assembly, assemble

__all__ = ["Assembly", "assemble", "ConicBuilder", "ConicProgram", "Solution", "SolveOptions", "presolve", "residuals", "solve"]
