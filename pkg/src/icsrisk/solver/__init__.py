from .bnb import MilpOptions, MilpSolution, solve_milp
from .external import solve_external
from .lp import LpSolution, certify, solve_instance_lp, solve_lp
from .lpfile import export_lp, import_solution, parse_lp, read_lp, write_solution
from .simplex import simplex

__all__ = ["LpSolution", "MilpOptions", "MilpSolution", "certify", "export_lp",
           "import_solution", "parse_lp", "read_lp", "simplex", "solve_external",
           "solve_instance_lp", "solve_lp", "solve_milp", "write_solution"]
