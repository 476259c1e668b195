"""Multi-agent planning from global STL missions with synchronous tasks.

Missions are compiled to mixed-integer linear programs, solved, and the
resulting trajectories are re-checked by a direct semantics oracle.
"""

from .dynamics import AgentModel, double_integrator_2d, rollout
from .groups import enumerate_groups, group_count
from .milp import EncodingContext, MilpModel, assemble_problem
from .oracle import UNSAT, rho_sync, rho_sync_global, sat_global, sat_inner
from .scenario import Scenario, load_scenario, parse_scenario
from .solver import SolveOptions, Solution, export_model, solve
from .spec import (Agent, And, Finally, Fleet, GlobalSpec, Globally, LinearPredicate, Not, Or,
                   Pred, SyncTask, Task, Until, formula_horizon, to_nnf, validate)
from .syntax import parse_spec, print_spec

__version__ = "0.1.0"
