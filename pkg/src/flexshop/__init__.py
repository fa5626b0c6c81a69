"""flexshop: multi-objective flexible job shop scheduling toolkit.

Builds binary quadratic models of flexible job shop instances, solves them
with exact, simulated-annealing, tabu, or hybrid samplers inside a
bottleneck-guided iterative decomposition, and reports Pareto fronts over
makespan, workload, and priority objectives.
"""

__version__ = "0.1.0"
