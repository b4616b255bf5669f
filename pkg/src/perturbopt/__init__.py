"""perturbopt: alternating block minimization with convergence certificates,
sup-norm expansions for perturbed convex optimization, and a seeded
Bradley-Terry-Luce experiment harness."""

from . import ao, btl, errors, expansions, experiments, numkit, objective, tolerances

__version__ = "0.1.0"

__all__ = [
    "ao",
    "btl",
    "errors",
    "expansions",
    "experiments",
    "numkit",
    "objective",
    "tolerances",
    "__version__",
]
