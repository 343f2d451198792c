"""Low-switching minibatch SGD learning for inventory systems."""

from .apps import MultiEchelonApp, MultiProductApp, OwmsApp
from .baselines import SaaPolicy, SgdPolicy, saa_step
from .core import ConstraintSet, DemandModel, ProjectionError, RandomStream
from .meta_policy import ContractViolation, MetaPolicy, Trajectory, run_episode, simulate
from .optimizer import BatchSchedule, OptimizerState, TheoryConstants, minibatch_step
from .two_echelon import TwoEchelonInstance, epoch_optimize, planner_run

__version__ = "0.1.0"

__all__ = [
    "BatchSchedule",
    "ConstraintSet",
    "ContractViolation",
    "DemandModel",
    "MetaPolicy",
    "MultiEchelonApp",
    "MultiProductApp",
    "OptimizerState",
    "OwmsApp",
    "ProjectionError",
    "RandomStream",
    "SaaPolicy",
    "SgdPolicy",
    "TheoryConstants",
    "Trajectory",
    "TwoEchelonInstance",
    "epoch_optimize",
    "minibatch_step",
    "planner_run",
    "run_episode",
    "saa_step",
    "simulate",
]
