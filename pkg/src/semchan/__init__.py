"""Semantic vehicular ISAC channel model.

Three layers build a channel: status profiles (per-scatterer multipath
statistics), behavior profiles (centroid dynamics under straight driving
and turns) and event matrices (which scatterers appear together under a
behavior). The analyzer runs the other direction, from a PDP to labeled
clusters, and the fitter turns labeled clusters back into libraries.
"""
__version__ = "0.1.0"

from .core import (
    BehaviorKind, ChannelRealization, DelayGrid, MultipathComponent, SemanticCluster,
    SemanticLabel, Snapshot, assemble_cir, pdp_of,
)
from .distributions import DistributionSpec, Family, fit_mle, select_best_family
from .events import EventScript, ScriptToken
from .generator import GeneratorConfig, generate, generate_many, realization_stats

__all__ = [
    "BehaviorKind", "ChannelRealization", "DelayGrid", "DistributionSpec", "EventScript", "Family",
    "GeneratorConfig", "MultipathComponent", "ScriptToken", "SemanticCluster", "SemanticLabel",
    "Snapshot", "assemble_cir", "fit_mle", "generate", "generate_many", "pdp_of",
    "realization_stats", "select_best_family", "__version__",
]
