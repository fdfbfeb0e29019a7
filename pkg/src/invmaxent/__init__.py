"""Group-invariant maximum-entropy models on finite lattices."""

__version__ = "0.1.0"

from .group import (  # noqa: E402
    GroupAction,
    GroupElement,
    GroupSpec,
    LatticeSpace,
    build_action,
    close_group,
    microimage_group,
    microimage_space,
    orbit_count_formula,
    reynolds_apply,
    symmetrize_distribution,
)
from .invariants import GeneratorSet, microimage_generators, orbit_indicator, orbit_signature  # noqa: E402
from .maxent import ConstraintSet, MaxEntModel, entropy, kl, solve_maxent  # noqa: E402
from .builder import BuilderConfig, greedy_build, make_pools, stepwise_build  # noqa: E402

__all__ = [
    "BuilderConfig",
    "ConstraintSet",
    "GeneratorSet",
    "GroupAction",
    "GroupElement",
    "GroupSpec",
    "LatticeSpace",
    "MaxEntModel",
    "build_action",
    "close_group",
    "entropy",
    "greedy_build",
    "kl",
    "make_pools",
    "microimage_generators",
    "microimage_group",
    "microimage_space",
    "orbit_count_formula",
    "orbit_indicator",
    "orbit_signature",
    "reynolds_apply",
    "solve_maxent",
    "stepwise_build",
    "symmetrize_distribution",
]
