"""Learned illumination planning for photometric stereo.

The light hemisphere is cut into an azimuth by elevation grid, every bin gets
one captured image, and a relaxed selection matrix picks the ``M`` bins whose
images let a per-pixel normal network do best. Baselines (random, spherical
k-means, orthogonal triplet) and an exhaustive oracle share the same scorer.
"""

from .exceptions import (CapError, ConditioningError, ConfigurationError, DatasetError,
                         DuplicateSelectionWarning, FeasibilityError, FormatError,
                         HemisphereError, InputError, LipidsError, NotFittedError,
                         OrthogonalityWarning, RangeError, ShapeError)
from .geometry import angle_between, cartesian_to_spherical, spherical_to_cartesian
from .lightspace import LightBinAssigner, LightBinGrid, assign_lights, bin_sample, make_grid
from .normalnet import NormalNet
from .planner import (PlanResult, compare, plan_exhaustive, plan_kmeans, plan_orthogonal_triplet,
                      plan_random)
from .psolve import evaluate_configuration, least_squares_normals, mean_angular_error
from .render import RenderedSample, SceneSpec, render_dataset
from .selector import LearnedConfiguration, SelectionMatrix, anneal_alpha, harden, soft_select
from .trainer import IlluminationPlanner, TrainConfig, fit

__version__ = "0.1.0"

__all__ = [
    "CapError", "ConditioningError", "ConfigurationError", "DatasetError",
    "DuplicateSelectionWarning", "FeasibilityError", "FormatError", "HemisphereError",
    "InputError", "LipidsError", "NotFittedError", "OrthogonalityWarning", "RangeError",
    "ShapeError", "angle_between", "cartesian_to_spherical", "spherical_to_cartesian",
    "LightBinAssigner", "LightBinGrid", "assign_lights", "bin_sample", "make_grid",
    "NormalNet", "PlanResult", "compare", "plan_exhaustive", "plan_kmeans",
    "plan_orthogonal_triplet", "plan_random", "evaluate_configuration",
    "least_squares_normals", "mean_angular_error", "RenderedSample", "SceneSpec",
    "render_dataset", "LearnedConfiguration", "SelectionMatrix", "anneal_alpha", "harden",
    "soft_select", "IlluminationPlanner", "TrainConfig", "fit",
]
