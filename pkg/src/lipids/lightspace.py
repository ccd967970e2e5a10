"""Discretized light space: a uniform azimuth x elevation grid over the
upper hemisphere and greedy assignment of observed lights to its bins."""

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_directions, check_is_fitted, check_positive_int, check_upper_hemisphere
from .exceptions import InputError, RangeError
from .geometry import angle_between, cartesian_to_spherical, spherical_to_cartesian

UNASSIGNED = -1


@dataclass(frozen=True)
class LightBinGrid:
    """Uniform grid of ``n_azimuth * n_elevation`` cells.

    Bin ``k`` has azimuth cell ``k % n_azimuth`` and elevation cell
    ``k // n_azimuth``; elevation cells run from -90 upward.
    """

    n_azimuth: int = 8
    n_elevation: int = 6

    def __post_init__(self):
        check_positive_int(self.n_azimuth, "n_azimuth")
        check_positive_int(self.n_elevation, "n_elevation")

    @property
    def n_bins(self):
        return self.n_azimuth * self.n_elevation

    @property
    def azimuth_width(self):
        return 180.0 / self.n_azimuth

    @property
    def elevation_width(self):
        return 180.0 / self.n_elevation

    @property
    def max_deviation(self):
        """Largest angular offset (azimuth, elevation) from a cell center."""
        return self.azimuth_width / 2.0, self.elevation_width / 2.0

    @cached_property
    def azimuth_centers(self):
        return (np.arange(self.n_azimuth) + 0.5) * self.azimuth_width

    @cached_property
    def elevation_centers(self):
        return -90.0 + (np.arange(self.n_elevation) + 0.5) * self.elevation_width

    @cached_property
    def bin_centers(self):
        """(K, 3) unit vectors, row ``k`` is the center of bin ``k``."""
        el, az = np.meshgrid(self.elevation_centers, self.azimuth_centers, indexing="ij")
        return spherical_to_cartesian(az.ravel(), el.ravel())

    def cell_bounds(self, k):
        """((az_lo, az_hi), (el_lo, el_hi)) in degrees for bin ``k``."""
        if not 0 <= k < self.n_bins:
            raise RangeError(f"bin index {k} outside [0, {self.n_bins})")
        ia, ie = k % self.n_azimuth, k // self.n_azimuth
        az_lo = ia * self.azimuth_width
        el_lo = -90.0 + ie * self.elevation_width
        return (az_lo, az_lo + self.azimuth_width), (el_lo, el_lo + self.elevation_width)


def make_grid(n_azimuth=8, n_elevation=6):
    return LightBinGrid(n_azimuth, n_elevation)


def bin_of(grid, lights):
    """Cell index of each light by floor division of its angles.

    Boundary angles fall into the higher cell; 180 degrees azimuth and +90
    elevation stay in the last cell. Returns an int for a single 3-vector.
    """
    single = np.ndim(lights) == 1
    dirs = check_upper_hemisphere(as_directions(lights, "lights"), "lights")
    az, el = cartesian_to_spherical(dirs)
    ia = np.minimum(np.floor(az / grid.azimuth_width).astype(int), grid.n_azimuth - 1)
    ie = np.minimum(np.floor((el + 90.0) / grid.elevation_width).astype(int), grid.n_elevation - 1)
    idx = ie * grid.n_azimuth + ia
    return int(idx[0]) if single else idx


@dataclass
class BinAssignment:
    """Result of :func:`assign_lights`.

    ``pairs[k]`` is the light index held by bin ``k`` or ``UNASSIGNED``;
    ``residual_deg[k]`` is the bin-center/light angle (NaN when unassigned).
    """

    pairs: np.ndarray
    residual_deg: np.ndarray
    unique: bool = True

    @property
    def assigned_bins(self):
        return np.flatnonzero(self.pairs != UNASSIGNED)

    @property
    def n_unassigned(self):
        return int(np.sum(self.pairs == UNASSIGNED))

    def to_rows(self):
        """``(bin_index, light_index, residual_deg)`` for every assigned bin."""
        return [(int(k), int(self.pairs[k]), float(self.residual_deg[k])) for k in self.assigned_bins]


def assign_lights(grid, lights, unique=True):
    """Greedy bin/light matching in order of increasing angle.

    Every (bin, light) angle is computed, the pairs are sorted ascending
    (ties broken by bin index, then light index) and each still-empty bin
    takes the light of its first pair. With ``unique=True`` a light that has
    already been placed is skipped, so no light serves two bins; bins left
    over when the lights run out stay ``UNASSIGNED``.
    """
    dirs = np.asarray(lights, dtype=float)
    if dirs.size == 0:
        raise InputError("at least one light is required")
    dirs = check_upper_hemisphere(as_directions(dirs, "lights"), "lights")
    centers = grid.bin_centers
    n_bins, n_lights = len(centers), len(dirs)

    angles = angle_between(centers[:, None, :], dirs[None, :, :])
    angles = np.atleast_2d(angles).reshape(n_bins, n_lights)
    bins_idx, lights_idx = np.meshgrid(np.arange(n_bins), np.arange(n_lights), indexing="ij")
    flat_angle = angles.ravel()
    flat_bin = bins_idx.ravel()
    flat_light = lights_idx.ravel()
    order = np.lexsort((flat_light, flat_bin, flat_angle))

    pairs = np.full(n_bins, UNASSIGNED, dtype=int)
    residual = np.full(n_bins, np.nan)
    used = np.zeros(n_lights, dtype=bool)
    remaining = n_bins
    for o in order:
        b, j = flat_bin[o], flat_light[o]
        if pairs[b] != UNASSIGNED or (unique and used[j]):
            continue
        pairs[b] = j
        residual[b] = flat_angle[o]
        used[j] = True
        remaining -= 1
        if remaining == 0 or (unique and used.all()):
            break
    return BinAssignment(pairs, residual, unique)


def sample_bin_lights(grid, rng=None, jitter=1.0):
    """One light per bin, drawn uniformly in angle within ``jitter`` of each cell.

    ``jitter=0`` returns the bin centers; ``jitter=1`` spans the full cell.
    """
    if not 0.0 <= jitter <= 1.0:
        raise RangeError(f"jitter must lie in [0, 1], got {jitter}")
    rng = np.random.default_rng(rng)
    el_c, az_c = np.meshgrid(grid.elevation_centers, grid.azimuth_centers, indexing="ij")
    u = rng.uniform(-0.5, 0.5, size=(2, grid.n_bins)) * jitter
    az = az_c.ravel() + u[0] * grid.azimuth_width
    el = el_c.ravel() + u[1] * grid.elevation_width
    return spherical_to_cartesian(np.clip(az, 0.0, 180.0), np.clip(el, -90.0, 90.0))


def bin_sample(sample, grid, unique=True):
    """Reorder a rendered sample so image ``j`` belongs to bin ``bin_ids[j]``.

    Unassigned bins are dropped; the result carries ``bin_ids`` (ascending).
    """
    assignment = assign_lights(grid, sample.lights, unique=unique)
    bins = assignment.assigned_bins
    picks = assignment.pairs[bins]
    return replace(
        sample,
        images=sample.images[picks],
        lights=sample.lights[picks],
        bin_ids=bins.copy(),
    )


class LightBinAssigner(TransformerMixin, BaseEstimator):
    """Assign a capture's light directions to grid bins.

    ``fit(lights)`` runs the greedy assignment; ``transform(images)`` takes
    the matching stack of images (first axis = light) and returns one image
    per assigned bin in bin order.

    Attributes:
        grid_: the :class:`LightBinGrid`.
        assignment_: the :class:`BinAssignment`.
        bin_ids_: indices of bins that received a light.
    """

    def __init__(self, n_azimuth=8, n_elevation=6, unique=True):
        self.n_azimuth = n_azimuth
        self.n_elevation = n_elevation
        self.unique = unique

    def fit(self, X, y=None):
        self.grid_ = LightBinGrid(self.n_azimuth, self.n_elevation)
        self.assignment_ = assign_lights(self.grid_, X, unique=self.unique)
        self.bin_ids_ = self.assignment_.assigned_bins
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "assignment_")
        X = np.asarray(X)
        picks = self.assignment_.pairs[self.bin_ids_]
        if X.shape[0] <= picks.max():
            raise InputError(f"expected at least {picks.max() + 1} images, got {X.shape[0]}")
        return X[picks]

    def binned_lights(self, lights):
        check_is_fitted(self, "assignment_")
        return np.asarray(lights, dtype=float)[self.assignment_.pairs[self.bin_ids_]]
