"""Direction math on the upper hemisphere.

Convention: azimuth ``phi`` in [0, 180] degrees and elevation ``theta`` in
[-90, 90] degrees map to::

    l = (cos(theta) cos(phi), sin(theta), cos(theta) sin(phi))

so that the two ranges together cover exactly the z >= 0 hemisphere, with the
camera looking down -z from (0, 0, 1).
"""

from typing import NamedTuple

import numpy as np

from ._validation import HEMISPHERE_TOL, as_directions
from .exceptions import HemisphereError, RangeError


class SphericalCoord(NamedTuple):
    azimuth_deg: float
    elevation_deg: float


def _check_angles(azimuth_deg, elevation_deg):
    az = np.asarray(azimuth_deg, dtype=float)
    el = np.asarray(elevation_deg, dtype=float)
    if not (np.all(np.isfinite(az)) and np.all(np.isfinite(el))):
        raise RangeError("angles must be finite")
    if np.any(az < 0.0) or np.any(az > 180.0):
        raise RangeError(f"azimuth must lie in [0, 180] degrees, got {azimuth_deg}")
    if np.any(el < -90.0) or np.any(el > 90.0):
        raise RangeError(f"elevation must lie in [-90, 90] degrees, got {elevation_deg}")
    return az, el


def spherical_to_cartesian(azimuth_deg, elevation_deg):
    """Convert (azimuth, elevation) in degrees to unit vectors.

    Scalars give a (3,) array; arrays of angles broadcast to (..., 3).
    """
    az, el = _check_angles(azimuth_deg, elevation_deg)
    phi = np.deg2rad(az)
    theta = np.deg2rad(el)
    out = np.stack(
        np.broadcast_arrays(np.cos(theta) * np.cos(phi), np.sin(theta), np.cos(theta) * np.sin(phi)),
        axis=-1,
    )
    # sin(pi) is ~1.2e-16, never negative in a way that matters, but keep z >= 0 exact
    out[..., 2] = np.maximum(out[..., 2], 0.0)
    return out


def cartesian_to_spherical(v):
    """Invert :func:`spherical_to_cartesian`.

    Returns a :class:`SphericalCoord` of floats for a single vector, or of
    arrays for an (n, 3) input. At the poles (y = +-1) azimuth is reported as 0.
    """
    arr = np.asarray(v, dtype=float)
    single = arr.ndim == 1
    dirs = as_directions(arr, "v")
    low = dirs[:, 2] < -HEMISPHERE_TOL
    if np.any(low):
        i = int(np.flatnonzero(low)[0])
        raise HemisphereError(f"v[{i}] lies in the lower hemisphere (z = {dirs[i, 2]:.3g})")
    x, y, z = dirs[:, 0], dirs[:, 1], np.maximum(dirs[:, 2], 0.0)
    el = np.rad2deg(np.arcsin(np.clip(y, -1.0, 1.0)))
    az = np.rad2deg(np.arctan2(z, x))
    pole = np.hypot(x, z) < 1e-15
    az = np.where(pole, 0.0, np.clip(az, 0.0, 180.0))
    if single:
        return SphericalCoord(float(az[0]), float(el[0]))
    return SphericalCoord(az, el)


def angle_between(a, b):
    """Angle in degrees between unit vectors, row-wise for stacked inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    ang = np.rad2deg(np.arccos(dot))
    return float(ang) if np.ndim(ang) == 0 else ang


def pairwise_angles(dirs):
    """(n, n) matrix of angles in degrees between rows of ``dirs``."""
    d = np.asarray(dirs, dtype=float)
    return np.rad2deg(np.arccos(np.clip(d @ d.T, -1.0, 1.0)))


def normalize(v, axis=-1, eps=1e-12):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.maximum(n, eps)
