"""Input validation helpers shared by the public functions and estimators."""

import numpy as np

from .exceptions import HemisphereError, InputError, NotFittedError, RangeError, ShapeError

UNIT_TOL = 1e-6
HEMISPHERE_TOL = 1e-9


def as_directions(v, name="directions", unit_tol=UNIT_TOL):
    """Return ``v`` as a float (n, 3) array of unit vectors.

    A single 3-vector is promoted to shape (1, 3).
    """
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeError(f"{name} must have shape (n, 3), got {np.shape(v)}")
    if not np.all(np.isfinite(arr)):
        raise RangeError(f"{name} contains non-finite values")
    norms = np.linalg.norm(arr, axis=1)
    bad = np.abs(norms - 1.0) > unit_tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise RangeError(f"{name}[{i}] is not unit-norm (|v| = {norms[i]:.6g})")
    return arr


def check_upper_hemisphere(dirs, name="directions"):
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    low = dirs[:, 2] < -HEMISPHERE_TOL
    if np.any(low):
        i = int(np.flatnonzero(low)[0])
        raise HemisphereError(f"{name}[{i}] has z = {dirs[i, 2]:.6g} < 0")
    return dirs


def check_mask(mask, shape=None, name="mask"):
    m = np.asarray(mask).astype(bool)
    if shape is not None and m.shape != tuple(shape):
        raise ShapeError(f"{name} shape {m.shape} does not match {tuple(shape)}")
    if not m.any():
        raise InputError(f"{name} selects no pixels")
    return m


def check_positive_int(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise RangeError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
