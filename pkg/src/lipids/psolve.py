"""Least-squares Lambertian photometric stereo and angular-error scoring."""

from dataclasses import dataclass

import numpy as np

from ._validation import as_directions, check_mask
from .exceptions import ConditioningError, ConfigurationError, InputError, RangeError, ShapeError

SHADOW_THRESHOLD = 1e-4
MAX_CONDITION = 1e6
DEGENERATE_NORM = 1e-9


@dataclass
class PSResult:
    normals: np.ndarray
    n_pixels: int
    n_degenerate: int


def _gray(images):
    images = np.asarray(images, dtype=float)
    return images.mean(axis=-1) if images.ndim == 4 else images


def least_squares_normals(images, lights, mask, shadow_threshold=SHADOW_THRESHOLD,
                          max_condition=MAX_CONDITION):
    """Per-pixel least squares ``argmin_b |L b - i|`` with ``n = b / |b|``.

    Color images are averaged over channels first. Observations darker than
    ``shadow_threshold`` are dropped from a pixel's system when at least three
    others remain; otherwise all of them are used. Pixels whose solution has
    norm below 1e-9 are reported as degenerate and given (0, 0, 1).

    Raises:
        ConfigurationError: fewer than three lights.
        ConditioningError: the full light matrix has condition number >= ``max_condition``.
    """
    L = as_directions(lights, "lights")
    gray = _gray(images)
    if len(L) < 3:
        raise ConfigurationError(f"least squares needs at least 3 lights, got {len(L)}")
    if gray.shape[0] != len(L):
        raise ShapeError(f"{gray.shape[0]} images but {len(L)} lights")
    mask = check_mask(mask, gray.shape[1:])
    cond = np.linalg.cond(L)
    if not np.isfinite(cond) or cond >= max_condition:
        raise ConditioningError(cond)

    rows, cols = np.nonzero(mask)
    obs = gray[:, rows, cols].T  # (q, M)
    usable = obs >= shadow_threshold
    enough = usable.sum(axis=1) >= 3
    pattern = np.where(enough[:, None], usable, True)
    codes, inverse = np.unique(pattern, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    b = np.empty((len(obs), 3))
    for k, code in enumerate(codes):
        sel = inverse == k
        P = np.linalg.pinv(L[code])
        b[sel] = obs[sel][:, code] @ P.T
    norm = np.linalg.norm(b, axis=1)
    degenerate = norm < DEGENERATE_NORM
    n = np.where(degenerate[:, None], (0.0, 0.0, 1.0), b / np.where(degenerate, 1.0, norm)[:, None])
    normals = np.zeros(mask.shape + (3,))
    normals[rows, cols] = n
    return PSResult(normals, int(len(obs)), int(degenerate.sum()))


def angular_errors(pred, gt, mask):
    """Per-pixel angle in degrees between two normal maps, on the mask."""
    mask = check_mask(mask)
    pred = np.asarray(pred, dtype=float)[mask]
    gt = np.asarray(gt, dtype=float)[mask]
    return np.rad2deg(np.arccos(np.clip(np.sum(pred * gt, axis=-1), -1.0, 1.0)))


def mean_angular_error(pred, gt, mask):
    """Mean angle (degrees) between estimated and true normals over the mask."""
    return float(np.mean(angular_errors(pred, gt, mask)))


def mean_cosine_error(pred, gt, mask):
    """Mean of ``1 - pred.gt`` over the mask (the training-time surrogate of MAE)."""
    mask = check_mask(mask)
    return float(np.mean(1.0 - np.sum(np.asarray(pred)[mask] * np.asarray(gt)[mask], axis=-1)))


def dedupe(indices):
    """Distinct indices in first-seen order."""
    seen = []
    for i in indices:
        i = int(i)
        if i not in seen:
            seen.append(i)
    return seen


def select_bins(sample, bin_indices):
    """Images and lights of ``sample`` for the given bins (duplicates dropped)."""
    idx = dedupe(bin_indices)
    if sample.bin_ids is None:
        positions = idx
        limit = sample.n_lights
        for i in idx:
            if not 0 <= i < limit:
                raise RangeError(f"image index {i} outside [0, {limit})")
    else:
        lookup = {int(b): j for j, b in enumerate(sample.bin_ids)}
        missing = [i for i in idx if i not in lookup]
        if missing:
            raise RangeError(f"bins {missing} carry no light in sample {sample.name!r}")
        positions = [lookup[i] for i in idx]
    return sample.images[positions], sample.lights[positions]


def estimate_normals(sample, bin_indices, backend="ls"):
    """Normal map from the chosen bins with ``"ls"`` or a fitted network."""
    images, lights = select_bins(sample, bin_indices)
    if isinstance(backend, str):
        if backend != "ls":
            raise ConfigurationError(f"unknown backend {backend!r}")
        res = least_squares_normals(images, lights, sample.mask)
        return res.normals, res.n_degenerate
    if not hasattr(backend, "predict"):
        raise ConfigurationError("backend must be 'ls' or expose predict(images, lights, mask)")
    return backend.predict(images, lights, sample.mask), 0


def evaluate_configuration(sample, bin_indices, backend="ls", details=False):
    """MAE in degrees of ``backend`` run on the selected bins of ``sample``.

    With ``details=True`` returns a dict with ``mae_deg``, ``n_pixels``,
    ``n_degenerate`` and the de-duplicated ``bin_indices``.
    """
    normals, n_deg = estimate_normals(sample, bin_indices, backend)
    mae = mean_angular_error(normals, sample.normals, sample.mask)
    if not details:
        return mae
    return {
        "mae_deg": mae,
        "n_pixels": int(np.count_nonzero(sample.mask)),
        "n_degenerate": int(n_deg),
        "bin_indices": dedupe(bin_indices),
    }


def evaluate_on_samples(samples, bin_indices, backend="ls"):
    """Mean of :func:`evaluate_configuration` over several samples."""
    if len(samples) == 0:
        raise InputError("no samples to evaluate")
    return float(np.mean([evaluate_configuration(s, bin_indices, backend) for s in samples]))
