"""Differentiable selection of M of K image/light columns.

A learnable K x M matrix ``W`` (all ones at the start) is turned into a
column-stochastic matrix ``softmax(alpha_r * W)`` with ``alpha_r = beta * r**2``
growing with the epoch ``r``. Multiplying the input stack by it blends the
K columns into M; as ``alpha_r`` grows each column sharpens toward a single
input, and the argmax of each column of ``W`` is the selected bin.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .exceptions import ConfigurationError, DuplicateSelectionWarning, RangeError, ShapeError

FEATURES_PER_PIXEL = 6


def anneal_alpha(epoch, beta=10.0):
    """Softmax scale for epoch ``epoch`` (1-based): ``beta * epoch**2``."""
    if epoch < 1:
        raise RangeError(f"epoch must be >= 1, got {epoch}")
    return float(beta) * float(epoch) ** 2


def _column_softmax(W, alpha):
    z = alpha * np.asarray(W, dtype=float)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass
class SelectionMatrix:
    """Learnable selection state: ``weights`` is K x M, initialized to ones."""

    n_bins: int
    n_select: int
    beta: float = 10.0
    epoch: int = 1
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_select < 1 or self.n_bins < 1:
            raise ConfigurationError("n_bins and n_select must be >= 1")
        if self.n_select > self.n_bins:
            raise ConfigurationError(
                f"cannot select {self.n_select} lights from {self.n_bins} bins"
            )
        if self.weights is None:
            self.weights = np.ones((self.n_bins, self.n_select))
        elif self.weights.shape != (self.n_bins, self.n_select):
            raise ShapeError(
                f"weights shape {self.weights.shape} != ({self.n_bins}, {self.n_select})"
            )

    @property
    def alpha(self):
        return anneal_alpha(self.epoch, self.beta)

    def soft_weights(self, epoch=None):
        """Column-stochastic matrix at ``epoch`` (default: current epoch)."""
        alpha = self.alpha if epoch is None else anneal_alpha(epoch, self.beta)
        return _column_softmax(self.weights, alpha)

    def harden(self):
        return harden(self.weights)


def build_input_stack(images, lights, pixels):
    """Stack image/light pairs as columns of a (6q, K) matrix.

    ``images`` is (K, H, W, 3) or (K, H, W); ``pixels`` is a boolean (H, W)
    mask or a ``(rows, cols)`` index pair selecting q pixels. Within a column,
    pixel ``i`` occupies rows ``6i .. 6i+5`` as (r, g, b, lx, ly, lz).
    """
    images = np.asarray(images)
    if images.ndim == 3:
        images = np.repeat(images[..., None], 3, axis=-1)
    lights = np.asarray(lights)
    if len(images) != len(lights):
        raise ShapeError(f"{len(images)} images but {len(lights)} lights")
    if isinstance(pixels, np.ndarray) and pixels.dtype == bool:
        rows, cols = np.nonzero(pixels)
    else:
        rows, cols = pixels
    K, q = len(images), len(rows)
    block = np.empty((q, FEATURES_PER_PIXEL, K), dtype=images.dtype)
    block[:, :3, :] = images[:, rows, cols, :].transpose(1, 2, 0)
    block[:, 3:, :] = lights.T[None, :, :]
    return block.reshape(q * FEATURES_PER_PIXEL, K)


def soft_select(V, W, alpha):
    """``V @ softmax_columns(alpha * W)`` as a differentiable tensor op.

    ``V`` is the (6q, K) input stack (array or tensor), ``W`` the (K, M)
    weight tensor.
    """
    V, W = T.as_tensor(V), T.as_tensor(W)
    if W.value.ndim != 2:
        raise ShapeError(f"selection weights must be a matrix, got shape {W.shape}")
    K, M = W.shape
    if M > K:
        raise ConfigurationError(f"cannot select {M} columns out of {K}")
    if V.shape[1] != K:
        raise ShapeError(f"input stack has {V.shape[1]} columns, weights expect {K}")
    return T.matmul(V, T.softmax_columns(W, alpha))


def harden(W, warn=True):
    """Per-column argmax of ``W`` (lowest index on ties).

    Emits a :class:`DuplicateSelectionWarning` for each bin picked by more
    than one column.
    """
    W = np.asarray(W.value if isinstance(W, T.Tensor) else W, dtype=float)
    picks = [int(i) for i in np.argmax(W, axis=0)]
    if warn:
        seen = {}
        for col, b in enumerate(picks):
            seen.setdefault(b, []).append(col)
        for b, cols in seen.items():
            if len(cols) > 1:
                warnings.warn(DuplicateSelectionWarning(b, cols), stacklevel=2)
    return picks


@dataclass
class LearnedConfiguration:
    """Serializable outcome of training: which bins to light."""

    n_bins: int
    n_select: int
    beta: float
    bin_indices: list
    n_azimuth: int
    n_elevation: int

    def to_dict(self):
        return {
            "K": self.n_bins,
            "M": self.n_select,
            "beta": self.beta,
            "bin_indices": [int(b) for b in self.bin_indices],
            "grid": {"n_azimuth": self.n_azimuth, "n_elevation": self.n_elevation},
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                n_bins=int(d["K"]),
                n_select=int(d["M"]),
                beta=float(d["beta"]),
                bin_indices=[int(b) for b in d["bin_indices"]],
                n_azimuth=int(d["grid"]["n_azimuth"]),
                n_elevation=int(d["grid"]["n_elevation"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed configuration: missing {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
