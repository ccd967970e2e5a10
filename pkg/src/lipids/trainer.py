"""Joint training of the selection matrix and the normal network."""

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import tensor as T
from ._validation import check_is_fitted
from .exceptions import ConfigurationError, DatasetError, InputError
from .lightspace import LightBinGrid, bin_sample
from .normalnet import NormalNet, normal_loss, stack_to_features
from .psolve import evaluate_on_samples, select_bins
from .selector import LearnedConfiguration, SelectionMatrix, anneal_alpha, build_input_stack, harden


@dataclass
class TrainConfig:
    """Training recipe.

    One batch draws ``batch_size`` scenes (with replacement) and
    ``pixels_per_item`` masked pixels from each. ``steps_per_epoch=None``
    sizes an epoch to cover every masked pixel once on average.
    """

    n_select: int = 3
    epochs: int = 30
    early_stop: bool = False
    early_stop_epoch: int = 10
    batch_size: int = 32
    pixels_per_item: int = 1024
    steps_per_epoch: Optional[int] = None
    lr: float = 1e-4
    beta: float = 10.0
    sharpen: float = 0.2
    seed: int = 0
    width: int = 64
    n_extract: int = 7
    n_head: int = 4
    dtype: str = "float32"

    def __post_init__(self):
        if self.n_select < 1:
            raise ConfigurationError("n_select must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1 or self.pixels_per_item < 1:
            raise ConfigurationError("batch_size and pixels_per_item must be >= 1")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigurationError("steps_per_epoch must be >= 1")

    @property
    def last_epoch(self):
        return min(self.epochs, self.early_stop_epoch) if self.early_stop else self.epochs


@dataclass
class Checkpoint:
    epoch: int
    alpha: float
    weights: np.ndarray = field(repr=False)
    net_state: list = field(repr=False)
    loss: float
    hardened: list


@dataclass
class TrainResult:
    """Trained state. ``bin_ids[k]`` is the grid bin behind row ``k`` of the selection."""

    selection: SelectionMatrix
    net: NormalNet
    checkpoints: list
    bin_ids: np.ndarray

    @property
    def bin_indices(self):
        return [int(self.bin_ids[i]) for i in harden(self.selection.weights, warn=False)]

    def bins_at(self, epoch):
        ck = self.checkpoints[epoch - 1]
        return [int(self.bin_ids[i]) for i in ck.hardened]


def common_bins(samples):
    """Bin ids shared by all samples; raises if the samples disagree."""
    if len(samples) == 0:
        raise InputError("training needs at least one sample")
    ref = None
    for s in samples:
        if s.bin_ids is None:
            raise DatasetError(f"sample {s.name!r} has not been binned")
        ids = np.asarray(s.bin_ids)
        if np.any(np.diff(ids) <= 0):
            raise DatasetError(f"sample {s.name!r} bin ids are not strictly increasing")
        if ref is None:
            ref = ids
        elif not np.array_equal(ref, ids):
            raise DatasetError(
                f"sample {s.name!r} covers bins {ids.tolist()}, expected {ref.tolist()}"
            )
    return ref.copy()


class _PixelSource:
    """Per-scene arrays ready for batch assembly."""

    def __init__(self, samples, dtype):
        self.images = [np.asarray(s.images, dtype=dtype) for s in samples]
        self.lights = [np.asarray(s.lights, dtype=dtype) for s in samples]
        self.normals = [np.asarray(s.normals, dtype=dtype) for s in samples]
        self.pixels = [np.nonzero(s.mask) for s in samples]
        self.n_masked = sum(len(p[0]) for p in self.pixels)

    def batch(self, rng, batch_size, per_item):
        items = rng.integers(len(self.images), size=batch_size)
        blocks, gts = [], []
        for i in items:
            rows, cols = self.pixels[i]
            pick = rng.choice(len(rows), size=per_item, replace=len(rows) < per_item)
            r, c = rows[pick], cols[pick]
            blocks.append(build_input_stack(self.images[i], self.lights[i], (r, c)))
            gts.append(self.normals[i][r, c])
        return np.concatenate(blocks, axis=0), np.concatenate(gts, axis=0)


def fit(samples, cfg, callback=None):
    """Train selection and network on binned samples; see :class:`TrainConfig`.

    Each epoch ``r`` uses softmax scale ``beta * r**2``. Every step blends the
    K bin columns into M with the current selection, runs the network,
    takes the mean squared normal error and updates both the selection
    weights and the network with a single Adam optimizer. A checkpoint is
    kept per epoch.
    """
    bin_ids = common_bins(samples)
    K, M = len(bin_ids), cfg.n_select
    if M > K:
        raise ConfigurationError(f"cannot select {M} lights from {K} covered bins")
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    net = NormalNet(cfg.n_extract, cfg.n_head, cfg.width, seed=int(rng.integers(2**31)), dtype=dtype)
    selection = SelectionMatrix(K, M, beta=cfg.beta)
    W = T.Tensor(selection.weights.astype(dtype), requires_grad=True)
    params = [W] + net.params
    opt = T.Adam(params, lr=cfg.lr)
    source = _PixelSource(samples, dtype)
    steps = cfg.steps_per_epoch or max(1, math.ceil(source.n_masked / (cfg.batch_size * cfg.pixels_per_item)))

    checkpoints = []
    for epoch in range(1, cfg.last_epoch + 1):
        alpha = anneal_alpha(epoch, cfg.beta)
        losses = []
        for _ in range(steps):
            V, gt = source.batch(rng, cfg.batch_size, cfg.pixels_per_item)
            soft = T.softmax_columns(W, alpha)
            mixed = T.matmul(V, soft)
            pred = net.forward(stack_to_features(mixed), M, rng=rng)
            fit_loss = normal_loss(pred, gt)
            loss = fit_loss
            if cfg.sharpen > 0.0:
                lam = cfg.sharpen * epoch / cfg.epochs
                loss = T.add(loss, T.scale(selection_penalty(soft), lam))
            T.backward(loss, leaves=params)
            opt.step()
            losses.append(float(fit_loss.value))
        selection.weights = W.value.astype(float)
        selection.epoch = epoch
        ck = Checkpoint(
            epoch=epoch,
            alpha=alpha,
            weights=selection.weights.copy(),
            net_state=net.get_state(),
            loss=float(np.mean(losses)),
            hardened=harden(selection.weights, warn=False),
        )
        checkpoints.append(ck)
        if callback is not None:
            callback(ck)
    harden(selection.weights)
    return TrainResult(selection, net, checkpoints, bin_ids)


def column_impurity(soft):
    """Mean over columns of ``1 - sum_k p_k**2``; zero iff every column is one-hot."""
    M = soft.shape[1]
    return T.sub(1.0, T.scale(T.sum(T.mul(soft, soft)), 1.0 / M))


def column_overlap(soft):
    """Mean inner product between distinct columns; zero iff no bin is shared."""
    M = soft.shape[1]
    if M < 2:
        return T.Tensor(0.0)
    rows = T.matmul(soft, T.Tensor(np.ones((M, 1), dtype=soft.dtype)))
    total = T.sum(T.mul(rows, rows))
    diag = T.sum(T.mul(soft, soft))
    return T.scale(T.sub(total, diag), 1.0 / (M * (M - 1)))


def selection_penalty(soft):
    """Impurity plus overlap: zero exactly when the columns are distinct one-hots."""
    return T.add(column_impurity(soft), column_overlap(soft))


def evolution_report(checkpoints, bin_ids=None, beta=None):
    """Rows ``(epoch, column, argmax_bin, max_softmax_weight)`` per checkpoint.

    Weights are taken at each checkpoint's own softmax scale.
    """
    if not checkpoints:
        raise InputError("no checkpoints")
    rows = []
    for ck in checkpoints:
        alpha = ck.alpha if beta is None else anneal_alpha(ck.epoch, beta)
        z = alpha * ck.weights
        z = z - z.max(axis=0, keepdims=True)
        soft = np.exp(z) / np.exp(z).sum(axis=0, keepdims=True)
        for col in range(ck.weights.shape[1]):
            k = int(np.argmax(ck.weights[:, col]))
            b = int(bin_ids[k]) if bin_ids is not None else k
            rows.append((ck.epoch, col, b, float(soft[k, col])))
    return rows


def write_evolution_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "column", "argmax_bin", "max_softmax_weight"])
        for epoch, col, b, wmax in rows:
            w.writerow([epoch, col, b, f"{wmax:.9f}"])


class IlluminationPlanner(TransformerMixin, BaseEstimator):
    """Learn which ``n_lights`` bins of a light grid to capture.

    ``fit`` takes a list of :class:`~lipids.render.RenderedSample` (binned or
    raw; raw samples are binned onto the grid first), ``transform`` keeps only
    the selected bins of each sample, and ``predict`` returns normal maps from
    the trained network on those bins. ``score`` is the negative mean angular
    error of least-squares photometric stereo on the selected lights.

    Attributes:
        grid_: the light grid.
        result_: :class:`TrainResult` with selection, network and checkpoints.
        bin_indices_: selected bins, one per selection column.
        configuration_: :class:`LearnedConfiguration` ready to serialize.
    """

    def __init__(self, n_lights=3, n_azimuth=8, n_elevation=6, epochs=30, beta=10.0, lr=1e-4,
                 batch_size=32, pixels_per_item=1024, steps_per_epoch=None, early_stop=False,
                 early_stop_epoch=10, sharpen=None, seed=0, unique=True):
        self.n_lights = n_lights
        self.n_azimuth = n_azimuth
        self.n_elevation = n_elevation
        self.epochs = epochs
        self.beta = beta
        self.lr = lr
        self.batch_size = batch_size
        self.pixels_per_item = pixels_per_item
        self.steps_per_epoch = steps_per_epoch
        self.early_stop = early_stop
        self.early_stop_epoch = early_stop_epoch
        self.sharpen = sharpen
        self.seed = seed
        self.unique = unique

    def _config(self):
        return TrainConfig(
            n_select=self.n_lights, epochs=self.epochs, early_stop=self.early_stop,
            early_stop_epoch=self.early_stop_epoch, batch_size=self.batch_size,
            pixels_per_item=self.pixels_per_item, steps_per_epoch=self.steps_per_epoch,
            lr=self.lr, beta=self.beta, seed=self.seed,
            sharpen=TrainConfig.sharpen if self.sharpen is None else self.sharpen,
        )

    def _binned(self, X):
        return [s if s.bin_ids is not None else bin_sample(s, self.grid_, self.unique) for s in X]

    def fit(self, X, y=None, callback=None):
        self.grid_ = LightBinGrid(self.n_azimuth, self.n_elevation)
        samples = self._binned(list(X))
        self.result_ = fit(samples, self._config(), callback=callback)
        self.bin_indices_ = self.result_.bin_indices
        self.configuration_ = LearnedConfiguration(
            self.grid_.n_bins, self.n_lights, float(self.beta), list(self.bin_indices_),
            self.n_azimuth, self.n_elevation,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "result_")
        out = []
        for s in self._binned(list(X)):
            images, lights = select_bins(s, self.bin_indices_)
            ids = np.array([b for b in dict.fromkeys(self.bin_indices_)])
            out.append(type(s)(images, lights, s.normals, s.mask, bin_ids=ids, name=s.name))
        return out

    def predict(self, X):
        check_is_fitted(self, "result_")
        maps = []
        for s in self.transform(X):
            maps.append(self.result_.net.predict(s.images, s.lights, s.mask))
        return maps

    def score(self, X, y=None):
        check_is_fitted(self, "result_")
        return -evaluate_on_samples(self._binned(list(X)), self.bin_indices_, "ls")
