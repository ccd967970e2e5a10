"""Per-pixel normal regression network.

A shared extractor (7 fully connected layers of width 64 with relu) runs
on each selected (r, g, b, lx, ly, lz) observation of a pixel, the M feature
vectors are fused by an elementwise max, and a 4-layer head regresses a
3-vector that is normalized to a unit normal. Because the layers act on one
pixel at a time this is the 1x1-kernel version of a convolutional
extractor / max-pool / regressor network.
"""

import json
from pathlib import Path

import numpy as np

from . import tensor as T
from .exceptions import ConfigurationError, FormatError, InputError, ShapeError
from .selector import FEATURES_PER_PIXEL, build_input_stack


def _glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


class NormalNet:
    """Parameters and forward pass of the normal regressor.

    Args:
        n_extract: extractor depth.
        n_head: head depth; the last head layer outputs 3 values.
        width: hidden width.
        seed: initialization seed.
        dtype: parameter dtype (float32 trains faster, float64 for checks).
    """

    def __init__(self, n_extract=7, n_head=4, width=64, in_features=FEATURES_PER_PIXEL,
                 seed=0, dtype=np.float32):
        if n_extract < 1 or n_head < 1:
            raise ConfigurationError("extractor and head need at least one layer each")
        self.n_extract = n_extract
        self.n_head = n_head
        self.width = width
        self.in_features = in_features
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        sizes = [in_features] + [width] * n_extract + [width] * (n_head - 1) + [3]
        self.params = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.params.append(T.Tensor(_glorot(rng, fan_in, fan_out, self.dtype), requires_grad=True))
            self.params.append(T.Tensor(np.zeros((1, fan_out), self.dtype), requires_grad=True))

    @property
    def layers(self):
        return list(zip(self.params[0::2], self.params[1::2]))

    def forward(self, features, n_inputs, rng=None):
        """Map (n_inputs * q, 6) observations to (q, 3) unit normals.

        Rows ``m*q .. (m+1)*q - 1`` hold the m-th observation of every pixel.
        """
        if n_inputs < 1:
            raise ConfigurationError("the network needs at least one input")
        x = T.as_tensor(features)
        if x.value.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"features must be (rows, {self.in_features}), got {x.shape}")
        layers = self.layers
        for w, b in layers[: self.n_extract]:
            x = T.relu(T.add(T.matmul(x, w), b))
        x = T.group_max(x, n_inputs, rng=rng)
        head = layers[self.n_extract:]
        for i, (w, b) in enumerate(head):
            x = T.add(T.matmul(x, w), b)
            if i < len(head) - 1:
                x = T.relu(x)
        return T.l2_normalize_rows(x)

    def predict(self, images, lights, mask, chunk=4096):
        """Normal map (H, W, 3) from M images and their lights; zeros off-mask."""
        images = np.asarray(images)
        if len(images) == 0:
            raise ConfigurationError("the network needs at least one input")
        mask = np.asarray(mask, dtype=bool)
        rows, cols = np.nonzero(mask)
        out = np.zeros(mask.shape + (3,))
        M = len(images)
        for start in range(0, len(rows), chunk):
            r, c = rows[start:start + chunk], cols[start:start + chunk]
            V = build_input_stack(images.astype(self.dtype), np.asarray(lights, self.dtype), (r, c))
            feats = stack_to_features(V)
            out[r, c] = self.forward(feats, M).value
        return out

    # -- persistence -------------------------------------------------------
    def get_state(self):
        return [p.value.copy() for p in self.params]

    def set_state(self, arrays):
        if len(arrays) != len(self.params):
            raise ShapeError(f"expected {len(self.params)} arrays, got {len(arrays)}")
        for p, a in zip(self.params, arrays):
            if p.shape != np.shape(a):
                raise ShapeError(f"parameter shape {p.shape} vs {np.shape(a)}")
            p.value = np.array(a, dtype=self.dtype)

    def manifest(self):
        return {
            "n_extract": self.n_extract,
            "n_head": self.n_head,
            "width": self.width,
            "in_features": self.in_features,
            "dtype": self.dtype.str,
            "shapes": [list(p.shape) for p in self.params],
        }

    def save(self, stem):
        """Write ``<stem>.bin`` (little-endian raw values) and ``<stem>.json``."""
        stem = Path(stem)
        blob = b"".join(p.value.astype(self.dtype.newbyteorder("<")).tobytes() for p in self.params)
        stem.with_suffix(".bin").write_bytes(blob)
        stem.with_suffix(".json").write_text(json.dumps(self.manifest(), indent=2) + "\n")

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        try:
            man = json.loads(stem.with_suffix(".json").read_text())
            blob = stem.with_suffix(".bin").read_bytes()
        except FileNotFoundError as exc:
            raise FormatError(exc.filename, "missing network file") from exc
        dtype = np.dtype(man["dtype"])
        net = cls(man["n_extract"], man["n_head"], man["width"], man["in_features"],
                  dtype=dtype.newbyteorder("="))
        flat = np.frombuffer(blob, dtype=dtype)
        sizes = [int(np.prod(s)) for s in man["shapes"]]
        if flat.size != sum(sizes):
            raise FormatError(stem.with_suffix(".bin"), f"expected {sum(sizes)} values, found {flat.size}")
        arrays, pos = [], 0
        for shape, n in zip(man["shapes"], sizes):
            arrays.append(flat[pos:pos + n].reshape(shape))
            pos += n
        net.set_state(arrays)
        return net


def stack_to_features(V_hat):
    """(6q, M) selected stack -> (M*q, 6) rows, grouped by input."""
    V_hat = T.as_tensor(V_hat)
    rows, M = V_hat.shape
    q = rows // FEATURES_PER_PIXEL
    return T.reshape(T.transpose(V_hat), (M * q, FEATURES_PER_PIXEL))


def normal_loss(pred, gt, mask=None):
    """Mean over masked pixels of ``|pred - gt|**2``.

    With a :class:`~lipids.tensor.Tensor` ``pred`` of shape (q, 3) the result
    is a differentiable scalar tensor; with arrays (maps or rows) it is a float.
    """
    if isinstance(pred, T.Tensor):
        gt = np.asarray(gt, dtype=pred.dtype).reshape(-1, 3)
        m = np.ones(len(gt)) if mask is None else np.asarray(mask, dtype=float).reshape(-1)
        n = m.sum()
        if n == 0:
            raise InputError("mask selects no pixels")
        diff = T.sub(pred, gt)
        return T.scale(T.masked_sum_of_squares(diff, m), 1.0 / n)
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    m = np.ones(len(gt), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if not m.any():
        raise InputError("mask selects no pixels")
    return float(np.sum((pred[m] - gt[m]) ** 2) / m.sum())


def cosine_form_loss(pred, gt, mask=None):
    """``mean 2 (1 - pred.gt)`` over the mask; equals :func:`normal_loss` for unit inputs."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    m = np.ones(len(gt), dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if not m.any():
        raise InputError("mask selects no pixels")
    return float(np.mean(2.0 * (1.0 - np.sum(pred[m] * gt[m], axis=1))))
