"""Feedforward support classifier with dense residual connections.

The network maps a real-split received vector to a probability vector over
devices. Topology: an input FC layer followed by batch normalization, then
L hidden blocks (FC -> batch norm -> ReLU -> dropout), then an output FC
layer and softmax. Residual connections are *dense*: hidden block l
consumes the normalized input plus the outputs of all previous blocks, and
the output layer consumes the normalized input plus the outputs of all L
blocks. Training minimizes the cross-entropy between the softmax output
and the uniform distribution on the true support.

Everything is plain numpy with hand-written gradients for this fixed
topology; gradient tests validate the backward pass against central finite
differences in binary64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolationError, ShapeMismatchError

BN_EPS = 1e-5          # stabilizer inside the batch-norm square root
LOSS_CLAMP = 1e-12     # probability floor inside the log loss


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass
class NetworkShape:
    """Layer dimensioning: input length, hidden width, depth, output length."""

    input_dim: int
    width: int
    depth: int
    output_dim: int

    def __post_init__(self) -> None:
        if min(self.input_dim, self.width, self.depth, self.output_dim) < 1:
            raise ConfigurationError(f"all shape fields must be >= 1, got {self}")

    @property
    def bn_sites(self) -> int:
        """Independent batch-norm sites: one after the input FC, one per block."""
        return self.depth + 1


@dataclass
class NetworkParams:
    """All trainable tensors plus batch-norm running statistics.

    Batch-norm site 0 follows the input FC layer; site l follows hidden FC
    layer l. ``bn_scale`` multiplies the normalized value and ``bn_shift``
    is added afterwards.
    """

    shape: NetworkShape
    w_in: np.ndarray                 # (width, input_dim)
    b_in: np.ndarray                 # (width,)
    w_hidden: list = field(repr=False)   # depth x (width, width)
    b_hidden: list = field(repr=False)
    w_out: np.ndarray                # (output_dim, width)
    b_out: np.ndarray
    bn_scale: list = field(repr=False)   # (depth+1) x (width,)
    bn_shift: list = field(repr=False)
    bn_running_mean: list = field(repr=False)
    bn_running_var: list = field(repr=False)

    @property
    def dtype(self):
        return self.w_in.dtype

    def named_tensors(self):
        """All tensors (trainables and running stats) in checkpoint order."""
        yield "w_in", self.w_in
        yield "b_in", self.b_in
        for site in range(self.shape.bn_sites):
            yield f"bn{site}_scale", self.bn_scale[site]
            yield f"bn{site}_shift", self.bn_shift[site]
            yield f"bn{site}_mean", self.bn_running_mean[site]
            yield f"bn{site}_var", self.bn_running_var[site]
        for layer in range(self.shape.depth):
            yield f"w_hidden{layer + 1}", self.w_hidden[layer]
            yield f"b_hidden{layer + 1}", self.b_hidden[layer]
        yield "w_out", self.w_out
        yield "b_out", self.b_out

    def trainable_names(self):
        for name, _ in self.named_tensors():
            if not (name.endswith("_mean") or name.endswith("_var")):
                yield name

    def tensor(self, name: str) -> np.ndarray:
        for tname, arr in self.named_tensors():
            if tname == name:
                return arr
        raise KeyError(name)

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        arr = self.tensor(name)
        if arr.shape != value.shape:
            raise ShapeMismatchError(f"{name}: {value.shape} != {arr.shape}")
        arr[...] = value

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            shape=self.shape,
            w_in=self.w_in.copy(),
            b_in=self.b_in.copy(),
            w_hidden=[w.copy() for w in self.w_hidden],
            b_hidden=[b.copy() for b in self.b_hidden],
            w_out=self.w_out.copy(),
            b_out=self.b_out.copy(),
            bn_scale=[a.copy() for a in self.bn_scale],
            bn_shift=[a.copy() for a in self.bn_shift],
            bn_running_mean=[a.copy() for a in self.bn_running_mean],
            bn_running_var=[a.copy() for a in self.bn_running_var],
        )


def init_params(
    shape: NetworkShape, rng: np.random.Generator, dtype=np.float32
) -> NetworkParams:
    """Fan-in-scaled uniform weight init, zero biases, identity batch norm."""
    dtype = np.dtype(dtype)

    def uniform(fan_in, *dims):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=dims).astype(dtype)

    width, depth = shape.width, shape.depth
    return NetworkParams(
        shape=shape,
        w_in=uniform(shape.input_dim, width, shape.input_dim),
        b_in=np.zeros(width, dtype=dtype),
        w_hidden=[uniform(width, width, width) for _ in range(depth)],
        b_hidden=[np.zeros(width, dtype=dtype) for _ in range(depth)],
        w_out=uniform(width, shape.output_dim, width),
        b_out=np.zeros(shape.output_dim, dtype=dtype),
        bn_scale=[np.ones(width, dtype=dtype) for _ in range(depth + 1)],
        bn_shift=[np.zeros(width, dtype=dtype) for _ in range(depth + 1)],
        bn_running_mean=[np.zeros(width, dtype=dtype) for _ in range(depth + 1)],
        bn_running_var=[np.ones(width, dtype=dtype) for _ in range(depth + 1)],
    )


def fold_input_scale(params: NetworkParams, scale: float) -> NetworkParams:
    """Absorb an input standardization constant into the input weights.

    A network trained on ``x / scale`` becomes a network on raw ``x`` by
    dividing the input weight matrix by ``scale``; every later layer sees
    identical values.
    """
    if scale <= 0:
        raise ConfigurationError("scale must be positive")
    params.w_in /= params.dtype.type(scale)
    return params


# ---------------------------------------------------------------------------
# Layer primitives
# ---------------------------------------------------------------------------

def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0)


def dropout(
    v: np.ndarray,
    drop_prob: float,
    train: bool,
    rng: np.random.Generator | None = None,
    mask: np.ndarray | None = None,
):
    """Inverted dropout: zero units w.p. ``drop_prob``, rescale survivors.

    Returns (output, mask). In eval mode (or at probability 0) the output
    is the input and the mask is all ones, so no test-time rescaling is
    ever needed.
    """
    if not 0 <= drop_prob < 1:
        raise ConfigurationError("dropout probability must be in [0, 1)")
    if not train or drop_prob == 0.0:
        ones = np.ones_like(v)
        return v, ones
    if mask is None:
        if rng is None:
            raise ConfigurationError("training-mode dropout needs an rng or a mask")
        mask = (rng.random(v.shape) >= drop_prob).astype(v.dtype)
    else:
        mask = np.asarray(mask, dtype=v.dtype)
    keep = v.dtype.type(1.0 - drop_prob)
    return v * mask / keep, mask


def batch_norm(
    z: np.ndarray,
    scale: np.ndarray,
    shift: np.ndarray,
    *,
    train: bool,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    momentum: float = 0.1,
    update_running: bool = True,
    eps: float = BN_EPS,
):
    """Per-feature normalization, then scale and shift.

    Training mode normalizes by biased batch statistics and (optionally)
    folds them into the running statistics; eval mode normalizes by the
    running statistics. Returns (output, cache); the cache is None in eval
    mode.
    """
    if train:
        if z.shape[0] < 2:
            raise ConfigurationError("batch statistics need at least 2 samples")
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (z - mu) * inv_std
        if update_running:
            mom = running_mean.dtype.type(momentum)
            running_mean *= 1 - mom
            running_mean += mom * mu
            running_var *= 1 - mom
            running_var += mom * var
        return scale * x_hat + shift, (x_hat, inv_std)
    inv_std = 1.0 / np.sqrt(running_var + eps)
    return scale * ((z - running_mean) * inv_std) + shift, None


def _batch_norm_backward(grad: np.ndarray, x_hat: np.ndarray, inv_std: np.ndarray,
                         scale: np.ndarray):
    """Gradients through training-mode batch norm (batch statistics included)."""
    p = grad.shape[0]
    g_shift = grad.sum(axis=0)
    g_scale = (grad * x_hat).sum(axis=0)
    g_xhat = grad * scale
    g_z = (inv_std / p) * (
        p * g_xhat - g_xhat.sum(axis=0) - x_hat * (g_xhat * x_hat).sum(axis=0)
    )
    return g_z, g_scale, g_shift


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    """Intermediate values from a training-mode forward pass."""

    inputs: np.ndarray
    fc_inputs: list          # input of each hidden FC layer (the residual sums)
    final_sum: np.ndarray    # input of the output FC layer
    bn_caches: list          # (x_hat, inv_std) per site, input site first
    relu_masks: list
    drop_masks: list         # already divided by the keep probability
    probs: np.ndarray


def forward(
    params: NetworkParams,
    inputs: np.ndarray,
    *,
    train: bool = False,
    dropout_prob: float = 0.0,
    rng: np.random.Generator | None = None,
    dropout_masks: list | None = None,
    bn_momentum: float = 0.1,
    update_running: bool = True,
):
    """Run the network on a batch of input rows.

    Returns (probs, cache); the cache is only built in training mode.
    Training mode uses batch statistics and inverted dropout, eval mode
    uses running statistics and no dropout.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=params.dtype))
    if x.shape[1] != params.shape.input_dim:
        raise ShapeMismatchError(
            f"input length {x.shape[1]} != expected {params.shape.input_dim}"
        )
    if train and x.shape[0] < 2:
        raise ConfigurationError("training-mode batches need at least 2 samples")

    keep = 1.0 - dropout_prob
    a0 = x @ params.w_in.T + params.b_in
    out0, cache0 = batch_norm(
        a0, params.bn_scale[0], params.bn_shift[0], train=train,
        running_mean=params.bn_running_mean[0], running_var=params.bn_running_var[0],
        momentum=bn_momentum, update_running=update_running,
    )

    residual_sum = out0
    fc_inputs, bn_caches, relu_masks, drop_masks = [], [cache0], [], []
    for layer in range(params.shape.depth):
        fc_inputs.append(residual_sum)
        pre = residual_sum @ params.w_hidden[layer].T + params.b_hidden[layer]
        site = layer + 1
        normed, cache = batch_norm(
            pre, params.bn_scale[site], params.bn_shift[site], train=train,
            running_mean=params.bn_running_mean[site],
            running_var=params.bn_running_var[site],
            momentum=bn_momentum, update_running=update_running,
        )
        bn_caches.append(cache)
        activated = relu(normed)
        relu_masks.append(normed > 0)
        mask = dropout_masks[layer] if dropout_masks is not None else None
        dropped, mask = dropout(activated, dropout_prob, train, rng, mask)
        if train and dropout_prob > 0:
            mask = mask / params.dtype.type(keep)
        drop_masks.append(mask)
        residual_sum = residual_sum + dropped

    logits = residual_sum @ params.w_out.T + params.b_out
    probs = softmax(logits)

    if not train:
        return probs, None
    return probs, ForwardCache(
        inputs=x,
        fc_inputs=fc_inputs,
        final_sum=residual_sum,
        bn_caches=bn_caches,
        relu_masks=relu_masks,
        drop_masks=drop_masks,
        probs=probs,
    )


def predict_probabilities(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Eval-mode forward pass returning only the softmax output."""
    probs, _ = forward(params, inputs, train=False)
    return probs


# ---------------------------------------------------------------------------
# Support selection and loss
# ---------------------------------------------------------------------------

def select_support(probs: np.ndarray, n_active: int) -> np.ndarray:
    """Indices of the ``n_active`` largest probabilities, sorted ascending.

    Ties break toward the lowest index so results are deterministic.
    """
    probs = np.asarray(probs)
    n = probs.shape[-1]
    if not 1 <= n_active <= n:
        raise ConfigurationError(f"need 1 <= k <= {n}, got {n_active}")
    order = np.argsort(-probs, axis=-1, kind="stable")
    return np.sort(order[..., :n_active], axis=-1)


def target_distribution(supports: np.ndarray, n_out: int, dtype=np.float64) -> np.ndarray:
    """Uniform-on-support target rows: 1/k on the support, 0 elsewhere."""
    supports = np.atleast_2d(np.asarray(supports, dtype=int))
    batch, k = supports.shape
    target = np.zeros((batch, n_out), dtype=dtype)
    target[np.repeat(np.arange(batch), k), supports.ravel()] = 1.0 / k
    return target


def cross_entropy_loss(probs: np.ndarray, support) -> float:
    """Mean over the support of -log p, clamped below at a tiny floor."""
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise ConfigurationError("support must be non-empty")
    picked = np.maximum(np.asarray(probs)[..., support], LOSS_CLAMP)
    return float(-np.mean(np.log(picked)))


def batch_cross_entropy(probs: np.ndarray, supports: np.ndarray) -> float:
    """Batch-mean cross entropy for equal-size supports."""
    supports = np.atleast_2d(np.asarray(supports, dtype=int))
    probs = np.atleast_2d(probs)
    rows = np.arange(len(supports))[:, None]
    picked = np.maximum(probs[rows, supports], LOSS_CLAMP)
    return float(-np.log(picked).mean())


def backward(params: NetworkParams, cache: ForwardCache, supports: np.ndarray) -> dict:
    """Exact gradients of the batch cross entropy w.r.t. every trainable.

    ``cache`` must come from a training-mode forward on the same batch.
    Each hidden block's output feeds every later FC layer and the output
    layer, so gradients accumulate along the running-sum path.
    """
    if cache is None or cache.bn_caches[0] is None:
        raise ContractViolationError("backward needs a training-mode forward cache")
    supports = np.atleast_2d(np.asarray(supports, dtype=int))
    probs = cache.probs
    batch, _ = probs.shape
    if supports.shape[0] != batch:
        raise ShapeMismatchError("supports do not match the cached batch")
    k = supports.shape[1]

    # d(mean CE)/d(probs), honoring the clamp (clamped entries get zero grad)
    rows = np.arange(batch)[:, None]
    g_probs = np.zeros_like(probs)
    picked = probs[rows, supports]
    live = picked > LOSS_CLAMP
    contrib = np.where(live, -1.0 / (np.maximum(picked, LOSS_CLAMP) * batch * k), 0.0)
    np.add.at(g_probs, (rows, supports), contrib.astype(probs.dtype))
    # softmax vector-Jacobian product
    inner = (g_probs * probs).sum(axis=1, keepdims=True)
    g_logits = probs * (g_probs - inner)

    grads: dict[str, np.ndarray] = {}
    grads["w_out"] = g_logits.T @ cache.final_sum
    grads["b_out"] = g_logits.sum(axis=0)
    g_sum = g_logits @ params.w_out

    for layer in range(params.shape.depth - 1, -1, -1):
        site = layer + 1
        g_drop = g_sum * cache.drop_masks[layer]
        g_norm = g_drop * cache.relu_masks[layer]
        x_hat, inv_std = cache.bn_caches[site]
        g_pre, g_scale, g_shift = _batch_norm_backward(
            g_norm, x_hat, inv_std, params.bn_scale[site]
        )
        grads[f"bn{site}_scale"] = g_scale
        grads[f"bn{site}_shift"] = g_shift
        grads[f"w_hidden{layer + 1}"] = g_pre.T @ cache.fc_inputs[layer]
        grads[f"b_hidden{layer + 1}"] = g_pre.sum(axis=0)
        g_sum = g_sum + g_pre @ params.w_hidden[layer]

    x_hat, inv_std = cache.bn_caches[0]
    g_a0, g_scale, g_shift = _batch_norm_backward(g_sum, x_hat, inv_std,
                                                  params.bn_scale[0])
    grads["bn0_scale"] = g_scale
    grads["bn0_shift"] = g_shift
    grads["w_in"] = g_a0.T @ cache.inputs
    grads["b_in"] = g_a0.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment accumulators keyed by tensor name."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: NetworkParams) -> "AdamState":
        state = cls()
        for name in params.trainable_names():
            arr = params.tensor(name)
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(
    params: NetworkParams,
    grads: dict,
    state: AdamState,
    step: int,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> NetworkParams:
    """One bias-corrected Adam update (in place); ``step`` counts from 1."""
    if step < 1:
        raise ConfigurationError("step must be >= 1")
    dtype = params.dtype
    b1 = dtype.type(beta1)
    b2 = dtype.type(beta2)
    corr1 = dtype.type(1.0 - beta1 ** step)
    corr2 = dtype.type(1.0 - beta2 ** step)
    tensors = dict(params.named_tensors())
    for name, grad in grads.items():
        grad = grad.astype(dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        tensors[name] -= dtype.type(learning_rate) * (m / corr1) / (
            np.sqrt(v / corr2) + dtype.type(eps)
        )
    return params


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    learning_rate: float = 5e-4
    batch_size: int = 64
    dropout_prob: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 4
    bn_momentum: float = 0.1
    seed: int = 0
    ensemble_size: int = 2
    k_folds: int = 5
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be >= 2 for batch statistics")
        if not 0 <= self.dropout_prob < 1:
            raise ConfigurationError("dropout probability must be in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.k_folds < 2:
            raise ConfigurationError("need at least 2 folds")


@dataclass
class TrainResult:
    params: NetworkParams
    loss_curve: list        # (fold, iteration, train loss) every iteration
    val_curve: list         # (fold, epoch, validation loss)
    fold_val_losses: list   # final validation loss per fold
    best_fold: int


def _eval_loss(params: NetworkParams, features, supports, batch: int = 4096) -> float:
    total = 0.0
    for start in range(0, len(features), batch):
        stop = min(start + batch, len(features))
        probs = predict_probabilities(params, features[start:stop])
        total += batch_cross_entropy(probs, supports[start:stop]) * (stop - start)
    return total / len(features)


def train(
    features: np.ndarray,
    supports: np.ndarray,
    shape: NetworkShape,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Cross-validated Adam training on a fixed dataset.

    The dataset is split into ``k_folds`` equal parts; each fold trains a
    fresh network on the remaining parts and reports held-out validation
    loss per epoch. The returned parameters are the fold champion (lowest
    final validation loss). Deterministic given the rng (or config seed).
    """
    features = np.asarray(features)
    supports = np.asarray(supports, dtype=int)
    n = len(features)
    if n != len(supports):
        raise ShapeMismatchError("features and supports must be parallel")
    if n < config.k_folds * config.batch_size:
        raise ConfigurationError(
            f"{n} samples cannot fill {config.k_folds} folds of "
            f"batch size {config.batch_size}"
        )
    if rng is None:
        rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    features = features.astype(dtype)

    perm = rng.permutation(n)
    fold_edges = np.linspace(0, n, config.k_folds + 1, dtype=int)
    fold_rngs = rng.spawn(config.k_folds)

    loss_curve, val_curve, fold_final = [], [], []
    best: NetworkParams | None = None
    best_fold = -1
    for fold in range(config.k_folds):
        val_idx = perm[fold_edges[fold]: fold_edges[fold + 1]]
        train_idx = np.concatenate(
            [perm[: fold_edges[fold]], perm[fold_edges[fold + 1]:]]
        )
        init_rng, shuffle_rng, drop_rng = fold_rngs[fold].spawn(3)
        params = init_params(shape, init_rng, dtype)
        state = AdamState.for_params(params)
        step = 0
        for epoch in range(config.epochs):
            order = shuffle_rng.permutation(len(train_idx))
            usable = len(order) - len(order) % config.batch_size
            for start in range(0, usable, config.batch_size):
                idx = train_idx[order[start: start + config.batch_size]]
                probs, cache = forward(
                    params, features[idx], train=True,
                    dropout_prob=config.dropout_prob, rng=drop_rng,
                    bn_momentum=config.bn_momentum,
                )
                grads = backward(params, cache, supports[idx])
                step += 1
                adam_step(params, grads, state, step, config.learning_rate,
                          config.beta1, config.beta2, config.adam_eps)
                loss_curve.append(
                    (fold, step, batch_cross_entropy(probs, supports[idx]))
                )
            val_curve.append(
                (fold, epoch, _eval_loss(params, features[val_idx], supports[val_idx]))
            )
        fold_final.append(val_curve[-1][2])
        if best is None or fold_final[fold] < fold_final[best_fold]:
            best = params
            best_fold = fold
    return TrainResult(best, loss_curve, val_curve, fold_final, best_fold)


# ---------------------------------------------------------------------------
# Ensembling
# ---------------------------------------------------------------------------

def ensemble_predict(models: list, features: np.ndarray, n_active: int):
    """Average softmax outputs over independently trained models.

    Returns (ensemble probabilities, selected supports).
    """
    if not models:
        raise ConfigurationError("need at least one model")
    shape = models[0].shape
    for m in models[1:]:
        if m.shape != shape:
            raise ShapeMismatchError("ensemble members must share one shape")
    probs = predict_probabilities(models[0], features).astype(np.float64)
    for m in models[1:]:
        probs += predict_probabilities(m, features)
    probs /= len(models)
    return probs, select_support(probs, n_active)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"DAUD"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")  # magic, version, input, width, depth, out, sites


def save_checkpoint(params: NetworkParams, path) -> None:
    """Write parameters as little-endian binary32 named tensors."""
    s = params.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, s.input_dim, s.width, s.depth,
                              s.output_dim, s.bn_sites))
        for name, arr in params.named_tensors():
            data = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path) -> NetworkParams:
    """Read a checkpoint written by :func:`save_checkpoint` (binary32 params)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:4] != _MAGIC:
        raise ConfigurationError(f"{path} is not a model checkpoint")
    magic, version, input_dim, width, depth, out_dim, sites = _HEADER.unpack_from(raw)
    if version != _VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {version}")
    shape = NetworkShape(input_dim, width, depth, out_dim)
    if sites != shape.bn_sites:
        raise ConfigurationError("batch-norm site count disagrees with the shape")
    rng = np.random.default_rng(0)
    params = init_params(shape, rng, dtype=np.float32)
    offset = _HEADER.size
    for name, _ in params.named_tensors():
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        stored = raw[offset: offset + name_len].decode()
        offset += name_len
        if stored != name:
            raise ConfigurationError(f"unexpected tensor {stored!r}, wanted {name!r}")
        (ndim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        params.set_tensor(name, data.reshape(dims).astype(np.float32))
    if offset != len(raw):
        raise ConfigurationError("trailing bytes in checkpoint")
    return params
