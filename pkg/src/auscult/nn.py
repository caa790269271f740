"""Hybrid CNN+GRU classifier, built directly on numpy.

Data flow for the default configuration: a 52-value feature vector becomes a
52x1 sequence, passes two conv/pool/batchnorm/ReLU blocks (256 then 512
filters, kernel 11, pool 2) down to a 13x512 sequence, feeds five parallel
stacked-GRU branches (32 -> 64 -> 128 units) whose final states are summed,
then a 64/32 Leaky-ReLU dense head and an 11-way softmax.

Forward passes in train mode record every intermediate needed for exact
reverse-mode differentiation (through batch statistics, pool argmax routing,
and all GRU time steps).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _sigmoid

from .errors import InvalidConfigError, ShapeError, StateError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class ModelConfig:
    input_len: int = 52
    input_channels: int = 1
    conv1_filters: int = 256
    conv2_filters: int = 512
    kernel_size: int = 11
    pool_size: int = 2
    gru_sets: int = 5
    gru_units: tuple = (32, 64, 128)
    dense_units: tuple = (64, 32)
    leaky_slope: float = 0.01
    n_classes: int = 11

    def __post_init__(self):
        object.__setattr__(self, "gru_units", tuple(self.gru_units))
        object.__setattr__(self, "dense_units", tuple(self.dense_units))
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise InvalidConfigError(
                f"kernel_size must be odd and positive, got {self.kernel_size}"
            )
        for name in ("input_len", "input_channels", "conv1_filters", "conv2_filters",
                     "gru_sets", "n_classes"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1")
        if self.pool_size != 2:
            raise InvalidConfigError("pool_size is fixed at 2")
        if len(self.gru_units) < 1 or any(u < 1 for u in self.gru_units):
            raise InvalidConfigError("gru_units must be non-empty positive ints")
        if self.n_classes < 2:
            raise InvalidConfigError("n_classes must be >= 2")

    @property
    def seq_len(self):
        """Time steps entering the GRU branches (after the two pools)."""
        return (self.input_len // self.pool_size) // self.pool_size


def parameter_shapes(cfg):
    """Canonical (name -> shape) map; iteration order is the storage order."""
    shapes = {}
    k = cfg.kernel_size
    shapes["conv1.kernel"] = (cfg.conv1_filters, cfg.input_channels, k)
    shapes["conv1.bias"] = (cfg.conv1_filters,)
    for name in ("gamma", "beta", "running_mean", "running_var"):
        shapes[f"bn1.{name}"] = (cfg.conv1_filters,)
    shapes["conv2.kernel"] = (cfg.conv2_filters, cfg.conv1_filters, k)
    shapes["conv2.bias"] = (cfg.conv2_filters,)
    for name in ("gamma", "beta", "running_mean", "running_var"):
        shapes[f"bn2.{name}"] = (cfg.conv2_filters,)
    for s in range(cfg.gru_sets):
        in_dim = cfg.conv2_filters
        for layer, units in enumerate(cfg.gru_units):
            base = f"gru{s}.{layer}"
            for gate in ("z", "r", "h"):
                shapes[f"{base}.W_{gate}"] = (in_dim, units)
                shapes[f"{base}.U_{gate}"] = (units, units)
                shapes[f"{base}.b_{gate}"] = (units,)
            in_dim = units
    head_in = cfg.gru_units[-1]
    for i, units in enumerate(cfg.dense_units, start=1):
        shapes[f"dense{i}.weight"] = (head_in, units)
        shapes[f"dense{i}.bias"] = (units,)
        head_in = units
    shapes["out.weight"] = (head_in, cfg.n_classes)
    shapes["out.bias"] = (cfg.n_classes,)
    return shapes


_RUNNING_SUFFIXES = (".running_mean", ".running_var")


class ParameterSet:
    """Named tensors for one model; batchnorm running stats ride along but are
    not trainable."""

    def __init__(self, cfg, tensors):
        expected = parameter_shapes(cfg)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ShapeError(f"tensor set mismatch: missing={missing}, extra={extra}")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ShapeError(
                    f"{name}: expected shape {shape}, got {tuple(tensors[name].shape)}"
                )
        self.cfg = cfg
        self.tensors = {name: tensors[name] for name in expected}

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def trainable_names(self):
        return [n for n in self.tensors if not n.endswith(_RUNNING_SUFFIXES)]

    @property
    def dtype(self):
        return self.tensors["conv1.kernel"].dtype

    def copy(self):
        return ParameterSet(self.cfg, {n: t.copy() for n, t in self.tensors.items()})

    def astype(self, dtype):
        return ParameterSet(
            self.cfg, {n: t.astype(dtype) for n, t in self.tensors.items()}
        )


def init_params(cfg, seed, dtype=np.float32):
    """Glorot-uniform weights, zero biases, identity batchnorm; deterministic per seed."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("kernel",):
            cout, cin, k = shape
            limit = np.sqrt(6.0 / (cin * k + cout * k))
            tensors[name] = rng.uniform(-limit, limit, shape)
        elif leaf in ("weight",) or leaf.startswith(("W_", "U_")):
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, shape)
        elif leaf == "gamma" or leaf == "running_var":
            tensors[name] = np.ones(shape)
        else:  # bias, b_*, beta, running_mean
            tensors[name] = np.zeros(shape)
    return ParameterSet(cfg, {n: t.astype(dtype) for n, t in tensors.items()})


# ---------------------------------------------------------------------------
# layer primitives


def _ensure_batched(x, rank):
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim != rank:
        raise ShapeError(f"expected a rank-{rank - 1} or rank-{rank} array, got {x.ndim}")
    return x, False


def conv1d(x, kernels, bias):
    """Same-padded 1-D convolution; x is [L, Cin] or [B, L, Cin]."""
    x, squeeze = _ensure_batched(x, 3)
    out, _ = _conv_forward(x, np.asarray(kernels), np.asarray(bias))
    return out[0] if squeeze else out


def _conv_forward(x, kernels, bias):
    b, length, cin = x.shape
    cout, cin_k, k = kernels.shape
    if cin != cin_k or bias.shape != (cout,):
        raise ShapeError(
            f"conv shapes inconsistent: input channels {cin}, kernel {kernels.shape}, "
            f"bias {bias.shape}"
        )
    if k % 2 == 0:
        raise InvalidConfigError("conv kernel length must be odd for same padding")
    pad = k // 2
    xpad = np.zeros((b, length + 2 * pad, cin), dtype=x.dtype)
    xpad[:, pad:pad + length] = x
    # contiguous per-tap [Cin, Cout] matrices keep every product on the fast
    # BLAS path; strided kernel slices would fall into numpy's slow fallback
    taps = np.ascontiguousarray(kernels.transpose(2, 1, 0))
    out = np.empty((b, length, cout), dtype=x.dtype)
    out[:] = bias
    flat = out.reshape(b * length, cout)
    for tap in range(k):
        xt = np.ascontiguousarray(xpad[:, tap:tap + length, :])
        flat += xt.reshape(b * length, cin) @ taps[tap]
    return out, xpad


def _conv_backward(g, xpad, kernels):
    b, length, cout = g.shape
    cin, k = kernels.shape[1], kernels.shape[2]
    pad = k // 2
    dbias = g.sum(axis=(0, 1))
    g2 = np.ascontiguousarray(g).reshape(b * length, cout)
    taps = np.ascontiguousarray(kernels.transpose(2, 0, 1))  # [K, Cout, Cin]
    dkern = np.empty_like(kernels)
    dxpad = np.zeros_like(xpad)
    for tap in range(k):
        xt = np.ascontiguousarray(xpad[:, tap:tap + length, :])
        dkern[:, :, tap] = g2.T @ xt.reshape(b * length, cin)
        dxpad[:, tap:tap + length, :] += (g2 @ taps[tap]).reshape(b, length, cin)
    return dxpad[:, pad:pad + length, :], dkern, dbias


def maxpool1d(x, size=2):
    """Non-overlapping max along time; an odd trailing element is dropped."""
    x, squeeze = _ensure_batched(x, 3)
    if x.shape[1] < size:
        raise ShapeError(f"cannot pool length {x.shape[1]} with window {size}")
    out, _ = _maxpool_forward(x, size)
    return out[0] if squeeze else out


def _maxpool_forward(x, size):
    b, length, c = x.shape
    n = length // size
    windows = x[:, : n * size, :].reshape(b, n, size, c)
    idx = windows.argmax(axis=2)  # argmax takes the first maximum on ties
    out = np.take_along_axis(windows, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, idx


def _maxpool_backward(g, idx, size, length):
    b, n, c = g.shape
    dwin = np.zeros((b, n, size, c), dtype=g.dtype)
    np.put_along_axis(dwin, idx[:, :, None, :], g[:, :, None, :], axis=2)
    dx = np.zeros((b, length, c), dtype=g.dtype)
    dx[:, : n * size, :] = dwin.reshape(b, n * size, c)
    return dx


def batchnorm1d(x, gamma, beta, running_mean, running_var, mode="train",
                eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over (batch, time).

    Train mode uses batch statistics and updates the running arrays in place;
    inference mode uses the running statistics.
    """
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError(f"batchnorm expects [batch, time, channels], got rank {x.ndim}")
    if mode == "train":
        y, _ = _bn_forward_train(x, gamma, beta, running_mean, running_var,
                                 eps, momentum)
        return y
    if mode == "inference":
        return _bn_forward_inference(x, gamma, beta, running_mean, running_var, eps)
    raise InvalidConfigError(f"mode must be 'train' or 'inference', got {mode!r}")


def _bn_forward_train(x, gamma, beta, running_mean, running_var, eps, momentum):
    if x.shape[0] < 2:
        raise InvalidConfigError("batchnorm train mode requires batch size >= 2")
    mean = x.mean(axis=(0, 1))
    var = x.var(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    running_mean *= momentum
    running_mean += (1.0 - momentum) * mean
    running_var *= momentum
    running_var += (1.0 - momentum) * var
    return y, (xhat, inv_std, gamma)


def _bn_forward_inference(x, gamma, beta, running_mean, running_var, eps):
    scale = gamma / np.sqrt(running_var + eps)
    return scale * (x - running_mean) + beta


def _bn_backward(g, cache):
    xhat, inv_std, gamma = cache
    dgamma = (g * xhat).sum(axis=(0, 1))
    dbeta = g.sum(axis=(0, 1))
    dxhat = g * gamma
    mean_d = dxhat.mean(axis=(0, 1))
    mean_dx = (dxhat * xhat).mean(axis=(0, 1))
    dx = inv_std * (dxhat - mean_d - xhat * mean_dx)
    return dx, dgamma, dbeta


def relu(x):
    return np.maximum(x, 0)


def leaky_relu(x, slope=0.01):
    return np.where(x >= 0, x, slope * x)


def tanh_act(x):
    return np.tanh(x)


def softmax(logits):
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# GRU


@dataclass
class GruWeights:
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray

    FIELDS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")

    @classmethod
    def from_params(cls, params, set_idx, layer_idx):
        base = f"gru{set_idx}.{layer_idx}"
        return cls(**{f: params[f"{base}.{f}"] for f in cls.FIELDS})


def gru_cell(x_t, h_prev, weights):
    """One GRU step: update gate z, reset gate r, candidate h~, blended state."""
    x_t, squeeze = _ensure_batched(x_t, 2)
    h_prev, _ = _ensure_batched(np.asarray(h_prev), 2)
    if x_t.shape[1] != weights.W_z.shape[0] or h_prev.shape[1] != weights.U_z.shape[0]:
        raise ShapeError(
            f"gru_cell shapes inconsistent: x {x_t.shape}, h {h_prev.shape}, "
            f"W_z {weights.W_z.shape}"
        )
    h, _, _, _ = _gru_step(x_t, h_prev, weights)
    return h[0] if squeeze else h


def _gru_step(x_t, h_prev, w):
    z = _sigmoid(x_t @ w.W_z + h_prev @ w.U_z + w.b_z)
    r = _sigmoid(x_t @ w.W_r + h_prev @ w.U_r + w.b_r)
    hc = np.tanh(x_t @ w.W_h + (r * h_prev) @ w.U_h + w.b_h)
    h = (1.0 - z) * h_prev + z * hc
    return h, z, r, hc


def _gru_layer_forward(x_seq, w, keep_cache):
    b, t_steps, _ = x_seq.shape
    units = w.b_z.shape[0]
    h = np.zeros((b, units), dtype=x_seq.dtype)
    h_all = np.empty((b, t_steps, units), dtype=x_seq.dtype)
    cache = None
    if keep_cache:
        cache = {
            "Z": np.empty_like(h_all),
            "R": np.empty_like(h_all),
            "Hc": np.empty_like(h_all),
            "Hprev": np.empty_like(h_all),
        }
    for t in range(t_steps):
        if keep_cache:
            cache["Hprev"][:, t] = h
        h, z, r, hc = _gru_step(x_seq[:, t], h, w)
        h_all[:, t] = h
        if keep_cache:
            cache["Z"][:, t] = z
            cache["R"][:, t] = r
            cache["Hc"][:, t] = hc
    return h_all, cache


def _gru_layer_backward(d_h_seq, x_seq, cache, w):
    b, t_steps, _ = x_seq.shape
    grads = {f: np.zeros_like(getattr(w, f)) for f in GruWeights.FIELDS}
    dx_seq = np.zeros_like(x_seq)
    dh = np.zeros((b, w.b_z.shape[0]), dtype=x_seq.dtype)
    for t in reversed(range(t_steps)):
        dh = dh + d_h_seq[:, t]
        z = cache["Z"][:, t]
        r = cache["R"][:, t]
        hc = cache["Hc"][:, t]
        hp = cache["Hprev"][:, t]
        x = x_seq[:, t]

        dz = dh * (hc - hp)
        dhc = dh * z
        dhp = dh * (1.0 - z)

        da_h = dhc * (1.0 - hc * hc)
        grads["W_h"] += x.T @ da_h
        grads["U_h"] += (r * hp).T @ da_h
        grads["b_h"] += da_h.sum(axis=0)
        d_rhp = da_h @ w.U_h.T
        dr = d_rhp * hp
        dhp += d_rhp * r
        dx_seq[:, t] += da_h @ w.W_h.T

        da_z = dz * z * (1.0 - z)
        grads["W_z"] += x.T @ da_z
        grads["U_z"] += hp.T @ da_z
        grads["b_z"] += da_z.sum(axis=0)
        dhp += da_z @ w.U_z.T
        dx_seq[:, t] += da_z @ w.W_z.T

        da_r = dr * r * (1.0 - r)
        grads["W_r"] += x.T @ da_r
        grads["U_r"] += hp.T @ da_r
        grads["b_r"] += da_r.sum(axis=0)
        dhp += da_r @ w.U_r.T
        dx_seq[:, t] += da_r @ w.W_r.T

        dh = dhp
    return dx_seq, grads


def gru_branch(seq, layer_weights):
    """One stacked-GRU set: sequence outputs through the stack, final state out."""
    seq, squeeze = _ensure_batched(seq, 3)
    if seq.shape[1] < 1:
        raise ShapeError("gru_branch needs at least one time step")
    out, _ = _gru_branch_forward(seq, layer_weights, keep_cache=False)
    return out[0] if squeeze else out


def _gru_branch_forward(seq, layer_weights, keep_cache):
    caches = []
    x = seq
    for w in layer_weights:
        h_all, cache = _gru_layer_forward(x, w, keep_cache)
        if keep_cache:
            caches.append({"input": x, "cache": cache})
        x = h_all
    return x[:, -1, :], caches


def _gru_branch_backward(d_out, caches, layer_weights):
    grads = []
    top = caches[-1]["input"]
    d_seq = np.zeros(
        (top.shape[0], top.shape[1], layer_weights[-1].b_z.shape[0]), dtype=top.dtype
    )
    d_seq[:, -1, :] = d_out
    for layer in reversed(range(len(layer_weights))):
        entry = caches[layer]
        d_seq, layer_grads = _gru_layer_backward(
            d_seq, entry["input"], entry["cache"], layer_weights[layer]
        )
        grads.append(layer_grads)
    grads.reverse()
    return d_seq, grads


# ---------------------------------------------------------------------------
# full model


@dataclass
class ForwardTrace:
    """Intermediates from a train-mode forward pass, consumed by model_backward."""

    params: ParameterSet
    x0: np.ndarray
    conv1_xpad: np.ndarray
    conv1_len: int
    pool1_idx: np.ndarray
    bn1_cache: tuple
    bn1_out: np.ndarray
    conv2_xpad: np.ndarray
    conv2_len: int
    pool2_idx: np.ndarray
    bn2_cache: tuple
    bn2_out: np.ndarray
    seq: np.ndarray
    branch_caches: list
    branch_sum: np.ndarray
    dense_pre: list
    dense_out: list
    probs: np.ndarray
    mode: str = "train"


def _dense(x, params, name):
    return x @ params[f"{name}.weight"] + params[f"{name}.bias"]


def model_forward(features, params, mode="inference"):
    """Class probabilities for a batch of feature vectors.

    features: [B, input_len] (or a single [input_len] vector). Returns
    [B, n_classes] probabilities; in train mode returns (probs, ForwardTrace).
    """
    if mode not in ("train", "inference"):
        raise InvalidConfigError(f"mode must be 'train' or 'inference', got {mode!r}")
    cfg = params.cfg
    feats, squeeze = _ensure_batched(np.asarray(features), 2)
    if feats.shape[1] != cfg.input_len:
        raise ShapeError(
            f"expected feature length {cfg.input_len}, got {feats.shape[1]}"
        )
    feats = feats.astype(params.dtype, copy=False)
    b = feats.shape[0]
    x0 = feats.reshape(b, cfg.input_len, cfg.input_channels)
    train = mode == "train"

    c1, xpad1 = _conv_forward(x0, params["conv1.kernel"], params["conv1.bias"])
    p1, idx1 = _maxpool_forward(c1, cfg.pool_size)
    if train:
        bn1, bn1_cache = _bn_forward_train(
            p1, params["bn1.gamma"], params["bn1.beta"],
            params["bn1.running_mean"], params["bn1.running_var"],
            BN_EPS, BN_MOMENTUM,
        )
    else:
        bn1 = _bn_forward_inference(
            p1, params["bn1.gamma"], params["bn1.beta"],
            params["bn1.running_mean"], params["bn1.running_var"], BN_EPS,
        )
    r1 = relu(bn1)

    c2, xpad2 = _conv_forward(r1, params["conv2.kernel"], params["conv2.bias"])
    p2, idx2 = _maxpool_forward(c2, cfg.pool_size)
    if train:
        bn2, bn2_cache = _bn_forward_train(
            p2, params["bn2.gamma"], params["bn2.beta"],
            params["bn2.running_mean"], params["bn2.running_var"],
            BN_EPS, BN_MOMENTUM,
        )
    else:
        bn2 = _bn_forward_inference(
            p2, params["bn2.gamma"], params["bn2.beta"],
            params["bn2.running_mean"], params["bn2.running_var"], BN_EPS,
        )
    seq = relu(bn2)

    branch_sum = None
    branch_caches = []
    for s in range(cfg.gru_sets):
        weights = [GruWeights.from_params(params, s, l)
                   for l in range(len(cfg.gru_units))]
        out, caches = _gru_branch_forward(seq, weights, keep_cache=train)
        branch_caches.append(caches)
        branch_sum = out if branch_sum is None else branch_sum + out

    dense_pre = []
    dense_out = []
    x = branch_sum
    for i in range(1, len(cfg.dense_units) + 1):
        pre = _dense(x, params, f"dense{i}")
        x = leaky_relu(pre, cfg.leaky_slope)
        dense_pre.append(pre)
        dense_out.append(x)
    logits = _dense(x, params, "out")
    probs = softmax(logits)

    if not train:
        return probs[0] if squeeze else probs
    trace = ForwardTrace(
        params=params, x0=x0, conv1_xpad=xpad1, conv1_len=c1.shape[1],
        pool1_idx=idx1, bn1_cache=bn1_cache, bn1_out=bn1,
        conv2_xpad=xpad2, conv2_len=c2.shape[1], pool2_idx=idx2,
        bn2_cache=bn2_cache, bn2_out=bn2, seq=seq,
        branch_caches=branch_caches, branch_sum=branch_sum,
        dense_pre=dense_pre, dense_out=dense_out, probs=probs,
    )
    return (probs[0] if squeeze else probs), trace


def model_backward(trace, d_probs=None, d_logits=None):
    """Exact gradients of a scalar loss for every trainable tensor.

    Pass d_probs (gradient w.r.t. the softmax outputs) for the general case,
    or d_logits to start from a fused softmax-plus-loss gradient.
    """
    if not isinstance(trace, ForwardTrace) or trace.mode != "train":
        raise StateError("model_backward needs the trace from a train-mode forward")
    if (d_probs is None) == (d_logits is None):
        raise StateError("provide exactly one of d_probs or d_logits")
    params = trace.params
    cfg = params.cfg
    probs = trace.probs
    if d_logits is None:
        d_probs = np.asarray(d_probs, dtype=probs.dtype)
        if d_probs.shape != probs.shape:
            raise ShapeError(
                f"d_probs shape {d_probs.shape} != probabilities shape {probs.shape}"
            )
        inner = (probs * d_probs).sum(axis=-1, keepdims=True)
        d_logits = probs * (d_probs - inner)
    else:
        d_logits = np.asarray(d_logits, dtype=probs.dtype)

    grads = {}
    x_head_in = trace.dense_out[-1] if trace.dense_out else trace.branch_sum
    grads["out.weight"] = x_head_in.T @ d_logits
    grads["out.bias"] = d_logits.sum(axis=0)
    g = d_logits @ params["out.weight"].T

    for i in reversed(range(1, len(cfg.dense_units) + 1)):
        pre = trace.dense_pre[i - 1]
        g = g * np.where(pre >= 0, 1.0, cfg.leaky_slope).astype(g.dtype)
        x_in = trace.dense_out[i - 2] if i >= 2 else trace.branch_sum
        grads[f"dense{i}.weight"] = x_in.T @ g
        grads[f"dense{i}.bias"] = g.sum(axis=0)
        g = g @ params[f"dense{i}.weight"].T

    d_seq = np.zeros_like(trace.seq)
    for s in range(cfg.gru_sets):
        weights = [GruWeights.from_params(params, s, l)
                   for l in range(len(cfg.gru_units))]
        d_branch_seq, layer_grads = _gru_branch_backward(
            g, trace.branch_caches[s], weights
        )
        d_seq += d_branch_seq
        for l, lg in enumerate(layer_grads):
            for fname, grad in lg.items():
                grads[f"gru{s}.{l}.{fname}"] = grad

    g = d_seq * (trace.bn2_out > 0).astype(d_seq.dtype)
    g, grads["bn2.gamma"], grads["bn2.beta"] = _bn_backward(g, trace.bn2_cache)
    g = _maxpool_backward(g, trace.pool2_idx, cfg.pool_size, trace.conv2_len)
    g, grads["conv2.kernel"], grads["conv2.bias"] = _conv_backward(
        g, trace.conv2_xpad, params["conv2.kernel"]
    )

    g = g * (trace.bn1_out > 0).astype(g.dtype)
    g, grads["bn1.gamma"], grads["bn1.beta"] = _bn_backward(g, trace.bn1_cache)
    g = _maxpool_backward(g, trace.pool1_idx, cfg.pool_size, trace.conv1_len)
    _, grads["conv1.kernel"], grads["conv1.bias"] = _conv_backward(
        g, trace.conv1_xpad, params["conv1.kernel"]
    )
    return grads
