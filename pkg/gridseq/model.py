"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
import logging

import numpy as np

from .datapipe import PatchConfig, patch_windows
from .errors import ConfigError, ShapeError
from .numerics import (DTYPE, MASK_SENTINEL, gelu, gelu_grad,
    layer_norm_backward, layer_norm_forward, matmul, softmax_rows,
    softmax_rows_backward)


logger = logging.getLogger(__name__)

CAUSAL = "causal"
BIDIRECTIONAL = "bidirectional"

PROFILES = {
    "desk": dict(L=3, h=4, d=64, d_ff=256, attention_mode=CAUSAL),
    "full": dict(L=12, h=12, d=768, d_ff=3072, attention_mode=CAUSAL),
    "enc": dict(L=3, h=6, d=128, d_ff=512, attention_mode=BIDIRECTIONAL),
}


@dataclass
class ModelConfig:
    """Architecture and window geometry of the forecaster.

    L may be 0, giving an embedding followed directly by the head.
    """
    L: int = 3
    h: int = 4
    d: int = 64
    d_ff: int = 256
    L_seq: int = 65
    L_pred: int = 1
    L_p: int = 16
    S: int = 8
    attention_mode: str = CAUSAL
    reduction: str = "blas"
    eps: float = 1e-5
    init_std: float = 0.02

    @classmethod
    def profile(cls, name, **overrides):
        """Named configuration ("desk", "full" or "enc") with overrides."""
        if name not in PROFILES:
            raise ConfigError("unknown model profile %r (choose from %s)" % (
                name, ", ".join(sorted(PROFILES))))
        kwargs = dict(PROFILES[name])
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def patch(self):
        return PatchConfig(L_p=self.L_p, S=self.S)

    @property
    def P(self):
        return self.patch.n_patches(self.L_seq)

    @property
    def d_k(self):
        return self.d // self.h

    @property
    def ordered(self):
        return self.reduction == "ordered"

    def validate(self):
        if self.L < 0 or self.h < 1 or self.d < 1 or self.d_ff < 1:
            raise ConfigError("layer, head and width counts must be "
                "positive")
        if self.d % self.h:
            raise ConfigError("width d=%d is not divisible by h=%d heads" % (
                self.d, self.h))
        if self.L_pred < 1 or self.L_seq < 1:
            raise ConfigError("L_seq and L_pred must be positive")
        if self.attention_mode not in (CAUSAL, BIDIRECTIONAL):
            raise ConfigError("attention_mode must be %r or %r" % (CAUSAL,
                BIDIRECTIONAL))
        if self.reduction not in ("blas", "ordered"):
            raise ConfigError("reduction must be 'blas' or 'ordered'")
        self.patch.validate(self.L_seq)
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        known = set(f.name for f in fields(cls))
        unknown = set(doc) - known
        if unknown:
            raise ConfigError("unknown model config keys: %s" % ", ".join(
                sorted(unknown)))
        return cls(**doc).validate()


def parameter_shapes(config):
    """Ordered mapping of parameter names to array shapes."""
    c = config
    shapes = OrderedDict()
    shapes["embed.W_p"] = (c.L_p, c.d)
    shapes["embed.b_p"] = (c.d,)
    shapes["embed.E_pos"] = (c.P, c.d)
    for l in range(c.L):
        pre = "blocks.%d." % l
        for w in ("W_Q", "W_K", "W_V", "W_O"):
            shapes[pre+"attn."+w] = (c.d, c.d)
        shapes[pre+"ln1.gain"] = (c.d,)
        shapes[pre+"ln1.bias"] = (c.d,)
        shapes[pre+"ffn.W_1"] = (c.d, c.d_ff)
        shapes[pre+"ffn.b_1"] = (c.d_ff,)
        shapes[pre+"ffn.W_2"] = (c.d_ff, c.d)
        shapes[pre+"ffn.b_2"] = (c.d,)
        shapes[pre+"ln2.gain"] = (c.d,)
        shapes[pre+"ln2.bias"] = (c.d,)
    shapes["head.W_out"] = (c.P*c.d, c.L_pred)
    shapes["head.b_out"] = (c.L_pred,)
    return shapes


class FreezeMask(object):
    """Trainable flag per named parameter array.

    Constructor args:
        flags: Dict of name -> bool (True = trainable).
    """

    def __init__(self, flags):
        self.flags = OrderedDict((k, bool(v)) for (k,v) in flags.items())

    @classmethod
    def default(cls, names):
        """T-block arrays frozen except their layer norms."""
        return cls(OrderedDict((n, not n.startswith("blocks.") or
            ".ln1." in n or ".ln2." in n) for n in names))

    @classmethod
    def all_trainable(cls, names):
        return cls(OrderedDict((n, True) for n in names))

    def __getitem__(self, name):
        return self.flags[name]

    def trainable_names(self):
        return [n for (n,t) in self.flags.items() if t]

    def frozen_names(self):
        return [n for (n,t) in self.flags.items() if not t]

    def __eq__(self, other):
        return isinstance(other, FreezeMask) and self.flags == other.flags


class ModelParameters(object):
    """Named parameter arrays of one model.

    Constructor args:
        config: The ModelConfig.
        arrays: Dict of name -> array; must match parameter_shapes(config).
    """

    def __init__(self, config, arrays):
        self.config = config
        self.arrays = OrderedDict()
        for (name, shape) in parameter_shapes(config).items():
            if name not in arrays:
                raise ShapeError("parameter %s is missing" % name)
            arr = np.ascontiguousarray(arrays[name], dtype=DTYPE)
            if arr.shape != shape:
                raise ShapeError("parameter %s has shape %s, expected %s" % (
                    name, arr.shape, shape))
            self.arrays[name] = arr
        extra = set(arrays) - set(self.arrays)
        if extra:
            raise ShapeError("unexpected parameters: %s" % ", ".join(
                sorted(extra)))

    def __getitem__(self, name):
        return self.arrays[name]

    def names(self):
        return list(self.arrays)

    def copy(self):
        return ModelParameters(self.config, OrderedDict((k, v.copy())
            for (k,v) in self.arrays.items()))

    def count(self, names=None):
        """Number of scalar parameters (in the given arrays, or all)."""
        names = self.arrays if names is None else names
        return int(sum(self.arrays[n].size for n in names))

    def trainable_fraction(self, mask):
        return self.count(mask.trainable_names()) / float(self.count())

    def is_finite(self):
        return all(np.isfinite(a).all() for a in self.arrays.values())


def init_parameters(config, seed=0):
    """Gaussian weights (std config.init_std), zero biases and positions,
    unit layer-norm gains. Deterministic per seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    arrays = OrderedDict()
    for (name, shape) in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gain":
            arrays[name] = np.ones(shape)
        elif leaf.startswith("b") or leaf == "E_pos":
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, config.init_std, size=shape)
    return ModelParameters(config, arrays)


def causal_mask(P):
    """Additive P x P mask: 0 where row >= column, MASK_SENTINEL above."""
    if P < 1:
        raise ShapeError("causal_mask needs P >= 1")
    M = np.zeros((P, P))
    M[np.triu_indices(P, 1)] = MASK_SENTINEL
    return M


@dataclass
class ForwardTrace:
    """Hidden states z^0..z^L and attention matrices of a forward pass."""
    hidden: list = field(default_factory=list)
    attention: list = field(default_factory=list)

    def sample(self, b):
        """The trace of sample b of a batched pass."""
        return ForwardTrace(hidden=[z[b] for z in self.hidden],
            attention=[A[b] for A in self.attention])


def _as_batch(x, ndim):
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim == ndim - 1:
        return (x[None], True)
    if x.ndim != ndim:
        raise ShapeError("expected a %d-D array (or a batch), got shape %s"
            % (ndim-1, x.shape))
    return (x, False)


def embed(patches, params, config=None):
    """z^0 = patches W_p + b_p + E_pos for (P, L_p) or (B, P, L_p) input."""
    config = params.config if config is None else config
    (x, single) = _as_batch(patches, 3)
    if x.shape[1:] != (config.P, config.L_p):
        raise ShapeError("patches have shape %s, expected (%d, %d)" % (
            x.shape[1:], config.P, config.L_p))
    z = (matmul(x, params["embed.W_p"], ordered=config.ordered) +
        params["embed.b_p"] + params["embed.E_pos"])
    return z[0] if single else z


def _split_heads(X, h):
    (B, P, d) = X.shape
    return X.reshape(B, P, h, d//h).transpose(0, 2, 1, 3)


def _merge_heads(X):
    (B, h, P, dk) = X.shape
    return X.transpose(0, 2, 1, 3).reshape(B, P, h*dk)


def _attention(z, params, layer, config, mode):
    c = config
    pre = "blocks.%d.attn." % layer
    Q = matmul(z, params[pre+"W_Q"], ordered=c.ordered)
    K = matmul(z, params[pre+"W_K"], ordered=c.ordered)
    V = matmul(z, params[pre+"W_V"], ordered=c.ordered)
    (Qh, Kh, Vh) = (_split_heads(Q, c.h), _split_heads(K, c.h),
        _split_heads(V, c.h))
    scale = 1.0/np.sqrt(c.d_k)
    S = matmul(Qh, Kh.transpose(0, 1, 3, 2), ordered=c.ordered) * scale
    if mode == CAUSAL:
        S = S + causal_mask(z.shape[1])
    A = softmax_rows(S, ordered=c.ordered)
    O = _merge_heads(matmul(A, Vh, ordered=c.ordered))
    out = matmul(O, params[pre+"W_O"], ordered=c.ordered)
    cache = dict(z=z, Qh=Qh, Kh=Kh, Vh=Vh, A=A, O=O, scale=scale)
    return (out, cache)


def attention(z, params, layer, config=None, mode=None):
    """Multi-head self-attention of one layer.

    Args:
        z: (P, d) or (B, P, d) hidden states.
        params: ModelParameters.
        layer: Layer index.
        config: ModelConfig (default params.config).
        mode: "causal" or "bidirectional" (default config.attention_mode).

    Returns:
        Tuple (output, A) with A the (.., h, P, P) attention weights.
    """
    config = params.config if config is None else config
    mode = config.attention_mode if mode is None else mode
    (x, single) = _as_batch(z, 3)
    (out, cache) = _attention(x, params, layer, config, mode)
    if single:
        return (out[0], cache["A"][0])
    return (out, cache["A"])


def _block(z, params, layer, config, mode):
    c = config
    pre = "blocks.%d." % layer
    (att, attn_cache) = _attention(z, params, layer, c, mode)
    (h1, ln1_cache) = layer_norm_forward(att + z, params[pre+"ln1.gain"],
        params[pre+"ln1.bias"], eps=c.eps, ordered=c.ordered)
    a1 = matmul(h1, params[pre+"ffn.W_1"], ordered=c.ordered) + \
        params[pre+"ffn.b_1"]
    g = gelu(a1)
    f = matmul(g, params[pre+"ffn.W_2"], ordered=c.ordered) + \
        params[pre+"ffn.b_2"]
    (out, ln2_cache) = layer_norm_forward(f + h1, params[pre+"ln2.gain"],
        params[pre+"ln2.bias"], eps=c.eps, ordered=c.ordered)
    cache = dict(attn=attn_cache, ln1=ln1_cache, h1=h1, a1=a1, g=g,
        ln2=ln2_cache)
    return (out, cache)


def transformer_block(z, params, layer, config=None, mode=None):
    """One post-norm T-block.

    h = LayerNorm(MHA(z) + z); out = LayerNorm(FFN(h) + h)
    """
    config = params.config if config is None else config
    mode = config.attention_mode if mode is None else mode
    (x, single) = _as_batch(z, 3)
    out = _block(x, params, layer, config, mode)[0]
    return out[0] if single else out


def head(zL, params, config=None):
    """Flatten each sample's hidden states and apply the output layer.

    Returns the prediction in normalized units, (B, L_pred).
    """
    config = params.config if config is None else config
    (B, P, d) = zL.shape
    flat = zL.reshape(B, 1, P*d)
    out = matmul(flat, params["head.W_out"], ordered=config.ordered)
    return out[:,0,:] + params["head.b_out"]


def project(zL, params, mu, sigma, config=None):
    """Physical-unit prediction from final hidden states.

    Args:
        zL: (P, d) or (B, P, d) final hidden states.
        mu, sigma: Statistics of the input window(s).
    """
    (x, single) = _as_batch(zL, 3)
    out = head(x, params, config)
    mu = np.reshape(mu, (-1, 1))
    sigma = np.reshape(sigma, (-1, 1))
    pred = sigma*out + mu
    return pred[0] if single else pred


def forward_batch(patches, params, config=None, keep_cache=False,
    trace=False):
    """Batched forward pass in normalized units.

    Every sample of the batch is computed independently of the others.

    Args:
        patches: (B, P, L_p) normalized patches.
        params: ModelParameters.
        config: ModelConfig (default params.config).
        keep_cache: Retain activations for backward().
        trace: Also return a ForwardTrace.

    Returns:
        Tuple (out, cache, trace); out is (B, L_pred), cache and trace are
        None unless requested.
    """
    config = params.config if config is None else config
    z = embed(patches, params, config)
    if z.ndim != 3:
        raise ShapeError("forward_batch expects (B, P, L_p) patches")
    caches = [] if keep_cache else None
    tr = ForwardTrace(hidden=[z]) if trace else None
    for l in range(config.L):
        (z, c) = _block(z, params, l, config, config.attention_mode)
        if keep_cache:
            caches.append(c)
        if trace:
            tr.hidden.append(z)
            tr.attention.append(c["attn"]["A"])
    out = head(z, params, config)
    cache = None
    if keep_cache:
        cache = dict(patches=np.asarray(patches, dtype=DTYPE), blocks=caches,
            zL=z)
    return (out, cache, tr)


def forward(sample, params, config=None, trace=False):
    """Physical-unit prediction for one normalized window.

    Args:
        sample: A PatchedSample, or a normalized WindowSample.
        params: ModelParameters.
        config: ModelConfig (default params.config).
        trace: Also return the ForwardTrace.

    Returns:
        The (L_pred,) prediction, or (prediction, trace).
    """
    config = params.config if config is None else config
    patches = getattr(sample, "patches", None)
    if patches is None:
        if sample.mu is None:
            raise ShapeError("forward expects a normalized sample")
        patches = patch_windows(sample.input, config.patch)
    (out, cache, tr) = forward_batch(patches[None], params, config,
        trace=trace)
    pred = sample.sigma*out[0] + sample.mu
    if trace:
        return (pred, tr.sample(0))
    return pred


def backward(d_out, cache, params, config=None, trainable=None):
    """Gradients of a scalar loss given d loss / d out.

    Args:
        d_out: (B, L_pred) gradient with respect to the normalized output.
        cache: Cache from forward_batch(..., keep_cache=True).
        params: ModelParameters.
        config: ModelConfig.
        trainable: Names to compute gradients for (default all).

    Returns:
        Dict name -> gradient for every requested array.
    """
    c = params.config if config is None else config
    want = set(params.names() if trainable is None else trainable)
    grads = OrderedDict()
    zL = cache["zL"]
    (B, P, d) = zL.shape
    flat = zL.reshape(B, P*d)
    if "head.W_out" in want:
        grads["head.W_out"] = flat.T.dot(d_out)
    if "head.b_out" in want:
        grads["head.b_out"] = d_out.sum(axis=0)
    dz = d_out.dot(params["head.W_out"].T).reshape(B, P, d)

    for l in reversed(range(c.L)):
        dz = _block_backward(dz, cache["blocks"][l], params, l, c, want,
            grads)

    x = cache["patches"]
    if "embed.W_p" in want:
        grads["embed.W_p"] = np.tensordot(x, dz, axes=([0,1], [0,1]))
    if "embed.b_p" in want:
        grads["embed.b_p"] = dz.sum(axis=(0,1))
    if "embed.E_pos" in want:
        grads["embed.E_pos"] = dz.sum(axis=0)
    return OrderedDict((n, grads[n]) for n in params.names() if n in grads)


def _block_backward(dz, cache, params, layer, c, want, grads):
    pre = "blocks.%d." % layer

    def wgrad(name, inp, dout):
        if pre+name in want:
            grads[pre+name] = np.tensordot(inp, dout, axes=([0,1], [0,1]))

    def bgrad(name, dout):
        if pre+name in want:
            grads[pre+name] = dout.sum(axis=(0,1))

    (dv, dg2, db2) = layer_norm_backward(dz, cache["ln2"])
    if pre+"ln2.gain" in want:
        grads[pre+"ln2.gain"] = dg2
    if pre+"ln2.bias" in want:
        grads[pre+"ln2.bias"] = db2
    # FFN branch plus residual
    wgrad("ffn.W_2", cache["g"], dv)
    bgrad("ffn.b_2", dv)
    da1 = dv.dot(params[pre+"ffn.W_2"].T) * gelu_grad(cache["a1"])
    wgrad("ffn.W_1", cache["h1"], da1)
    bgrad("ffn.b_1", da1)
    dh1 = dv + da1.dot(params[pre+"ffn.W_1"].T)

    (du, dg1, db1) = layer_norm_backward(dh1, cache["ln1"])
    if pre+"ln1.gain" in want:
        grads[pre+"ln1.gain"] = dg1
    if pre+"ln1.bias" in want:
        grads[pre+"ln1.bias"] = db1

    a = cache["attn"]
    z = a["z"]
    wgrad("attn.W_O", a["O"], du)
    dOh = _split_heads(du.dot(params[pre+"attn.W_O"].T), c.h)
    dA = np.matmul(dOh, a["Vh"].transpose(0, 1, 3, 2))
    dVh = np.matmul(a["A"].transpose(0, 1, 3, 2), dOh)
    dS = softmax_rows_backward(a["A"], dA) * a["scale"]
    dQh = np.matmul(dS, a["Kh"])
    dKh = np.matmul(dS.transpose(0, 1, 3, 2), a["Qh"])
    (dQ, dK, dV) = (_merge_heads(dQh), _merge_heads(dKh), _merge_heads(dVh))
    wgrad("attn.W_Q", z, dQ)
    wgrad("attn.W_K", z, dK)
    wgrad("attn.W_V", z, dV)
    return (du + dQ.dot(params[pre+"attn.W_Q"].T) +
        dK.dot(params[pre+"attn.W_K"].T) + dV.dot(params[pre+"attn.W_V"].T))


def mse(pred, target):
    """Mean squared difference."""
    diff = np.asarray(pred, dtype=DTYPE) - np.asarray(target, dtype=DTYPE)
    return float(np.mean(diff*diff))


def loss_and_gradients(params, patches, targets, config=None,
    trainable=None, n_valid=None):
    """Normalized-space MSE of a batch and its gradients.

    Args:
        params: ModelParameters.
        patches: (B, P, L_p) normalized patches.
        targets: (B, L_pred) targets normalized with the input statistics.
        trainable: Names to differentiate (default all).
        n_valid: Score only the first n_valid target columns (for a
            truncated final segment); targets may be that narrow.

    Returns:
        Tuple (loss, grads).
    """
    (out, cache, _) = forward_batch(patches, params, config, keep_cache=True)
    m = out.shape[1] if n_valid is None else n_valid
    diff = out[:,:m] - np.asarray(targets)[:,:m]
    loss = mse(out[:,:m], np.asarray(targets)[:,:m])
    d_out = np.zeros_like(out)
    d_out[:,:m] = 2.0*diff/diff.size
    return (loss, backward(d_out, cache, params, config, trainable))
