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

import logging

import numpy as np
from scipy import special

from .errors import EvaluationError, ShapeError


logger = logging.getLogger(__name__)

# Stands in for -inf in attention masks; exp() of it underflows to exactly 0.
MASK_SENTINEL = -1e30

DTYPE = np.float64

_SQRT_2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0/np.sqrt(2.0*np.pi)


def matmul(a, b, ordered=False):
    """Matrix product over the last two axes.

    Leading axes are broadcast as in numpy.matmul, so a stack of samples
    is multiplied slice by slice and each slice is computed exactly as it
    would be on its own.

    Args:
        a: Array of shape (..., m, k).
        b: Array of shape (..., k, n).
        ordered: If True, accumulate over the inner dimension strictly
            left to right (a[...,0]*b[0] + a[...,1]*b[1] + ...) instead of
            delegating to BLAS.

    Returns:
        The (..., m, n) product.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs at least 2-D operands, got %s and %s"
            % (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul dimension mismatch: %s x %s" % (a.shape,
            b.shape))
    if not ordered:
        return np.matmul(a, b)

    k_dim = a.shape[-1]
    if k_dim == 0:
        return np.matmul(a, b)
    out = a[...,:,0:1] * b[...,0:1,:]
    for k in range(1, k_dim):
        out = out + a[...,:,k:k+1] * b[...,k:k+1,:]
    return out


def row_sum(x, ordered=False):
    """Sum over the last axis, keeping it as a length-1 axis."""
    x = np.asarray(x)
    if not ordered:
        return x.sum(axis=-1, keepdims=True)
    out = x[...,0:1].copy()
    for k in range(1, x.shape[-1]):
        out = out + x[...,k:k+1]
    return out


def softmax_rows(m, ordered=False):
    """Row-wise softmax.

    Entries holding MASK_SENTINEL get weight exactly 0.

    Args:
        m: Array of scores, softmax is taken over the last axis.
        ordered: Use left-to-right row sums.

    Returns:
        An array of the same shape whose rows sum to 1.
    """
    m = np.asarray(m, dtype=DTYPE)
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / row_sum(e, ordered=ordered)


def softmax_rows_backward(probs, d_probs, ordered=False):
    """Gradient of the row softmax with respect to its scores."""
    return probs * (d_probs - row_sum(d_probs*probs, ordered=ordered))


def layer_norm(v, gain, bias, eps=1e-5, ordered=False):
    """Layer normalization over the last axis.

    Uses the population (1/N) variance.

    Args:
        v: Input array (..., n).
        gain, bias: Length-n arrays.
        eps: Variance regularizer.
        ordered: Use left-to-right row sums.

    Returns:
        (v - mean(v)) / sqrt(var(v) + eps) * gain + bias
    """
    return layer_norm_forward(v, gain, bias, eps=eps, ordered=ordered)[0]


def layer_norm_forward(v, gain, bias, eps=1e-5, ordered=False):
    """Layer normalization that also returns the backward cache.

    Returns:
        Tuple (out, cache) where cache = (xhat, inv_std, gain).
    """
    v = np.asarray(v, dtype=DTYPE)
    gain = np.asarray(gain, dtype=DTYPE)
    bias = np.asarray(bias, dtype=DTYPE)
    n = v.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError("layer_norm: input width %d, gain %s, bias %s" % (
            n, gain.shape, bias.shape))
    mean = row_sum(v, ordered=ordered) / n
    centered = v - mean
    var = row_sum(centered*centered, ordered=ordered) / n
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return (xhat*gain + bias, (xhat, inv_std, gain))


def layer_norm_backward(d_out, cache, ordered=False):
    """Backward pass of layer_norm_forward.

    Returns:
        Tuple (d_v, d_gain, d_bias); the parameter gradients are summed over
        all leading axes.
    """
    (xhat, inv_std, gain) = cache
    n = xhat.shape[-1]
    d_xhat = d_out * gain
    lead = tuple(range(d_out.ndim-1))
    d_gain = (d_out*xhat).sum(axis=lead)
    d_bias = d_out.sum(axis=lead)
    mean_d = row_sum(d_xhat, ordered=ordered) / n
    mean_dx = row_sum(d_xhat*xhat, ordered=ordered) / n
    d_v = inv_std * (d_xhat - mean_d - xhat*mean_dx)
    return (d_v, d_gain, d_bias)


def gelu(v):
    """Gaussian error linear unit, exact form x*Phi(x)."""
    v = np.asarray(v, dtype=DTYPE)
    return 0.5 * v * (1.0 + special.erf(v/_SQRT_2))


def gelu_grad(v):
    """Derivative of gelu: Phi(x) + x*phi(x)."""
    v = np.asarray(v, dtype=DTYPE)
    cdf = 0.5 * (1.0 + special.erf(v/_SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5*v*v)
    return cdf + v*pdf


def grad_check(f, params, h=1e-5, coords_per_array=8, seed=0):
    """Compare analytic gradients with central differences.

    The function is evaluated once at params to obtain the analytic
    gradients, then twice per sampled coordinate. Arrays that are not in
    the analytic gradient dictionary are frozen: their analytic gradient is
    exactly 0 and they are not sampled.

    Args:
        f: Callable f(params) -> (loss, gradients) where gradients is a dict
            mapping array names to arrays shaped like params[name].
        params: Dict of name -> numpy array. The arrays are perturbed in
            place and restored afterwards.
        h: Finite-difference step.
        coords_per_array: Coordinates sampled per array; arrays smaller
            than this are checked exhaustively.
        seed: Seed for the coordinate sampler.

    Returns:
        The maximum over sampled coordinates of
        |analytic - numeric| / max(1, |numeric|).
    """
    if not h > 0:
        raise ValueError("grad_check needs h > 0")

    def loss_at():
        out = f(params)
        loss = out[0] if isinstance(out, tuple) else out
        loss = float(loss)
        if not np.isfinite(loss):
            raise EvaluationError("objective is not finite: %r" % loss)
        return loss

    (loss0, grads) = f(params)
    if not np.isfinite(loss0):
        raise EvaluationError("objective is not finite: %r" % loss0)

    rng = np.random.default_rng(seed)
    max_err = 0.0
    for name in sorted(grads):
        arr = params[name]
        g = np.asarray(grads[name])
        if g.shape != arr.shape:
            raise ShapeError("gradient for %s has shape %s, expected %s" % (
                name, g.shape, arr.shape))
        if not arr.flags.c_contiguous:
            raise ValueError("grad_check perturbs in place; %s is not "
                "contiguous" % name)
        flat = arr.reshape(-1)
        if flat.size <= coords_per_array:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_array,
                replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_at()
            flat[i] = orig - h
            f_minus = loss_at()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2*h)
            err = abs(g.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            if err > max_err:
                max_err = err
                logger.debug("grad_check %s[%d]: analytic %.6e numeric %.6e",
                    name, i, g.reshape(-1)[i], numeric)
    return max_err
