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
import logging

import numpy as np

from .errors import ConfigError


logger = logging.getLogger(__name__)


class Adam(object):
    """Adam with bias correction over the trainable arrays of a model.

    Moment accumulators exist only for trainable arrays; frozen arrays are
    never touched.

    Constructor args:
        params: ModelParameters, updated in place.
        mask: FreezeMask.
        lr: Default learning rate.
        beta1, beta2, eps: Adam constants.
    """

    def __init__(self, params, mask, lr=1e-3, beta1=0.9, beta2=0.999,
        eps=1e-8):

        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.trainable = mask.trainable_names()
        self.m = OrderedDict((n, np.zeros_like(params[n]))
            for n in self.trainable)
        self.v = OrderedDict((n, np.zeros_like(params[n]))
            for n in self.trainable)

    def step(self, grads, lr=None):
        """Apply one update.

        Args:
            grads: Dict name -> gradient; only trainable names allowed.
            lr: Learning rate for this step (default self.lr).
        """
        lr = self.lr if lr is None else lr
        for name in grads:
            if name not in self.m:
                raise ConfigError("gradient given for frozen array %s" % name)
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for (name, g) in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0-self.beta1)*g
            v *= self.beta2
            v += (1.0-self.beta2)*g*g
            self.params.arrays[name] -= lr*(m/c1) / (np.sqrt(v/c2) + self.eps)


class CosineSchedule(object):
    """Per-epoch cosine annealing from alpha to alpha*final_ratio.

    Constructor args:
        alpha: Initial learning rate.
        n_epochs: Epoch budget.
        final_ratio: Ratio of the last epoch's rate to alpha.
    """

    def __init__(self, alpha, n_epochs, final_ratio=0.01):
        if not alpha > 0 or n_epochs < 1:
            raise ConfigError("learning rate and epoch budget must be "
                "positive")
        self.alpha = alpha
        self.n_epochs = n_epochs
        self.final_ratio = final_ratio

    def lr(self, epoch):
        """Learning rate of a 1-based epoch."""
        if self.n_epochs == 1:
            return self.alpha
        frac = (epoch-1) / float(self.n_epochs-1)
        low = self.alpha*self.final_ratio
        return low + 0.5*(self.alpha-low)*(1.0 + np.cos(np.pi*frac))


class EarlyStopping(object):
    """Stop when the validation loss has not improved for patience epochs.

    An epoch improves if its loss is below the best by more than min_delta.
    """

    def __init__(self, patience=3, min_delta=1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, loss, epoch):
        """Record an epoch's loss.

        Returns:
            Tuple (improved, stop).
        """
        if loss < self.best - self.min_delta:
            self.best = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return (True, False)
        self.bad_epochs += 1
        return (False, self.bad_epochs >= self.patience)


def global_norm(grads):
    return float(np.sqrt(sum(float((g*g).sum()) for g in grads.values())))


def clip_global_norm(grads, max_norm=1.0):
    """Rescale gradients so that their joint L2 norm is at most max_norm.

    Returns:
        Tuple (grads, norm, clipped).
    """
    norm = global_norm(grads)
    if norm <= max_norm or not np.isfinite(norm):
        return (grads, norm, False)
    scale = max_norm/norm
    return (OrderedDict((k, g*scale) for (k,g) in grads.items()), norm, True)
