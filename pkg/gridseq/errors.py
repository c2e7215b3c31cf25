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

# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2
EXIT_CORRUPT = 3


class GridSeqError(Exception):
    """Base class for all errors raised by gridseq."""
    exit_code = EXIT_CONFIG


class ShapeError(GridSeqError, ValueError):
    """Array dimensions do not agree."""


class ConfigError(GridSeqError, ValueError):
    """Invalid configuration, geometry or system description."""


class UndefinedRatioError(GridSeqError, ValueError):
    """A ratio was requested over fewer than two items."""


class EvaluationError(GridSeqError, ArithmeticError):
    """An objective evaluated to a non-finite value."""
    exit_code = EXIT_DIVERGENCE


class InfeasibleDispatchError(GridSeqError, ArithmeticError):
    """The equilibrium Newton iteration did not converge.

    Constructor args:
        message: Error message.
        residual: The max-norm mismatch at the last iterate.
    """
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message, residual=float("nan")):
        super(InfeasibleDispatchError, self).__init__(message)
        self.residual = residual


class IntegrationBlowupError(GridSeqError, ArithmeticError):
    """The integrated state became non-finite.

    Constructor args:
        message: Error message.
        time: Simulation time [s] at which the failure was detected.
    """
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message, time=float("nan")):
        super(IntegrationBlowupError, self).__init__(message)
        self.time = time


class DivergenceError(GridSeqError, ArithmeticError):
    """A training loss became non-finite.

    Constructor args:
        message: Error message.
        stage: Training stage name ("pretrain", "teaf" or "schs").
        epoch: Epoch index (1-based).
        step: Optimizer step or trajectory index within the epoch.
    """
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message, stage=None, epoch=None, step=None):
        super(DivergenceError, self).__init__(message)
        self.stage = stage
        self.epoch = epoch
        self.step = step


class RolloutError(GridSeqError, ArithmeticError):
    """Every channel of an iterative prediction diverged.

    Constructor args:
        message: Error message.
        last_valid_step: Index of the last step with at least one finite
            channel (-1 if the first step already failed).
    """
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message, last_valid_step=-1):
        super(RolloutError, self).__init__(message)
        self.last_valid_step = last_valid_step


class CorruptFileError(GridSeqError, IOError):
    """A dataset or checkpoint file is truncated or inconsistent.

    Constructor args:
        message: Error message.
        array_name: Name of the first offending array, if any.
    """
    exit_code = EXIT_CORRUPT

    def __init__(self, message, array_name=None):
        super(CorruptFileError, self).__init__(message)
        self.array_name = array_name
