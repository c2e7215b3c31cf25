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
import multiprocessing as mp
import os

from .errors import ConfigError


logger = logging.getLogger(__name__)

THREADS_ENV = "GRIDSEQ_THREADS"


def worker_count():
    """Size of the worker pool, from the GRIDSEQ_THREADS variable.

    Defaults to 1 (serial execution in the calling process).
    """
    value = os.environ.get(THREADS_ENV, "1").strip()
    try:
        n = int(value)
    except ValueError:
        raise ConfigError("%s must be an integer, got %r" % (THREADS_ENV,
            value))
    if n < 1:
        raise ConfigError("%s must be at least 1, got %d" % (THREADS_ENV, n))
    return n


def map_ordered(func, items, n_workers=None):
    """Apply func to every item, returning results in input order.

    Args:
        func: A picklable (module-level) callable.
        items: Sequence of arguments; each is passed as the single argument
            of func.
        n_workers: Pool size (default worker_count()).

    Returns:
        List of func(item) in the order of items.
    """
    items = list(items)
    n_workers = worker_count() if n_workers is None else n_workers
    n_workers = min(n_workers, len(items))
    if n_workers <= 1:
        return [func(item) for item in items]
    logger.debug("mapping %d items over %d processes", len(items),
        n_workers)
    with mp.Pool(n_workers) as pool:
        return pool.map(func, items)
