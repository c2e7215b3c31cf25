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

import csv
import logging
import struct

import numpy as np

from .errors import ConfigError, CorruptFileError
from .simulator import LABEL_NAMES, Trajectory


logger = logging.getLogger(__name__)

TRAJ_MAGIC = b"TSATRAJ1"

# high bit of the label byte marks forecaster output
PREDICTED_FLAG = 0x80
LABEL_MASK = 0x7f

_COUNT = struct.Struct("<I")
_TRAJ_HEADER = struct.Struct("<IIdB")


class _Reader(object):
    """Sequential reader over a byte buffer that reports truncation."""

    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CorruptFileError("%s: truncated while reading %s" % (
                self.path, what), array_name=what)
        chunk = self.buf[self.pos:self.pos+n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return fmt.unpack(self.take(fmt.size, what))


def split_label(byte):
    """Stability label and provenance of a stored label byte."""
    return (byte & LABEL_MASK, bool(byte & PREDICTED_FLAG))


def write_trajectories(trajs, path):
    """Write trajectories to a TSATRAJ1 file.

    Layout (little-endian): magic, u32 count, then per trajectory u32 n_x,
    u32 T, f64 dt, u8 label, n_g out-of-step bytes and the n_x*T samples
    channel-major. Forecaster output sets PREDICTED_FLAG in the label
    byte; readers recover the label with LABEL_MASK (see split_label).
    """
    with open(path, 'wb') as f:
        f.write(TRAJ_MAGIC)
        f.write(_COUNT.pack(len(trajs)))
        for traj in trajs:
            label = traj.label | (PREDICTED_FLAG if traj.predicted else 0)
            f.write(_TRAJ_HEADER.pack(traj.n_x, traj.T, traj.dt, label))
            f.write(traj.oos.astype(np.uint8).tobytes())
            f.write(np.ascontiguousarray(traj.data, dtype='<f8').tobytes())
    logger.debug("wrote %d trajectories to %s", len(trajs), path)


def read_trajectories(path, inertia=None):
    """Read a TSATRAJ1 file.

    Trajectory identifiers are their positions in the file. The file does
    not store inertia constants; pass the system's H as inertia so that
    relabelling uses the inertia-weighted centre of inertia.

    Raises:
        ConfigError: If inertia does not match a record's machine count.
        CorruptFileError: On a bad magic, a truncated file, trailing bytes
            or non-finite simulated samples.
    """
    with open(path, 'rb') as f:
        buf = f.read()
    r = _Reader(buf, path)
    if r.take(len(TRAJ_MAGIC), "magic") != TRAJ_MAGIC:
        raise CorruptFileError("%s: not a trajectory file" % path,
            array_name="magic")
    (count,) = r.unpack(_COUNT, "count")
    trajs = []
    for i in range(count):
        what = "trajectory %d" % i
        (n_x, T, dt, label) = r.unpack(_TRAJ_HEADER, what)
        if n_x % 2:
            raise CorruptFileError("%s: %s has odd channel count %d" % (
                path, what, n_x), array_name=what)
        if inertia is not None and len(inertia) != n_x//2:
            raise ConfigError("%s: %s has %d machines but %d inertia "
                "constants were given" % (path, what, n_x//2, len(inertia)))
        oos = np.frombuffer(r.take(n_x//2, what+" oos"), dtype=np.uint8)
        data = np.frombuffer(r.take(8*n_x*T, what+" samples"),
            dtype='<f8').reshape(n_x, T).astype(np.float64)
        (label, predicted) = split_label(label)
        if not predicted and not np.isfinite(data).all():
            raise CorruptFileError("%s: %s has non-finite samples" % (path,
                what), array_name=what+" samples")
        trajs.append(Trajectory(data, dt, label=label,
            oos=oos.astype(bool), ident=i, inertia=inertia,
            predicted=predicted))
    if r.pos != len(buf):
        raise CorruptFileError("%s: %d trailing bytes" % (path,
            len(buf)-r.pos))
    return trajs


def channel_names(n_g):
    """Column names of the n_x = 2*n_g channels."""
    return (["delta_%d" % (i+1) for i in range(n_g)] +
        ["omega_%d" % (i+1) for i in range(n_g)])


def export_csv(trajs, path):
    """Write trajectories as a flat CSV table, one row per time sample.

    Rows repeat the trajectory's label, provenance and per-machine
    out-of-step flags so that the table mirrors the binary records.
    """
    with open(path, 'w', newline='') as f:
        writer = None
        for traj in trajs:
            names = channel_names(traj.n_g)
            if writer is None:
                writer = csv.writer(f)
                writer.writerow(["trajectory", "label", "predicted"] +
                    ["oos_%d" % (i+1) for i in range(traj.n_g)] + ["t"] +
                    names)
            label = LABEL_NAMES.get(traj.label, str(traj.label))
            oos = [int(flag) for flag in traj.oos]
            for k in range(traj.T):
                row = ([traj.ident, label, int(traj.predicted)] + oos +
                    [repr(k*traj.dt)])
                writer.writerow(row + [repr(float(v)) for v in traj.data[:,k]])
