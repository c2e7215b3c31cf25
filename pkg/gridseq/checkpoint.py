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
import json
import logging
import struct

import numpy as np

from .errors import ConfigError, CorruptFileError
from .model import FreezeMask, ModelConfig, ModelParameters, parameter_shapes


logger = logging.getLogger(__name__)

CKPT_MAGIC = b"TSACKPT1"

_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")


def save_checkpoint(params, mask, path, meta=None):
    """Write parameters, freeze flags and config to a TSACKPT1 file.

    Layout (little-endian): magic, u32 array count, then per array u16
    name length, UTF-8 name, u8 trainable flag, u8 rank, rank u32 dims and
    the f64 payload; finally a u32-prefixed JSON blob holding the model
    config and free-form metadata.
    """
    names = params.names()
    with open(path, 'wb') as f:
        f.write(CKPT_MAGIC)
        f.write(_U32.pack(len(names)))
        for name in names:
            arr = params[name]
            raw = name.encode("utf-8")
            f.write(_U16.pack(len(raw)))
            f.write(raw)
            f.write(_U8.pack(1 if mask[name] else 0))
            f.write(_U8.pack(arr.ndim))
            for dim in arr.shape:
                f.write(_U32.pack(dim))
            f.write(np.ascontiguousarray(arr, dtype='<f8').tobytes())
        blob = json.dumps({"model": params.config.to_dict(),
            "meta": meta or {}}, sort_keys=True).encode("utf-8")
        f.write(_U32.pack(len(blob)))
        f.write(blob)
    logger.debug("saved %d arrays to %s", len(names), path)


def read_arrays(path):
    """Raw contents of a TSACKPT1 file.

    Returns:
        Tuple (arrays, flags, blob) with arrays and flags ordered dicts
        keyed by name and blob the decoded JSON trailer.

    Raises:
        CorruptFileError: On a bad magic or truncated content.
    """
    with open(path, 'rb') as f:
        buf = f.read()
    pos = [0]

    def take(n, what):
        if pos[0] + n > len(buf):
            raise CorruptFileError("%s: truncated while reading %s" % (path,
                what), array_name=what)
        chunk = buf[pos[0]:pos[0]+n]
        pos[0] += n
        return chunk

    if take(len(CKPT_MAGIC), "magic") != CKPT_MAGIC:
        raise CorruptFileError("%s: not a checkpoint file" % path,
            array_name="magic")
    (count,) = _U32.unpack(take(4, "array count"))
    arrays = OrderedDict()
    flags = OrderedDict()
    for i in range(count):
        (n,) = _U16.unpack(take(2, "name of array %d" % i))
        try:
            name = take(n, "name of array %d" % i).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptFileError("%s: array %d has an invalid name" % (
                path, i), array_name="array %d" % i)
        (trainable,) = _U8.unpack(take(1, name))
        (rank,) = _U8.unpack(take(1, name))
        shape = tuple(_U32.unpack(take(4, name))[0] for k in range(rank))
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(take(8*size, name), dtype='<f8').reshape(
            shape).astype(np.float64)
        flags[name] = bool(trainable)
    (n,) = _U32.unpack(take(4, "config"))
    try:
        blob = json.loads(take(n, "config").decode("utf-8"))
    except ValueError:
        raise CorruptFileError("%s: config blob is not valid JSON" % path,
            array_name="config")
    if pos[0] != len(buf):
        raise CorruptFileError("%s: %d trailing bytes" % (path,
            len(buf)-pos[0]))
    return (arrays, flags, blob)


def load_checkpoint(path, with_meta=False):
    """Load a TSACKPT1 checkpoint.

    Files written elsewhere load the same way as long as names and shapes
    agree with the config in their trailer.

    Returns:
        Tuple (params, mask, config), plus the metadata dict if with_meta.

    Raises:
        CorruptFileError: On a bad file, naming the first array whose
            name or shape does not match the config.
    """
    (arrays, flags, blob) = read_arrays(path)
    try:
        config = ModelConfig.from_dict(blob["model"])
    except (KeyError, TypeError, ConfigError) as e:
        raise CorruptFileError("%s: bad model config (%s)" % (path, e),
            array_name="config")
    expected = parameter_shapes(config)
    for (name, shape) in expected.items():
        if name not in arrays:
            raise CorruptFileError("%s: array %s is missing" % (path, name),
                array_name=name)
        if arrays[name].shape != shape:
            raise CorruptFileError("%s: array %s has shape %s, expected %s"
                % (path, name, arrays[name].shape, shape), array_name=name)
    for name in arrays:
        if name not in expected:
            raise CorruptFileError("%s: unexpected array %s" % (path, name),
                array_name=name)
    params = ModelParameters(config, arrays)
    mask = FreezeMask(OrderedDict((n, flags[n]) for n in expected))
    if with_meta:
        return (params, mask, config, blob.get("meta", {}))
    return (params, mask, config)
