"""
Parameter container format.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
then the raw little-endian buffers. The header lists every tensor as
``{name, shape, dtype, offset, nbytes}`` (offset relative to the data section)
plus a free-form ``metadata`` object (configs, provenance flags).
"""
import json
import logging
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b'ARRCKPT1'
_HEADER_LEN = np.dtype('<u8')


def save_container(path, arrays, metadata=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    buffers = []
    offset = 0
    for name, array in arrays.items():
        array = np.asarray(array)
        little = array.astype(array.dtype.newbyteorder('<'), copy=False)
        raw = np.ascontiguousarray(little).tobytes()
        entries.append({
            'name': name,
            'shape': list(array.shape),
            'dtype': little.dtype.str,
            'offset': offset,
            'nbytes': len(raw),
        })
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps({'metadata': metadata or {}, 'tensors': entries}, sort_keys=True).encode('utf-8')
    with open(path, 'wb') as fh:
        fh.write(MAGIC)
        fh.write(np.array([len(header)], dtype=_HEADER_LEN).tobytes())
        fh.write(header)
        for raw in buffers:
            fh.write(raw)
    logger.debug(f"Wrote {len(entries)} tensors to {path}")
    return path


def read_header(path):
    with open(path, 'rb') as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path} is not a parameter container (bad magic)")
        length = int(np.frombuffer(fh.read(8), dtype=_HEADER_LEN)[0])
        try:
            header = json.loads(fh.read(length).decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path} has a corrupt header") from exc
    return header, len(MAGIC) + 8 + length


def read_metadata(path):
    return read_header(path)[0]['metadata']


def load_container(path, expected_shapes=None):
    """
    Return ``(arrays, metadata)``. When ``expected_shapes`` (name -> shape) is
    given, every missing tensor or shape mismatch is reported together.
    """
    header, data_start = read_header(path)
    raw = Path(path).read_bytes()[data_start:]
    arrays = {}
    for entry in header['tensors']:
        start = entry['offset']
        chunk = raw[start:start + entry['nbytes']]
        if len(chunk) != entry['nbytes']:
            raise CheckpointError(f"{path} is truncated at tensor '{entry['name']}'")
        array = np.frombuffer(chunk, dtype=np.dtype(entry['dtype'])).reshape(entry['shape'])
        arrays[entry['name']] = array.astype(array.dtype.newbyteorder('='))
    if expected_shapes is not None:
        mismatches = []
        for name, shape in expected_shapes.items():
            if name not in arrays:
                mismatches.append(f"missing key '{name}'")
            elif tuple(arrays[name].shape) != tuple(shape):
                mismatches.append(f"'{name}': expected {tuple(shape)}, got {tuple(arrays[name].shape)}")
        if mismatches:
            raise CheckpointError(f"{path} does not match the model config", mismatches)
    return arrays, header['metadata']


def save_checkpoint(path, module, metadata=None):
    return save_container(path, module.state_dict(), metadata)


def load_checkpoint(path, module, strict=True, prefix=None):
    """
    Load parameters into ``module``. With ``prefix`` only keys under that
    prefix are read (and stripped), e.g. ``'decoder.'``.
    """
    arrays, metadata = load_container(path)
    if prefix is not None:
        arrays = {name[len(prefix):]: a for name, a in arrays.items() if name.startswith(prefix)}
    module.load_state_dict(arrays, strict=strict)
    return metadata
