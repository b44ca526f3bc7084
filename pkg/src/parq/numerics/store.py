"""Flat named parameter registry and the on-disk checkpoint container.

Checkpoint layout (one file): a text header, then raw array bytes.

    parq-checkpoint 1
    config <key> = <json value>        (zero or more)
    array <name> dtype=<str> shape=<d0,d1,...> offset=<bytes>
    data <total bytes>
    <raw little-endian C-order array data>

Offsets are relative to the start of the data section. Round trips are
bit-exact: arrays are written as little-endian C-order buffers and read
back with np.frombuffer.
"""

import json

import numpy as np

from ..errors import DataFormatError
from .tensor import Tensor

CHECKPOINT_MAGIC = "parq-checkpoint"
CHECKPOINT_VERSION = 1


class ParameterStore:
    """name -> Tensor map with deterministic (sorted) iteration order."""

    def __init__(self):
        self._params = {}

    def add(self, name, tensor):
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        if not isinstance(tensor, Tensor):
            raise TypeError("ParameterStore holds Tensors")
        self._params[name] = tensor

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(name, self._params[name]) for name in self.names()]

    def tensors(self):
        return [self._params[name] for name in self.names()]

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def num_elements(self):
        return sum(t.data.size for t in self._params.values())

    def arrays(self):
        return {name: t.data for name, t in self.items()}

    def load_arrays(self, arrays, strict=True):
        """Copy values in by name; shapes must match exactly."""
        for name, t in self.items():
            if name not in arrays:
                if strict:
                    raise DataFormatError(f"checkpoint missing parameter {name}")
                continue
            value = arrays[name]
            if tuple(value.shape) != t.data.shape:
                raise DataFormatError(
                    f"parameter {name}: checkpoint shape {tuple(value.shape)} != model shape {t.data.shape}"
                )
            t.data = np.array(value, dtype=np.float64)


def save_checkpoint(path, arrays, config=None):
    """Write named arrays plus flat config key/values to one container file."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    for key in sorted(config or {}):
        lines.append(f"config {key} = {json.dumps((config or {})[key])}")
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()  # C-order bytes regardless of the source layout
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"array {name} dtype={le.dtype.str} shape={shape} offset={offset}")
        blobs.append(raw)
        offset += len(raw)
    lines.append(f"data {offset}")
    header = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path):
    """Read a container back as (arrays, config). Raises DataFormatError."""
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        first_nl = payload.index(b"\n")
    except ValueError:
        raise DataFormatError(f"{path}: not a checkpoint (no header)") from None
    magic = payload[:first_nl].decode("utf-8", errors="replace").split()
    if len(magic) != 2 or magic[0] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic line")
    if int(magic[1]) != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {magic[1]}")

    config = {}
    entries = []
    pos = first_nl + 1
    data_start = None
    data_len = None
    while True:
        nl = payload.index(b"\n", pos)
        line = payload[pos:nl].decode("utf-8")
        pos = nl + 1
        if line.startswith("config "):
            key, _, value = line[len("config "):].partition(" = ")
            config[key.strip()] = json.loads(value)
        elif line.startswith("array "):
            fields = line.split()
            name = fields[1]
            props = dict(field.split("=", 1) for field in fields[2:])
            shape = tuple(int(d) for d in props["shape"].split(",") if d != "")
            entries.append((name, props["dtype"], shape, int(props["offset"])))
        elif line.startswith("data "):
            data_len = int(line.split()[1])
            data_start = pos
            break
        else:
            raise DataFormatError(f"{path}: unexpected header line: {line!r}")
    if data_start is None or len(payload) - data_start != data_len:
        raise DataFormatError(f"{path}: data section truncated")

    arrays = {}
    for name, dtype_str, shape, offset in entries:
        dtype = np.dtype(dtype_str)
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * dtype.itemsize
        if end > data_len:
            raise DataFormatError(f"{path}: array {name} overruns data section")
        buf = payload[data_start + offset : data_start + end]
        arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
    return arrays, config
