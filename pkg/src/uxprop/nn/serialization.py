"""Self-describing binary model files.

Layout::

    UXPROP-MODEL\\n
    <version>\\n
    <one-line JSON architecture descriptor>\\n
    <little-endian float64 parameters, layer by layer in declaration order>

The descriptor lists every layer with its shape fields and ``param_count``;
the loader checks these against the payload before building anything.
"""

import json

import numpy as np

from .layers import PARAMETER_FREE, Conv2D, Dense
from .model import Model

MAGIC = b"UXPROP-MODEL\n"
VERSION = 1


class ModelFormatError(ValueError):
    """Raised for malformed model files; the message names the offending field."""


def _param_shapes(desc):
    kind = desc["kind"]
    if kind == "Dense":
        return [(desc["out"], desc["in"]), (desc["out"],)]
    if kind == "Conv2D":
        shapes = [(desc["out_ch"], desc["in_ch"], desc["kh"], desc["kw"])]
        if desc["bias"]:
            shapes.append((desc["out_ch"],))
        return shapes
    if kind in PARAMETER_FREE:
        return []
    raise ModelFormatError(f"layers: unknown layer kind {kind!r}")


def save_model(model, path):
    layers = []
    for layer in model.layers:
        desc = layer.describe()
        desc["param_count"] = int(sum(p.size for p in layer.params()))
        layers.append(desc)
    header = {
        "task": model.task,
        "input_shape": list(model.input_shape),
        "activation_mode": model.activation_mode,
        "layers": layers,
        "param_count": int(sum(d["param_count"] for d in layers)),
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{VERSION}\n".encode())
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for layer in model.layers:
            for p in layer.params():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _field(d, key, where):
    if key not in d:
        raise ModelFormatError(f"{where}: missing field {key!r}")
    return d[key]


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise ModelFormatError("magic: file does not start with 'UXPROP-MODEL'")
    rest = blob[len(MAGIC):]
    line, sep, rest = rest.partition(b"\n")
    if not sep:
        raise ModelFormatError("version: truncated before version line ended")
    try:
        version = int(line)
    except ValueError:
        raise ModelFormatError(f"version: not an integer: {line[:20]!r}") from None
    if version != VERSION:
        raise ModelFormatError(f"version: unsupported version {version}")
    line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise ModelFormatError("descriptor: truncated before descriptor line ended")
    try:
        header = json.loads(line)
    except ValueError as exc:
        raise ModelFormatError(f"descriptor: invalid JSON ({exc})") from None

    layer_descs = _field(header, "layers", "descriptor")
    declared_total = _field(header, "param_count", "descriptor")
    offset = 0
    layers = []
    for i, desc in enumerate(layer_descs):
        where = f"layers[{i}]"
        kind = _field(desc, "kind", where)
        try:
            shapes = _param_shapes(desc)
        except KeyError as exc:
            raise ModelFormatError(f"{where}: missing field {exc.args[0]!r}") from None
        count = int(sum(np.prod(s) for s in shapes))
        if _field(desc, "param_count", where) != count:
            raise ModelFormatError(
                f"{where}.param_count: declares {desc['param_count']} but shape implies {count}"
            )
        arrays = []
        for shape in shapes:
            n = int(np.prod(shape))
            chunk = payload[offset * 8:(offset + n) * 8]
            if len(chunk) != n * 8:
                raise ModelFormatError(f"{where}: payload truncated ({kind} parameters)")
            arrays.append(np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape))
            offset += n
        if kind == "Dense":
            layers.append(Dense(*arrays))
        elif kind == "Conv2D":
            layers.append(Conv2D(arrays[0], arrays[1] if len(arrays) > 1 else None))
        else:
            layers.append(PARAMETER_FREE[kind]())
    if declared_total != offset:
        raise ModelFormatError(
            f"param_count: declares {declared_total} weights but layers hold {offset}"
        )
    if len(payload) != offset * 8:
        raise ModelFormatError(
            f"payload: {len(payload)} bytes, expected {offset * 8} for {offset} weights"
        )
    try:
        return Model(
            layers,
            _field(header, "task", "descriptor"),
            tuple(_field(header, "input_shape", "descriptor")),
            header.get("activation_mode", "relu"),
        )
    except ValueError as exc:
        raise ModelFormatError(f"architecture: {exc}") from None
