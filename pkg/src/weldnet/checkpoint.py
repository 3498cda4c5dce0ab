"""Binary checkpoint container shared by every trained component.

Layout::

    b"WELDNET1" | uint64 LE header length | UTF-8 JSON header | float64 LE payload

The header lists the payload arrays (name and shape) in storage order.  For an
MLP the order is layer by layer: ``W1, b1, W2, b2, ...``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import MlpNet, MlpSpec, ResidualNet

MAGIC = b"WELDNET1"


class CheckpointError(ValueError):
    pass


def write_container(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    header = dict(header)
    header["arrays"] = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    if len(raw) < 16:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n].decode("utf-8"))
    offset = 16 + n
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated payload at {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def _mlp_arrays(net: MlpNet):
    out = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        out.append((f"W{l + 1}", w))
        out.append((f"b{l + 1}", b))
    return out


def save_net(path, net, **meta) -> None:
    """Save an ``MlpNet`` or ``ResidualNet``; ``meta`` carries role, window, seed, stage."""
    residual = isinstance(net, ResidualNet)
    mlp = net.inner if residual else net
    header = {"kind": meta.pop("kind", "residual" if residual else "mlp"),
              "spec": mlp.spec.to_dict(), "residual": residual, **meta}
    write_container(path, header, _mlp_arrays(mlp))


def load_net(path):
    header, arrays = read_container(path)
    if "spec" not in header:
        raise CheckpointError(f"{path}: not a network checkpoint (kind={header.get('kind')})")
    spec = MlpSpec.from_dict(header["spec"])
    n = len(spec.dims) - 1
    net = MlpNet(spec, [arrays[f"W{l + 1}"] for l in range(n)], [arrays[f"b{l + 1}"] for l in range(n)])
    return (ResidualNet(net) if header.get("residual") else net), header
