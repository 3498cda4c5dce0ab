"""Trajectory datasets: the six initial-condition families and the WTRJ file format.

File layout::

    b"WTRJ" b"0001" | uint64 LE header length | UTF-8 JSON header | float32 LE values [n][t][d]
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pdes import (GrfSpec, SpatialGrid, TimeGrid, grf_coefficients, hat, soliton, solve_burgers,
                   solve_kdv, transport_solution)

log = logging.getLogger(__name__)

MAGIC = b"WTRJ"
VERSION = b"0001"

FAMILIES = ("tscale", "tshift", "bscale", "bshift", "kscale", "kshift")

PARAM_RANGES = {
    "tscale": (1.0, 4.0),
    "tshift": (0.0, 3.0),
    "bscale": (-0.9, 0.9),
    "bshift": (0.0, 1.0),
    "kscale": (6.0, 18.0),
    "kshift": (0.0, 0.4),
}

BURGERS_NU = 1e-3
HAT_WIDTH = 0.05


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


def default_grids(family: str, n_steps: int = 301, n_points: int = 512) -> tuple[TimeGrid, SpatialGrid]:
    if family in ("tscale", "tshift"):
        return TimeGrid(0.3, n_steps), SpatialGrid(n_points, 0.0, 1.0, periodic=False)
    if family in ("bscale", "bshift"):
        return TimeGrid(1.0, n_steps), SpatialGrid(n_points, 0.0, 1.0, periodic=True)
    if family in ("kscale", "kshift"):
        return TimeGrid(0.01, n_steps), SpatialGrid(n_points, 0.0, 6.0, periodic=True)
    raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


@dataclass
class TrajectoryDataset:
    values: np.ndarray            # float32 [N, T, D]
    params: np.ndarray            # float64 [N]
    time: TimeGrid
    space: SpatialGrid
    family_tag: str
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.params = np.asarray(self.params, dtype=np.float64)
        n, t, d = self.values.shape
        if t != self.time.n_steps or d != self.space.n_points or len(self.params) != n:
            raise ValueError(f"inconsistent dataset: values {self.values.shape}, "
                             f"T={self.time.n_steps}, D={self.space.n_points}, params {len(self.params)}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def subset(self, idx) -> "TrajectoryDataset":
        idx = np.asarray(idx)
        return TrajectoryDataset(self.values[idx], self.params[idx], self.time, self.space,
                                 self.family_tag, dict(self.seeds))

    def header(self) -> dict:
        n, t, d = self.values.shape
        return {"family": self.family_tag, "N": n, "T": t, "D": d,
                "time": self.time.to_dict(), "space": self.space.to_dict(),
                "seeds": self.seeds, "params": [float(p) for p in self.params]}


def initial_condition_fn(family: str, p: float, bases=None):
    """Return g(x) for one family member (transport families are evaluated analytically)."""
    H = lambda x: hat(HAT_WIDTH, x)
    if family == "tscale":
        return lambda x: p * H(x - 0.1) + H(x - 0.2)
    if family == "tshift":
        return lambda x: H(x - 0.1) + 2.5 * H(x - (0.2 + 0.1 * p))
    if family == "bscale":
        w0, w1 = bases
        return lambda x: p * w0(x) + math.sqrt(1.0 - p * p) * w1(x)
    if family == "bshift":
        w0, w1 = bases
        return lambda x: 0.5 * w0(x, shift=p) + math.sqrt(0.75) * w1(x, shift=p)
    if family == "kscale":
        return lambda x: soliton(p * p, x - 1.0) + soliton(36.0, x - 2.0)
    if family == "kshift":
        return lambda x: soliton(36.0, x - 1.0) + soliton(36.0, x - 2.0 - p)
    raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def trajectory(family: str, p: float, time: TimeGrid, grid: SpatialGrid, bases=None,
               substeps: int = 8) -> np.ndarray:
    g = initial_condition_fn(family, p, bases)
    if family in ("tscale", "tshift"):
        return np.stack([transport_solution(g, t, grid) for t in time.times])
    u0 = g(grid.points)
    if family in ("bscale", "bshift"):
        return solve_burgers(u0, BURGERS_NU, time, grid, substeps)
    return solve_kdv(u0, time, grid, substeps)


def grf_bases(grid: SpatialGrid, seed: int):
    """The two dataset-level random base waves w_0, w_1."""
    children = np.random.SeedSequence([seed, 1]).spawn(2)
    spec = GrfSpec(grid=grid)
    return tuple(grf_coefficients(spec, c) for c in children)


def gen_dataset(family: str, n_samples: int = 500, time: TimeGrid | None = None,
                grid: SpatialGrid | None = None, seed: int = 0, substeps: int = 8) -> TrajectoryDataset:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    t_def, g_def = default_grids(family)
    time = time or t_def
    grid = grid or g_def
    lo, hi = PARAM_RANGES[family]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    params = rng.uniform(lo, hi, size=n_samples)
    bases = grf_bases(grid, seed) if family in ("bscale", "bshift") else None
    values = np.empty((n_samples, time.n_steps, grid.n_points), dtype=np.float32)
    for n, p in enumerate(params):
        values[n] = trajectory(family, float(p), time, grid, bases, substeps)
        if (n + 1) % 50 == 0:
            log.info("%s: %d/%d trajectories", family, n + 1, n_samples)
    return TrajectoryDataset(values, params, time, grid, family, {"dataset": seed})


def train_test_split(n: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split trajectory indices (sorted within each part)."""
    perm = np.random.default_rng(np.random.SeedSequence([seed, 2])).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def dataset_write(ds: TrajectoryDataset, path) -> None:
    blob = json.dumps(ds.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + VERSION)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.values, dtype="<f4").tobytes())


def read_header(raw: bytes, path="<bytes>") -> tuple[dict, int]:
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if raw[4:8] != VERSION:
        raise VersionMismatchError(f"{path}: format version {raw[4:8]!r}, expected {VERSION!r}")
    if len(raw) < 16:
        raise TruncatedFileError(f"{path}: truncated before header length")
    (n,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + n:
        raise TruncatedFileError(f"{path}: truncated header")
    return json.loads(raw[16:16 + n].decode("utf-8")), 16 + n


def dataset_read(path) -> TrajectoryDataset:
    raw = Path(path).read_bytes()
    h, offset = read_header(raw, path)
    shape = (h["N"], h["T"], h["D"])
    expected = 4 * shape[0] * shape[1] * shape[2]
    if len(raw) - offset != expected:
        raise TruncatedFileError(f"{path}: payload has {len(raw) - offset} bytes, expected {expected}")
    values = np.frombuffer(raw[offset:], dtype="<f4").reshape(shape).astype(np.float32)
    return TrajectoryDataset(values, np.array(h["params"], dtype=np.float64), TimeGrid(**h["time"]),
                             SpatialGrid(**h["space"]), h["family"], h.get("seeds", {}))
