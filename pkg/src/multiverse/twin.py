"""Twin definitions, lookup-table generation, the build-cost model and table files.

A twin is one emulation of a scenario: a world model, a transmit codebook,
a reflection depth and a receiver grid.  Its lookup table holds the SNR of
every codebook beam at every grid point, plus the cost of producing it.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .antenna import AntennaPattern, Codebook
from .errors import (ConfigError, CorruptTableError, CostOverflowError,
                     SchemaVersionMismatchError)
from .raytracer import PropagationConfig, Tracer, _fibonacci_directions, power_to_dbm
from .world import RxGrid, WorldModel, make_rx_grid

TABLE_MAGIC = b"MVLT"
TABLE_SCHEMA_VERSION = 1
WORKERS_ENV = "MULTIVERSE_WORKERS"


@dataclass(frozen=True)
class MapCostModel:
    """Abstract cost of building a twin's map: a fixed part plus a per-face part.

    The ground plane is free, so an open area is cheaper than a canyon of
    the same extent.
    """

    base: float = 100.0
    per_face: float = 50.0

    def __call__(self, world: WorldModel) -> float:
        n = sum(1 for f in world.faces if f.kind != "ground")
        return self.base + self.per_face * n


@dataclass(frozen=True)
class TwinConfig:
    twin_id: str
    scenario_id: str
    world: WorldModel
    codebook: Codebook
    rho: int
    prop: PropagationConfig
    rx_grid: RxGrid
    rx_pattern: Optional[AntennaPattern] = None
    map_cost: Optional[float] = None  # None: use map_model
    map_model: MapCostModel = MapCostModel()
    surfaces: Optional[int] = None  # w; None: visibility sweep
    unit_cost: float = 1.0
    seconds_per_unit: float = 1e-6

    def __post_init__(self):
        if self.rho < 0:
            raise ConfigError(f"twin {self.twin_id}: rho must be >= 0")
        if self.rho > self.prop.max_reflections:
            raise ConfigError(f"twin {self.twin_id}: rho={self.rho} exceeds "
                              f"max_reflections={self.prop.max_reflections}")
        if len(self.codebook) == 0:
            raise ConfigError(f"twin {self.twin_id}: empty codebook")
        if self.unit_cost < 0 or self.seconds_per_unit < 0:
            raise ConfigError(f"twin {self.twin_id}: negative cost calibration")

    @property
    def n_beams(self) -> int:
        return len(self.codebook)

    @property
    def trace_config(self) -> PropagationConfig:
        """Propagation settings actually used for this twin's reflection depth."""
        return dataclasses.replace(self.prop, max_reflections=self.rho)


@dataclass(frozen=True)
class CostBreakdown:
    map_cost: float
    lookup_cost: float
    total: float
    wall_clock_estimate: float = 0.0

    def __post_init__(self):
        if self.total != self.map_cost + self.lookup_cost:
            raise ValueError("total must equal map_cost + lookup_cost")


@dataclass(frozen=True)
class LookupEntry:
    rx_index: int
    snr_db: np.ndarray
    n_rays: np.ndarray


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Per-twin map from receiver grid index to per-beam SNR (dB, float32).

    ``snr_db`` and ``n_rays`` are ``(n, B)`` arrays; ``-inf`` marks a beam
    with no received ray.
    """

    twin_id: str
    scenario_id: str
    snr_db: np.ndarray
    n_rays: np.ndarray
    grid: RxGrid
    comp_cost: CostBreakdown
    has_rays: bool = True

    def __post_init__(self):
        snr = np.ascontiguousarray(self.snr_db, dtype=np.float32)
        rays = np.ascontiguousarray(self.n_rays, dtype=np.uint32)
        if snr.ndim != 2 or rays.shape != snr.shape:
            raise ValueError("snr_db and n_rays must be matching (n, B) arrays")
        if snr.shape[0] != len(self.grid):
            raise ValueError("one row per grid point required")
        snr.setflags(write=False)
        rays.setflags(write=False)
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "n_rays", rays)

    @property
    def n_points(self) -> int:
        return self.snr_db.shape[0]

    @property
    def n_beams(self) -> int:
        return self.snr_db.shape[1]

    @property
    def entries(self) -> list:
        return [self.entry(j) for j in range(self.n_points)]

    def entry(self, j: int) -> LookupEntry:
        return LookupEntry(j, self.snr_db[j], self.n_rays[j])

    def nearest_index(self, position) -> int:
        return self.grid.nearest_index(position)

    def __eq__(self, other):
        if not isinstance(other, LookupTable):
            return NotImplemented
        return (self.twin_id == other.twin_id and self.scenario_id == other.scenario_id
                and self.snr_db.shape == other.snr_db.shape
                and self.snr_db.tobytes() == other.snr_db.tobytes()
                and self.n_rays.tobytes() == other.n_rays.tobytes()
                and self.grid == other.grid and self.comp_cost == other.comp_cost
                and self.has_rays == other.has_rays)


# ---------------------------------------------------------------------------
# cost model


def prop_cost_factor(rho: int, iota: int, zeta: int, w: int) -> int:
    """Propagation cost factor (rho+iota+1)! / (iota! rho!) * w**(zeta+1), exact."""
    if min(rho, iota, zeta, w) < 0:
        raise ConfigError("cost factor arguments must be >= 0")
    value = (math.factorial(rho + iota + 1) // (math.factorial(iota) * math.factorial(rho))
             * w ** (zeta + 1))
    try:
        float(value)
    except OverflowError:
        raise CostOverflowError("propagation cost factor exceeds float range") from None
    return value


@lru_cache(maxsize=64)
def _surface_count(world: WorldModel, n_dirs: int) -> int:
    tracer = Tracer(world, PropagationConfig(max_reflections=0, max_diffractions=0))
    if tracer.n_faces == 0:
        return 0
    d = _fibonacci_directions(n_dirs)
    o = tracer.tx
    denom = d @ tracer.normals.T
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (tracer.offsets[None, :] - o @ tracer.normals.T) / denom
    t = np.where((denom < 0) & (t > 1e-9), t, np.inf)
    si, fi = np.nonzero(np.isfinite(t))
    ok = tracer._inside(o[None, :] + t[si, fi][:, None] * d[si], fi)
    tt = np.full(t.shape, np.inf)
    tt[si[ok], fi[ok]] = t[si[ok], fi[ok]]
    hit = np.isfinite(tt).any(axis=1)
    return int(len(np.unique(np.argmin(tt[hit], axis=1))))


def count_reflective_surfaces(world: WorldModel, n_dirs: int = 100_000) -> int:
    """Distinct faces hit first by rays shot uniformly from the transmitter (w)."""
    return _surface_count(world, n_dirs)


def _cost_factor(twin: TwinConfig) -> int:
    w = twin.surfaces if twin.surfaces is not None else count_reflective_surfaces(twin.world)
    return prop_cost_factor(twin.rho, twin.prop.max_transmissions, twin.prop.max_diffractions, w)


def lookup_cost(twin: TwinConfig, mean_rays: float) -> float:
    """B * n * mean_rays * prop_cost_factor * unit_cost."""
    if mean_rays < 0:
        raise ValueError("mean_rays must be >= 0")
    return (twin.n_beams * len(twin.rx_grid) * mean_rays * float(_cost_factor(twin))
            * twin.unit_cost)


def total_cost(map_cost: float, lookup: float, seconds_per_unit: float = 0.0) -> CostBreakdown:
    if map_cost < 0 or lookup < 0:
        raise ValueError("costs must be >= 0")
    total = map_cost + lookup
    return CostBreakdown(float(map_cost), float(lookup), float(total),
                         float(total * seconds_per_unit))


def twin_cost(twin: TwinConfig, mean_rays: float) -> CostBreakdown:
    m = twin.map_cost if twin.map_cost is not None else twin.map_model(twin.world)
    return total_cost(m, lookup_cost(twin, mean_rays), twin.seconds_per_unit)


# ---------------------------------------------------------------------------
# table generation

_WORKER_STATE: dict = {}


def _init_worker(world, cfg, beams, rx_pattern):
    _WORKER_STATE["tracer"] = Tracer(world, cfg)
    _WORKER_STATE["beams"] = beams
    _WORKER_STATE["rx_pattern"] = rx_pattern


def _trace_rows(points: np.ndarray):
    tracer = _WORKER_STATE["tracer"]
    beams = _WORKER_STATE["beams"]
    rxp = _WORKER_STATE["rx_pattern"]
    cfg = tracer.cfg
    snr = np.empty((len(points), len(beams)))
    rays = np.empty((len(points), len(beams)), dtype=np.int64)
    for j, p in enumerate(points):
        watts, counts = tracer.beam_powers(tracer.geometric_paths(p), beams, rxp)
        for m in range(len(beams)):
            snr[j, m] = power_to_dbm(watts[m], cfg.system_loss_db) - cfg.noise_power_dbm
        rays[j] = counts
    return snr, rays


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError("worker count must be >= 1")
    return workers


def generate_lookup_table(twin: TwinConfig, workers: Optional[int] = None) -> LookupTable:
    """Trace every grid point once and weight the paths with every codebook beam.

    Rows are computed independently, so the table is bit-identical for
    any worker count (``workers`` or the ``MULTIVERSE_WORKERS`` variable).
    """
    workers = resolve_workers(workers)
    cfg = twin.trace_config
    beams = tuple(twin.codebook)
    points = np.asarray(twin.rx_grid.points)
    args = (twin.world, cfg, beams, twin.rx_pattern)
    if workers == 1 or len(points) <= 1:
        _init_worker(*args)
        try:
            snr, rays = _trace_rows(points)
        finally:
            _WORKER_STATE.clear()
    else:
        chunks = np.array_split(points, min(workers * 4, len(points)))
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=args) as pool:
            parts = list(pool.map(_trace_rows, chunks))
        snr = np.concatenate([p[0] for p in parts])
        rays = np.concatenate([p[1] for p in parts])
    mean_rays = float(rays.mean()) if rays.size else 0.0
    return LookupTable(twin.twin_id, twin.scenario_id, snr.astype(np.float32), rays,
                       twin.rx_grid, twin_cost(twin, mean_rays))


# ---------------------------------------------------------------------------
# persistence


def _header(lt: LookupTable, include_rays: bool) -> bytes:
    g = lt.grid
    head = {
        "twin_id": lt.twin_id, "scenario_id": lt.scenario_id,
        "B": lt.n_beams, "n": lt.n_points,
        "map_cost": lt.comp_cost.map_cost, "lookup_cost": lt.comp_cost.lookup_cost,
        "total": lt.comp_cost.total, "wall_clock_estimate": lt.comp_cost.wall_clock_estimate,
        "grid_start": list(g.start), "grid_end": list(g.end), "grid_height": g.height,
        "grid_scenario": g.scenario_id, "has_rays": bool(include_rays and lt.has_rays),
    }
    return json.dumps(head, sort_keys=True, separators=(",", ":")).encode()


def table_bytes(lt: LookupTable, include_rays: bool = True) -> bytes:
    """Binary table image: magic, version, JSON header, float32 SNRs, rays, CRC32."""
    head = _header(lt, include_rays)
    parts = [TABLE_MAGIC, struct.pack("<HI", TABLE_SCHEMA_VERSION, len(head)), head,
             lt.snr_db.astype("<f4").tobytes()]
    if include_rays and lt.has_rays:
        packed = zlib.compress(lt.n_rays.astype("<u4").tobytes(), 9)
        parts += [struct.pack("<I", len(packed)), packed]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_lookup_table(lt: LookupTable, path, include_rays: bool = True) -> int:
    """Write ``lt`` to ``path``; ``include_rays=False`` gives the downlink-sized file."""
    data = table_bytes(lt, include_rays)
    Path(path).write_bytes(data)
    return len(data)


def parse_lookup_table(data: bytes) -> LookupTable:
    if len(data) < 14 or data[:4] != TABLE_MAGIC:
        raise CorruptTableError("not a lookup-table file")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != TABLE_SCHEMA_VERSION:
        raise SchemaVersionMismatchError(
            f"table schema {version}, expected {TABLE_SCHEMA_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptTableError("checksum mismatch")
    (hlen,) = struct.unpack_from("<I", data, 6)
    try:
        head = json.loads(body[10:10 + hlen])
        off = 10 + hlen
        n, B = int(head["n"]), int(head["B"])
        snr = np.frombuffer(body, dtype="<f4", count=n * B, offset=off).reshape(n, B)
        off += 4 * n * B
        if head["has_rays"]:
            (clen,) = struct.unpack_from("<I", body, off)
            raw = zlib.decompress(body[off + 4:off + 4 + clen])
            rays = np.frombuffer(raw, dtype="<u4").reshape(n, B)
            off += 4 + clen
        else:
            rays = np.zeros((n, B), dtype=np.uint32)
        if off != len(body):
            raise CorruptTableError("trailing bytes in table")
        grid = make_rx_grid(head["grid_start"], head["grid_end"], n, head["grid_height"],
                            head["grid_scenario"])
        cost = CostBreakdown(head["map_cost"], head["lookup_cost"], head["total"],
                             head["wall_clock_estimate"])
    except (KeyError, ValueError, struct.error, zlib.error) as exc:
        if isinstance(exc, CorruptTableError):
            raise
        raise CorruptTableError(f"malformed table: {exc}") from None
    return LookupTable(head["twin_id"], head["scenario_id"], snr, rays, grid, cost,
                       bool(head["has_rays"]))


def load_lookup_table(path) -> LookupTable:
    return parse_lookup_table(Path(path).read_bytes())


def export_lookup_csv(lt: LookupTable, path) -> None:
    """Lossless long-format export: ``rx_index,beam,snr_db,n_rays``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rx_index", "beam", "snr_db", "n_rays"])
        for j in range(lt.n_points):
            for m in range(lt.n_beams):
                w.writerow([j, m, repr(float(lt.snr_db[j, m])), int(lt.n_rays[j, m])])


def read_lookup_csv(path) -> tuple:
    """Inverse of :func:`export_lookup_csv`: ``(snr_db float32, n_rays)`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = 1 + max(int(r["rx_index"]) for r in rows) if rows else 0
    B = 1 + max(int(r["beam"]) for r in rows) if rows else 0
    snr = np.full((n, B), np.nan, dtype=np.float32)
    rays = np.zeros((n, B), dtype=np.uint32)
    for r in rows:
        j, m = int(r["rx_index"]), int(r["beam"])
        snr[j, m] = float(r["snr_db"])
        rays[j, m] = int(r["n_rays"])
    return snr, rays


def synthetic_table(twin_id: str, scenario_id: str, snr_db, grid: RxGrid,
                    lookup_cost: float = 0.0, map_cost: float = 0.0) -> LookupTable:
    """Wrap a given SNR matrix as a table (fixtures, ground-truth-derived twins)."""
    snr = np.asarray(snr_db, dtype=np.float32)
    rays = np.where(np.isfinite(snr), 1, 0).astype(np.uint32)
    return LookupTable(twin_id, scenario_id, snr, rays, grid, total_cost(map_cost, lookup_cost))
