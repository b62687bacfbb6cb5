"""Declarative 3D scene model for urban-canyon mmWave scenarios.

A scene is a set of prisms standing on a ground plane: buildings (boxes or
polygonal footprints extruded to a height) and obstacles (oriented boxes,
e.g. a parked car).  All lengths are meters, all angles degrees.  Every
surface that can reflect a ray is exposed as a planar :class:`Face` with a
stable identifier (``building0.wall2``, ``obstacle0.top``, ``ground``) that
the ray tracer reports in ``RayPath.faces_touched``.

Wall ``j`` of a prism is the vertical face spanned by footprint vertices
``j`` and ``j+1`` (footprints are stored counter-clockwise).  A box
``[x0, y0, x1, y1]`` has vertices ``(x0,y0), (x1,y0), (x1,y1), (x0,y1)``, so
wall 0 faces -y, wall 1 faces +x, wall 2 faces +y and wall 3 faces -x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import yaml

from .errors import DegenerateGridError, GeometryInvalidError, SpecParseError

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Material:
    """Scalar reflection model of a surface material.

    ``angle_table`` optionally lists ``(incidence_deg, magnitude, phase_rad)``
    rows; when present the coefficient is linearly interpolated in incidence
    angle (measured from the surface normal) and the constant values are
    ignored.
    """

    name: str
    reflection_magnitude: float
    reflection_phase: float = math.pi
    angle_table: tuple = ()

    def coefficient(self, incidence_deg: float = 0.0) -> complex:
        if not self.angle_table:
            return complex(self.reflection_magnitude * math.cos(self.reflection_phase),
                           self.reflection_magnitude * math.sin(self.reflection_phase))
        table = np.asarray(self.angle_table, dtype=float)
        mag = float(np.interp(incidence_deg, table[:, 0], table[:, 1]))
        phase = float(np.interp(incidence_deg, table[:, 0], table[:, 2]))
        return complex(mag * math.cos(phase), mag * math.sin(phase))


# Normal-incidence Fresnel magnitudes for typical 60 GHz permittivities.
DEFAULT_MATERIALS = {
    "concrete": Material("concrete", 0.39),
    "asphalt": Material("asphalt", 0.28),
    "metal": Material("metal", 1.0),
    "glass": Material("glass", 0.43),
    "grass": Material("grass", 0.10),
}


@dataclass(frozen=True)
class Building:
    footprint: tuple  # ((x, y), ...) counter-clockwise
    height: float
    material: str


@dataclass(frozen=True)
class Obstacle:
    """Oriented box standing on the ground.

    ``d0`` is the height, ``d1`` the width and ``d2`` the length; the length
    axis points along ``yaw`` degrees (counter-clockwise from +x).
    """

    x: float
    y: float
    d0: float
    d1: float
    d2: float
    material: str = "metal"
    yaw: float = 0.0

    @property
    def footprint(self) -> tuple:
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        hl, hw = self.d2 / 2.0, self.d1 / 2.0
        local = ((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw))
        return tuple((self.x + c * a - s * b, self.y + s * a + c * b) for a, b in local)


@dataclass(frozen=True)
class Placement:
    x: float
    y: float
    height: float
    facing_deg: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.height], dtype=float)


@dataclass(frozen=True)
class Bounds:
    min: tuple
    max: tuple

    def contains(self, p, tol: float = 1e-9) -> bool:
        return all(lo - tol <= v <= hi + tol for v, lo, hi in zip(p, self.min, self.max))


@dataclass(frozen=True)
class Face:
    """Planar polygon able to reflect rays.

    ``normal`` points outward (away from the solid); ``offset`` is
    ``normal . x`` for any point on the plane.
    """

    id: str
    owner: str
    kind: str  # "wall" | "top" | "ground"
    vertices: np.ndarray = field(compare=False)
    normal: np.ndarray = field(compare=False)
    offset: float
    material: str
    u: np.ndarray = field(compare=False)
    v: np.ndarray = field(compare=False)
    poly2d: np.ndarray = field(compare=False)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        rel = np.asarray(points, dtype=float) - self.vertices[0]
        return np.stack([rel @ self.u, rel @ self.v], axis=-1)


def _make_face(fid, owner, kind, vertices, normal, material) -> Face:
    vertices = np.asarray(vertices, dtype=float)
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    u = vertices[1] - vertices[0]
    u = u - normal * (u @ normal)
    u = u / np.linalg.norm(u)
    v = np.cross(normal, u)
    rel = vertices - vertices[0]
    poly2d = np.stack([rel @ u, rel @ v], axis=-1)
    return Face(fid, owner, kind, vertices, normal, float(normal @ vertices[0]), material,
                u, v, poly2d)


def _signed_area(poly) -> float:
    a = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        a += x0 * y1 - x1 * y0
    return a / 2.0


def prism_faces(owner: str, footprint, height: float, material: str) -> list:
    """Walls and roof of a prism; the base rests on the ground and is not exposed."""
    pts = list(footprint)
    faces = []
    for j, ((x0, y0), (x1, y1)) in enumerate(zip(pts, pts[1:] + pts[:1])):
        verts = [(x0, y0, 0.0), (x1, y1, 0.0), (x1, y1, height), (x0, y0, height)]
        faces.append(_make_face(f"{owner}.wall{j}", owner, "wall", verts,
                                (y1 - y0, -(x1 - x0), 0.0), material))
    top = [(x, y, height) for x, y in pts]
    faces.append(_make_face(f"{owner}.top", owner, "top", top, (0.0, 0.0, 1.0), material))
    return faces


@dataclass(frozen=True)
class WorldModel:
    buildings: tuple
    obstacles: tuple
    tx: Placement
    bounds: Bounds
    materials: tuple  # sorted tuple of Material
    road: Optional[str] = "asphalt"
    map_id: str = ""
    rx_facing_deg: Optional[float] = None
    schema_version: int = SCHEMA_VERSION

    def material(self, name: str) -> Material:
        for m in self.materials:
            if m.name == name:
                return m
        raise KeyError(name)

    @property
    def rx_facing(self) -> float:
        """Receiver boresight azimuth; defaults to facing the transmitter's opposite direction."""
        if self.rx_facing_deg is not None:
            return self.rx_facing_deg
        return (self.tx.facing_deg + 180.0) % 360.0

    @cached_property
    def prisms(self) -> tuple:
        """``(owner_id, footprint, height, material)`` for every building and obstacle."""
        out = [(f"building{i}", b.footprint, b.height, b.material)
               for i, b in enumerate(self.buildings)]
        out += [(f"obstacle{k}", o.footprint, o.d0, o.material)
                for k, o in enumerate(self.obstacles)]
        return tuple(out)

    @cached_property
    def faces(self) -> tuple:
        faces = []
        for owner, footprint, height, material in self.prisms:
            faces.extend(prism_faces(owner, footprint, height, material))
        if self.road is not None:
            (x0, y0, _), (x1, y1, _) = self.bounds.min, self.bounds.max
            ground = [(x0, y0, 0.0), (x1, y0, 0.0), (x1, y1, 0.0), (x0, y1, 0.0)]
            faces.append(_make_face("ground", "ground", "ground", ground, (0.0, 0.0, 1.0),
                                    self.road))
        return tuple(faces)


# ---------------------------------------------------------------------------
# validation


def validate_world(world: WorldModel) -> list:
    """Human-readable invariant violations; empty when the scene is valid."""
    diags = []
    lo, hi = world.bounds.min, world.bounds.max
    if any(h <= l for l, h in zip(lo, hi)):
        diags.append("bounds: empty box")
    names = {m.name for m in world.materials}
    for m in world.materials:
        if not 0.0 <= m.reflection_magnitude <= 1.0:
            diags.append(f"material {m.name}: reflection magnitude outside [0, 1]")
        for row in m.angle_table:
            if not 0.0 <= row[1] <= 1.0:
                diags.append(f"material {m.name}: angle table magnitude outside [0, 1]")
                break

    def check_prism(label, footprint, height, material):
        if not height > 0:
            diags.append(f"{label}: non-positive height")
        if len(footprint) < 3 or abs(_signed_area(list(footprint))) <= 1e-12:
            diags.append(f"{label}: degenerate footprint")
        if material not in names:
            diags.append(f"{label}: unknown material '{material}'")
        inside = all(world.bounds.contains((x, y, 0.0)) for x, y in footprint)
        if not inside or height > hi[2] + 1e-9:
            diags.append(f"{label}: outside bounds")

    for i, b in enumerate(world.buildings):
        check_prism(f"building {i}", b.footprint, b.height, b.material)
    for k, o in enumerate(world.obstacles):
        if not o.d1 > 0:
            diags.append(f"obstacle {k}: non-positive width")
        if not o.d2 > 0:
            diags.append(f"obstacle {k}: non-positive length")
        if o.d1 > 0 and o.d2 > 0:
            check_prism(f"obstacle {k}", o.footprint, o.d0, o.material)
        elif not o.d0 > 0:
            diags.append(f"obstacle {k}: non-positive height")
    if world.road is not None and world.road not in names:
        diags.append(f"road: unknown material '{world.road}'")
    if not world.tx.height > 0:
        diags.append("tx: non-positive height")
    if not world.bounds.contains((world.tx.x, world.tx.y, world.tx.height)):
        diags.append("tx: outside bounds")
    return diags


# ---------------------------------------------------------------------------
# scene files


def _floats(seq, n=None, what="value"):
    try:
        out = tuple(float(v) for v in seq)
    except (TypeError, ValueError) as exc:
        raise SpecParseError(f"{what}: expected numbers, got {seq!r}") from exc
    if n is not None and len(out) != n:
        raise SpecParseError(f"{what}: expected {n} numbers, got {len(out)}")
    return out


def _num(d, key, default=None, what=""):
    if key not in d:
        if default is None:
            raise SpecParseError(f"{what}: missing '{key}'")
        return float(default)
    try:
        return float(d[key])
    except (TypeError, ValueError) as exc:
        raise SpecParseError(f"{what}: '{key}' is not a number") from exc


def _parse_material(name, d) -> Material:
    if not isinstance(d, Mapping):
        raise SpecParseError(f"material {name}: expected a mapping")
    table = tuple(_floats(row, 3, f"material {name} angle_table")
                  for row in d.get("angle_table", ()) or ())
    return Material(
        name=str(name),
        reflection_magnitude=_num(d, "reflection_magnitude", None if not table else 0.0,
                                  f"material {name}"),
        reflection_phase=_num(d, "reflection_phase_rad", math.pi, f"material {name}"),
        angle_table=table,
    )


def build_world(spec: Mapping[str, Any]) -> WorldModel:
    """Validate a parsed scene description and return the immutable world.

    Raises SpecParseError for structurally malformed input and
    GeometryInvalidError (carrying the diagnostics) for geometric problems
    such as zero-volume prisms, out-of-bounds elements or undefined
    materials.
    """
    if not isinstance(spec, Mapping):
        raise SpecParseError("scene must be a mapping")
    version = spec.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SpecParseError(f"unsupported scene schema_version {version!r}")

    materials = dict(DEFAULT_MATERIALS)
    for name, d in (spec.get("materials") or {}).items():
        materials[str(name)] = _parse_material(name, d)

    try:
        b = spec["bounds"]
        bounds = Bounds(_floats(b["min"], 3, "bounds.min"), _floats(b["max"], 3, "bounds.max"))
    except (KeyError, TypeError) as exc:
        raise SpecParseError("bounds: expected {min: [x,y,z], max: [x,y,z]}") from exc

    buildings = []
    for i, bd in enumerate(spec.get("buildings") or ()):
        what = f"building {i}"
        if not isinstance(bd, Mapping):
            raise SpecParseError(f"{what}: expected a mapping")
        if "box" in bd:
            x0, y0, x1, y1 = _floats(bd["box"], 4, f"{what}.box")
            x0, x1 = min(x0, x1), max(x0, x1)
            y0, y1 = min(y0, y1), max(y0, y1)
            footprint = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
        elif "footprint" in bd:
            footprint = tuple(_floats(p, 2, f"{what}.footprint") for p in bd["footprint"])
            if _signed_area(list(footprint)) < 0:
                footprint = footprint[::-1]
        else:
            raise SpecParseError(f"{what}: needs 'box' or 'footprint'")
        buildings.append(Building(footprint, _num(bd, "height", what=what),
                                  str(bd.get("material", "concrete"))))

    obstacles = []
    for k, od in enumerate(spec.get("obstacles") or ()):
        what = f"obstacle {k}"
        if not isinstance(od, Mapping):
            raise SpecParseError(f"{what}: expected a mapping")
        obstacles.append(Obstacle(
            x=_num(od, "x", what=what), y=_num(od, "y", what=what),
            d0=_num(od, "d0", what=what), d1=_num(od, "d1", what=what),
            d2=_num(od, "d2", what=what),
            material=str(od.get("material", "metal")), yaw=_num(od, "yaw", 0.0, what),
        ))

    t = spec.get("tx")
    if not isinstance(t, Mapping):
        raise SpecParseError("tx: missing placement")
    tx = Placement(_num(t, "x", what="tx"), _num(t, "y", what="tx"),
                   _num(t, "height", what="tx"), _num(t, "facing_deg", 0.0, "tx"))

    rx = spec.get("rx") or {}
    rx_facing = float(rx["facing_deg"]) if "facing_deg" in rx else None
    road = spec.get("road", "asphalt")

    world = WorldModel(
        buildings=tuple(buildings), obstacles=tuple(obstacles), tx=tx, bounds=bounds,
        materials=tuple(sorted(materials.values(), key=lambda m: m.name)),
        road=None if road is None else str(road), map_id=str(spec.get("map_id", "")),
        rx_facing_deg=rx_facing,
    )
    diags = validate_world(world)
    if diags:
        raise GeometryInvalidError(diags)
    return world


def world_to_dict(world: WorldModel) -> dict:
    mats = {}
    for m in world.materials:
        d = {"reflection_magnitude": m.reflection_magnitude,
             "reflection_phase_rad": m.reflection_phase}
        if m.angle_table:
            d["angle_table"] = [list(r) for r in m.angle_table]
        mats[m.name] = d
    out = {
        "schema_version": world.schema_version,
        "map_id": world.map_id,
        "bounds": {"min": list(world.bounds.min), "max": list(world.bounds.max)},
        "materials": mats,
        "road": world.road,
        "buildings": [{"footprint": [list(p) for p in b.footprint], "height": b.height,
                       "material": b.material} for b in world.buildings],
        "obstacles": [{"x": o.x, "y": o.y, "d0": o.d0, "d1": o.d1, "d2": o.d2,
                       "material": o.material, "yaw": o.yaw} for o in world.obstacles],
        "tx": {"x": world.tx.x, "y": world.tx.y, "height": world.tx.height,
               "facing_deg": world.tx.facing_deg},
    }
    if world.rx_facing_deg is not None:
        out["rx"] = {"facing_deg": world.rx_facing_deg}
    return out


def serialize_world(world: WorldModel) -> str:
    return yaml.safe_dump(world_to_dict(world), sort_keys=True)


def parse_scene(text: str) -> WorldModel:
    try:
        spec = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecParseError(f"malformed scene file: {exc}") from exc
    return build_world(spec)


def load_scene(path) -> WorldModel:
    return parse_scene(Path(path).read_text())


# ---------------------------------------------------------------------------
# receiver sample grid


@dataclass(frozen=True, eq=False)
class RxGrid:
    """Ordered receiver positions evenly spaced on a straight segment.

    ``spacing`` is 0 for a single-point grid.
    """

    points: np.ndarray
    spacing: float
    start: tuple
    end: tuple
    height: float
    scenario_id: str = ""

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, RxGrid):
            return NotImplemented
        return (self.points.shape == other.points.shape
                and self.points.tobytes() == other.points.tobytes()
                and (self.spacing, self.start, self.end, self.height, self.scenario_id)
                == (other.spacing, other.start, other.end, other.height, other.scenario_id))

    def nearest_index(self, position) -> int:
        d = np.linalg.norm(self.points - np.asarray(position, dtype=float), axis=1)
        return int(np.argmin(d))

    def along(self, position) -> float:
        """Distance from the grid start of ``position`` projected on the segment axis."""
        start = np.asarray(self.start, dtype=float)
        axis = np.asarray(self.end, dtype=float) - start
        length = np.linalg.norm(axis)
        if length == 0:
            return 0.0
        return float((np.asarray(position, dtype=float) - start) @ axis / length)


def make_rx_grid(start: Sequence[float], end: Sequence[float], n_points: int,
                 height: float, scenario_id: str = "") -> RxGrid:
    """``n_points`` receiver positions evenly spaced from ``start`` to ``end``.

    Only the horizontal coordinates of ``start`` and ``end`` are used; every
    point sits at ``height``.
    """
    if n_points < 1:
        raise DegenerateGridError("n_points must be >= 1")
    s = np.array([float(start[0]), float(start[1]), float(height)])
    e = np.array([float(end[0]), float(end[1]), float(height)])
    if n_points > 1 and np.array_equal(s, e):
        raise DegenerateGridError("start == end with more than one point")
    if n_points == 1:
        points = s[None, :].copy()
        spacing = 0.0
    else:
        frac = np.arange(n_points, dtype=float) / (n_points - 1)
        points = s[None, :] + frac[:, None] * (e - s)[None, :]
        spacing = float(np.linalg.norm(e - s) / (n_points - 1))
    points.setflags(write=False)
    return RxGrid(points, spacing, tuple(s.tolist()), tuple(e.tolist()), float(height),
                  scenario_id)
