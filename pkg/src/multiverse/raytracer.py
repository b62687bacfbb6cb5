"""Image-method ray tracing and coherent received-power aggregation.

Specular paths are solved exactly: the transmitter is mirrored across each
face of a candidate face sequence, and the reflection points are recovered
by walking back from the receiver through the chain of images.  A path is
kept only if every reflection point lies on its face and no segment is
occluded.  When the direct path is blocked and diffraction is enabled, one
knife-edge path over the least-obstructing edge of the blocking prisms is
added.

Polarisation is collapsed to a single complex amplitude per ray.  Ray
amplitudes are field strengths normalised so that

    P_rx = lambda**2 * beta / (8 pi eta0) * |sum_n a_n g_rx,n|**2

reduces to the Friis value ``P_tx (lambda / 4 pi d)**2`` for one
line-of-sight ray between unit-gain antennas.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .antenna import AntennaPattern, isotropic_pattern
from .errors import ConfigError, NegativePowerError
from .world import WorldModel

SPEED_OF_LIGHT = 299_792_458.0
_EPS_T = 1e-9


@dataclass(frozen=True)
class PropagationConfig:
    """Radio and tracing parameters; defaults describe a 60 GHz link with a 34-beam codebook."""

    carrier_frequency: float = 60e9
    bandwidth: float = 2.16e9
    beta: float = 1.0
    eta0: float = 377.0
    max_reflections: int = 3
    max_transmissions: int = 0
    max_diffractions: int = 1
    ray_spacing_deg: float = 0.25
    noise_power_dbm: float = -100.99
    system_loss_db: float = 0.0
    d_max: float = 20.0
    sensitivity_dbm: float = -250.0
    tx_power_dbm: float = 24.0
    coherent: bool = True

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise ConfigError("carrier_frequency must be positive")
        if min(self.max_reflections, self.max_transmissions, self.max_diffractions) < 0:
            raise ConfigError("interaction counts must be non-negative")
        if not self.ray_spacing_deg > 0:
            raise ConfigError("ray_spacing_deg must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (0, 1]")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def tx_power_w(self) -> float:
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)

    @property
    def field_scale(self) -> float:
        """Transmitter field amplitude chosen so that a lone direct path gives the Friis power."""
        return math.sqrt(8.0 * math.pi * self.eta0 * self.tx_power_w) / self.wavelength

    @property
    def power_scale(self) -> float:
        return self.wavelength ** 2 * self.beta / (8.0 * math.pi * self.eta0)


@dataclass(frozen=True)
class RayPath:
    vertices: tuple  # ((x, y, z), ...) from Tx to Rx
    interactions: tuple  # "reflection" | "diffraction" per interior vertex
    faces_touched: tuple
    departure: tuple  # (az, el) degrees, global frame
    arrival: tuple  # (az, el) degrees, direction of arrival at Rx, global frame
    path_length: float
    amplitude: complex = 0j
    miss_distance: float = field(default=0.0, compare=False)

    @property
    def kind(self) -> str:
        if not self.interactions:
            return "direct"
        return "diffraction" if "diffraction" in self.interactions else "reflection"

    @property
    def n_reflections(self) -> int:
        return self.interactions.count("reflection")

    @property
    def n_diffractions(self) -> int:
        return self.interactions.count("diffraction")

    @property
    def magnitude(self) -> float:
        return abs(self.amplitude)

    @property
    def phase(self) -> float:
        return math.atan2(self.amplitude.imag, self.amplitude.real)

    @property
    def segment_kinds(self) -> tuple:
        if not self.interactions:
            return ("direct",)
        return self.interactions + (self.interactions[-1],)


@dataclass(frozen=True)
class ReceivedPower:
    watts: float
    dbm: float
    snr_db: float
    n_rays: int


def _direction_deg(vec) -> tuple:
    x, y, z = (float(c) for c in vec)
    az = math.degrees(math.atan2(y, x))
    el = math.degrees(math.atan2(z, math.hypot(x, y)))
    return az, el


def knife_edge_loss_db(v: float) -> float:
    """Single knife-edge diffraction loss J(v) in dB (ITU-R P.526 approximation)."""
    if v <= -0.78:
        return 0.0
    return 6.9 + 20.0 * math.log10(math.sqrt((v - 0.1) ** 2 + 1.0) + v - 0.1)


def reception_sphere_radius(cfg: PropagationConfig) -> float:
    """Radius of the capture sphere a shooting ray tracer puts around a receiver."""
    return math.radians(cfg.ray_spacing_deg) * cfg.d_max


def power_to_dbm(watts: float, system_loss_db: float = 0.0) -> float:
    if watts < 0:
        raise NegativePowerError(f"negative power {watts!r} W")
    if watts == 0:
        return -math.inf
    return 10.0 * math.log10(watts / 1e-3) - system_loss_db


def snr_dbm(p_dbm: float, noise_dbm: float) -> float:
    return p_dbm - noise_dbm


@dataclass
class _GeoPath:
    vertices: np.ndarray
    interactions: tuple
    faces: tuple
    length: float
    factor: complex


class Tracer:
    """Beam-independent path solver for one world and one configuration.

    The image tree depends only on the transmitter and the faces, so it is
    built once and reused for every receiver point; per-beam amplitudes are
    applied afterwards by :meth:`weight`.
    """

    def __init__(self, world: WorldModel, cfg: PropagationConfig):
        if cfg.max_transmissions != 0:
            raise ConfigError("transmissions through surfaces are not traced; "
                              "max_transmissions must be 0")
        self.world = world
        self.cfg = cfg
        self.tx = world.tx.position
        faces = world.faces
        self.face_ids = [f.id for f in faces]
        self.n_faces = len(faces)
        self.materials = [world.material(f.material) for f in faces]
        if faces:
            self.normals = np.array([f.normal for f in faces])
            self.offsets = np.array([f.offset for f in faces])
            self.origins = np.array([f.vertices[0] for f in faces])
            self.us = np.array([f.u for f in faces])
            self.vs = np.array([f.v for f in faces])
            vmax = max(len(f.poly2d) for f in faces)
            poly = np.zeros((len(faces), vmax + 1, 2))
            for i, f in enumerate(faces):
                p = f.poly2d
                poly[i, :len(p)] = p
                poly[i, len(p):] = p[0]  # closing vertex, then zero-length padding
            self.polys = poly
        else:
            self.normals = np.zeros((0, 3))
            self.offsets = np.zeros(0)
        self.owner_faces = {}
        for i, f in enumerate(faces):
            self.owner_faces.setdefault(f.owner, {})[f.id] = i
        self.levels = self._image_tree(cfg.max_reflections)

    # -- geometry primitives -------------------------------------------------

    def _inside(self, points: np.ndarray, fidx: np.ndarray) -> np.ndarray:
        """Crossing-number containment of in-plane points in their faces."""
        if len(points) == 0:
            return np.zeros(0, dtype=bool)
        rel = points - self.origins[fidx]
        x = np.einsum("ij,ij->i", rel, self.us[fidx])
        y = np.einsum("ij,ij->i", rel, self.vs[fidx])
        poly = self.polys[fidx]
        a, b = poly[:, :-1], poly[:, 1:]
        ay, by = a[..., 1], b[..., 1]
        yy = y[:, None]
        straddle = (ay > yy) != (by > yy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[..., 0] + (yy - ay) * (b[..., 0] - a[..., 0]) / (by - ay)
        cross = straddle & (x[:, None] < xint)
        return (np.count_nonzero(cross, axis=1) % 2) == 1

    def _blocked(self, P: np.ndarray, Q: np.ndarray, ign1=None, ign2=None) -> np.ndarray:
        """Whether each open segment P->Q crosses any face (ignoring up to two per segment)."""
        S = len(P)
        if S == 0 or self.n_faces == 0:
            return np.zeros(S, dtype=bool)
        D = Q - P
        denom = D @ self.normals.T
        num = self.offsets[None, :] - P @ self.normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / denom
        cand = (np.abs(denom) > 1e-15) & (t > _EPS_T) & (t < 1.0 - _EPS_T)
        rows = np.arange(S)
        for ign in (ign1, ign2):
            if ign is not None:
                ign = np.asarray(ign)
                m = ign >= 0
                cand[rows[m], ign[m]] = False
        si, fi = np.nonzero(cand)
        out = np.zeros(S, dtype=bool)
        if len(si):
            H = P[si] + t[si, fi][:, None] * D[si]
            hit = self._inside(H, fi)
            out[si[hit]] = True
        return out

    def _image_tree(self, depth: int) -> list:
        """Face sequences (N, k) and successive images (N, k, 3) for k = 1..depth.

        A face can only mirror a source lying strictly on its outward side,
        and never the same face twice in a row.
        """
        levels = []
        if self.n_faces == 0 or depth == 0:
            return levels
        seqs = np.zeros((1, 0), dtype=int)
        imgs = np.zeros((1, 0, 3))
        last = self.tx[None, :]
        prev_face = None
        for _ in range(depth):
            s = last @ self.normals.T - self.offsets[None, :]
            ok = s > 1e-12
            if prev_face is not None:
                ok[np.arange(len(last)), prev_face] = False
            ni, fi = np.nonzero(ok)
            if len(ni) == 0:
                break
            new = last[ni] - 2.0 * s[ni, fi][:, None] * self.normals[fi]
            seqs = np.concatenate([seqs[ni], fi[:, None]], axis=1)
            imgs = np.concatenate([imgs[ni], new[:, None, :]], axis=1)
            levels.append((seqs, imgs))
            last, prev_face = new, fi
        return levels

    # -- path solving --------------------------------------------------------

    def _reflection_factor(self, vertices: np.ndarray, faces: Sequence[int]) -> complex:
        factor = 1.0 + 0j
        for i, f in enumerate(faces):
            mat = self.materials[f]
            if mat.angle_table:
                d_in = vertices[i + 1] - vertices[i]
                cos_inc = abs(d_in @ self.normals[f]) / np.linalg.norm(d_in)
                inc = math.degrees(math.acos(min(1.0, cos_inc)))
                factor *= mat.coefficient(inc)
            else:
                factor *= mat.coefficient()
        return factor

    def _reflected(self, rx: np.ndarray) -> list:
        out = []
        for seqs, imgs in self.levels:
            N, k = seqs.shape
            idx = np.arange(N)
            target = np.broadcast_to(rx, (N, 3)).copy()
            pts = np.zeros((N, k, 3))
            for i in range(k - 1, -1, -1):
                f = seqs[idx, i]
                I = imgs[idx, i]
                n = self.normals[f]
                dirv = target - I
                denom = np.einsum("ij,ij->i", n, dirv)
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (self.offsets[f] - np.einsum("ij,ij->i", n, I)) / denom
                ok = (np.abs(denom) > 1e-15) & (t > _EPS_T) & (t < 1.0 - _EPS_T)
                t = np.where(ok, t, 0.0)
                P = I + t[:, None] * dirv
                ok[ok] = self._inside(P[ok], f[ok])
                idx, target, P = idx[ok], target[ok], P[ok]
                pts[idx, i] = P
                target = P
                if len(idx) == 0:
                    break
            if len(idx) == 0:
                continue
            M = len(idx)
            verts = np.concatenate([np.broadcast_to(self.tx, (M, 1, 3)), pts[idx],
                                    np.broadcast_to(rx, (M, 1, 3))], axis=1)
            fseq = seqs[idx]
            none = np.full((M, 1), -1)
            ign_start = np.concatenate([none, fseq], axis=1)  # face at segment start
            ign_end = np.concatenate([fseq, none], axis=1)  # face at segment end
            P = verts[:, :-1].reshape(-1, 3)
            Q = verts[:, 1:].reshape(-1, 3)
            blocked = self._blocked(P, Q, ign_start.reshape(-1), ign_end.reshape(-1))
            clear = ~blocked.reshape(M, k + 1).any(axis=1)
            for r in np.nonzero(clear)[0]:
                v = verts[r]
                faces = [int(f) for f in fseq[r]]
                length = float(np.sum(np.linalg.norm(np.diff(v, axis=0), axis=1)))
                out.append(_GeoPath(v, ("reflection",) * k,
                                    tuple(self.face_ids[f] for f in faces), length,
                                    self._reflection_factor(v, faces)))
        return out

    def _diffracted(self, rx: np.ndarray) -> Optional[_GeoPath]:
        tx = self.tx
        D = rx - tx
        denom = self.normals @ D
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offsets - self.normals @ tx) / denom
        cand = (np.abs(denom) > 1e-15) & (t > _EPS_T) & (t < 1 - _EPS_T)
        fi = np.nonzero(cand)[0]
        hits = fi[self._inside(tx[None, :] + t[fi, None] * D[None, :], fi)] if len(fi) else fi
        owners = sorted({self.world.faces[f].owner for f in hits} - {"ground"})
        lam = self.cfg.wavelength
        los = D / np.linalg.norm(D)
        candidates = []  # (v, point, face_id, ignore pair)
        prisms = {p[0]: p for p in self.world.prisms}

        def fresnel_v(point):
            d1 = np.linalg.norm(point - tx)
            d2 = np.linalg.norm(rx - point)
            rel = point - tx
            perp = rel - (rel @ los) * los
            h = np.linalg.norm(perp)
            # sign: negative when the edge lies on the LOS side that is open
            return h * math.sqrt(2.0 * (d1 + d2) / (lam * d1 * d2))

        for owner in owners:
            _, footprint, height, _ = prisms[owner]
            fmap = self.owner_faces[owner]
            pts = list(footprint)
            top_id = f"{owner}.top"
            a2, b2 = tx[:2], rx[:2]
            seg = b2 - a2
            for j, (p0, p1) in enumerate(zip(pts, pts[1:] + pts[:1])):
                p0, p1 = np.asarray(p0), np.asarray(p1)
                e = p1 - p0
                den = seg[0] * e[1] - seg[1] * e[0]
                if abs(den) < 1e-15:
                    continue
                w = p0 - a2
                s = (w[0] * e[1] - w[1] * e[0]) / den
                u = (w[0] * seg[1] - w[1] * seg[0]) / den
                if 0 < s < 1 and 0 <= u <= 1:
                    point = np.array([*(a2 + s * seg), height])
                    candidates.append((fresnel_v(point), point, top_id,
                                       (fmap[top_id], fmap[f"{owner}.wall{j}"])))
            n = len(pts)
            for j in range(n):
                c = np.asarray(pts[j])
                d1h = np.linalg.norm(c - tx[:2])
                d2h = np.linalg.norm(rx[:2] - c)
                if d1h + d2h == 0:
                    continue
                z = tx[2] + (rx[2] - tx[2]) * d1h / (d1h + d2h)
                if not 0 < z < height:
                    continue
                point = np.array([c[0], c[1], z])
                candidates.append((fresnel_v(point), point, f"{owner}.edge{j}",
                                   (fmap[f"{owner}.wall{(j - 1) % n}"], fmap[f"{owner}.wall{j}"])))
        if not candidates:
            return None
        # keep only the most obstructive top crossing per owner (the knife edge)
        best_top = {}
        for c in candidates:
            if c[2].endswith(".top"):
                if c[2] not in best_top or c[0] > best_top[c[2]][0]:
                    best_top[c[2]] = c
        candidates = [c for c in candidates if not c[2].endswith(".top")] + list(best_top.values())
        P = np.array([[tx, c[1]] for c in candidates]).reshape(-1, 2, 3)
        starts = np.concatenate([P[:, 0], P[:, 1]])
        ends = np.concatenate([P[:, 1], np.broadcast_to(rx, (len(candidates), 3))])
        ign1 = np.array([c[3][0] for c in candidates] * 2)
        ign2 = np.array([c[3][1] for c in candidates] * 2)
        blocked = self._blocked(starts, ends, ign1, ign2).reshape(2, -1).any(axis=0)
        free = [c for c, b in zip(candidates, blocked) if not b]
        if not free:
            return None
        v, point, fid, _ = min(free, key=lambda c: (c[0], c[2]))
        verts = np.array([tx, point, rx])
        length = float(np.linalg.norm(point - tx) + np.linalg.norm(rx - point))
        factor = 10.0 ** (-knife_edge_loss_db(v) / 20.0) + 0j
        return _GeoPath(verts, ("diffraction",), (fid,), length, factor)

    def geometric_paths(self, rx) -> list:
        rx = np.asarray(rx, dtype=float)
        paths = []
        direct_clear = not self._blocked(self.tx[None, :], rx[None, :])[0]
        if direct_clear:
            paths.append(_GeoPath(np.array([self.tx, rx]), (), (),
                                  float(np.linalg.norm(rx - self.tx)), 1.0 + 0j))
        paths.extend(self._reflected(rx))
        if self.cfg.max_diffractions >= 1 and not direct_clear:
            d = self._diffracted(rx)
            if d is not None:
                paths.append(d)
        return paths

    # -- per-beam weighting --------------------------------------------------

    def _angles(self, geo: list):
        first = np.array([g.vertices[1] - g.vertices[0] for g in geo])
        last = np.array([g.vertices[-2] - g.vertices[-1] for g in geo])

        def az_el(v):
            return (np.degrees(np.arctan2(v[:, 1], v[:, 0])),
                    np.degrees(np.arctan2(v[:, 2], np.hypot(v[:, 0], v[:, 1]))))

        return az_el(first), az_el(last)

    def amplitudes(self, geo: list, beam: AntennaPattern, dep=None) -> np.ndarray:
        """Complex field amplitude of each path at the receiver for one Tx beam."""
        cfg = self.cfg
        lam = cfg.wavelength
        if dep is None:
            dep, _ = self._angles(geo)
        length = np.array([g.length for g in geo])
        factor = np.array([g.factor for g in geo], dtype=complex)
        g_tx = beam.complex_gain(dep[0] - self.world.tx.facing_deg, dep[1])
        return (cfg.field_scale * g_tx * lam / (4.0 * math.pi * length) * factor
                * np.exp(-2j * math.pi * length / lam))

    def rx_gains(self, geo: list, rx_pattern: Optional[AntennaPattern],
                 rx_facing_deg: Optional[float] = None, arr=None) -> np.ndarray:
        if rx_pattern is None:
            return np.ones(len(geo), dtype=complex)
        if arr is None:
            _, arr = self._angles(geo)
        facing = self.world.rx_facing if rx_facing_deg is None else rx_facing_deg
        return rx_pattern.complex_gain(arr[0] - facing, arr[1])

    def _audible(self, a_rx: np.ndarray) -> np.ndarray:
        p = self.cfg.power_scale * np.abs(a_rx) ** 2
        with np.errstate(divide="ignore"):
            return (p > 0) & (10.0 * np.log10(p / 1e-3) >= self.cfg.sensitivity_dbm)

    def weight(self, geo: list, beam: AntennaPattern,
               rx_pattern: Optional[AntennaPattern] = None,
               rx_facing_deg: Optional[float] = None) -> list:
        """Attach beam-dependent amplitudes and drop rays below sensitivity."""
        if not geo:
            return []
        dep, arr = self._angles(geo)
        a = self.amplitudes(geo, beam, dep)
        keep = self._audible(a * self.rx_gains(geo, rx_pattern, rx_facing_deg, arr))
        out = []
        for i in np.nonzero(keep)[0]:
            g = geo[i]
            out.append(RayPath(tuple(tuple(float(c) for c in v) for v in g.vertices),
                               g.interactions, g.faces, (float(dep[0][i]), float(dep[1][i])),
                               (float(arr[0][i]), float(arr[1][i])), g.length, complex(a[i])))
        return out

    def beam_powers(self, geo: list, beams, rx_pattern: Optional[AntennaPattern] = None,
                    rx_facing_deg: Optional[float] = None):
        """Received watts and audible ray counts for every beam, shape ``(B,)`` each.

        Equivalent to ``received_power(weight(geo, beam, ...), ...)`` per beam.
        """
        B = len(beams)
        watts = np.zeros(B)
        counts = np.zeros(B, dtype=np.int64)
        if not geo:
            return watts, counts
        dep, arr = self._angles(geo)
        g_rx = self.rx_gains(geo, rx_pattern, rx_facing_deg, arr)
        for m, beam in enumerate(beams):
            a = self.amplitudes(geo, beam, dep) * g_rx
            keep = self._audible(a)
            counts[m] = int(np.count_nonzero(keep))
            watts[m] = _aggregate(a[keep], self.cfg)
        return watts, counts


def _aggregate(a: np.ndarray, cfg: PropagationConfig) -> float:
    if len(a) == 0:
        return 0.0
    if cfg.coherent:
        return float(cfg.power_scale * abs(np.sum(a)) ** 2)
    return float(cfg.power_scale * np.sum(np.abs(a) ** 2))


def dedupe_paths(paths: Sequence[RayPath]) -> list:
    """One path per face sequence, keeping the ray that passes closest to the receiver."""
    best = {}
    for p in paths:
        cur = best.get(p.faces_touched)
        if cur is None or p.miss_distance < cur.miss_distance:
            best[p.faces_touched] = p
    return [p for p in paths if best[p.faces_touched] is p]


def trace_paths(world: WorldModel, beam: AntennaPattern, rx, cfg: PropagationConfig,
                rx_pattern: Optional[AntennaPattern] = None,
                rx_facing_deg: Optional[float] = None) -> list:
    """All direct, reflected and (optionally) diffracted paths from Tx to ``rx``.

    ``beam`` is the transmit pattern of the active codebook beam.  If
    ``rx_pattern`` is given it only affects which rays fall below the
    sensitivity threshold; stored amplitudes exclude the receive gain.
    """
    tracer = Tracer(world, cfg)
    return dedupe_paths(tracer.weight(tracer.geometric_paths(rx), beam, rx_pattern,
                                      rx_facing_deg))


def received_power(paths: Sequence[RayPath], rx_pattern: Optional[AntennaPattern],
                   cfg: PropagationConfig, rx_facing_deg: float = 0.0) -> ReceivedPower:
    """Aggregate ray amplitudes weighted by the receive gain into power, dBm and SNR.

    Rays add coherently unless ``cfg.coherent`` is false, in which case
    their powers add.
    """
    if not paths:
        return ReceivedPower(0.0, -math.inf, -math.inf, 0)
    if rx_pattern is None:
        g = np.ones(len(paths), dtype=complex)
    else:
        az = np.array([p.arrival[0] for p in paths]) - rx_facing_deg
        el = np.array([p.arrival[1] for p in paths])
        g = rx_pattern.complex_gain(az, el)
    watts = _aggregate(np.array([p.amplitude for p in paths]) * g, cfg)
    dbm = power_to_dbm(watts, cfg.system_loss_db)
    return ReceivedPower(watts, dbm, snr_dbm(dbm, cfg.noise_power_dbm), len(paths))


def write_path_dump(paths: Sequence[RayPath], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ray_index", "kind", "path_length_m", "amplitude", "phase_rad",
                    "arrival_az_deg", "arrival_el_deg"])
        for i, p in enumerate(paths):
            w.writerow([i, p.kind, repr(p.path_length), repr(p.magnitude), repr(p.phase),
                        repr(p.arrival[0]), repr(p.arrival[1])])


# ---------------------------------------------------------------------------
# shooting-and-bouncing mode, used only to cross-check the image method


def _fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def shoot_paths(world: WorldModel, rx, cfg: PropagationConfig,
                beam: Optional[AntennaPattern] = None, chunk: int = 50_000) -> list:
    """Shooting-and-bouncing rays with a reception sphere, then exact-path correction.

    Rays leave the transmitter on a near-uniform spherical lattice with
    ``cfg.ray_spacing_deg`` spacing.  A ray is captured when it passes
    within :func:`reception_sphere_radius` of ``rx``; captured rays are
    grouped by the faces they hit, the closest ray of each group is kept,
    and its face sequence is re-solved exactly with the image method.
    """
    tracer = Tracer(world, cfg)
    rx = np.asarray(rx, dtype=float)
    radius = reception_sphere_radius(cfg)
    n_rays = int(math.ceil(4.0 * math.pi / math.radians(cfg.ray_spacing_deg) ** 2))
    dirs_all = _fibonacci_directions(n_rays)
    captures = {}
    for c0 in range(0, n_rays, chunk):
        dirs = dirs_all[c0:c0 + chunk]
        org = np.broadcast_to(tracer.tx, dirs.shape).copy()
        seq = [[] for _ in range(len(dirs))]
        alive = np.arange(len(dirs))
        travelled = np.zeros(len(dirs))
        for bounce in range(cfg.max_reflections + 1):
            o, d = org[alive], dirs[alive]
            if tracer.n_faces:
                denom = d @ tracer.normals.T
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (tracer.offsets[None, :] - o @ tracer.normals.T) / denom
                t = np.where((denom < 0) & (t > 1e-9), t, np.inf)
                si, fi = np.nonzero(np.isfinite(t))
                ok = tracer._inside(o[si] + t[si, fi][:, None] * d[si], fi)
                tt = np.full(t.shape, np.inf)
                tt[si[ok], fi[ok]] = t[si[ok], fi[ok]]
                hit_f = np.argmin(tt, axis=1)
                hit_t = tt[np.arange(len(o)), hit_f]
            else:
                hit_f = np.zeros(len(o), dtype=int)
                hit_t = np.full(len(o), np.inf)
            s = np.einsum("ij,ij->i", rx - o, d)
            miss = np.linalg.norm(o + np.clip(s, 0, None)[:, None] * d - rx, axis=1)
            cap = (s > 0) & (s < hit_t) & (miss <= radius) & (travelled[alive] + s <= cfg.d_max)
            for r in np.nonzero(cap)[0]:
                key = tuple(seq[alive[r]])
                if key not in captures or miss[r] < captures[key]:
                    captures[key] = float(miss[r])
            finite = np.isfinite(hit_t)
            if bounce == cfg.max_reflections or not finite.any():
                break
            keep = alive[finite]
            f = hit_f[finite]
            o2 = o[finite] + hit_t[finite][:, None] * d[finite]
            n = tracer.normals[f]
            d2 = d[finite] - 2.0 * np.einsum("ij,ij->i", d[finite], n)[:, None] * n
            for r, ff in zip(keep, f):
                seq[r].append(int(ff))
            travelled[keep] += hit_t[finite]
            org[keep], dirs[keep] = o2, d2
            alive = keep
    exact = {tuple(tracer.face_ids.index(fid) for fid in g.faces): g
             for g in tracer.geometric_paths(rx) if "diffraction" not in g.interactions}
    geo = [exact[k] for k in sorted(captures) if k in exact]
    beam = beam if beam is not None else isotropic_pattern()
    paths = tracer.weight(geo, beam)
    by_faces = {tuple(tracer.face_ids.index(f) for f in p.faces_touched): p for p in paths}
    out = []
    for k in sorted(by_faces):
        p = by_faces[k]
        out.append(RayPath(p.vertices, p.interactions, p.faces_touched, p.departure,
                           p.arrival, p.path_length, p.amplitude, captures[k]))
    return dedupe_paths(out)
