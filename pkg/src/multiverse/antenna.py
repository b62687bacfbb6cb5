"""Gridded antenna patterns, codebooks and pattern discrepancy scores.

Angles follow the antenna's local frame: azimuth is measured in the
horizontal plane from boresight, counter-clockwise positive; elevation is
measured up from the horizontal plane.  Gains are stored as linear
*amplitude* gains, i.e. ``10 ** (gain_db / 20)``, with an optional relative
phase in radians.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import (DuplicateCellError, GridMismatchError, IncompleteGridError,
                     SizeMismatchError, SpecParseError, ZeroNormSampleError)

_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AntennaPattern:
    az_min: float
    az_step: float
    el_min: float
    el_step: float
    amplitude: np.ndarray  # shape (n_el, n_az)
    phase: np.ndarray  # shape (n_el, n_az), radians
    floor: float = 0.0

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=float)
        ph = np.zeros_like(amp) if self.phase is None else np.asarray(self.phase, dtype=float)
        if amp.ndim != 2 or ph.shape != amp.shape:
            raise ValueError("amplitude and phase must be 2D arrays of equal shape")
        if not (np.all(np.isfinite(amp)) and np.all(np.isfinite(ph))):
            raise ValueError("pattern values must be finite")
        if np.any(amp < 0):
            raise ValueError("amplitudes must be non-negative")
        if self.az_step <= 0 or self.el_step <= 0:
            raise ValueError("grid steps must be positive")
        amp.setflags(write=False)
        ph.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    @property
    def shape(self):
        return self.amplitude.shape

    @property
    def az_max(self) -> float:
        return self.az_min + (self.shape[1] - 1) * self.az_step

    @property
    def el_max(self) -> float:
        return self.el_min + (self.shape[0] - 1) * self.el_step

    @property
    def az_grid(self) -> np.ndarray:
        return self.az_min + self.az_step * np.arange(self.shape[1])

    @property
    def el_grid(self) -> np.ndarray:
        return self.el_min + self.el_step * np.arange(self.shape[0])

    def same_grid(self, other: "AntennaPattern") -> bool:
        return (self.shape == other.shape
                and math.isclose(self.az_min, other.az_min, abs_tol=_TOL)
                and math.isclose(self.az_step, other.az_step, abs_tol=_TOL)
                and math.isclose(self.el_min, other.el_min, abs_tol=_TOL)
                and math.isclose(self.el_step, other.el_step, abs_tol=_TOL))

    def __eq__(self, other):
        if not isinstance(other, AntennaPattern):
            return NotImplemented
        return (self.same_grid(other) and self.floor == other.floor
                and np.array_equal(self.amplitude, other.amplitude)
                and np.array_equal(self.phase, other.phase))

    __hash__ = None

    def gain_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.amplitude)

    def lookup(self, az, el):
        """Vectorised bilinear interpolation of ``(amplitude, phase)``.

        Azimuths are wrapped into [-180, 180) before lookup, and a query at
        +180 also matches a grid that ends at +180.  Directions outside the
        sampled sector return ``(floor, 0)``.
        """
        az = np.asarray(az, dtype=float)
        el = np.asarray(el, dtype=float)
        az = np.where(az >= 180.0, az - 360.0, az)
        az = (az + 180.0) % 360.0 - 180.0
        # a grid spanning up to +180 should still catch -180 after wrapping
        az = np.where((az < self.az_min - _TOL) & (az + 360.0 <= self.az_max + _TOL),
                      az + 360.0, az)
        n_el, n_az = self.shape
        fa = (az - self.az_min) / self.az_step
        fe = (el - self.el_min) / self.el_step
        inside = ((fa >= -_TOL) & (fa <= n_az - 1 + _TOL)
                  & (fe >= -_TOL) & (fe <= n_el - 1 + _TOL))
        fa = np.clip(fa, 0.0, n_az - 1)
        fe = np.clip(fe, 0.0, n_el - 1)
        ia = np.minimum(np.floor(fa).astype(int), max(n_az - 2, 0))
        ie = np.minimum(np.floor(fe).astype(int), max(n_el - 2, 0))
        ta = fa - ia if n_az > 1 else np.zeros_like(fa)
        te = fe - ie if n_el > 1 else np.zeros_like(fe)
        ia1 = np.minimum(ia + 1, n_az - 1)
        ie1 = np.minimum(ie + 1, n_el - 1)

        def interp(grid):
            return ((1 - te) * ((1 - ta) * grid[ie, ia] + ta * grid[ie, ia1])
                    + te * ((1 - ta) * grid[ie1, ia] + ta * grid[ie1, ia1]))

        amp = np.where(inside, interp(self.amplitude), self.floor)
        ph = np.where(inside, interp(self.phase), 0.0)
        return amp, ph

    def complex_gain(self, az, el):
        amp, ph = self.lookup(az, el)
        return amp * np.exp(1j * ph)


def gain(pattern: AntennaPattern, az: float, el: float) -> tuple:
    """Amplitude and phase of ``pattern`` toward ``(az, el)`` degrees."""
    amp, ph = pattern.lookup(az, el)
    return float(amp), float(ph)


def isotropic_pattern(step: float = 1.0) -> AntennaPattern:
    n_az = int(round(360.0 / step)) + 1
    n_el = int(round(180.0 / step)) + 1
    ones = np.ones((n_el, n_az))
    return AntennaPattern(-180.0, step, -90.0, step, ones, np.zeros_like(ones))


def _axis_values(values, step, what, reference=None):
    """Map sorted distinct sample coordinates onto an evenly stepped target axis.

    The k-th distinct coordinate goes to the k-th target cell, anchored so the
    sample nearest ``reference`` (or the first sample) keeps its snapped
    position.  Source coordinates must themselves be evenly spaced.
    """
    vals = np.array(sorted(values))
    if len(vals) > 2:
        diffs = np.diff(vals)
        if np.max(diffs) - np.min(diffs) > 1e-6 * max(1.0, np.max(np.abs(vals))):
            raise IncompleteGridError(f"{what} samples are not evenly spaced")
    src_step = float(vals[1] - vals[0]) if len(vals) > 1 else (step or 1.0)
    step = src_step if step is None else float(step)
    if reference is None:
        anchor = 0
    else:
        anchor = int(np.argmin(np.abs(vals - reference)))
    anchor_val = round(vals[anchor] / step) * step
    target = anchor_val + (np.arange(len(vals)) - anchor) * step
    return vals, step, target


def load_pattern_grid(samples: Iterable[Sequence[float]], az_step: float | None = None,
                      el_step: float | None = None, floor: float = 0.0) -> AntennaPattern:
    """Build a pattern from ``(az_deg, el_deg, gain_db)`` samples.

    Sample coordinates are re-gridded onto an integer-step grid by rank: the
    i-th distinct azimuth maps to the i-th target column, keeping azimuth 0
    as the anchor, and likewise for elevation anchored at the lowest sample.
    No sample is merged or dropped, so a 101 x 10 grid at 1.8/3.6 degree
    steps becomes a 101 x 10 grid at 2/4 degrees spanning [-100, 100] x
    [0, 36].  With the steps left as ``None`` the source spacing is kept.

    Phase is set to zero everywhere (measured patterns carry SNR only).
    """
    rows = [tuple(float(v) for v in s) for s in samples]
    if not rows:
        raise IncompleteGridError("no samples")
    keys = [(round(a, 9), round(e, 9)) for a, e, _ in rows]
    if len(set(keys)) != len(keys):
        raise DuplicateCellError("two samples share the same (az, el) cell")
    az_vals, az_step, az_target = _axis_values({k[0] for k in keys}, az_step, "azimuth", 0.0)
    el_vals, el_step, el_target = _axis_values({k[1] for k in keys}, el_step, "elevation")
    if len(keys) != len(az_vals) * len(el_vals):
        raise IncompleteGridError(
            f"{len(keys)} samples for a {len(el_vals)} x {len(az_vals)} grid")
    az_index = {v: i for i, v in enumerate(az_vals)}
    el_index = {v: i for i, v in enumerate(el_vals)}
    amp = np.zeros((len(el_vals), len(az_vals)))
    for (a, e), (_, _, g) in zip(keys, rows):
        amp[el_index[e], az_index[a]] = 0.0 if g == -math.inf else 10.0 ** (g / 20.0)
    return AntennaPattern(float(az_target[0]), az_step, float(el_target[0]), el_step,
                          amp, np.zeros_like(amp), floor)


def read_pattern_csv(path, az_step=None, el_step=None) -> AntennaPattern:
    """Read a pattern file with header ``az_deg,el_deg,gain_db``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"az_deg", "el_deg", "gain_db"} <= set(reader.fieldnames):
            raise SpecParseError(f"{path}: expected header az_deg,el_deg,gain_db")
        try:
            samples = [(float(r["az_deg"]), float(r["el_deg"]), float(r["gain_db"]))
                       for r in reader]
        except (TypeError, ValueError) as exc:
            raise SpecParseError(f"{path}: non-numeric value") from exc
    return load_pattern_grid(samples, az_step, el_step)


def write_pattern_csv(pattern: AntennaPattern, path) -> None:
    g = pattern.gain_db()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["az_deg", "el_deg", "gain_db"])
        for i, el in enumerate(pattern.el_grid):
            for j, az in enumerate(pattern.az_grid):
                w.writerow([repr(float(az)), repr(float(el)), repr(float(g[i, j]))])


# ---------------------------------------------------------------------------
# codebooks


@dataclass(frozen=True, eq=False)
class Codebook:
    beams: tuple

    def __post_init__(self):
        beams = tuple(self.beams)
        if not beams:
            raise ValueError("codebook needs at least one beam")
        if not all(b.same_grid(beams[0]) for b in beams[1:]):
            raise GridMismatchError("codebook beams must share grid geometry")
        object.__setattr__(self, "beams", beams)

    def __len__(self):
        return len(self.beams)

    def __getitem__(self, i):
        return self.beams[i]

    def __iter__(self):
        return iter(self.beams)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))

    __hash__ = None

    @property
    def size(self) -> int:
        return len(self.beams)


def load_codebook(manifest_path) -> Codebook:
    """Load a codebook manifest: YAML with a ``beams`` list of pattern CSV paths.

    Relative paths resolve against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        doc = yaml.safe_load(manifest_path.read_text())
    except yaml.YAMLError as exc:
        raise SpecParseError(f"{manifest_path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("beams"), list):
        raise SpecParseError(f"{manifest_path}: expected a 'beams' list")
    steps = doc.get("az_step"), doc.get("el_step")
    base = manifest_path.parent
    return Codebook(tuple(read_pattern_csv(base / p, *steps) for p in doc["beams"]))


def save_codebook(codebook: Codebook, directory, stem: str = "beam") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for m, beam in enumerate(codebook):
        name = f"{stem}_{m:02d}.csv"
        write_pattern_csv(beam, directory / name)
        names.append(name)
    manifest = directory / "codebook.yaml"
    manifest.write_text(yaml.safe_dump({"schema_version": 1, "beams": names}, sort_keys=True))
    return manifest


def synthetic_codebook(n_beams: int = 34, n_columns: int = 16, n_rows: int = 2,
                       az_span: tuple = (-180.0, 180.0), el_span: tuple = (-88.0, 88.0),
                       az_step: float = 2.0, el_step: float = 4.0,
                       steer_az: tuple = (-60.0, 60.0), steer_el: tuple = (0.0, 12.0),
                       back_lobe_db: float = -25.0) -> Codebook:
    """Phased-array codebook standing in for measured 60 GHz sector patterns.

    Beams steer a half-wavelength planar array of ``n_rows`` x ``n_columns``
    elements across ``steer_az`` and alternate between the two ``steer_el``
    tilts.  Each pattern is the normalised array factor times a cosine
    element pattern, so boresight gain is about ``10 log10(N)`` dBi.  The
    element never drops below ``back_lobe_db`` so no direction is a hard null.
    """
    az = np.arange(az_span[0], az_span[1] + az_step / 2, az_step)
    el = np.arange(el_span[0], el_span[1] + el_step / 2, el_step)
    A, E = np.meshgrid(np.radians(az), np.radians(el))
    u = np.cos(E) * np.sin(A)   # horizontal direction cosine
    v = np.sin(E)               # vertical direction cosine
    element = np.clip(np.cos(A) * np.cos(E), 0.0, None) + 10.0 ** (back_lobe_db / 10.0)
    cols = np.arange(n_columns) - (n_columns - 1) / 2
    rows = np.arange(n_rows) - (n_rows - 1) / 2
    steer = np.linspace(steer_az[0], steer_az[1], n_beams)
    beams = []
    for m in range(n_beams):
        a0 = math.radians(steer[m])
        e0 = math.radians(steer_el[m % len(steer_el)])
        u0, v0 = math.cos(e0) * math.sin(a0), math.sin(e0)
        af_h = np.exp(1j * np.pi * cols[None, None, :] * (u - u0)[..., None]).sum(-1)
        af_v = np.exp(1j * np.pi * rows[None, None, :] * (v - v0)[..., None]).sum(-1)
        power = np.abs(af_h * af_v) ** 2 / (n_columns * n_rows) * element
        beams.append(AntennaPattern(float(az[0]), az_step, float(el[0]), el_step,
                                    np.sqrt(power), np.zeros_like(power)))
    return Codebook(tuple(beams))


# ---------------------------------------------------------------------------
# discrepancy


@dataclass(frozen=True)
class PatternSimilarity:
    delta: float
    count: int


def pattern_vectors(pattern: AntennaPattern, radius: str = "amplitude") -> np.ndarray:
    """Cartesian sample vectors ``(n_el * n_az, 3)`` of a pattern.

    Each grid cell becomes the point at spherical direction ``(az, el)``
    whose signed length is the linear amplitude (``radius="amplitude"``),
    the linear power (``"power"``) or the gain in dB (``"db"``).
    """
    A, E = np.meshgrid(np.radians(pattern.az_grid), np.radians(pattern.el_grid))
    if radius == "amplitude":
        r = pattern.amplitude
    elif radius == "power":
        r = pattern.amplitude ** 2
    elif radius == "db":
        r = pattern.gain_db()
    else:
        raise ValueError(f"unknown radius convention {radius!r}")
    dirs = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
    return (r[..., None] * dirs).reshape(-1, 3)


def vector_discrepancy(ref: np.ndarray, other: np.ndarray) -> float:
    """Mean normalised length of per-sample difference vectors.

    Each difference is divided by the mean length of the two samples, which
    equals the reference length whenever both have equal norm and keeps the
    score in [0, 2] (0 for identical sets, 2 for antipodal ones).
    """
    ref = np.asarray(ref, dtype=float)
    other = np.asarray(other, dtype=float)
    if ref.shape != other.shape:
        raise GridMismatchError("sample sets differ in shape")
    n_ref = np.linalg.norm(ref, axis=1)
    if np.any(~np.isfinite(n_ref)) or np.any(n_ref == 0):
        raise ZeroNormSampleError("reference sample with zero or non-finite magnitude")
    n_other = np.linalg.norm(other, axis=1)
    diff = np.linalg.norm(other - ref, axis=1)
    return float(np.mean(diff / ((n_ref + n_other) / 2.0)))


def pattern_discrepancy(a: AntennaPattern, b: AntennaPattern,
                        radius: str = "amplitude") -> PatternSimilarity:
    """Discrepancy of pattern ``b`` against reference pattern ``a``."""
    if not a.same_grid(b):
        raise GridMismatchError("patterns do not share grid geometry")
    va, vb = pattern_vectors(a, radius), pattern_vectors(b, radius)
    return PatternSimilarity(vector_discrepancy(va, vb), len(va))


def mean_codebook_discrepancy(ca: Codebook, cb: Codebook, radius: str = "amplitude") -> float:
    if len(ca) != len(cb):
        raise SizeMismatchError(f"codebook sizes differ: {len(ca)} vs {len(cb)}")
    return float(np.mean([pattern_discrepancy(a, b, radius).delta for a, b in zip(ca, cb)]))
