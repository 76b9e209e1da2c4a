"""Grid classification of initial conditions on the stroboscopic section.

Conservative mode labels each cell PullIn / Escape / Bounded (with the peak
|x| recorded from dense output); damped mode additionally matches section
points against supplied attractor cycles, classifying cells by which
attractor captures them.  Cells are sampled at their centers, classified
independently (embarrassingly parallel), and assembled deterministically,
so two sweeps of the same spec are bit-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .integrator import IntegratorConfig
from .model import ModelParams, stiffness_tables
from .poincare import PeriodicOrbit, PoincareMapSpec

CLASS_UNRESOLVED = "Unresolved"
CLASS_PULL_IN = "PullIn"
CLASS_ESCAPE = "Escape"
CLASS_BOUNDED = "Bounded"

_CODE_NAME = {0: CLASS_UNRESOLVED, 1: CLASS_PULL_IN, 2: CLASS_ESCAPE,
              3: CLASS_BOUNDED}

DEFAULT_ITER_CONSERVATIVE = 500
DEFAULT_ITER_DAMPED = 5000
MATCH_BLOCK = 50

# fixed raster palette (RGB), documented in the README
PALETTE = {
    "attractor0": (40, 70, 220),      # blue
    "attractor1": (220, 40, 40),      # red
    "attractor_other": (160, 40, 200),
    "unstable": (255, 255, 255),      # white: pull-in and escape
    "unresolved": (128, 128, 128),    # gray
    "bounded": (40, 160, 60),         # green (conservative mode)
}


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of initial conditions and the classification budget."""

    x_range: tuple[float, float]
    v_range: tuple[float, float]
    nx: int
    nv: int
    iterations: int | None = None       # None -> mode-dependent default
    attractors: tuple[PeriodicOrbit, ...] = ()
    match_tol: float = 1e-4

    def __post_init__(self):
        if not (self.x_range[0] < self.x_range[1] and self.v_range[0] < self.v_range[1]):
            raise ValueError("ranges must satisfy lo < hi")
        if self.nx < 2 or self.nv < 2:
            raise ValueError("nx and nv must be >= 2")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.match_tol <= 0:
            raise ValueError("match_tol must be positive")
        object.__setattr__(self, "attractors", tuple(self.attractors))

    @property
    def damped_mode(self) -> bool:
        return len(self.attractors) > 0

    def effective_iterations(self) -> int:
        if self.iterations is not None:
            return self.iterations
        return DEFAULT_ITER_DAMPED if self.damped_mode else DEFAULT_ITER_CONSERVATIVE

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Center coordinates: x varies along columns (i), v along rows (j)."""
        x_lo, x_hi = self.x_range
        v_lo, v_hi = self.v_range
        dx = (x_hi - x_lo) / self.nx
        dv = (v_hi - v_lo) / self.nv
        xs = x_lo + dx * (np.arange(self.nx) + 0.5)
        vs = v_lo + dv * (np.arange(self.nv) + 0.5)
        return xs, vs


@dataclass(frozen=True)
class CellRecord:
    classification: str                 # PullIn | Escape | Bounded | Attractor(k) | Unresolved
    attractor_id: int | None
    amplitude: float | None
    t_event: float | None


@dataclass(frozen=True)
class BasinGrid:
    """Classified grid; arrays are indexed [j, i] = [v-row, x-column]."""

    spec: GridSpec
    params: ModelParams
    codes: np.ndarray        # int8: 0 unresolved, 1 pull-in, 2 escape, 3 bounded, 4 attractor
    attractor_ids: np.ndarray   # int16, -1 where not attractor-classified
    amplitudes: np.ndarray   # float64, NaN where not applicable
    t_events: np.ndarray     # float64, NaN where no event

    def cell(self, i: int, j: int) -> CellRecord:
        code = int(self.codes[j, i])
        att = int(self.attractor_ids[j, i])
        amp = float(self.amplitudes[j, i])
        tev = float(self.t_events[j, i])
        if code == 4:
            name = f"Attractor({att})"
        else:
            name = _CODE_NAME[code]
        return CellRecord(
            classification=name,
            attractor_id=att if code == 4 else None,
            amplitude=None if math.isnan(amp) else amp,
            t_event=None if math.isnan(tev) else tev)

    def class_name(self, i: int, j: int) -> str:
        return self.cell(i, j).classification

    def fraction(self, name: str) -> float:
        total = self.codes.size
        if name == CLASS_BOUNDED:
            return float(np.sum(self.codes == 3)) / total
        if name == CLASS_PULL_IN:
            return float(np.sum(self.codes == 1)) / total
        if name == CLASS_ESCAPE:
            return float(np.sum(self.codes == 2)) / total
        if name == CLASS_UNRESOLVED:
            return float(np.sum(self.codes == 0)) / total
        raise ValueError(f"unknown class {name!r}")

    def to_csv(self, fh) -> None:
        """Rows "i,j,x0,v0,class,amplitude,t_event"; blank fields where absent."""
        xs, vs = self.spec.cell_centers()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "x0", "v0", "class", "amplitude", "t_event"])
        for j in range(self.spec.nv):
            for i in range(self.spec.nx):
                rec = self.cell(i, j)
                w.writerow([i, j, repr(float(xs[i])), repr(float(vs[j])),
                            rec.classification,
                            "" if rec.amplitude is None else repr(rec.amplitude),
                            "" if rec.t_event is None else repr(rec.t_event)])

    def to_pgm(self, fh) -> None:
        """Plain-text PGM of amplitudes, linearly mapped onto 1..255.

        Cells without an amplitude (pull-in, escape, unresolved) are 0.
        Row 0 is the top of the window (largest v), matching image convention.
        """
        amp = self.amplitudes
        finite = amp[np.isfinite(amp)]
        lo = float(finite.min()) if finite.size else 0.0
        hi = float(finite.max()) if finite.size else 1.0
        span = hi - lo if hi > lo else 1.0
        img = np.zeros(amp.shape, dtype=np.int64)
        mask = np.isfinite(amp)
        img[mask] = 1 + np.rint(254.0 * (amp[mask] - lo) / span).astype(np.int64)
        img = img[::-1, :]
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in img:
            fh.write(" ".join(str(int(v)) for v in row))
            fh.write("\n")

    def to_ppm(self, fh) -> None:
        """Plain-text PPM with the fixed class palette (see PALETTE)."""
        h, w_ = self.codes.shape
        fh.write(f"P3\n{w_} {h}\n255\n")
        for j in range(h - 1, -1, -1):
            parts = []
            for i in range(w_):
                code = int(self.codes[j, i])
                if code in (1, 2):
                    rgb = PALETTE["unstable"]
                elif code == 3:
                    rgb = PALETTE["bounded"]
                elif code == 4:
                    att = int(self.attractor_ids[j, i])
                    rgb = (PALETTE["attractor0"] if att == 0 else
                           PALETTE["attractor1"] if att == 1 else
                           PALETTE["attractor_other"])
                else:
                    rgb = PALETTE["unresolved"]
                parts.append(f"{rgb[0]} {rgb[1]} {rgb[2]}")
            fh.write(" ".join(parts))
            fh.write("\n")


def _pack(p: ModelParams, cfg: IntegratorConfig):
    kind, xs, cs = stiffness_tables(p)
    return (p.c, p.alpha, p.lam, p.delta, p.omega, kind, xs, cs,
            cfg.rel_tol, cfg.abs_tol, cfg.effective_max_step(p),
            cfg.pull_in_threshold, cfg.escape_floor)


def _attractor_tables(spec: GridSpec, p: ModelParams,
                      cfg: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flatten attractor cycle points into (points, offsets) kernel tables."""
    pts: list[tuple[float, float]] = []
    offsets = [0]
    for orb in spec.attractors:
        cyc = orb.cycle_points(PoincareMapSpec(p, cfg, orb.n))
        pts.extend(cyc)
        offsets.append(len(pts))
    if not pts:
        return np.empty((0, 2)), np.zeros(1, dtype=np.int64)
    return np.asarray(pts, dtype=float), np.asarray(offsets, dtype=np.int64)


def classify_cell(p: ModelParams, cfg: IntegratorConfig, spec: GridSpec,
                  s0: tuple[float, float]) -> CellRecord:
    """Classify a single initial condition under the grid's budget and mode."""
    att_pts, att_off = _attractor_tables(spec, p, cfg)
    block = MATCH_BLOCK if spec.damped_mode else 0
    code, att, amp, tev = K._classify_one(
        *_pack(p, cfg), float(s0[0]), float(s0[1]),
        spec.effective_iterations(), block, att_pts, att_off, spec.match_tol)
    code = int(code)
    name = f"Attractor({int(att)})" if code == 4 else _CODE_NAME[code]
    return CellRecord(
        classification=name,
        attractor_id=int(att) if code == 4 else None,
        amplitude=None if math.isnan(amp) else float(amp),
        t_event=None if math.isnan(tev) else float(tev))


def sweep(p: ModelParams, cfg: IntegratorConfig, spec: GridSpec,
          progress=None) -> BasinGrid:
    """Classify every cell center of the grid.

    ``progress`` is an optional callable (cells_done, cells_total), invoked
    after each completed row of cells.  The result is independent of worker
    scheduling: each cell is classified in isolation and stored by index.
    """
    xs, vs = spec.cell_centers()
    att_pts, att_off = _attractor_tables(spec, p, cfg)
    block = MATCH_BLOCK if spec.damped_mode else 0
    iterations = spec.effective_iterations()
    packed = _pack(p, cfg)

    codes = np.empty((spec.nv, spec.nx), dtype=np.int64)
    atts = np.empty((spec.nv, spec.nx), dtype=np.int64)
    amps = np.empty((spec.nv, spec.nx), dtype=np.float64)
    tevs = np.empty((spec.nv, spec.nx), dtype=np.float64)

    total = spec.nx * spec.nv
    cx_row = np.ascontiguousarray(xs)
    for j in range(spec.nv):
        cv_row = np.full(spec.nx, vs[j])
        out_code = np.empty(spec.nx, dtype=np.int64)
        out_att = np.empty(spec.nx, dtype=np.int64)
        out_amp = np.empty(spec.nx, dtype=np.float64)
        out_tev = np.empty(spec.nx, dtype=np.float64)
        K.sweep_core(*packed, cx_row, cv_row, iterations, block,
                     att_pts, att_off, spec.match_tol,
                     out_code, out_att, out_amp, out_tev)
        codes[j] = out_code
        atts[j] = out_att
        amps[j] = out_amp
        tevs[j] = out_tev
        if progress is not None:
            progress((j + 1) * spec.nx, total)

    return BasinGrid(spec=spec, params=p,
                     codes=codes.astype(np.int8),
                     attractor_ids=atts.astype(np.int16),
                     amplitudes=amps, t_events=tevs)
