"""Sweeps over two-mode Gaussian states parametrized by purities and seralian.

Cells of the atlas are labelled by the purity ratios ``r1 = mu / mu1`` and
``r2 = mu / mu2``. Inside a cell the global purity ``mu`` is sampled
log-uniformly (stratified, with ``mu`` at its upper end always included) and,
for each purity triple, the seralian sweeps the interval of physical states.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, InsufficientGrid, Unphysical
from .gaussian import admissible, conditioning_tol, from_purities
from .quantifiers import negativity_bounds, negativity_exact, relative_error

__all__ = [
    "RatioGrid",
    "AtlasCell",
    "ContourPoint",
    "ContourTable",
    "delta_interval",
    "sweep_cell",
    "sweep_atlas",
    "threshold_curves",
    "atlas_to_csv",
    "parse_grid",
]

BISECT_TOL = 1e-9
SCAN_POINTS = 257


@dataclass(frozen=True)
class RatioGrid:
    """Ratio axes plus per-cell sampling density."""

    r1_values: tuple
    r2_values: tuple
    mu_samples: int = 32
    delta_samples: int = 9
    mu_min: float = 1e-3

    def __post_init__(self):
        for name in ("r1_values", "r2_values"):
            values = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise InputError(f"{name} is empty")
            if any(not v > 0 for v in values):
                raise InputError(f"{name} must be positive")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise InputError(f"{name} must be strictly ascending")
        if self.mu_samples < 1 or self.delta_samples < 1:
            raise InputError("mu_samples and delta_samples must be positive")
        if not 0 < self.mu_min <= 1:
            raise InputError("mu_min must lie in (0, 1]")

    @classmethod
    def linear(cls, lo: float = 1.0, hi: float = 4.0, steps: int = 31, **kw) -> "RatioGrid":
        axis = tuple(np.linspace(lo, hi, steps).round(12))
        return cls(axis, axis, **kw)


@dataclass
class AtlasCell:
    r1: float
    r2: float
    E_av: Optional[float]
    delta_max: Optional[float]
    n_physical: int
    n_entangled: int
    n_failed: int = 0
    bracket_violations: int = 0
    endpoint_gap: Optional[float] = None
    interior_violations: int = 0

    @property
    def empty(self) -> bool:
        return self.n_entangled == 0


def delta_interval(mu, mu1, mu2, tol: float = BISECT_TOL):
    """Physical seralian interval for each purity triple (vectorized).

    A coarse scan over ``[0, 1 + 1/mu^2]`` finds admissible points; both
    edges are then refined by bisection to ``tol`` (relative to the edge),
    keeping the admissible side. Rows with no admissible point get NaN.
    """
    mu, mu1, mu2 = (np.atleast_1d(np.asarray(x, dtype=float)) for x in (mu, mu1, mu2))
    top = 1 + 1 / mu ** 2
    grid = top[:, None] * np.linspace(0.0, 1.0, SCAN_POINTS)[None, :]
    ok = admissible(mu[:, None], mu1[:, None], mu2[:, None], grid)
    found = ok.any(axis=1)
    rows = np.arange(len(mu))
    first = np.argmax(ok, axis=1)
    last = SCAN_POINTS - 1 - np.argmax(ok[:, ::-1], axis=1)

    def refine(good, bad):
        good, bad = good.copy(), bad.copy()
        active = good != bad
        while np.any(active & (np.abs(good - bad) > tol * np.maximum(1.0, np.abs(good)))):
            mid = (good + bad) / 2
            hit = admissible(mu, mu1, mu2, mid)
            good = np.where(active & hit, mid, good)
            bad = np.where(active & ~hit, mid, bad)
        return good

    lo_good = grid[rows, first]
    lo_bad = grid[rows, np.maximum(first - 1, 0)]
    hi_good = grid[rows, last]
    hi_bad = grid[rows, np.minimum(last + 1, SCAN_POINTS - 1)]
    lo = refine(lo_good, lo_bad)
    hi = refine(hi_good, hi_bad)
    lo = np.where(found, lo, np.nan)
    hi = np.where(found, hi, np.nan)
    return lo, hi


def _mu_samples(r1, r2, grid: RatioGrid, rng):
    mu_top = min(1.0, r1, r2)
    if mu_top <= grid.mu_min:
        return np.array([mu_top])
    n = grid.mu_samples - 1
    edges = np.linspace(math.log(grid.mu_min), math.log(mu_top), n + 1)
    draws = edges[:-1] + (edges[1:] - edges[:-1]) * rng.random(n)
    return np.append(np.exp(draws), mu_top)


def sweep_cell(r1: float, r2: float, grid: RatioGrid, rng) -> AtlasCell:
    mus = _mu_samples(r1, r2, grid, rng)
    mu1s, mu2s = mus / r1, mus / r2
    keep = (mu1s <= 1) & (mu2s <= 1)
    mus, mu1s, mu2s = mus[keep], mu1s[keep], mu2s[keep]
    lo, hi = delta_interval(mus, mu1s, mu2s)

    negs = []
    deltas = []
    n_physical = n_failed = violations = interior = 0
    gap = 0.0
    for mu, mu1, mu2, d_lo, d_hi in zip(mus, mu1s, mu2s, lo, hi):
        if np.isnan(d_lo):
            continue
        e_min, e_max = negativity_bounds(mu, mu1, mu2)
        tol = float(conditioning_tol(mu, mu1, mu2))
        if e_max > 0:
            deltas.append(relative_error(e_min, e_max))
        exact = []
        for delta in np.linspace(d_lo, d_hi, grid.delta_samples):
            try:
                cov = from_purities(mu, mu1, mu2, delta)
            except Unphysical:
                n_failed += 1
                continue
            n_physical += 1
            e = negativity_exact(cov)
            exact.append(e)
            if not e_min - tol <= e <= e_max + tol:
                violations += 1
        if not exact:
            continue
        negs.extend(exact)
        # the seralian extremes realize the bounds; interior samples lie between
        ends = (exact[0], exact[-1])
        gap = max(gap, abs(ends[0] - e_max), abs(ends[-1] - e_min))
        lo_e, hi_e = min(ends), max(ends)
        interior += sum(1 for e in exact[1:-1] if not lo_e - tol <= e <= hi_e + tol)

    entangled = [e for e in negs if e > 0]
    return AtlasCell(
        r1=r1, r2=r2,
        E_av=float(np.mean(entangled)) if entangled else None,
        delta_max=float(max(deltas)) if entangled and deltas else None,
        n_physical=n_physical, n_entangled=len(entangled), n_failed=n_failed,
        bracket_violations=violations, endpoint_gap=gap if n_physical else None,
        interior_violations=interior,
    )


def _cell_job(args):
    index, r1, r2, grid, seed = args
    return sweep_cell(r1, r2, grid, np.random.default_rng([seed, index]))


def sweep_atlas(grid: RatioGrid, seed: int = 0, workers: int = 1,
                progress=None) -> list:
    """Sweep every ``(r1, r2)`` cell of ``grid``; ``r2`` varies fastest.

    Each cell draws its ``mu`` samples from a generator seeded by
    ``(seed, cell index)``, so results do not depend on ``workers``.
    ``progress`` is called as ``progress(done, total)``.
    """
    jobs = [(i * len(grid.r2_values) + j, r1, r2, grid, seed)
            for i, r1 in enumerate(grid.r1_values)
            for j, r2 in enumerate(grid.r2_values)]
    cells = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell in pool.map(_cell_job, jobs, chunksize=8):
                cells.append(cell)
                if progress:
                    progress(len(cells), len(jobs))
    else:
        for job in jobs:
            cells.append(_cell_job(job))
            if progress:
                progress(len(cells), len(jobs))
    return cells


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContourPoint:
    level: float
    axis: str       # "r1" (row at fixed r2), "r2" (column at fixed r1) or "diagonal"
    fixed: Optional[float]
    crossing: float


@dataclass
class ContourTable:
    points: list = field(default_factory=list)

    def at(self, level: float, axis: str) -> list:
        return [p for p in self.points if p.level == level and p.axis == axis]

    def diagonal(self, level: float) -> Optional[float]:
        hits = self.at(level, "diagonal")
        return hits[0].crossing if hits else None

    def to_rows(self) -> list:
        return [asdict(p) for p in self.points]


def _crossing(rs: Sequence[float], ds: Sequence[float], level: float) -> Optional[float]:
    """Outermost ratio where the sequence drops from above ``level`` to at or
    below it, by linear interpolation."""
    hit = None
    for i in range(len(rs) - 1):
        if ds[i] > level >= ds[i + 1]:
            t = (ds[i] - level) / (ds[i] - ds[i + 1])
            hit = rs[i] + t * (rs[i + 1] - rs[i])
    return hit


def threshold_curves(atlas: Sequence[AtlasCell], levels=(0.10, 0.01)) -> ContourTable:
    """Iso-contours of ``delta_max`` along grid rows, columns and the diagonal.

    Empty cells are skipped. Raises :class:`InsufficientGrid` when a level is
    not bracketed anywhere on the grid.
    """
    if not atlas:
        raise InsufficientGrid("empty atlas")
    cells = {(c.r1, c.r2): c.delta_max for c in atlas if c.delta_max is not None}
    r1s = sorted({c.r1 for c in atlas})
    r2s = sorted({c.r2 for c in atlas})
    table = ContourTable()
    for level in levels:
        found = False
        for r2 in r2s:
            line = [(r1, cells[r1, r2]) for r1 in r1s if (r1, r2) in cells]
            x = _crossing([a for a, _ in line], [b for _, b in line], level)
            if x is not None:
                table.points.append(ContourPoint(level, "r1", r2, x))
                found = True
        for r1 in r1s:
            line = [(r2, cells[r1, r2]) for r2 in r2s if (r1, r2) in cells]
            x = _crossing([a for a, _ in line], [b for _, b in line], level)
            if x is not None:
                table.points.append(ContourPoint(level, "r2", r1, x))
                found = True
        diag = [(r, cells[r, r]) for r in r1s if (r, r) in cells]
        x = _crossing([a for a, _ in diag], [b for _, b in diag], level)
        if x is not None:
            table.points.append(ContourPoint(level, "diagonal", None, x))
        if not found:
            raise InsufficientGrid(f"the {level:g} contour is not bracketed by the grid")
    return table


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

ATLAS_COLUMNS = ("r1", "r2", "E_av", "delta_max", "n_physical", "n_entangled")


def atlas_to_csv(atlas: Sequence[AtlasCell], stream=None, comments=()) -> str:
    """Atlas CSV; empty cells leave ``E_av`` and ``delta_max`` blank."""
    out = stream if stream is not None else io.StringIO()
    for line in comments:
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(ATLAS_COLUMNS)
    for c in atlas:
        writer.writerow([repr(c.r1), repr(c.r2),
                         "" if c.E_av is None else repr(c.E_av),
                         "" if c.delta_max is None else repr(c.delta_max),
                         c.n_physical, c.n_entangled])
    return out.getvalue() if stream is None else ""


def _parse_axis(text: str) -> tuple:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise InputError(f"bad grid axis {text!r}; expected min:max:steps") from None
    if steps < 1:
        raise InputError(f"grid axis {text!r} needs at least one step")
    if steps == 1:
        return (lo,)
    if not hi > lo:
        raise InputError(f"grid axis {text!r} must be ascending")
    return tuple(np.linspace(lo, hi, steps).round(12))


def parse_grid(text: str, **kw) -> RatioGrid:
    """Parse ``r1min:r1max:steps[,r2min:r2max:steps]``; one axis is reused
    for both ratios."""
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) not in (1, 2):
        raise InputError(f"bad grid {text!r}")
    r1 = _parse_axis(parts[0])
    r2 = _parse_axis(parts[1]) if len(parts) == 2 else r1
    return RatioGrid(r1, r2, **kw)
