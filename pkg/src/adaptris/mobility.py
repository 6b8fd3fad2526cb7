"""UE sweeps over the area of interest with trigger-based adaptation.

Positions are visited in raster order (``iy`` rows, ``ix`` fastest).  The
RIS configuration carries over from one position to the next; adaptation
only engages where the carried configuration leaves the UE below the
threshold.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from adaptris.channel import (
    ACTIVE_ALPHABET,
    ISOTROPIC,
    GaussianDb,
    PatternModel,
    PowerMeter,
    ReflectionAlphabet,
    Scenario,
    element_terms_batch,
    mw_to_dbm,
    prefactor,
)
from adaptris.control import (
    FIXED_BUDGET,
    TERMINATION_MODES,
    iterative_adapt,
    mc_search,
    random_config,
)
from adaptris.feedback import InProcess, Transport
from adaptris.geometry import GroupSchedule, RisLayout, line_group_schedule, paper_group_schedule

# AoI placement relative to the RIS is unknown; this default puts a
# 92 cm x 60 cm table in front of the RIS, away from the BS specular
# direction, at antenna height z = 0.
DEFAULT_AOI_ORIGIN = (1.6, -0.2, 0.0)


@dataclass(frozen=True)
class AoiGrid:
    origin: tuple[float, float, float] = DEFAULT_AOI_ORIGIN
    x_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    y_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    nx: int = 46
    ny: int = 30
    step: float = 0.02

    def __post_init__(self):
        for name in ("origin", "x_axis", "y_axis"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 3:
                raise ValueError(f"{name} must be a 3-D vector")
            object.__setattr__(self, name, v)
        for name in ("x_axis", "y_axis"):
            if abs(math.hypot(*getattr(self, name)) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a unit vector")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs nx, ny >= 1")
        if not self.step > 0:
            raise ValueError("grid step must be positive")

    def __len__(self) -> int:
        return self.nx * self.ny

    def position(self, ix: int, iy: int) -> np.ndarray:
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise IndexError(f"cell ({ix}, {iy}) outside {self.nx} x {self.ny} grid")
        return (np.asarray(self.origin) + ix * self.step * np.asarray(self.x_axis)
                + iy * self.step * np.asarray(self.y_axis))

    def indices(self) -> tuple[np.ndarray, np.ndarray]:
        iy, ix = np.divmod(np.arange(len(self)), self.nx)
        return ix, iy

    def positions(self) -> np.ndarray:
        ix, iy = self.indices()
        return (np.asarray(self.origin)[None, :]
                + (ix * self.step)[:, None] * np.asarray(self.x_axis)[None, :]
                + (iy * self.step)[:, None] * np.asarray(self.y_axis)[None, :])

    def to_dict(self) -> dict:
        return {"origin_m": list(self.origin), "x_axis": list(self.x_axis), "y_axis": list(self.y_axis),
                "nx": self.nx, "ny": self.ny, "step_m": self.step}

    @classmethod
    def from_dict(cls, d: dict) -> "AoiGrid":
        base = cls()
        return cls(
            origin=d.get("origin_m", base.origin),
            x_axis=d.get("x_axis", base.x_axis),
            y_axis=d.get("y_axis", base.y_axis),
            nx=int(d.get("nx", base.nx)),
            ny=int(d.get("ny", base.ny)),
            step=float(d.get("step_m", base.step)),
        )


build_aoi_grid = AoiGrid.from_dict


@dataclass(frozen=True)
class ControllerParams:
    pts_dbm: float = -65.0
    max_iter: int = 100
    termination_mode: str = FIXED_BUDGET

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.termination_mode not in TERMINATION_MODES:
            raise ValueError(f"unknown termination mode {self.termination_mode!r}")


class SweepError(RuntimeError):
    def __init__(self, index: int, ix: int, iy: int, cause: BaseException):
        super().__init__(f"sweep failed at position {index} (ix={ix}, iy={iy}): {cause}")
        self.index, self.ix, self.iy = index, ix, iy


SWEEP_COLUMNS = ["ix", "iy", "x_m", "y_m", "p_ue_dbm", "iterations_used", "triggered"]


@dataclass
class SweepResult:
    """Per-position outcome of a sweep, raster order."""

    nx: int
    ny: int
    ix: np.ndarray
    iy: np.ndarray
    positions: np.ndarray
    p_ue_dbm: np.ndarray
    iterations_used: np.ndarray
    triggered: np.ndarray
    metadata: dict = field(default_factory=dict)
    final_states: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.p_ue_dbm)

    def same_grid(self, other: "SweepResult") -> bool:
        return (self.nx, self.ny) == (other.nx, other.ny) and np.array_equal(self.ix, other.ix) \
            and np.array_equal(self.iy, other.iy)

    def to_csv(self, path: str | Path | None = None, header: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        buf.write(f"# grid: {self.nx} x {self.ny}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for n in range(len(self)):
            x, y = self.positions[n, 0], self.positions[n, 1]
            w.writerow([int(self.ix[n]), int(self.iy[n]), f"{x:.9g}", f"{y:.9g}",
                        repr(float(self.p_ue_dbm[n])), int(self.iterations_used[n]), int(self.triggered[n])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path: str | Path) -> "SweepResult":
        lines = Path(path).read_text().splitlines()
        meta = {}
        for line in lines:
            if line.startswith("# ") and ": " in line:
                key, _, value = line[2:].partition(": ")
                meta[key] = value
        rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
        if not rows:
            raise ValueError(f"{path}: no result rows")
        missing = set(SWEEP_COLUMNS) - set(rows[0])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        ix = np.array([int(r["ix"]) for r in rows])
        iy = np.array([int(r["iy"]) for r in rows])
        if "grid" in meta:
            nx, ny = (int(v) for v in meta.pop("grid").split(" x "))
        else:
            nx, ny = int(ix.max()) + 1, int(iy.max()) + 1
        pos = np.array([[float(r["x_m"]), float(r["y_m"]), 0.0] for r in rows])
        return cls(nx, ny, ix, iy, pos, np.array([float(r["p_ue_dbm"]) for r in rows]),
                   np.array([int(r["iterations_used"]) for r in rows]),
                   np.array([r["triggered"] == "1" for r in rows]), meta)


def _empty(grid: AoiGrid, metadata: dict) -> SweepResult:
    ix, iy = grid.indices()
    n = len(grid)
    return SweepResult(grid.nx, grid.ny, ix, iy, grid.positions(), np.empty(n),
                       np.zeros(n, dtype=np.int64), np.zeros(n, dtype=bool), metadata)


def default_schedule(layout: RisLayout) -> GroupSchedule:
    if layout.m == 127 and layout.n_rings == 6:
        return paper_group_schedule()
    return line_group_schedule(layout)


def run_sweep(
    grid: AoiGrid,
    scenario: Scenario,
    layout: RisLayout,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
    params: ControllerParams = ControllerParams(),
    seed: int = 0,
    schedule: GroupSchedule | None = None,
    noise: GaussianDb | None = None,
    n_avg: int = 5,
    transport: Transport | str = InProcess(),
    carry_config: bool = True,
    terms: np.ndarray | None = None,
) -> SweepResult:
    """Move the UE over the grid, adapting wherever power drops below threshold.

    With ``carry_config=False`` every position starts from a fresh random
    configuration instead (independent sessions, used for equal-budget
    comparisons).  ``terms`` may carry precomputed per-position element
    terms from :func:`grid_terms`.
    """
    schedule = schedule or default_schedule(layout)
    init_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    init_rng = np.random.default_rng(init_ss)
    noise_rng = np.random.default_rng(noise_ss)
    if terms is None:
        terms = grid_terms(grid, scenario, layout, pattern)
    result = _empty(grid, {
        "kind": "iterative", "seed": seed, "pts_dbm": params.pts_dbm, "max_iter": params.max_iter,
        "termination_mode": params.termination_mode, "carry_config": carry_config,
    })
    result.final_states = np.empty((len(grid), layout.m), dtype=np.int8)
    config = random_config(layout.m, alphabet, init_rng)
    for n in range(len(grid)):
        if not carry_config and n > 0:
            config = random_config(layout.m, alphabet, init_rng)
        meter = PowerMeter(scenario.with_ue(result.positions[n]), layout, alphabet, noise_model=noise,
                           n_avg=n_avg, rng=noise_rng, terms=terms[n])
        try:
            report = iterative_adapt(config, meter, schedule, params.pts_dbm, params.max_iter,
                                     params.termination_mode, transport, k=alphabet.k)
        except Exception as exc:
            raise SweepError(n, int(result.ix[n]), int(result.iy[n]), exc) from exc
        config = report.final_config
        result.p_ue_dbm[n] = report.final_power_dbm
        result.iterations_used[n] = report.iterations_used
        result.triggered[n] = report.triggered
        result.final_states[n] = config.states
    return result


def grid_terms(grid: AoiGrid, scenario: Scenario, layout: RisLayout, pattern: PatternModel = ISOTROPIC):
    return element_terms_batch(scenario, layout, pattern, grid.positions())


def mc_sweep(
    grid: AoiGrid,
    scenario: Scenario,
    layout: RisLayout,
    alphabet: ReflectionAlphabet = ACTIVE_ALPHABET,
    pattern: PatternModel = ISOTROPIC,
    iterations: int = 100,
    seed: int = 0,
    terms: np.ndarray | None = None,
) -> SweepResult:
    """Position-aware random search at every grid cell (benchmark upper bound)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    if terms is None:
        terms = grid_terms(grid, scenario, layout, pattern)
    result = _empty(grid, {"kind": "mc", "seed": seed, "max_iter": iterations})
    for n in range(len(grid)):
        meter = PowerMeter(scenario.with_ue(result.positions[n]), layout, alphabet, terms=terms[n])
        result.p_ue_dbm[n] = mc_search(meter, iterations, rng).power_dbm
    result.iterations_used[:] = iterations
    result.triggered[:] = True
    return result


def baseline_sweep(
    grid: AoiGrid,
    scenario: Scenario,
    layout: RisLayout,
    pattern: PatternModel = ISOTROPIC,
    off_state: complex = 0.0,
    terms: np.ndarray | None = None,
) -> SweepResult:
    """Power with every element held in ``off_state``."""
    if terms is None:
        terms = grid_terms(grid, scenario, layout, pattern)
    result = _empty(grid, {"kind": "baseline", "off_state": repr(complex(off_state))})
    pref = prefactor(scenario, layout)
    gammas = np.array([complex(off_state)])
    ones = np.ones(layout.m, dtype=np.int64)
    for n in range(len(grid)):
        h = pref * np.sum(gammas[ones - 1] * terms[n])
        result.p_ue_dbm[n] = mw_to_dbm(scenario.bs_power_mw * abs(h) ** 2 + scenario.noise_power_mw)
    return result


def fraction_below(result: SweepResult, pts_dbm: float) -> float:
    return float(np.mean(result.p_ue_dbm < pts_dbm))


def histogram(p_dbm: np.ndarray, bin_width: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Histogram with bins aligned to multiples of ``bin_width``; returns ``(left_edges, counts)``."""
    p = np.asarray(p_dbm, dtype=float)
    bins = np.floor(p / bin_width).astype(np.int64)
    lo = int(bins.min())
    counts = np.bincount(bins - lo)
    return (lo + np.arange(len(counts))) * bin_width, counts


def row_cut(result: SweepResult, ix: int | None = None, iy: int | None = None):
    """Records along one grid line; pass exactly one of ``ix``/``iy``."""
    if (ix is None) == (iy is None):
        raise ValueError("give exactly one of ix, iy")
    mask = result.ix == ix if ix is not None else result.iy == iy
    if not mask.any():
        raise IndexError("row outside grid")
    return result.positions[mask], result.p_ue_dbm[mask]


@dataclass
class SweepStats:
    gain_db: np.ndarray | None  # (n_results, n_positions), adapted - baseline
    bin_left_dbm: np.ndarray
    counts: np.ndarray
    minimum: float
    median: float
    maximum: float
    mean: float
    fraction_below: float | None


def analyze(
    results: SweepResult | Sequence[SweepResult],
    baseline: SweepResult | None = None,
    pts_dbm: float | None = None,
    bin_width: float = 1.0,
) -> SweepStats:
    """Pool one or more sweeps over the same grid into summary statistics."""
    if isinstance(results, SweepResult):
        results = [results]
    if not results:
        raise ValueError("nothing to analyze")
    first = results[0]
    for r in list(results[1:]) + ([baseline] if baseline is not None else []):
        if not first.same_grid(r):
            raise ValueError("results are on different grids")
    pooled = np.concatenate([r.p_ue_dbm for r in results])
    gain = None
    if baseline is not None:
        gain = np.stack([r.p_ue_dbm - baseline.p_ue_dbm for r in results])
    left, counts = histogram(pooled, bin_width)
    frac = float(np.mean(pooled < pts_dbm)) if pts_dbm is not None else None
    return SweepStats(gain, left, counts, float(pooled.min()), float(np.median(pooled)),
                      float(pooled.max()), float(pooled.mean()), frac)


def histogram_csv(stats: SweepStats, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write("bin_left_dbm,count\n")
    for left, c in zip(stats.bin_left_dbm, stats.counts):
        buf.write(f"{left:g},{int(c)}\n")
    return buf.getvalue()


def gain_csv(result: SweepResult, gain_db: np.ndarray, header: Sequence[str] = (), column: str = "gain_db") -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    buf.write(f"ix,iy,{column}\n")
    for n in range(len(result)):
        buf.write(f"{int(result.ix[n])},{int(result.iy[n])},{float(gain_db[n])!r}\n")
    return buf.getvalue()
