"""Hexagonal RIS layout, element indexing and the flip-group schedule.

Elements sit on a centered triangular lattice in the yz-plane (x = 0).
Index 1 is the center; ring ``r`` holds the next ``6r`` indices, walked
corner to corner as a spiral.  Corner ``k`` of a ring lies at
``60 k`` degrees measured from +y towards +z.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

# Ring corner directions in the axial basis (e0 = +y, e60 = 60 deg towards +z).
_CORNERS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

# Per-ring (start corner, handedness) frozen from search_spiral_orientations()
# against the group tables below: every ring starts at corner 0 and walks
# counter-clockwise.  Rings beyond the table reuse the same orientation.
SPIRAL_ORIENTATION: tuple[tuple[int, int], ...] = ((0, 1),) * 6

PROTOTYPE_SPACING_M = 8.7e-3
PROTOTYPE_ELEMENT_SIZE_M = 6.6e-3
PROTOTYPE_N_RINGS = 6


@dataclass(frozen=True)
class RisLayout:
    """Element centers of a planar RIS lying in the yz-plane.

    ``positions`` is an ``(M, 3)`` array in meters, row ``m - 1`` holding
    element index ``m``.
    """

    positions: np.ndarray
    element_dy: float = PROTOTYPE_ELEMENT_SIZE_M
    element_dz: float = PROTOTYPE_ELEMENT_SIZE_M
    lattice_spacing_d: float = PROTOTYPE_SPACING_M
    n_rings: int | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or len(pos) == 0:
            raise ValueError("positions must be a non-empty (M, 3) array")
        if np.any(pos[:, 0] != 0.0):
            raise ValueError("RIS elements must lie in the x = 0 plane")
        if self.element_dy <= 0 or self.element_dz <= 0:
            raise ValueError("element dimensions must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def m(self) -> int:
        return len(self.positions)

    def ring_of(self, index: int) -> int:
        """Ring number of a 1-based element index on a centered hex layout."""
        if index == 1:
            return 0
        r = 1
        while 1 + 3 * r * (r + 1) < index:
            r += 1
        return r


@dataclass(frozen=True)
class GroupSchedule:
    """Ordered group sets, each an ordered list of subgroups of 1-based indices."""

    group_sets: tuple[tuple[tuple[int, ...], ...], ...]
    m: int = field(default=0)

    def __post_init__(self):
        sets = tuple(tuple(tuple(int(i) for i in sg) for sg in gs) for gs in self.group_sets)
        if not sets or any(not gs for gs in sets):
            raise ValueError("schedule needs at least one non-empty group set")
        m = self.m or max(i for gs in sets for sg in gs for i in sg)
        for j, gs in enumerate(sets, start=1):
            members = sorted(i for sg in gs for i in sg)
            if members != list(range(1, m + 1)):
                raise ValueError(f"group set {j} is not a partition of 1..{m}")
        object.__setattr__(self, "group_sets", sets)
        object.__setattr__(self, "m", m)

    def __iter__(self) -> Iterator[tuple[int, int, tuple[int, ...]]]:
        """Yield ``(group_set, subgroup, members)`` with 1-based ids in schedule order."""
        for j, gs in enumerate(self.group_sets, start=1):
            for l, sg in enumerate(gs, start=1):
                yield j, l, sg

    def __len__(self) -> int:
        return sum(len(gs) for gs in self.group_sets)

    def subgroup(self, j: int, l: int) -> tuple[int, ...]:
        return self.group_sets[j - 1][l - 1]

    def cardinalities(self) -> list[list[int]]:
        return [[len(sg) for sg in gs] for gs in self.group_sets]


def _ring_axial(r: int, start: int, hand: int) -> list[tuple[int, int]]:
    pts = []
    for k in range(6):
        q0, s0 = _CORNERS[(start + hand * k) % 6]
        q1, s1 = _CORNERS[(start + hand * (k + 1)) % 6]
        for t in range(r):
            pts.append((r * q0 + t * (q1 - q0), r * s0 + t * (s1 - s0)))
    return pts


def _axial_to_yz(axial: Sequence[tuple[int, int]], spacing: float) -> np.ndarray:
    a = np.asarray(axial, dtype=float).reshape(-1, 2)
    y = (a[:, 0] + 0.5 * a[:, 1]) * spacing
    z = a[:, 1] * (math.sqrt(3.0) / 2.0) * spacing
    return np.column_stack([np.zeros(len(a)), y, z])


def _spiral_axial(n_rings: int, orientation: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    axial = [(0, 0)]
    for r in range(1, n_rings + 1):
        start, hand = orientation[r - 1] if r <= len(orientation) else (0, 1)
        axial.extend(_ring_axial(r, start, hand))
    return axial


def build_hex_layout(
    n_rings: int = PROTOTYPE_N_RINGS,
    spacing: float = PROTOTYPE_SPACING_M,
    dy: float = PROTOTYPE_ELEMENT_SIZE_M,
    dz: float = PROTOTYPE_ELEMENT_SIZE_M,
    orientation: Sequence[tuple[int, int]] = SPIRAL_ORIENTATION,
) -> RisLayout:
    """Centered hexagonal layout with ring-by-ring spiral indexing.

    ``orientation[r - 1]`` is the ``(start corner, handedness)`` of ring ``r``;
    handedness ``+1`` walks counter-clockwise.
    """
    if n_rings < 0:
        raise ValueError("n_rings must be >= 0")
    if not spacing > 0:
        raise ValueError("lattice spacing must be positive")
    positions = _axial_to_yz(_spiral_axial(n_rings, orientation), spacing)
    return RisLayout(positions, element_dy=dy, element_dz=dz, lattice_spacing_d=spacing, n_rings=n_rings)


_TABLE_G1 = (
    (104, 105, 106, 107, 108, 109, 110),
    (103, 72, 73, 74, 75, 76, 77, 111),
    (102, 71, 46, 47, 48, 49, 50, 78, 112),
    (101, 70, 45, 26, 27, 28, 29, 51, 79, 113),
    (100, 69, 44, 25, 12, 13, 14, 30, 52, 80, 114),
    (99, 68, 43, 24, 11, 4, 5, 15, 31, 53, 81, 115),
    (98, 67, 42, 23, 10, 3, 1, 6, 16, 32, 54, 82, 116),
    (97, 66, 41, 22, 9, 2, 7, 17, 33, 55, 83, 117),
    (96, 65, 40, 21, 8, 19, 18, 34, 56, 84, 118),
    (95, 64, 39, 20, 37, 36, 35, 57, 85, 119),
    (94, 63, 38, 61, 60, 59, 58, 86, 120),
    (93, 62, 91, 90, 89, 88, 87, 121),
    (92, 127, 126, 125, 124, 123, 122),
)

_TABLE_G2 = (
    (98, 97, 96, 95, 94, 93, 92),
    (99, 67, 66, 65, 64, 63, 62, 127),
    (100, 68, 42, 41, 40, 39, 38, 91, 126),
    (101, 69, 43, 23, 22, 21, 20, 61, 90, 125),
    (102, 70, 44, 24, 10, 9, 8, 37, 60, 89, 124),
    (103, 71, 45, 25, 11, 3, 2, 19, 36, 59, 88, 123),
    (104, 72, 46, 26, 12, 4, 1, 7, 18, 35, 58, 87, 122),
    (105, 73, 47, 27, 13, 5, 6, 17, 34, 57, 86, 121),
    (106, 74, 48, 28, 14, 15, 16, 33, 56, 85, 120),
    (107, 75, 49, 29, 30, 31, 32, 55, 84, 119),
    (108, 76, 50, 51, 52, 53, 54, 83, 118),
    (109, 77, 78, 79, 80, 81, 82, 117),
    (110, 111, 112, 113, 114, 115, 116),
)


def paper_group_schedule() -> GroupSchedule:
    """The two 13-line group sets of the 127-element prototype."""
    return GroupSchedule((_TABLE_G1, _TABLE_G2), m=127)


def singleton_schedule(m: int) -> GroupSchedule:
    """One group set flipping each element on its own."""
    return GroupSchedule((tuple((i,) for i in range(1, m + 1)),), m=m)


def line_group_schedule(layout: RisLayout) -> GroupSchedule:
    """Group a hexagonal layout into lattice lines along two 60-degree families.

    Uses the same line directions and subgroup ordering as
    :func:`paper_group_schedule`; on the 6-ring layout the subgroups coincide
    with it as sets.  Members are ordered by index.
    """
    d = layout.lattice_spacing_d
    yz = layout.positions[:, 1:] / d
    families = []
    # Line directions at 60 and 120 degrees; subgroups ordered by signed
    # offset along the line normal, oriented to match the prototype tables.
    for angle, sign in ((60.0, 1.0), (120.0, -1.0)):
        t = math.radians(angle)
        normal = np.array([-math.sin(t), math.cos(t)])
        offset = np.rint(sign * (yz @ normal) / (math.sqrt(3.0) / 2.0)).astype(int)
        lines = []
        for o in sorted(set(offset.tolist()), reverse=True):
            lines.append(tuple(int(i) + 1 for i in np.flatnonzero(offset == o)))
        families.append(tuple(lines))
    return GroupSchedule(tuple(families), m=layout.m)


@dataclass(frozen=True)
class SubgroupFit:
    group_set: int
    subgroup: int
    size: int
    direction_deg: float | None  # line angle from +y towards +z, in [0, 180)
    max_deviation: float


@dataclass(frozen=True)
class CollinearityReport:
    ok: bool
    fits: tuple[SubgroupFit, ...]
    family_directions_deg: tuple[float | None, ...]
    family_separation_deg: float | None
    failure: str | None = None

    @property
    def max_deviation(self) -> float:
        return max(f.max_deviation for f in self.fits)


def _fit_line(points: np.ndarray) -> tuple[float | None, float]:
    if len(points) == 1:
        return None, 0.0
    if len(points) == 2:
        v = points[1] - points[0]
        return math.degrees(math.atan2(v[1], v[0])) % 180.0, 0.0
    c = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(c)
    direction = vt[0]
    deviation = float(np.max(np.abs(c @ vt[1])))
    return math.degrees(math.atan2(direction[1], direction[0])) % 180.0, deviation


def _angle_diff(a: float, b: float) -> float:
    """Acute angle between two line directions, in degrees."""
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def validate_schedule_collinearity(
    layout: RisLayout,
    schedule: GroupSchedule,
    rel_tol: float = 1e-6,
    angle_tol_deg: float = 1e-6,
) -> CollinearityReport:
    """Check each subgroup lies on one lattice line and the families are 60 deg apart."""
    if schedule.m > layout.m:
        raise ValueError("schedule references elements outside the layout")
    tol = layout.lattice_spacing_d * rel_tol
    yz = layout.positions[:, 1:]
    fits = []
    failure = None
    for j, l, members in schedule:
        direction, dev = _fit_line(yz[np.asarray(members) - 1])
        fits.append(SubgroupFit(j, l, len(members), direction, dev))
        if failure is None and dev >= tol:
            failure = f"subgroup G{j}_{l} is not collinear (deviation {dev:.3g} m)"

    families: list[float | None] = []
    for j in range(1, len(schedule.group_sets) + 1):
        dirs = [f.direction_deg for f in fits if f.group_set == j and f.direction_deg is not None]
        if not dirs:
            families.append(None)
            continue
        ref = dirs[0]
        if failure is None and any(_angle_diff(ref, d) > angle_tol_deg for d in dirs):
            failure = f"group set {j} mixes line directions"
        families.append(ref)

    separation = None
    if len(families) == 2 and None not in families:
        separation = _angle_diff(families[0], families[1])
        if failure is None and abs(separation - 60.0) > angle_tol_deg:
            failure = f"direction families are {separation:.6g} deg apart, expected 60"
    elif failure is None and len(families) != 2:
        failure = f"expected 2 group sets, got {len(families)}"

    return CollinearityReport(failure is None, tuple(fits), tuple(families), separation, failure)


def search_spiral_orientations(
    schedule: GroupSchedule | None = None,
    n_rings: int = PROTOTYPE_N_RINGS,
) -> Iterator[tuple[tuple[int, int], ...]]:
    """Yield every per-ring (start corner, handedness) that makes the schedule collinear.

    Depth-first over rings; a partial assignment is pruned as soon as the
    subgroup members placed so far stop being collinear.
    """
    schedule = schedule or paper_group_schedule()
    subgroups = [np.asarray(sg) for _, _, sg in schedule]
    options = [(s, h) for s in range(6) for h in (1, -1)]

    def consistent(axial: list[tuple[int, int]]) -> bool:
        yz = _axial_to_yz(axial, 1.0)[:, 1:]
        n = len(axial)
        for sg in subgroups:
            placed = sg[sg <= n]
            if len(placed) >= 3 and _fit_line(yz[placed - 1])[1] > 1e-9:
                return False
        return True

    def descend(r: int, axial: list[tuple[int, int]], chosen: tuple[tuple[int, int], ...]):
        if r > n_rings:
            layout = RisLayout(_axial_to_yz(axial, 1.0), lattice_spacing_d=1.0, n_rings=n_rings)
            if validate_schedule_collinearity(layout, schedule).ok:
                yield chosen
            return
        for start, hand in options:
            extended = axial + _ring_axial(r, start, hand)
            if consistent(extended):
                yield from descend(r + 1, extended, chosen + ((start, hand),))

    yield from descend(1, [(0, 0)], ())


def write_layout_csv(layout: RisLayout, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "y_m", "z_m"])
        for i, (_, y, z) in enumerate(layout.positions, start=1):
            w.writerow([i, f"{y:.9g}", f"{z:.9g}"])


def read_layout_csv(
    path: str | Path,
    dy: float = PROTOTYPE_ELEMENT_SIZE_M,
    dz: float = PROTOTYPE_ELEMENT_SIZE_M,
    spacing: float | None = None,
) -> RisLayout:
    """Load an explicit layout; ``spacing`` defaults to the minimum pairwise distance."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
    rows.sort(key=lambda r: int(r["index"]))
    if [int(r["index"]) for r in rows] != list(range(1, len(rows) + 1)):
        raise ValueError(f"{path}: indices must be 1..M without gaps")
    pos = np.array([[0.0, float(r["y_m"]), float(r["z_m"])] for r in rows])
    if spacing is None:
        spacing = min_pairwise_distance(pos) if len(pos) > 1 else PROTOTYPE_SPACING_M
    return RisLayout(pos, element_dy=dy, element_dz=dz, lattice_spacing_d=spacing)


def schedule_to_json(schedule: GroupSchedule) -> str:
    return json.dumps([[list(sg) for sg in gs] for gs in schedule.group_sets])


def schedule_from_json(text: str) -> GroupSchedule:
    data = json.loads(text)
    return GroupSchedule(tuple(tuple(tuple(sg) for sg in gs) for gs in data))


def min_pairwise_distance(positions: np.ndarray) -> float:
    p = np.asarray(positions, dtype=float)
    diff = p[:, None, :] - p[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    dist[np.diag_indices(len(p))] = np.inf
    return float(dist.min())
