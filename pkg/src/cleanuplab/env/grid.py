"""Arena maps: parsing, validation, and cell-region bookkeeping.

Map file format (UTF-8 text): a header line ``v1 <width> <height>`` followed
by ``height`` rows of ``width`` characters each, one character per cell:
``R`` river, ``O`` orchard, ``.`` ground, ``#`` wall, ``P`` spawn (walkable
ground that avatars may start on).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from cleanuplab.errors import ConfigurationError

MAP_FORMAT_VERSION = 1

_CHAR_TO_CLASS = {"R": 1, "O": 2, ".": 0, "#": 3, "P": 0}


class CellClass(IntEnum):
    GROUND = 0
    RIVER = 1
    ORCHARD = 2
    WALL = 3


@dataclass(frozen=True)
class GridMap:
    """Immutable arena geometry with precomputed region indices."""

    width: int
    height: int
    cells: np.ndarray  # (height, width) int8 of CellClass codes
    spawns: tuple[tuple[int, int], ...]
    river_cells: np.ndarray  # (n_river, 2) row/col
    orchard_cells: np.ndarray  # (n_orchard, 2)
    river_index: np.ndarray = field(repr=False)  # (h, w) index into river_cells or -1
    orchard_index: np.ndarray = field(repr=False)
    text: str = field(repr=False, default="")

    @property
    def n_river(self) -> int:
        return len(self.river_cells)

    @property
    def n_orchard(self) -> int:
        return len(self.orchard_cells)

    def cell_class(self, row: int, col: int) -> CellClass:
        return CellClass(int(self.cells[row, col]))

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


def _region_contiguous(mask: np.ndarray) -> bool:
    """4-connectivity flood fill: does ``mask`` form one connected region?"""
    coords = np.argwhere(mask)
    if len(coords) == 0:
        return False
    seen = np.zeros_like(mask, dtype=bool)
    stack = [tuple(coords[0])]
    seen[coords[0][0], coords[0][1]] = True
    count = 1
    h, w = mask.shape
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                count += 1
                stack.append((nr, nc))
    return count == len(coords)


def parse_map(text: str, min_spawns: int = 5, require_regions: bool = True) -> GridMap:
    """Parse and validate a map file's text.

    Arena maps must carry exactly one contiguous river region and one
    contiguous orchard region; tutorial mini-maps may omit them
    (``require_regions=False``).
    """
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise ConfigurationError("empty map file")
    header = lines[0].split()
    if len(header) != 3 or not header[0].startswith("v"):
        raise ConfigurationError(f"bad map header {lines[0]!r}, expected 'v1 <width> <height>'")
    version = int(header[0][1:])
    if version > MAP_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported map format version {version}")
    width, height = int(header[1]), int(header[2])
    rows = lines[1:]
    if len(rows) != height:
        raise ConfigurationError(f"map declares height {height} but has {len(rows)} rows")

    cells = np.zeros((height, width), dtype=np.int8)
    spawns: list[tuple[int, int]] = []
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ConfigurationError(f"map row {r} has width {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            if ch not in _CHAR_TO_CLASS:
                raise ConfigurationError(f"unknown map character {ch!r} at row {r}, col {c}")
            cells[r, c] = _CHAR_TO_CLASS[ch]
            if ch == "P":
                spawns.append((r, c))

    if len(spawns) < min_spawns:
        raise ConfigurationError(f"map has {len(spawns)} spawn cells, need at least {min_spawns}")
    river_mask = cells == CellClass.RIVER
    orchard_mask = cells == CellClass.ORCHARD
    if require_regions or river_mask.any():
        if not _region_contiguous(river_mask):
            raise ConfigurationError("river region missing or not contiguous")
    if require_regions or orchard_mask.any():
        if not _region_contiguous(orchard_mask):
            raise ConfigurationError("orchard region missing or not contiguous")

    river_cells = np.argwhere(river_mask)
    orchard_cells = np.argwhere(orchard_mask)
    river_index = np.full((height, width), -1, dtype=np.int32)
    orchard_index = np.full((height, width), -1, dtype=np.int32)
    for i, (r, c) in enumerate(river_cells):
        river_index[r, c] = i
    for i, (r, c) in enumerate(orchard_cells):
        orchard_index[r, c] = i

    return GridMap(
        width=width,
        height=height,
        cells=cells,
        spawns=tuple(spawns),
        river_cells=river_cells,
        orchard_cells=orchard_cells,
        river_index=river_index,
        orchard_index=orchard_index,
        text=text,
    )


def load_map(path: str, min_spawns: int = 5, require_regions: bool = True) -> GridMap:
    with open(path, encoding="utf-8") as fh:
        return parse_map(fh.read(), min_spawns=min_spawns, require_regions=require_regions)


def builtin_map(
    name: str = "default", min_spawns: int = 5, require_regions: bool = True
) -> GridMap:
    """Load a map bundled with the package (``cleanuplab/maps/<name>.map``)."""
    ref = importlib.resources.files("cleanuplab") / "maps" / f"{name}.map"
    try:
        text = ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(f"no bundled map named {name!r}") from None
    return parse_map(text, min_spawns=min_spawns, require_regions=require_regions)
