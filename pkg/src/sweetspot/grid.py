"""Blockwise sweet-spot scoring and verifiers for maze, Sudoku and ARC grids.

Grids are 2-D integer numpy arrays. Cells are addressed as ``(row, col)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Block",
    "MazeSpec",
    "as_grid",
    "partition3x3",
    "sudoku_blocks",
    "block_match_count",
    "block_tier",
    "blockwise_score",
    "normalize_arc",
    "maze_verify",
    "sudoku_verify",
    "arc_verify",
    "path_to_occupancy",
    "grid_task_score",
]

Cell = tuple[int, int]
TIERS = (1.0, 2 / 3, 1 / 3, 0.0)


@dataclass(frozen=True)
class Block:
    r_lo: int
    r_hi: int
    c_lo: int
    c_hi: int
    index: tuple[int, int]  # (i, j), 1-based

    @property
    def size(self) -> int:
        return (self.r_hi - self.r_lo) * (self.c_hi - self.c_lo)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.r_lo, self.r_hi), slice(self.c_lo, self.c_hi)

    def cells(self) -> Iterable[Cell]:
        for r in range(self.r_lo, self.r_hi):
            for c in range(self.c_lo, self.c_hi):
                yield r, c


@dataclass(frozen=True)
class MazeSpec:
    walls: np.ndarray  # 1 = wall, 0 = open
    start: Cell
    goal: Cell

    def __post_init__(self):
        walls = as_grid(self.walls).copy()
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "start", tuple(int(v) for v in self.start))
        object.__setattr__(self, "goal", tuple(int(v) for v in self.goal))
        if not np.isin(walls, (0, 1)).all():
            raise InvalidInputError("maze walls must be 0/1")
        if self.start == self.goal:
            raise InvalidInputError("start and goal must differ")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not self.is_open(cell):
                raise InvalidInputError(f"{name} {cell} is not an open in-bounds cell")

    @property
    def shape(self) -> tuple[int, int]:
        return self.walls.shape

    def in_bounds(self, cell: Cell) -> bool:
        H, W = self.walls.shape
        return 0 <= cell[0] < H and 0 <= cell[1] < W

    def is_open(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.walls[cell] == 0

    def open_cells(self) -> list[Cell]:
        return [tuple(int(v) for v in rc) for rc in np.argwhere(self.walls == 0)]

    def __eq__(self, other):
        if not isinstance(other, MazeSpec):
            return NotImplemented
        return (self.start == other.start and self.goal == other.goal
                and np.array_equal(self.walls, other.walls))

    def __hash__(self):
        return hash((self.start, self.goal, self.walls.tobytes(), self.walls.shape))


def as_grid(g) -> np.ndarray:
    arr = np.asarray(g)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInputError(f"grid must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.array_equal(arr, np.round(arr)):
            raise InvalidInputError("grid cells must be integers")
        arr = arr.astype(np.int64)
    return arr


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def partition3x3(H: int, W: int) -> list[Block]:
    """Nine row-major blocks with ceil((i-1)H/3) <= r < ceil(iH/3), same for columns."""
    if H < 3 or W < 3:
        raise InvalidInputError(f"need H, W >= 3 for a 3x3 partition, got {H}x{W}")
    rb = [_ceil_div(i * H, 3) for i in range(4)]
    cb = [_ceil_div(j * W, 3) for j in range(4)]
    return [Block(rb[i], rb[i + 1], cb[j], cb[j + 1], (i + 1, j + 1))
            for i in range(3) for j in range(3)]


def sudoku_blocks() -> list[Block]:
    return [Block(3 * i, 3 * i + 3, 3 * j, 3 * j + 3, (i + 1, j + 1))
            for i in range(3) for j in range(3)]


def _check_same_shape(pred: np.ndarray, ref: np.ndarray) -> None:
    if pred.shape != ref.shape:
        raise InvalidInputError(f"dimension mismatch: {pred.shape} vs {ref.shape}")


def block_match_count(pred, ref, block: Block) -> int:
    pred, ref = as_grid(pred), as_grid(ref)
    _check_same_shape(pred, ref)
    rs, cs = block.slices()
    return int(np.count_nonzero(pred[rs, cs] == ref[rs, cs]))


def block_tier(n: int, size: int, scheme: str = "fractional") -> float:
    """Tier of a block with ``n`` matched cells out of ``size``.

    ``scheme="fractional"`` uses the four fractional bands (>= 3/4, >= 1/2,
    >= 1/4 of the block, else 0). ``scheme="coarse"`` reproduces the coarser
    three-band reading (7-9, 4-6, 0-3 of 9 cells, scaled to ``size``) where
    the lowest band still scores 1/3.
    """
    if size < 1 or not 0 <= n <= size:
        raise InvalidInputError(f"need 0 <= n <= size, got n={n}, size={size}")
    frac = Fraction(n, size)
    if scheme == "fractional":
        if frac >= Fraction(3, 4):
            return TIERS[0]
        if frac >= Fraction(1, 2):
            return TIERS[1]
        if frac >= Fraction(1, 4):
            return TIERS[2]
        return TIERS[3]
    if scheme == "coarse":
        if frac >= Fraction(7, 9):
            return TIERS[0]
        if frac >= Fraction(4, 9):
            return TIERS[1]
        return TIERS[2]
    raise InvalidInputError(f"unknown tier scheme {scheme!r}")


def blockwise_score(pred, ref, blocks: Sequence[Block] | None = None,
                    scheme: str = "fractional") -> float:
    """Mean block tier over the 3x3 partition of the grids."""
    pred, ref = as_grid(pred), as_grid(ref)
    _check_same_shape(pred, ref)
    if blocks is None:
        blocks = partition3x3(*ref.shape)
    eq = pred == ref
    # tiers are k/3, so sum in thirds to keep the mean exact
    thirds = 0
    for blk in blocks:
        rs, cs = blk.slices()
        n = int(np.count_nonzero(eq[rs, cs]))
        thirds += round(3 * block_tier(n, blk.size, scheme))
    return thirds / (3 * len(blocks))


def normalize_arc(pred, ref) -> np.ndarray:
    """Nearest-neighbour resample of ``pred`` onto ``ref``'s shape."""
    pred, ref = as_grid(pred), as_grid(ref)
    if pred.shape == ref.shape:
        return pred
    (h, w), (H, W) = pred.shape, ref.shape
    rows = (np.arange(H) * h) // H
    cols = (np.arange(W) * w) // W
    return pred[np.ix_(rows, cols)]


def maze_verify(path: Sequence[Cell], maze: MazeSpec) -> int:
    try:
        cells = [(int(r), int(c)) for r, c in path]
    except (TypeError, ValueError):
        return 0
    if not cells or cells[0] != maze.start or cells[-1] != maze.goal:
        return 0
    if not all(maze.is_open(c) for c in cells):
        return 0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        if abs(r0 - r1) + abs(c0 - c1) != 1:
            return 0
    return 1


_DIGITS = np.arange(1, 10)


def sudoku_verify(grid) -> int:
    g = as_grid(grid)
    if g.shape != (9, 9):
        raise InvalidInputError(f"sudoku grid must be 9x9, got {g.shape}")
    groups = [g[r, :] for r in range(9)] + [g[:, c] for c in range(9)]
    groups += [g[b.slices()].ravel() for b in sudoku_blocks()]
    return int(all(np.array_equal(np.sort(grp), _DIGITS) for grp in groups))


def arc_verify(pred, ref) -> int:
    pred, ref = np.asarray(pred), np.asarray(ref)
    return int(pred.shape == ref.shape and np.array_equal(pred, ref))


def path_to_occupancy(path: Sequence[Cell], H: int, W: int) -> np.ndarray:
    occ = np.zeros((H, W), dtype=np.int64)
    for r, c in path:
        if not (0 <= r < H and 0 <= c < W):
            raise InvalidInputError(f"path cell {(r, c)} outside a {H}x{W} grid")
        occ[r, c] = 1
    return occ


def grid_task_score(pred, ref, task: str, *, path: Sequence[Cell] | None = None,
                    maze: MazeSpec | None = None) -> tuple[float, int]:
    """Return ``(S_raw, C)`` for a grid task.

    For ``task="maze"`` the grids are path occupancies and ``path`` and
    ``maze`` must be given so the path can be verified.
    """
    pred, ref = as_grid(pred), as_grid(ref)
    if task == "arc":
        return blockwise_score(normalize_arc(pred, ref), ref), arc_verify(pred, ref)
    if task == "sudoku":
        return blockwise_score(pred, ref, blocks=sudoku_blocks()), sudoku_verify(pred)
    if task == "maze":
        if path is None or maze is None:
            raise InvalidInputError("maze scoring needs the predicted path and the maze")
        return blockwise_score(pred, ref), maze_verify(path, maze)
    raise InvalidInputError(f"unknown grid task {task!r}")
