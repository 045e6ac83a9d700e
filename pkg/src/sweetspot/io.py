"""Text formats: grids, mazes, paths, GUI records, sample dumps and run manifests."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import SampleSet
from .envs import ClickPayload, MazePayload, Rollout
from .errors import GridFormatError, InvalidInputError, RecordFormatError
from .grid import MazeSpec, as_grid
from .gui import BoundingBox, Point

__all__ = [
    "parse_grid",
    "format_grid",
    "parse_maze",
    "format_maze",
    "parse_path",
    "format_path",
    "parse_gui_records",
    "rollout_record",
    "write_records",
    "read_records",
    "records_to_samples",
    "records_to_clicks",
    "write_manifest",
    "read_manifest",
    "read_text",
]


def read_text(path) -> str:
    """File contents; OSError propagates so callers can tell I/O from format errors."""
    return Path(path).read_text(encoding="utf-8")


def _lines(text: str):
    """(1-based line number, stripped line) for non-blank lines."""
    for no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if line:
            yield no, line


def parse_grid(text: str) -> np.ndarray:
    """``H W`` on the first line, then ``H`` rows of ``W`` integers."""
    lines = list(_lines(text))
    if not lines:
        raise GridFormatError("empty grid file", 1)
    no, head = lines[0]
    parts = head.split()
    try:
        H, W = (int(v) for v in parts)
    except ValueError:
        raise GridFormatError(f"expected 'H W', got {head!r}", no) from None
    if H < 1 or W < 1:
        raise GridFormatError(f"grid dimensions must be positive, got {H}x{W}", no)
    rows = lines[1:]
    if len(rows) != H:
        at = rows[H][0] if len(rows) > H else (rows[-1][0] + 1 if rows else no + 1)
        raise GridFormatError(f"expected {H} rows, found {len(rows)}", at)
    out = np.empty((H, W), dtype=np.int64)
    for r, (no, line) in enumerate(rows):
        cells = line.split()
        if len(cells) != W:
            raise GridFormatError(f"expected {W} values, found {len(cells)}", no)
        try:
            out[r] = [int(c) for c in cells]
        except ValueError:
            raise GridFormatError(f"non-integer cell in {line!r}", no) from None
    return out


def format_grid(grid) -> str:
    g = as_grid(grid)
    H, W = g.shape
    return "\n".join([f"{H} {W}"] + [" ".join(str(int(v)) for v in row) for row in g]) + "\n"


def parse_maze(text: str) -> MazeSpec:
    """Character rows: ``#`` wall, ``.`` open, ``S`` start, ``G`` goal."""
    lines = list(_lines(text))
    if not lines:
        raise GridFormatError("empty maze file", 1)
    W = len(lines[0][1])
    walls = np.zeros((len(lines), W), dtype=np.int64)
    start = goal = None
    for r, (no, line) in enumerate(lines):
        if len(line) != W:
            raise GridFormatError(f"row has {len(line)} cells, expected {W}", no)
        for c, ch in enumerate(line):
            if ch == "#":
                walls[r, c] = 1
            elif ch in ".SG":
                if ch == "S":
                    if start is not None:
                        raise GridFormatError("more than one start", no)
                    start = (r, c)
                elif ch == "G":
                    if goal is not None:
                        raise GridFormatError("more than one goal", no)
                    goal = (r, c)
            else:
                raise GridFormatError(f"unexpected character {ch!r}", no)
    if start is None or goal is None:
        raise GridFormatError("maze needs one S and one G", lines[-1][0])
    return MazeSpec(walls, start, goal)


def format_maze(maze: MazeSpec) -> str:
    rows = []
    for r, row in enumerate(maze.walls):
        chars = ["#" if v else "." for v in row]
        if maze.start[0] == r:
            chars[maze.start[1]] = "S"
        if maze.goal[0] == r:
            chars[maze.goal[1]] = "G"
        rows.append("".join(chars))
    return "\n".join(rows) + "\n"


def parse_path(text: str) -> list[tuple[int, int]]:
    """One ``r,c`` pair per line."""
    path = []
    for no, line in _lines(text):
        try:
            r, c = (int(v) for v in line.split(","))
        except ValueError:
            raise GridFormatError(f"expected 'r,c', got {line!r}", no) from None
        path.append((r, c))
    if not path:
        raise GridFormatError("empty path", 1)
    return path


def format_path(path: Sequence[tuple[int, int]]) -> str:
    return "".join(f"{r},{c}\n" for r, c in path)


def parse_gui_records(text: str) -> list[tuple[Point, BoundingBox]]:
    """Lines of ``x y | x1 y1 x2 y2``."""
    out = []
    for no, line in _lines(text):
        if line.startswith("#"):
            continue
        try:
            lhs, rhs = line.split("|")
            x, y = (float(v) for v in lhs.split())
            x1, y1, x2, y2 = (float(v) for v in rhs.split())
            out.append((Point(x, y), BoundingBox(x1, y1, x2, y2)))
        except ValueError as exc:
            raise RecordFormatError(f"bad record {line!r}: {exc}", no) from None
    return out


def rollout_record(rollout: Rollout) -> dict:
    rec = {"C": int(rollout.correct), "S": float(rollout.raw_score),
           "S_dense": float(rollout.dense_score), "log_prob": float(rollout.log_prob),
           "ell": [float(v) for v in rollout.score_gradient]}
    p = rollout.payload
    if isinstance(p, ClickPayload):
        t = p.target
        rec.update(env="click", point=[p.point.x, p.point.y], target=[t.x1, t.y1, t.x2, t.y2])
    elif isinstance(p, MazePayload):
        rec.update(env="maze", path=[list(c) for c in p.path])
    return rec


def write_records(records: Iterable[dict], fh) -> None:
    """One JSON object per line; floats keep their shortest round-trip repr."""
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True, allow_nan=False) + "\n")


def read_records(text: str) -> list[dict]:
    out = []
    for no, line in _lines(text):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"invalid JSON: {exc.msg}", no) from None
        if not isinstance(rec, dict):
            raise RecordFormatError("record is not an object", no)
        rec["_line"] = no
        out.append(rec)
    return out


def records_to_samples(records: Sequence[dict]) -> SampleSet:
    if not records:
        raise RecordFormatError("no records", 1)
    try:
        C = [int(r["C"]) for r in records]
        S = [float(r["S"]) for r in records]
        dense = [float(r.get("S_dense", r["S"])) for r in records]
        ell = [[float(v) for v in r["ell"]] for r in records]
    except (KeyError, TypeError, ValueError) as exc:
        bad = next((r.get("_line") for r in records
                    if not {"C", "S", "ell"} <= set(r)), None)
        raise RecordFormatError(f"sample record needs C, S and ell ({exc})", bad) from None
    if len({len(e) for e in ell}) != 1:
        raise RecordFormatError("every ell vector must have the same length")
    return SampleSet(C, S, np.array(ell), dense)


def records_to_clicks(records: Sequence[dict]) -> list[tuple[Point, BoundingBox]]:
    out = []
    for r in records:
        try:
            out.append((Point(*map(float, r["point"])), BoundingBox(*map(float, r["target"]))))
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordFormatError(f"click record needs point and target ({exc})", r.get("_line")) from None
    return out


def write_manifest(path, fields: dict) -> None:
    """``key=value`` lines; values are single-line strings."""
    lines = []
    for k, v in fields.items():
        v = str(v)
        if "\n" in v or "=" in k:
            raise InvalidInputError(f"manifest field {k!r} is not single-line")
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(text: str) -> dict[str, str]:
    out = {}
    for no, line in _lines(text):
        key, sep, value = line.partition("=")
        if not sep:
            raise RecordFormatError(f"expected key=value, got {line!r}", no)
        out[key] = value
    return out
