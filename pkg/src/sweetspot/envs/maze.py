"""Tabular maze navigation: generation, BFS reference paths and a softmax policy."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..core import StepRecord, Trajectory
from ..errors import InvalidInputError, NoPathError
from ..grid import MazeSpec, blockwise_score, maze_verify, path_to_occupancy
from .rollout import Rollout

__all__ = [
    "MOVES",
    "MazePolicy",
    "MazePayload",
    "generate_maze",
    "bfs_shortest_path",
    "rollout_maze",
]

# up, down, left, right
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def generate_maze(H: int, W: int, seed: int) -> MazeSpec:
    """Perfect maze by seeded depth-first carving on the odd-coordinate lattice."""
    if H < 5 or W < 5 or H % 2 == 0 or W % 2 == 0:
        raise InvalidInputError(f"maze dimensions must be odd and >= 5, got {H}x{W}")
    rng = np.random.default_rng(seed)
    walls = np.ones((H, W), dtype=np.int64)
    start = (1, 1)
    walls[start] = 0
    stack = [start]
    while stack:
        r, c = stack[-1]
        nbrs = [(r + 2 * dr, c + 2 * dc, dr, dc) for dr, dc in MOVES
                if 0 < r + 2 * dr < H - 1 and 0 < c + 2 * dc < W - 1
                and walls[r + 2 * dr, c + 2 * dc] == 1]
        if not nbrs:
            stack.pop()
            continue
        nr, nc, dr, dc = nbrs[rng.integers(len(nbrs))]
        walls[r + dr, c + dc] = 0
        walls[nr, nc] = 0
        stack.append((nr, nc))
    return MazeSpec(walls, start, (H - 2, W - 2))


def bfs_shortest_path(maze: MazeSpec) -> list[tuple[int, int]]:
    """Shortest start-goal path; ties resolved by the up/down/left/right order."""
    return list(_bfs_cached(maze))


@lru_cache(maxsize=256)
def _bfs_cached(maze: MazeSpec) -> tuple[tuple[int, int], ...]:
    prev = {maze.start: None}
    queue = deque([maze.start])
    while queue:
        cell = queue.popleft()
        if cell == maze.goal:
            break
        for dr, dc in MOVES:
            nxt = (cell[0] + dr, cell[1] + dc)
            if nxt not in prev and maze.is_open(nxt):
                prev[nxt] = cell
                queue.append(nxt)
    if maze.goal not in prev:
        raise NoPathError("goal is unreachable from start")
    path = [maze.goal]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    return tuple(reversed(path))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class MazePolicy:
    """Independent softmax over the four moves at every open cell of one maze."""

    def __init__(self, maze: MazeSpec, logits=None):
        self.maze = maze
        self.cells = maze.open_cells()
        self.index = {cell: i for i, cell in enumerate(self.cells)}
        shape = (len(self.cells), 4)
        logits = np.zeros(shape) if logits is None else np.asarray(logits, dtype=float).reshape(shape)
        if not np.isfinite(logits).all():
            raise InvalidInputError("maze policy logits must be finite")
        self.logits = logits
        self.logits.setflags(write=False)
        self.probs = _softmax(logits)

    @property
    def params(self) -> np.ndarray:
        return self.logits.ravel()

    def with_params(self, theta) -> "MazePolicy":
        return MazePolicy(self.maze, np.array(theta, dtype=float))

    def action_probs(self, cell) -> np.ndarray:
        return self.probs[self.index[cell]]

    def step_log_probs(self, rollout: Rollout) -> np.ndarray:
        idx = [self.index[cell] for cell, _ in rollout.payload.actions]
        acts = [a for _, a in rollout.payload.actions]
        return np.log(self.probs[idx, acts])

    def log_prob(self, rollout: Rollout) -> float:
        return float(sum(self.step_log_probs(rollout)))

    def step_scores(self, rollout: Rollout) -> np.ndarray:
        """Per-decision gradients of ``log pi(a_t | s_t)``, shape ``(T + 1, n_params)``."""
        out = np.zeros((len(rollout.payload.actions),) + self.logits.shape)
        for t, (cell, a) in enumerate(rollout.payload.actions):
            i = self.index[cell]
            out[t, i] -= self.probs[i]
            out[t, i, a] += 1.0
        return out.reshape(len(out), -1)

    def score(self, rollout: Rollout) -> np.ndarray:
        grad = np.zeros_like(self.logits)
        for cell, a in rollout.payload.actions:
            i = self.index[cell]
            grad[i] -= self.probs[i]
            grad[i, a] += 1.0
        return grad.ravel()

    def _transitions(self):
        """Per-cell successor index (or -1 for an illegal move) for each action."""
        nxt = np.full((len(self.cells), 4), -1)
        for i, (r, c) in enumerate(self.cells):
            for a, (dr, dc) in enumerate(MOVES):
                j = self.index.get((r + dr, c + dc))
                if j is not None:
                    nxt[i, a] = j
        return nxt

    def occupancy(self, max_steps: int) -> tuple[np.ndarray, float]:
        """Expected visits to each non-goal cell before each decision, and P(reach goal)."""
        nxt = self._transitions()
        goal = self.index[self.maze.goal]
        n = len(self.cells)
        alive = np.zeros(n)
        alive[self.index[self.maze.start]] = 1.0
        visits = np.zeros(n)
        success = 0.0
        legal = nxt >= 0
        for _ in range(max_steps):
            visits += alive
            flow = alive[:, None] * self.probs
            new = np.zeros(n)
            np.add.at(new, nxt[legal], flow[legal])
            success += new[goal]
            new[goal] = 0.0
            alive = new
            if alive.sum() < 1e-300:
                break
        return visits, float(success)

    def success_probability(self, maze: MazeSpec, max_steps: int) -> float:
        return self.occupancy(max_steps)[1]

    def kl(self, other: "MazePolicy", maze: MazeSpec, max_steps: int) -> float:
        """Exact trajectory-level KL(self || other) under ``max_steps`` decisions."""
        visits, _ = self.occupancy(max_steps)
        per_cell = np.sum(self.probs * (np.log(self.probs) - np.log(other.probs)), axis=1)
        return float(max(0.0, visits @ per_cell))


@dataclass(frozen=True)
class MazePayload:
    path: tuple[tuple[int, int], ...]
    actions: tuple[tuple[tuple[int, int], int], ...]


def rollout_maze(policy: MazePolicy, maze: MazeSpec, max_steps: int,
                 rng: np.random.Generator) -> Rollout:
    """Walk from the start until the goal, an illegal move, or ``max_steps`` moves."""
    if max_steps < 1:
        raise InvalidInputError("max_steps must be >= 1")
    ref = bfs_shortest_path(maze)
    ref_cells = set(ref)
    cell = maze.start
    path = [cell]
    actions = []
    steps = []
    log_prob = 0.0
    for _ in range(max_steps):
        p = policy.action_probs(cell)
        a = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
        a = min(a, 3)
        actions.append((cell, a))
        log_prob += float(np.log(p[a]))
        nxt = (cell[0] + MOVES[a][0], cell[1] + MOVES[a][1])
        if not maze.is_open(nxt):
            steps.append(StepRecord(0.0))
            break
        steps.append(StepRecord(1.0 if nxt in ref_cells else 0.0))
        path.append(nxt)
        cell = nxt
        if cell == maze.goal:
            break
    H, W = maze.shape
    occ = path_to_occupancy(path, H, W)
    ref_occ = path_to_occupancy(ref, H, W)
    C = maze_verify(path, maze)
    payload = MazePayload(tuple(path), tuple(actions))
    rollout = Rollout(
        trajectory=Trajectory(tuple(steps), C),
        raw_score=blockwise_score(occ, ref_occ),
        dense_score=float(np.count_nonzero(occ == ref_occ)) / occ.size,
        correct=C,
        log_prob=log_prob,
        score_gradient=np.empty(0),
        payload=payload,
    )
    object.__setattr__(rollout, "score_gradient", policy.score(rollout))
    return rollout
