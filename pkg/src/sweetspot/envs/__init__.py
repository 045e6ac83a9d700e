"""Desk-scale environments producing rollouts for GRPO training."""
from .click import (DEFAULT_SCREEN, ClickPayload, ClickPolicy, OffsetSummary, click_task,
                    offset_stats, offset_stats_from_points, rollout_click)
from .maze import MOVES, MazePayload, MazePolicy, bfs_shortest_path, generate_maze, rollout_maze
from .rollout import Rollout, rollout_rng

__all__ = [
    "DEFAULT_SCREEN", "ClickPayload", "ClickPolicy", "OffsetSummary", "click_task",
    "offset_stats", "offset_stats_from_points", "rollout_click", "MOVES", "MazePayload", "MazePolicy",
    "bfs_shortest_path", "generate_maze", "rollout_maze", "Rollout", "rollout_rng",
]
