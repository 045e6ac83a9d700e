"""
Scoring near misses
===================

A verifier only says right or wrong. The scorers here also say *how close*,
then round that closeness onto a few tiers so small, meaningless differences
do not leak into the reward.
"""
import numpy as np

from sweetspot import RewardConfig, compose_reward
from sweetspot.gui import BoundingBox, Point, field_value, gui_zone_score, sigma_levels
from sweetspot.grid import blockwise_score

# A 100x50 button. The field peaks at the centre and falls off with the
# box-normalised distance; anything outside the box scores nothing.
box = BoundingBox(0, 0, 100, 50)
for x in (50, 62, 75, 90, 100, 101):
    p = Point(x, 25)
    print(f"click at x={x:>3}: field {field_value(p, box):.4f}  tier {gui_zone_score(p, box):.2f}")

# The tier edges are the 1, 2 and 3 sigma contours of that field.
print("sigma levels:", np.round(sigma_levels()[:4], 6))

# The shaped reward keeps correctness on top: every success outranks every
# failure, however close the failure came.
cfg = RewardConfig(alpha=0.2)
print("hit at the edge   ", compose_reward(1, 0.02, cfg).R)
print("near miss (S=0.9) ", compose_reward(0, 0.9, cfg).R)

# Grids are scored block by block: a 3x3 partition, each block tiered on
# the fraction of cells it gets right.
ref = np.arange(81).reshape(9, 9) % 4
pred = ref.copy()
pred[:3, :3] = -1          # one block completely wrong
pred[3, 3:6] = -1          # one block with 3 of 9 cells wrong
print("blockwise score:", blockwise_score(pred, ref))
