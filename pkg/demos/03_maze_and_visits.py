"""
The four-room maze
==================

A 100 x 100 continuous plane split into four rooms by two walls with
doorways. We walk it randomly, count visited 1 x 1 cells, and write the
visit histogram as a PGM image.
"""

from pathlib import Path

import numpy as np

from vaac.env_maze import Maze, VisitGrid, export_histogram, rooms_visited

maze = Maze()
print("walls:", maze.config.size, "x", maze.config.size, "doorway width", maze.config.doorway_width)

rng = np.random.default_rng(0)
state = maze.reset()
grid = VisitGrid(maze.config.grid_size)
for t in range(20_000):
    state, reward, done = maze.step(state, rng.uniform(-1, 1, 2))
    grid.record(state.position)
    if done:
        state = maze.reset()

print("unique cells after 20k random steps:", grid.unique_cells())
print("rooms reached:", sorted(rooms_visited(grid, maze.config)))

out = Path("demo_output")
out.mkdir(exist_ok=True)
pgm, csv_path = export_histogram(grid, out / "random_walk")
print("histogram written to", pgm, "and", csv_path)
