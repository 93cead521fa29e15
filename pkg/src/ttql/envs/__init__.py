from .grid import GridWorld, TabularMDP, grid_value_iteration, load_grid, random_gridworld
from .nav import NavEnv, NavWorld, load_world, nav_observe, nav_step

__all__ = [
    "GridWorld", "TabularMDP", "grid_value_iteration", "load_grid", "random_gridworld",
    "NavEnv", "NavWorld", "load_world", "nav_observe", "nav_step",
]
