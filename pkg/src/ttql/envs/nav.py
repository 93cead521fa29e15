"""Planar obstacle-navigation simulator.

A point "drone" flies through a rectangular room with axis-aligned box
obstacles. Action ``k`` of ``A`` moves it along heading ``2*pi*k/A`` by one
nominal speed step, with Gaussian error on both heading and distance. Touching
an obstacle or a wall ends the episode. Otherwise the reward grows linearly
with clearance to the nearest obstacle, saturating at ``safe_distance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..mdp import MDPError, ParameterError
from ..util import load_toml

BUNDLED_MAPS = ("empty", "pyramid", "techno", "complex")


@dataclass(frozen=True)
class NavWorld:
    width: float
    height: float
    obstacles: tuple  # of (x, y, w, h)
    start_pose: tuple
    action_count: int = 25
    speed: float = 0.4
    noise_sigma_speed: Optional[float] = None  # None -> 0.05 * speed
    noise_sigma_angle: float = 0.03
    safe_distance: float = 1.2
    collision_penalty: float = -1.0
    n_rays: Optional[int] = None  # None -> action_count
    name: str = ""
    _boxes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        obstacles = tuple(tuple(float(v) for v in o) for o in self.obstacles)
        object.__setattr__(self, "obstacles", obstacles)
        object.__setattr__(self, "start_pose", tuple(float(v) for v in self.start_pose))
        if self.noise_sigma_speed is None:
            object.__setattr__(self, "noise_sigma_speed", 0.05 * self.speed)
        if self.n_rays is None:
            object.__setattr__(self, "n_rays", self.action_count)
        boxes = np.array([(x, y, x + w, y + h) for x, y, w, h in obstacles], dtype=float).reshape(-1, 4)
        object.__setattr__(self, "_boxes", boxes)
        if any(w <= 0 or h <= 0 for _, _, w, h in obstacles):
            raise ParameterError("obstacle widths and heights must be positive")
        if self.action_count < 2:
            raise ParameterError("action_count must be >= 2")
        if not self.speed > 0 or not self.safe_distance > 0:
            raise ParameterError("speed and safe_distance must be > 0")
        if self.noise_sigma_speed < 0 or self.noise_sigma_angle < 0:
            raise ParameterError("noise scales must be >= 0")
        if self.n_rays < 1:
            raise ParameterError("n_rays must be >= 1")
        if self.in_collision(self.start_pose):
            raise ParameterError(f"start pose {self.start_pose} is outside the room or inside an obstacle")

    @property
    def observation_dim(self) -> int:
        return self.n_rays

    def in_collision(self, pose, tol: float = 1e-9) -> bool:
        """True if ``pose`` touches a wall or a (closed) obstacle.

        ``tol`` absorbs the rounding in contact points computed by ``nav_step``.
        """
        x, y = pose
        if not (tol < x < self.width - tol and tol < y < self.height - tol):
            return True
        b = self._boxes
        return bool(np.any(
            (b[:, 0] - tol <= x) & (x <= b[:, 2] + tol) & (b[:, 1] - tol <= y) & (y <= b[:, 3] + tol)
        ))

    def clearance(self, pose) -> float:
        """Distance from ``pose`` to the nearest wall or obstacle."""
        x, y = pose
        d = min(x, self.width - x, y, self.height - y)
        b = self._boxes
        if len(b):
            dx = np.maximum.reduce([b[:, 0] - x, np.zeros(len(b)), x - b[:, 2]])
            dy = np.maximum.reduce([b[:, 1] - y, np.zeros(len(b)), y - b[:, 3]])
            d = min(d, float(np.min(np.hypot(dx, dy))))
        return d


def _segment_hits(world: NavWorld, origin, deltas: np.ndarray) -> np.ndarray:
    """First-contact fraction along each segment ``origin -> origin + delta``.

    Returns ``inf`` for segments that stay clear. ``deltas`` has shape ``(n, 2)``.
    """
    x, y = origin
    dx, dy = deltas[:, 0], deltas[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        # walls: first time a coordinate reaches 0 or the room size
        tx = np.where(dx > 0, (world.width - x) / dx, np.where(dx < 0, -x / dx, np.inf))
        ty = np.where(dy > 0, (world.height - y) / dy, np.where(dy < 0, -y / dy, np.inf))
        t = np.minimum(tx, ty)
        b = world._boxes
        if len(b):
            lo_x, lo_y, hi_x, hi_y = (b[:, i][None, :] for i in range(4))
            ddx, ddy = dx[:, None], dy[:, None]
            # slab method; a zero direction component is either always inside the slab or never
            ax, bx = (lo_x - x) / ddx, (hi_x - x) / ddx
            ay, by = (lo_y - y) / ddy, (hi_y - y) / ddy
            inside_x = (lo_x <= x) & (x <= hi_x)
            inside_y = (lo_y <= y) & (y <= hi_y)
            enter_x = np.where(ddx == 0, np.where(inside_x, -np.inf, np.inf), np.minimum(ax, bx))
            exit_x = np.where(ddx == 0, np.where(inside_x, np.inf, -np.inf), np.maximum(ax, bx))
            enter_y = np.where(ddy == 0, np.where(inside_y, -np.inf, np.inf), np.minimum(ay, by))
            exit_y = np.where(ddy == 0, np.where(inside_y, np.inf, -np.inf), np.maximum(ay, by))
            enter = np.maximum(enter_x, enter_y)
            leave = np.minimum(exit_x, exit_y)
            hit = (enter <= leave) & (leave >= 0)
            t_box = np.where(hit, np.maximum(enter, 0.0), np.inf).min(axis=1)
            t = np.minimum(t, t_box)
    return np.where(t <= 1.0, t, np.inf)


def nav_step(world: NavWorld, pose, action: int, rng: np.random.Generator):
    """Move from ``pose`` under ``action``; returns ``(new_pose, reward, terminal)``.

    Always draws exactly two normal variates (angle, then speed) so the random
    stream advances identically whatever the noise scales are.
    """
    if world.in_collision(pose):
        raise MDPError(f"cannot step from collision pose {tuple(pose)}")
    if not 0 <= action < world.action_count:
        raise MDPError(f"action {action} outside [0, {world.action_count})")
    heading = 2.0 * math.pi * action / world.action_count + rng.normal(0.0, world.noise_sigma_angle)
    dist = max(world.speed + rng.normal(0.0, world.noise_sigma_speed), 0.0)
    delta = np.array([[dist * math.cos(heading), dist * math.sin(heading)]])
    t = _segment_hits(world, pose, delta)[0]
    x, y = pose
    if np.isfinite(t):
        return (x + t * delta[0, 0], y + t * delta[0, 1]), world.collision_penalty, True
    new_pose = (x + delta[0, 0], y + delta[0, 1])
    reward = min(world.clearance(new_pose), world.safe_distance) / world.safe_distance
    return new_pose, reward, False


def ray_angles(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


def nav_observe(world: NavWorld, pose) -> np.ndarray:
    """Normalized ray distances in ``[0, 1]``, clipped at ``safe_distance``."""
    angles = ray_angles(world.n_rays)
    deltas = world.safe_distance * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    t = _segment_hits(world, pose, deltas)
    return np.minimum(t, 1.0)


class NavEnv:
    """Episode wrapper around a :class:`NavWorld`; states are ray observations."""

    def __init__(self, world: NavWorld):
        self.world = world
        self.pose = None
        self.done = True

    @property
    def action_count(self) -> int:
        return self.world.action_count

    @property
    def observation_dim(self) -> int:
        return self.world.observation_dim

    def reset(self) -> np.ndarray:
        self.pose = self.world.start_pose
        self.done = False
        return nav_observe(self.world, self.pose)

    def step(self, action: int, rng: np.random.Generator):
        if self.done:
            raise MDPError("step called after a terminal transition; reset first")
        self.pose, reward, terminal = nav_step(self.world, self.pose, action, rng)
        self.done = terminal
        return nav_observe(self.world, self.pose), reward, terminal


def _parse_world(data: dict, name: str) -> dict:
    known = {"name", "width", "height", "start", "obstacles"}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown map keys: {sorted(unknown)}")
    obstacles = data.get("obstacles", [])
    for row in obstacles:
        if len(row) != 4:
            raise ParameterError(f"obstacle rows need four numbers x, y, w, h; got {row}")
    return dict(
        width=float(data["width"]),
        height=float(data["height"]),
        obstacles=tuple(tuple(row) for row in obstacles),
        start_pose=tuple(data["start"]),
        name=data.get("name", name),
    )


def map_path(name_or_path: Union[str, Path]) -> Path:
    """Resolve a bundled map name or a filesystem path."""
    if str(name_or_path) in BUNDLED_MAPS:
        return Path(str(resources.files("ttql") / "maps" / f"{name_or_path}.toml"))
    path = Path(name_or_path)
    if not path.is_file():
        raise FileNotFoundError(f"map file not found: {path}")
    return path


def load_world(name_or_path: Union[str, Path], **physics) -> NavWorld:
    """Load room geometry from a map file and apply ``physics`` overrides."""
    path = map_path(name_or_path)
    return NavWorld(**_parse_world(load_toml(path), path.stem), **physics)
