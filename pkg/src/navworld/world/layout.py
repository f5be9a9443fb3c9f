"""Procedural maze layouts.

Grids use 1 for wall and 0 for floor, include the outer wall ring, and are
indexed [row, col].  World coordinates put cell (r, c) over the unit square
x in [c, c+1), y in [r, r+1).  Five generated kinds plus "custom" for
hand-written maps:

- static_small / random_small: open 5x10 interior, 50 locations
- static_large / random_large: open 9x15 interior, 135 locations
- static_mini: open 5x5 interior, 25 locations (short-budget variant)
- imaze: I-shaped corridors with four goal alcoves, 77 locations

Random kinds reshuffle goal and fruit per episode; static kinds fix them at
generation.  The I-maze keeps its corridors and apples fixed but draws the
episode goal from the four alcoves.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DataError

KINDS = ("imaze", "static_small", "static_large", "random_small", "random_large", "static_mini")

APPLE = "apple"
STRAWBERRY = "strawberry"

APPLE_FRACTION = 0.15
STRAWBERRY_FRACTION = 0.04

# High bit of a face texture id marks a visual cue decal.
DECAL_BIT = 0x8000
DECAL_FRACTION = 0.1

_OPEN_DIMS = {  # kind -> (interior rows, interior cols, episode budget in env steps)
    "static_small": (5, 10, 3600),
    "random_small": (5, 10, 3600),
    "static_large": (9, 15, 10800),
    "random_large": (9, 15, 10800),
    "static_mini": (5, 5, 900),
}
IMAZE_BUDGET = 3600


@dataclass(frozen=True)
class MazeLayout:
    kind: str
    seed: int
    grid: np.ndarray  # (H, W) uint8, 1 = wall
    face_tex: np.ndarray  # (H, W, 4) uint16 texture id per N/E/S/W face
    spawn_cells: tuple  # (r, c) candidates for spawning
    goal_cells: tuple  # (r, c) goal candidates (single cell for static kinds)
    fruit: tuple  # ((r, c, kind), ...) fixed placements; empty for random kinds
    budget: int  # env steps per episode
    floor_index: np.ndarray = field(repr=False, default=None)
    n_locations: int = 0

    @property
    def randomize_goal(self) -> bool:
        return self.kind.startswith("random") or self.kind == "imaze"

    @property
    def randomize_fruit(self) -> bool:
        return self.kind.startswith("random")

    def floor_cells(self):
        rows, cols = np.nonzero(self.grid == 0)
        return list(zip(rows.tolist(), cols.tolist()))


def _finalize(kind, seed, grid, spawn, goals, fruit, budget) -> MazeLayout:
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    if not (grid[0].all() and grid[-1].all() and grid[:, 0].all() and grid[:, -1].all()):
        raise ConfigurationError("layout border must be solid wall")  # the raycaster relies on it
    _check_connected(grid)
    floor_index = np.full(grid.shape, -1, dtype=np.int32)
    rows, cols = np.nonzero(grid == 0)
    floor_index[rows, cols] = np.arange(len(rows), dtype=np.int32)
    for r, c in list(spawn) + list(goals) + [(f[0], f[1]) for f in fruit]:
        if grid[r, c]:
            raise ConfigurationError(f"cell {(r, c)} marked special but is a wall")
    return MazeLayout(
        kind=kind,
        seed=int(seed),
        grid=grid,
        face_tex=assign_textures(grid, seed),
        spawn_cells=tuple(spawn),
        goal_cells=tuple(goals),
        fruit=tuple(fruit),
        budget=int(budget),
        floor_index=floor_index,
        n_locations=int(len(rows)),
    )


def _check_connected(grid: np.ndarray) -> None:
    floors = {(r, c) for r, c in zip(*np.nonzero(grid == 0))}
    if not floors:
        raise ConfigurationError("layout has no floor cells")
    start = next(iter(floors))
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for nr, nc in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if (nr, nc) in floors and (nr, nc) not in seen:
                seen.add((nr, nc))
                queue.append((nr, nc))
    if seen != floors:
        raise ConfigurationError(f"layout is not connected: {len(floors) - len(seen)} unreachable cells")


def assign_textures(grid: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic per-face texture ids; a fraction carry cue decals."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x7E57]))
    h, w = grid.shape
    tex = rng.integers(0, 24, size=(h, w, 4), dtype=np.uint16)
    decal = rng.random(size=(h, w, 4)) < DECAL_FRACTION
    tex[decal] |= DECAL_BIT
    tex[grid == 0] = 0
    return tex


def generate_layout(kind: str, seed: int) -> MazeLayout:
    """Build the layout for one maze kind; identical seeds give identical layouts."""
    if kind in _OPEN_DIMS:
        return _open_room(kind, seed)
    if kind == "imaze":
        return _imaze(seed)
    raise ConfigurationError(f"unknown maze kind {kind!r} (expected one of {KINDS})")


def _open_room(kind: str, seed: int) -> MazeLayout:
    rows, cols, budget = _OPEN_DIMS[kind]
    grid = np.ones((rows + 2, cols + 2), dtype=np.uint8)
    grid[1:-1, 1:-1] = 0
    floors = [(r, c) for r in range(1, rows + 1) for c in range(1, cols + 1)]
    spawn = tuple(floors)
    if kind.startswith("random"):
        goals, fruit = tuple(floors), ()
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0xF00D]))
        goal, fruit = _place_goal_and_fruit(floors, rng)
        goals = (goal,)
    return _finalize(kind, seed, grid, spawn, goals, fruit, budget)


def _place_goal_and_fruit(floors, rng):
    order = rng.permutation(len(floors))
    goal = floors[order[0]]
    n_apple = max(1, round(APPLE_FRACTION * len(floors)))
    n_straw = round(STRAWBERRY_FRACTION * len(floors))
    fruit = [(floors[i][0], floors[i][1], APPLE) for i in order[1 : 1 + n_apple]]
    fruit += [(floors[i][0], floors[i][1], STRAWBERRY) for i in order[1 + n_apple : 1 + n_apple + n_straw]]
    return goal, tuple(fruit)


def sample_episode_placements(layout: MazeLayout, rng: np.random.Generator):
    """Per-episode goal cell and fruit placements for one layout."""
    if layout.kind == "imaze":
        goal = layout.goal_cells[int(rng.integers(len(layout.goal_cells)))]
        return goal, layout.fruit
    if layout.randomize_fruit:
        floors = layout.floor_cells()
        goal, fruit = _place_goal_and_fruit(floors, rng)
        return goal, fruit
    if not layout.goal_cells:  # goal-less custom layouts (render test rooms)
        return None, layout.fruit
    return layout.goal_cells[0], layout.fruit


def _imaze(seed: int) -> MazeLayout:
    # 19x15 interior: two 2-row bars joined by a 13-cell central corridor,
    # with one alcove poking out at each of the four bar tips (77 floor cells).
    rows, cols = 19, 15
    grid = np.ones((rows + 2, cols + 2), dtype=np.uint8)
    mid = (cols - 1) // 2 + 1  # corridor column in grid coords
    alcoves = [(1, 1), (1, cols), (rows, 1), (rows, cols)]
    for r, c in alcoves:
        grid[r, c] = 0
    grid[2:4, 1 : cols + 1] = 0  # top bar
    grid[rows - 2 : rows, 1 : cols + 1] = 0  # bottom bar
    grid[4 : rows - 2, mid] = 0  # corridor
    corridor = [(r, mid) for r in range(4, rows - 2)]
    fruit = tuple((r, c, APPLE) for (r, c) in corridor[::2])
    spawns = tuple(cell for cell in corridor[1::2])  # corridor cells between the apples
    return _finalize("imaze", seed, grid, spawns, tuple(alcoves), fruit, IMAZE_BUDGET)


# ---------------------------------------------------------------------------
# plain-text export / import

_FRUIT_CHAR = {APPLE: "A", STRAWBERRY: "B"}
_CHAR_FRUIT = {v: k for k, v in _FRUIT_CHAR.items()}


def layout_to_text(layout: MazeLayout) -> str:
    """Serialize as a character grid preceded by a "kind seed" header.

    Spawn markers are written only when the spawn set is a strict subset of
    the floor (open-room kinds treat every floor cell as a spawn candidate,
    which stays implicit).
    """
    h, w = layout.grid.shape
    chars = [["#" if layout.grid[r, c] else "." for c in range(w)] for r in range(h)]
    mark_spawn = set(layout.spawn_cells) != set(layout.floor_cells())
    if mark_spawn:
        for r, c in layout.spawn_cells:
            chars[r][c] = "S"
    for r, c, kind in layout.fruit:
        chars[r][c] = _FRUIT_CHAR[kind]
    for r, c in layout.goal_cells:
        chars[r][c] = "G"
    lines = [f"{layout.kind} {layout.seed}"] + ["".join(row) for row in chars]
    return "\n".join(lines) + "\n"


def layout_from_text(text: str) -> MazeLayout:
    """Parse the plain-text grid format; inverse of layout_to_text."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError("empty layout text")
    header = lines[0].split()
    if len(header) != 2:
        raise DataError(f"bad layout header {lines[0]!r}, expected 'kind seed'")
    kind, seed = header[0], int(header[1])
    rows = lines[1:]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError("layout rows have inconsistent widths")
    h, w = len(rows), width
    grid = np.ones((h, w), dtype=np.uint8)
    spawn, goals, fruit = [], [], []
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == "#":
                continue
            grid[r, c] = 0
            if ch == "S":
                spawn.append((r, c))
            elif ch == "G":
                goals.append((r, c))
            elif ch in _CHAR_FRUIT:
                fruit.append((r, c, _CHAR_FRUIT[ch]))
            elif ch != ".":
                raise DataError(f"unknown layout character {ch!r} at row {r}, col {c}")
    if not spawn:
        spawn = [(int(r), int(c)) for r, c in zip(*np.nonzero(grid == 0))]
    if not goals and kind != "custom":
        raise DataError("layout text declares no goal cells")
    budget = _OPEN_DIMS.get(kind, (0, 0, IMAZE_BUDGET))[2]
    return _finalize(kind, seed, grid, spawn, goals, tuple(fruit), budget)
