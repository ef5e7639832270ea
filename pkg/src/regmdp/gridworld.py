"""Gridworld construction and the grid text format.

Grid text: one row per line with ``#`` wall, ``.`` open, ``X`` start, and any
other character a diamond whose reward is given by a legend line such as
``D1=5 D2=50 D3=200`` (``D`` followed by the cell character).  Optional
``wall_penalty=...`` and ``success_prob=...`` tokens may share the legend line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np

from .errors import InvalidGrid
from .mdp import FiniteMdp

WALL, OPEN, START = "#", ".", "X"
# up, down, left, right as (row, col) offsets
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
ACTION_NAMES = ("up", "down", "left", "right")

_LEGEND_TOKEN = re.compile(r"^(D(.)|wall_penalty|success_prob)=(.+)$")


@dataclass(frozen=True)
class GridSpec:
    cells: tuple  # tuple of row strings
    diamonds: dict = field(default_factory=dict)  # cell character -> reward
    wall_penalty: float = -0.1
    success_prob: float = 0.9

    @property
    def rows(self) -> int:
        return len(self.cells)

    @property
    def cols(self) -> int:
        return len(self.cells[0]) if self.cells else 0

    def kind(self, row, col) -> str:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return WALL
        return self.cells[row][col]


@dataclass(frozen=True, eq=False)
class GridMdp(FiniteMdp):
    """A FiniteMdp that remembers which cell each state is and where the starts are."""

    coords: tuple = ()
    starts: tuple = ()


def parse_grid(text: str) -> GridSpec:
    rows, diamonds, extra = [], {}, {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if "=" in line:
            for token in tokens:
                match = _LEGEND_TOKEN.match(token)
                if not match:
                    raise InvalidGrid(f"bad legend token {token!r}")
                try:
                    number = float(match.group(3))
                except ValueError:
                    raise InvalidGrid(f"bad number in legend token {token!r}") from None
                if match.group(2) is not None:
                    diamonds[match.group(2)] = number
                else:
                    extra[match.group(1)] = number
            continue
        rows.append(line)
    spec = GridSpec(tuple(rows), diamonds, **extra)
    check_grid(spec)
    return spec


def load_grid(path) -> GridSpec:
    with open(path) as fh:
        return parse_grid(fh.read())


def default_grid() -> GridSpec:
    return parse_grid(resources.files("regmdp").joinpath("data/default_grid.txt").read_text())


def check_grid(spec: GridSpec) -> None:
    if spec.rows == 0 or any(len(row) != spec.cols for row in spec.cells):
        raise InvalidGrid("grid rows must be non-empty and of equal length")
    known = {WALL, OPEN, START} | set(spec.diamonds)
    for r, row in enumerate(spec.cells):
        for c, ch in enumerate(row):
            if ch not in known:
                raise InvalidGrid(f"cell ({r}, {c}) has character {ch!r} with no legend entry")
    if not any(START in row for row in spec.cells):
        raise InvalidGrid("grid needs at least one start cell 'X'")
    if not 0 < spec.success_prob <= 1:
        raise InvalidGrid(f"success_prob must lie in (0, 1], got {spec.success_prob}")


def build_gridworld(spec: GridSpec) -> GridMdp:
    """Gridworld MDP over the open and start cells.

    An action moves in its direction with probability ``success_prob``;
    otherwise the outcome is uniform over staying put and the four
    neighbours.  Moving into a wall (or off the grid) pays ``wall_penalty``
    and entering a diamond pays its reward; both send the agent to a
    uniformly chosen start cell.  ``r(x, a)`` is the expected reward over
    outcomes.  Probabilities are accumulated exactly before conversion.
    """
    check_grid(spec)
    coords = [(r, c) for r in range(spec.rows) for c in range(spec.cols)
              if spec.cells[r][c] in (OPEN, START)]
    index = {cell: i for i, cell in enumerate(coords)}
    starts = [index[cell] for cell in coords if spec.kind(*cell) == START]
    n, n_actions = len(coords), len(MOVES)

    success = Fraction(spec.success_prob).limit_denominator(10**9)
    slip = (1 - success) / 5
    restart = Fraction(1, len(starts))
    P = np.zeros((n, n_actions, n))
    R = np.zeros((n, n_actions))
    for x, (row, col) in enumerate(coords):
        for a, intended in enumerate(MOVES):
            outcomes = [(intended, success)] + [(move, slip) for move in ((0, 0),) + MOVES]
            probs = {}
            reward = Fraction(0)
            for (dr, dc), p in outcomes:
                if p == 0:
                    continue
                target = (row + dr, col + dc)
                kind = spec.kind(*target)
                if kind in (OPEN, START):
                    probs[index[target]] = probs.get(index[target], Fraction(0)) + p
                    continue
                payoff = spec.wall_penalty if kind == WALL else spec.diamonds[kind]
                reward += p * Fraction(payoff)
                for s in starts:
                    probs[s] = probs.get(s, Fraction(0)) + p * restart
            assert sum(probs.values()) == 1
            for y, p in probs.items():
                P[x, a, y] = float(p)
            R[x, a] = float(reward)
    return GridMdp(P, R, coords=tuple(coords), starts=tuple(starts))


def render_policy(mdp: GridMdp, spec: GridSpec, policy) -> str:
    """Text picture of the most likely action in every cell."""
    arrows = "^v<>"
    lines = [list(row) for row in spec.cells]
    for x, (r, c) in enumerate(mdp.coords):
        lines[r][c] = arrows[int(np.argmax(policy[x]))]
    return "\n".join("".join(line) for line in lines)
