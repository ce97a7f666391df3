"""Grid hallway with a turning robot, slippery moves, traps and gold.

Map text: one grid row per line, ``param key=value`` header lines and ``#``
comments. Grid characters: ``1`` wall, ``x`` trap, ``g`` gold, ``s`` start,
space or ``.`` empty. Any other letter is an empty cell carrying that label,
so a start can be named as ``param start=B``.

A state is (cell, orientation, collected-gold mask) plus one failure sink.
Gold is paid on the step taken from an uncollected gold cell, which keeps
the reward a function of (state, action).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from riskplan.mdp import MdpModel, make_model

WALL, TRAP, GOLD, START = "1", "x", "g", "s"
EMPTY = (" ", ".")
ORIENTATIONS = ("north", "east", "south", "west")
DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))
ACTIONS = ("forward", "left", "right")
FORWARD, LEFT, RIGHT = 0, 1, 2

# Two-row corridor: the robot starts at B facing east; E sits between the
# trap above and the gold to its right.
TRAP_MAZE_MAP = """\
param start=B
param orientation=east
param slip_prob=0.2
param trap_destroy_prob=0.2
param gold_reward=100
param step_penalty=-1
111111
1ABx 1
1DCEg1
111111
"""


class HallwayFormatError(ValueError):
    pass


_PARAM_TYPES = {
    "start": str,
    "orientation": str,
    "slip_prob": float,
    "trap_destroy_prob": float,
    "gold_reward": float,
    "step_penalty": float,
    "finish_on_gold": bool,
}


@dataclass(frozen=True)
class HallwayMap:
    rows: tuple[str, ...]
    start: tuple[int, int]
    orientation: int = 1
    slip_prob: float = 0.2
    trap_destroy_prob: float = 0.2
    gold_reward: float = 100.0
    step_penalty: float = -1.0
    finish_on_gold: bool = False
    start_label: Optional[str] = None
    cells: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)
    golds: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("slip_prob", "trap_destroy_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise HallwayFormatError(f"{name} must lie in [0, 1]")
        if self.slip_prob >= 1.0:
            raise HallwayFormatError("slip_prob must be below 1")
        cells = [(r, c) for r, row in enumerate(self.rows) for c, ch in enumerate(row) if ch != WALL]
        object.__setattr__(self, "cells", tuple(cells))
        object.__setattr__(self, "golds", tuple(p for p in cells if self.kind(p) == GOLD))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.rows[0])

    def kind(self, pos: tuple[int, int]) -> str:
        ch = self.rows[pos[0]][pos[1]]
        if ch in (WALL, TRAP, GOLD):
            return ch
        return " "

    def is_wall(self, pos: tuple[int, int]) -> bool:
        r, c = pos
        n_rows, n_cols = self.shape
        return not (0 <= r < n_rows and 0 <= c < n_cols) or self.rows[r][c] == WALL

    def counts(self) -> dict[str, int]:
        kinds = [self.kind(p) for p in self.cells]
        return {"cells": len(kinds), "gold": kinds.count(GOLD), "trap": kinds.count(TRAP),
                "empty": kinds.count(" ")}

    def state_count(self) -> int:
        return len(self.cells) * 4 * 2 ** len(self.golds) + 1


def _find_label(rows, label):
    hits = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == label]
    if len(hits) != 1:
        raise HallwayFormatError(f"label {label!r} must mark exactly one cell")
    return hits[0]


def parse_hallway(text: str) -> HallwayMap:
    params: dict[str, object] = {}
    rows: list[str] = []
    for raw in text.splitlines():
        line = raw.rstrip("\n")
        if line.startswith("#"):
            continue
        if line.startswith("param "):
            key, sep, value = line[6:].strip().partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in _PARAM_TYPES:
                raise HallwayFormatError(f"bad parameter line {line!r}")
            kind = _PARAM_TYPES[key]
            if kind is bool:
                if value not in ("true", "false"):
                    raise HallwayFormatError(f"{key} must be true or false")
                params[key] = value == "true"
            else:
                try:
                    params[key] = kind(value)
                except ValueError as exc:
                    raise HallwayFormatError(f"bad value for {key}: {value!r}") from exc
            continue
        if not line.strip():
            if rows:
                rows.append(line)
            continue
        rows.append(line)
    while rows and not rows[-1].strip():
        rows.pop()
    if not rows:
        raise HallwayFormatError("empty grid")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise HallwayFormatError("grid is not rectangular")
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if not (ch in (WALL, TRAP, GOLD, START) or ch in EMPTY or ch.isalpha()):
                raise HallwayFormatError(f"unknown cell {ch!r} at ({r},{c})")
            border = r in (0, len(rows) - 1) or c in (0, width - 1)
            if border and ch != WALL:
                raise HallwayFormatError(f"border cell ({r},{c}) is not a wall")
    starts = [(r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch == START]
    label = params.pop("start", None)
    if len(starts) > 1:
        raise HallwayFormatError("more than one start cell")
    if starts and label is not None:
        raise HallwayFormatError("start given both in the grid and as a parameter")
    if starts:
        start = starts[0]
    elif label is not None:
        start = _find_label(rows, label)
    else:
        raise HallwayFormatError("no start cell")
    orient = params.pop("orientation", "east")
    if orient not in ORIENTATIONS:
        raise HallwayFormatError(f"unknown orientation {orient!r}")
    m = HallwayMap(rows=tuple(rows), start=start, orientation=ORIENTATIONS.index(orient),
                   start_label=label, **params)
    return m


def format_hallway(m: HallwayMap) -> str:
    lines = []
    if m.start_label is not None:
        lines.append(f"param start={m.start_label}")
    lines.append(f"param orientation={ORIENTATIONS[m.orientation]}")
    lines.append(f"param slip_prob={m.slip_prob!r}")
    lines.append(f"param trap_destroy_prob={m.trap_destroy_prob!r}")
    lines.append(f"param gold_reward={m.gold_reward!r}")
    lines.append(f"param step_penalty={m.step_penalty!r}")
    lines.append(f"param finish_on_gold={'true' if m.finish_on_gold else 'false'}")
    lines.extend(m.rows)
    return "\n".join(lines) + "\n"


def load_hallway(path) -> HallwayMap:
    with open(path) as fh:
        return parse_hallway(fh.read())


class HallwayIndex:
    """Bijection between (cell, orientation, mask) and state numbers."""

    def __init__(self, m: HallwayMap):
        self.map = m
        self.cell_id = {p: i for i, p in enumerate(m.cells)}
        self.gold_bit = {p: 1 << i for i, p in enumerate(m.golds)}
        self.n_masks = 2 ** len(m.golds)
        self.full_mask = self.n_masks - 1
        self.failure = len(m.cells) * 4 * self.n_masks

    @property
    def n_states(self) -> int:
        return self.failure + 1

    def encode(self, pos, orientation: int, mask: int) -> int:
        return (self.cell_id[pos] * 4 + orientation) * self.n_masks + mask

    def decode(self, s: int) -> tuple[tuple[int, int], int, int]:
        if s == self.failure:
            raise ValueError("the failure sink has no position")
        rest, mask = divmod(s, self.n_masks)
        cell, orientation = divmod(rest, 4)
        return self.map.cells[cell], orientation, mask

    def gold_collected(self, s: int) -> int:
        if s == self.failure:
            return 0
        return bin(self.decode(s)[2]).count("1")


def _move_outcomes(m: HallwayMap, pos, o) -> list[tuple[tuple[int, int], float]]:
    """Cells reached by a forward move with their probabilities."""
    dr, dc = DELTAS[o]
    target = (pos[0] + dr, pos[1] + dc)
    if m.is_wall(target):
        return [(pos, 1.0)]
    out = {}
    straight = 1.0 - m.slip_prob
    for side in ((o - 1) % 4, (o + 1) % 4):
        sr, sc = DELTAS[side]
        diag = (target[0] + sr, target[1] + sc)
        if m.is_wall(diag):
            straight += m.slip_prob / 2
        elif m.slip_prob > 0:
            out[diag] = out.get(diag, 0.0) + m.slip_prob / 2
    if straight > 0:
        out[target] = out.get(target, 0.0) + straight
    return list(out.items())


def build_hallway_mdp(m: HallwayMap, discount: float = 0.95, horizon: int = 40) -> MdpModel:
    idx = HallwayIndex(m)
    fail = idx.failure
    transitions = []
    rewards = []
    labels = []
    for pos in m.cells:
        for o in range(4):
            for mask in range(idx.n_masks):
                labels.append(f"({pos[0]},{pos[1]}){ORIENTATIONS[o][0].upper()}m{mask}")
                if m.finish_on_gold and mask == idx.full_mask and m.golds:
                    s = idx.encode(pos, o, mask)
                    transitions.append([{s: 1.0}] * 3)
                    rewards.append([0.0] * 3)
                    continue
                bit = idx.gold_bit.get(pos, 0)
                pay = m.step_penalty
                if bit and not mask & bit:
                    pay += m.gold_reward
                nmask = mask | bit
                row = []
                for a in range(3):
                    dist: dict[int, float] = {}
                    if a == FORWARD:
                        for cell, q in _move_outcomes(m, pos, o):
                            if cell != pos and m.kind(cell) == TRAP and m.trap_destroy_prob > 0:
                                dist[fail] = dist.get(fail, 0.0) + q * m.trap_destroy_prob
                                q *= 1.0 - m.trap_destroy_prob
                            if q > 0:
                                t = idx.encode(cell, o, nmask)
                                dist[t] = dist.get(t, 0.0) + q
                    else:
                        no = (o - 1) % 4 if a == LEFT else (o + 1) % 4
                        dist[idx.encode(pos, no, nmask)] = 1.0
                    row.append(dist)
                transitions.append(row)
                rewards.append([pay] * 3)
    transitions.append([{fail: 1.0}] * 3)
    rewards.append([0.0] * 3)
    labels.append("fail")
    s0 = idx.encode(m.start, m.orientation, 0)
    return make_model(transitions, rewards, s0, discount, {fail}, horizon,
                      state_labels=labels, action_labels=ACTIONS)


def reachable_states(model: MdpModel) -> set[int]:
    seen = {model.initial_state}
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        for succ, _ in model.transitions[s]:
            for t in succ:
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
    return seen


def trap_maze_map(**overrides) -> HallwayMap:
    m = parse_hallway(TRAP_MAZE_MAP)
    return replace(m, **overrides) if overrides else m
