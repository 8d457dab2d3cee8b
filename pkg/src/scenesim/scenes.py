"""Scene representation, optimal assignment and ground-truth scene distance.

A scene is a fixed-length multi-agent trajectory snippet: S agents observed
over T timesteps in pitch coordinates (meters, origin at pitch center).
Scene distance matches agents per role with the Hungarian algorithm and
averages the per-timestep Euclidean distance of matched trajectories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError

ROLE_POSSESSION = "possession-team"
ROLE_DEFENDING = "defending-team"
ROLE_BALL = "ball"

# Canonical stacking order of role groups for network inputs.
ROLE_ORDER = (ROLE_POSSESSION, ROLE_DEFENDING, ROLE_BALL)


@dataclass(frozen=True)
class PitchConfig:
    """Pitch bounds in meters, origin at center."""

    length: float = 105.0
    width: float = 68.0

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    @property
    def half_width(self) -> float:
        return self.width / 2.0


DEFAULT_PITCH = PitchConfig()


@dataclass
class Scene:
    """One multi-agent trajectory snippet.

    agents has shape (S, T, 2) in meters; roles tags each row as
    possession-team, defending-team or ball.
    """

    id: str
    agents: np.ndarray
    roles: tuple[str, ...]
    hz: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.agents = np.asarray(self.agents, dtype=np.float64)
        self.roles = tuple(self.roles)

    @property
    def n_agents(self) -> int:
        return self.agents.shape[0]

    @property
    def n_steps(self) -> int:
        return self.agents.shape[1]

    def validate(self, pitch: PitchConfig = DEFAULT_PITCH) -> None:
        if self.agents.ndim != 3 or self.agents.shape[2] != 2:
            raise InvalidInputError(
                f"scene {self.id}: agents must have shape (S, T, 2), got {self.agents.shape}"
            )
        if len(self.roles) != self.n_agents:
            raise InvalidInputError(
                f"scene {self.id}: {len(self.roles)} roles for {self.n_agents} agents"
            )
        if not np.all(np.isfinite(self.agents)):
            raise InvalidInputError(f"scene {self.id}: non-finite positions")
        unknown = set(self.roles) - set(ROLE_ORDER)
        if unknown:
            raise InvalidInputError(f"scene {self.id}: unknown roles {sorted(unknown)}")
        if self.roles.count(ROLE_BALL) != 1:
            raise InvalidInputError(f"scene {self.id}: exactly one ball agent required")
        if self.hz <= 0:
            raise InvalidInputError(f"scene {self.id}: hz must be positive")

    def role_rows(self, role: str) -> np.ndarray:
        """Row indices of the given role, in input order."""
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=int)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "agents": self.agents.tolist(),
            "roles": list(self.roles),
            "hz": self.hz,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            id=d["id"],
            agents=np.array(d["agents"], dtype=np.float64),
            roles=tuple(d["roles"]),
            hz=float(d["hz"]),
            meta=dict(d.get("meta", {})),
        )


@dataclass(frozen=True)
class Assignment:
    """Minimum-cost bijection between two sets of rows."""

    perm: tuple[int, ...]
    cost: float


@dataclass(frozen=True)
class TemplateOrdering:
    """Permutation placing a scene's rows into canonical template slots.

    order[j] is the original row index occupying canonical slot j; slots
    are grouped possession-team, defending-team, ball.
    """

    order: tuple[int, ...]
    centers: dict
    scales: dict


def hungarian_assign(cost: np.ndarray) -> Assignment:
    """Minimum-total-cost row assignment for a square cost matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1] or cost.shape[0] < 1:
        raise InvalidInputError(f"cost matrix must be square and non-empty, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidInputError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return Assignment(perm=tuple(int(c) for c in perm), cost=float(cost[rows, cols].sum()))


def trajectory_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise trajectory distance: Euclidean norm averaged over time.

    a: (n, T, 2), b: (m, T, 2) -> (n, m) matrix of mean per-timestep distances.
    """
    diff = a[:, None, :, :] - b[None, :, :, :]
    return np.linalg.norm(diff, axis=-1).mean(axis=-1)


def scene_distance(a: Scene, b: Scene, include_ball: bool = True) -> float:
    """Ground-truth scene distance: per-role Hungarian matching of
    trajectories, summing the time-averaged Euclidean row distances."""
    if a.agents.shape != b.agents.shape:
        raise InvalidInputError(
            f"scene shapes differ: {a.agents.shape} vs {b.agents.shape}"
        )
    roles = [ROLE_POSSESSION, ROLE_DEFENDING] + ([ROLE_BALL] if include_ball else [])
    total = 0.0
    for role in roles:
        ra, rb = a.role_rows(role), b.role_rows(role)
        if len(ra) != len(rb):
            raise InvalidInputError(
                f"role {role}: {len(ra)} agents in {a.id} vs {len(rb)} in {b.id}"
            )
        if len(ra) == 0:
            continue
        cost = trajectory_cost_matrix(a.agents[ra], b.agents[rb])
        total += hungarian_assign(cost).cost
    return total


def _circle_slots(mean_pos: np.ndarray) -> np.ndarray:
    """Slots of a circular template centered on the group's centroid and
    scaled to the per-dimension variance of the agent mean positions."""
    g = mean_pos.shape[0]
    center = mean_pos.mean(axis=0)
    scale = mean_pos.std(axis=0)
    angles = 2.0 * np.pi * np.arange(g) / g
    # Points uniform on a circle have per-dimension variance r^2/2; the
    # sqrt(2) factor makes the slot cloud match the agents' variance.
    offsets = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return center + np.sqrt(2.0) * scale * offsets


def template_order(scene: Scene) -> TemplateOrdering:
    """Canonical row ordering via circular-template matching, per role group.

    Within each role group, agents are Hungarian-matched by their mean
    position to the slots of a fitted circular template. Degenerate groups
    (all agents coincident) keep their input order.
    """
    order: list[int] = []
    centers: dict = {}
    scales: dict = {}
    for role in ROLE_ORDER:
        rows = scene.role_rows(role)
        if len(rows) == 0:
            continue
        mean_pos = scene.agents[rows].mean(axis=1)
        center = mean_pos.mean(axis=0)
        scale = mean_pos.std(axis=0)
        centers[role] = center
        scales[role] = scale
        if len(rows) == 1 or not np.any(scale > 0):
            order.extend(int(r) for r in rows)
            continue
        slots = _circle_slots(mean_pos)
        cost = np.linalg.norm(mean_pos[:, None, :] - slots[None, :, :], axis=-1)
        agent_idx, slot_idx = linear_sum_assignment(cost)
        slot_to_agent = np.empty(len(rows), dtype=int)
        slot_to_agent[slot_idx] = agent_idx
        order.extend(int(rows[i]) for i in slot_to_agent)
    return TemplateOrdering(order=tuple(order), centers=centers, scales=scales)


def scene_to_channels(scene: Scene, pitch: PitchConfig = DEFAULT_PITCH) -> np.ndarray:
    """Template-ordered channel stack for the network: shape (2S, T),
    coordinates normalized to [-1, 1] (raw meters stay in the Scene)."""
    ordering = template_order(scene)
    ordered = scene.agents[list(ordering.order)]
    norm = ordered / np.array([pitch.half_length, pitch.half_width])
    s, t, _ = norm.shape
    return norm.transpose(0, 2, 1).reshape(s * 2, t)


def save_scene_archive(scenes: list[Scene], path: str | Path) -> None:
    """One JSON document per scene, as a JSON-lines archive."""
    path = Path(path)
    with path.open("w") as fh:
        for scene in scenes:
            fh.write(json.dumps(scene.to_dict()) + "\n")


def load_scene_archive(path: str | Path) -> list[Scene]:
    scenes = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                scenes.append(Scene.from_dict(json.loads(line)))
    return scenes
