"""Seeded synthetic scene generator.

Stands in for proprietary tracking data: produces scenes from a small set
of play archetypes with a long-tailed frequency mix. Each scene carries a
hidden archetype tag in its meta, usable as latent ground truth by the
simulated oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .scenes import (
    DEFAULT_PITCH,
    ROLE_BALL,
    ROLE_DEFENDING,
    ROLE_POSSESSION,
    PitchConfig,
    Scene,
)

# (name, probability, possession-center x/y fractions, team drift m/s, agitation)
_ARCHETYPES = {
    "buildup": dict(cx=-0.45, cy=0.0, spread=12.0, drift=(1.2, 0.0), agit=1.0),
    "wing_attack": dict(cx=0.15, cy=0.65, spread=9.0, drift=(3.5, -0.8), agit=1.6),
    "counter": dict(cx=-0.2, cy=0.0, spread=14.0, drift=(5.5, 0.0), agit=2.2),
    "set_piece": dict(cx=0.75, cy=0.35, spread=6.0, drift=(0.2, 0.0), agit=0.5),
}

DEFAULT_ARCHETYPE_MIX = (
    ("buildup", 0.55),
    ("wing_attack", 0.25),
    ("counter", 0.13),
    ("set_piece", 0.07),
)


@dataclass(frozen=True)
class SynthProfile:
    """Generation parameters: team sizes, kinematics and archetype mix."""

    team_size: int = 11
    hz: float = 25.0
    duration_s: float = 5.0
    max_speed: float = 9.0  # m/s cap on any agent
    archetype_mix: tuple = DEFAULT_ARCHETYPE_MIX
    pitch: PitchConfig = field(default_factory=PitchConfig)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s * self.hz))

    @property
    def n_agents(self) -> int:
        return 2 * self.team_size + 1


DESK_PROFILE = SynthProfile(team_size=5, hz=10.0, duration_s=5.0)


def _smooth_noise(rng: np.random.Generator, n_agents: int, n_steps: int, scale: float) -> np.ndarray:
    """Temporally smoothed velocity noise, shape (n_agents, n_steps, 2)."""
    raw = rng.normal(0.0, scale, size=(n_agents, n_steps, 2))
    kernel = np.ones(7) / 7.0
    smoothed = np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="same"), 1, raw)
    return smoothed


def _team_positions(
    rng: np.random.Generator,
    n: int,
    n_steps: int,
    hz: float,
    center: np.ndarray,
    spread: float,
    drift: np.ndarray,
    agit: float,
    max_speed: float,
    pitch: PitchConfig,
) -> np.ndarray:
    start = center + rng.normal(0.0, spread, size=(n, 2))
    vel = drift + _smooth_noise(rng, n, n_steps, agit)
    speed = np.linalg.norm(vel, axis=-1, keepdims=True)
    over = speed > max_speed
    vel = np.where(over, vel * (max_speed / np.maximum(speed, 1e-12)), vel)
    pos = start[:, None, :] + np.cumsum(vel / hz, axis=1)
    pos[..., 0] = np.clip(pos[..., 0], -pitch.half_length, pitch.half_length)
    pos[..., 1] = np.clip(pos[..., 1], -pitch.half_width, pitch.half_width)
    return pos


def synth_scene(rng: np.random.Generator, scene_id: str, profile: SynthProfile) -> Scene:
    names = [name for name, _ in profile.archetype_mix]
    probs = np.array([p for _, p in profile.archetype_mix])
    probs = probs / probs.sum()
    archetype = names[int(rng.choice(len(names), p=probs))]
    spec = _ARCHETYPES[archetype]
    pitch = profile.pitch
    n, t = profile.team_size, profile.n_steps

    center = np.array([spec["cx"] * pitch.half_length, spec["cy"] * pitch.half_width])
    drift = np.array(spec["drift"])
    possession = _team_positions(
        rng, n, t, profile.hz, center, spec["spread"], drift, spec["agit"],
        profile.max_speed, pitch,
    )
    # Defenders shadow the possession team from the right, drifting with it.
    def_center = center + np.array([0.25 * pitch.half_length, 0.0])
    defending = _team_positions(
        rng, n, t, profile.hz, def_center, spec["spread"] * 1.1, drift * 0.7,
        spec["agit"], profile.max_speed, pitch,
    )
    # Ball stays near a rotating subset of possession players.
    carrier = int(rng.integers(n))
    ball = possession[carrier] + _smooth_noise(rng, 1, t, spec["agit"] * 2.0)[0].cumsum(axis=0) / profile.hz
    ball[:, 0] = np.clip(ball[:, 0], -pitch.half_length, pitch.half_length)
    ball[:, 1] = np.clip(ball[:, 1], -pitch.half_width, pitch.half_width)

    agents = np.concatenate([possession, defending, ball[None]], axis=0)
    roles = (ROLE_POSSESSION,) * n + (ROLE_DEFENDING,) * n + (ROLE_BALL,)
    return Scene(
        id=scene_id,
        agents=agents,
        roles=roles,
        hz=profile.hz,
        meta={"archetype": archetype, "source": "synth"},
    )


def synth_generate(seed: int, n_scenes: int, profile: SynthProfile | None = None) -> list[Scene]:
    """Deterministic synthetic dataset; same seed -> bit-identical scenes."""
    if n_scenes < 1:
        raise InvalidInputError(f"n_scenes must be >= 1, got {n_scenes}")
    profile = profile or SynthProfile()
    rng = np.random.default_rng(seed)
    scenes = [synth_scene(rng, f"synth-{seed}-{i:05d}", profile) for i in range(n_scenes)]
    for scene in scenes:
        scene.validate(profile.pitch)
    return scenes
