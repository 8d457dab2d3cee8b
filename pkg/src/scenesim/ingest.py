"""Generic tracking-table ingestion: CSV reading and sliding-window scene
extraction with play filters (active ball, clear possession, full rosters)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, TrackingParseError
from .scenes import (
    DEFAULT_PITCH,
    ROLE_BALL,
    ROLE_DEFENDING,
    ROLE_POSSESSION,
    PitchConfig,
    Scene,
)

TEAM_VALUES = ("home", "away", "ball")


@dataclass
class TrackingTable:
    """Dense per-agent position table.

    frames: sorted frame indices (n,); positions maps agent_id to an
    (n, 2) array aligned with frames, NaN where the agent is missing.
    """

    frames: np.ndarray
    teams: dict
    positions: dict
    source: str = ""

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def read_tracking_csv(path: str | Path) -> TrackingTable:
    """Read `frame,agent_id,team,x,y` rows; frames must be non-decreasing
    overall and strictly increasing per agent."""
    path = Path(path)
    teams: dict = {}
    raw: dict = {}
    last_frame_per_agent: dict = {}
    prev_frame = None
    frames_seen: list[int] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frame", "agent_id", "team", "x", "y"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise TrackingParseError(
                f"header must contain {sorted(required)}, got {reader.fieldnames}", row=0
            )
        for i, row in enumerate(reader, start=1):
            try:
                frame = int(row["frame"])
                x = float(row["x"])
                y = float(row["y"])
            except (TypeError, ValueError) as exc:
                raise TrackingParseError(f"bad numeric field: {exc}", row=i) from exc
            agent = row["agent_id"]
            team = row["team"]
            if team not in TEAM_VALUES:
                raise TrackingParseError(f"unknown team {team!r}", row=i)
            if prev_frame is not None and frame < prev_frame:
                raise TrackingParseError("rows not sorted by frame", row=i)
            if agent in last_frame_per_agent and frame <= last_frame_per_agent[agent]:
                raise TrackingParseError(
                    f"frames not strictly increasing for agent {agent}", row=i
                )
            last_frame_per_agent[agent] = frame
            if prev_frame is None or frame != prev_frame:
                frames_seen.append(frame)
            prev_frame = frame
            teams.setdefault(agent, team)
            if teams[agent] != team:
                raise TrackingParseError(f"agent {agent} changed team", row=i)
            raw.setdefault(agent, []).append((frame, x, y))

    frames = np.array(sorted(set(frames_seen)), dtype=int)
    index = {f: k for k, f in enumerate(frames)}
    positions = {}
    for agent, rows in raw.items():
        arr = np.full((len(frames), 2), np.nan)
        for frame, x, y in rows:
            arr[index[frame]] = (x, y)
        positions[agent] = arr
    return TrackingTable(frames=frames, teams=teams, positions=positions, source=str(path))


def write_tracking_csv(table: TrackingTable, path: str | Path) -> None:
    agents = sorted(table.positions)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "agent_id", "team", "x", "y"])
        for k, frame in enumerate(table.frames):
            for agent in agents:
                x, y = table.positions[agent][k]
                if np.isnan(x):
                    continue
                writer.writerow([int(frame), agent, table.teams[agent], f"{x:.4f}", f"{y:.4f}"])


@dataclass(frozen=True)
class ExtractConfig:
    hz: float = 25.0
    possession_threshold: float = 0.6  # fraction of frames one team must hold the ball
    min_ball_travel: float = 1.0  # meters of net ball movement below which play counts as paused
    pitch: PitchConfig = field(default_factory=PitchConfig)


def _window_possession(
    ball: np.ndarray, players: dict, teams: dict
) -> str | None:
    """Majority team by nearest-player-to-ball per frame, or None if unclear."""
    agent_ids = list(players)
    stack = np.stack([players[a] for a in agent_ids])  # (A, T, 2)
    dist = np.linalg.norm(stack - ball[None], axis=-1)  # (A, T)
    nearest = np.argmin(dist, axis=0)
    team_hits = {"home": 0, "away": 0}
    for t_idx in nearest:
        team_hits[teams[agent_ids[t_idx]]] += 1
    total = sum(team_hits.values())
    for team, hits in team_hits.items():
        if hits / total > 0.5:
            return team, hits / total
    return None


def extract_scenes(
    tracking: TrackingTable,
    window_s: float,
    overlap: float,
    cfg: ExtractConfig | None = None,
) -> list[Scene]:
    """Slide fixed-length windows over the table and keep those passing the
    play filters. Possession team is normalized to play left-to-right
    (x mirrored when the ball's net movement points the other way)."""
    cfg = cfg or ExtractConfig()
    if not 0.0 <= overlap < 1.0:
        raise InvalidInputError(f"overlap must be in [0, 1), got {overlap}")
    window = int(round(window_s * cfg.hz))
    if window < 1 or window > tracking.n_frames:
        return []
    step = window * (1.0 - overlap)
    ball_agents = [a for a, t in tracking.teams.items() if t == "ball"]
    if len(ball_agents) != 1:
        raise InvalidInputError(f"expected exactly one ball agent, got {len(ball_agents)}")
    ball_id = ball_agents[0]
    player_ids = sorted(a for a in tracking.positions if a != ball_id)

    scenes = []
    i = 0
    while True:
        start = int(round(i * step))
        i += 1
        if start + window > tracking.n_frames:
            break
        sl = slice(start, start + window)
        ball = tracking.positions[ball_id][sl]
        players = {a: tracking.positions[a][sl] for a in player_ids}
        if np.isnan(ball).any() or any(np.isnan(p).any() for p in players.values()):
            continue  # missing agent in window
        if np.linalg.norm(ball[-1] - ball[0]) < cfg.min_ball_travel:
            continue  # paused play
        result = _window_possession(ball, players, tracking.teams)
        if result is None:
            continue
        team, fraction = result
        if fraction < cfg.possession_threshold:
            continue  # unclear possession
        flip = ball[-1, 0] - ball[0, 0] < 0
        rows = []
        roles = []
        for role, wanted in ((ROLE_POSSESSION, team), (ROLE_DEFENDING, "home" if team == "away" else "away")):
            for a in player_ids:
                if tracking.teams[a] == wanted:
                    rows.append(players[a])
                    roles.append(role)
        rows.append(ball)
        roles.append(ROLE_BALL)
        agents = np.stack(rows)
        if flip:
            agents = agents.copy()
            agents[..., 0] *= -1.0
        start_s = start / cfg.hz
        scene = Scene(
            id=f"{Path(tracking.source).stem or 'tracking'}-{start}",
            agents=agents,
            roles=tuple(roles),
            hz=cfg.hz,
            meta={
                "source": tracking.source,
                "start_frame": int(tracking.frames[start]),
                "start_s": start_s,
                "possession_team": team,
            },
        )
        scene.validate(cfg.pitch)
        scenes.append(scene)
    return scenes
