import numpy as np
import pytest

from scenesim.errors import TrackingParseError
from scenesim.ingest import (
    ExtractConfig,
    TrackingTable,
    extract_scenes,
    read_tracking_csv,
    write_tracking_csv,
)


def make_clean_table(duration_s, hz=25.0, players_per_team=11, seed=0):
    """Continuous active play: everyone present, ball moving forward, one
    team clearly in possession."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * hz))
    frames = np.arange(n)
    teams = {}
    positions = {}
    t = np.arange(n) / hz
    ball = np.stack([-40.0 + 1.5 * t, 2.0 * np.sin(0.2 * t)], axis=1)
    for i in range(players_per_team):
        pid = f"h{i:02d}"
        teams[pid] = "home"
        # Home players hug the ball so home holds possession.
        offset = rng.normal(0, 2.0, size=2)
        positions[pid] = ball + offset + rng.normal(0, 0.2, size=(n, 2))
    for i in range(players_per_team):
        pid = f"a{i:02d}"
        teams[pid] = "away"
        offset = rng.normal(0, 5.0, size=2) + np.array([15.0, 0.0])
        positions[pid] = ball + offset + rng.normal(0, 0.2, size=(n, 2))
    teams["ball"] = "ball"
    positions["ball"] = ball
    return TrackingTable(frames=frames, teams=teams, positions=positions, source="synthgame")


def test_window_arithmetic_three_scenes():
    table = make_clean_table(10.0)
    scenes = extract_scenes(table, window_s=5.0, overlap=0.5)
    assert len(scenes) == 3
    offsets = [s.meta["start_s"] for s in scenes]
    assert offsets[0] == 0.0
    assert offsets[1] == pytest.approx(2.5, abs=0.05)
    assert offsets[2] == pytest.approx(5.0, abs=0.05)
    for s in scenes:
        assert s.n_steps == 125


def test_missing_player_window_excluded():
    table = make_clean_table(10.0)
    # Frames 130-139 belong to the second and third windows (50% overlap),
    # so only the first survives.
    table.positions["h03"][130:140] = np.nan
    scenes = extract_scenes(table, window_s=5.0, overlap=0.5)
    assert [s.meta["start_s"] for s in scenes] == [0.0]


def test_paused_play_excluded():
    table = make_clean_table(10.0)
    table.positions["ball"][:] = np.array([0.0, 0.0])  # ball never moves
    assert extract_scenes(table, window_s=5.0, overlap=0.5) == []


def test_possession_normalized_left_to_right():
    table = make_clean_table(10.0)
    # Mirror the whole game so play runs right-to-left in raw data.
    for pid in table.positions:
        table.positions[pid][:, 0] *= -1.0
    scenes = extract_scenes(table, window_s=5.0, overlap=0.5)
    assert scenes, "mirrored play should still extract"
    for s in scenes:
        ball_row = s.role_rows("ball")[0]
        ball = s.agents[ball_row]
        assert ball[-1, 0] > ball[0, 0]  # plays left to right after normalization


def test_full_game_scale_reproduces_reported_count():
    # 1,005 windows at 5 s / 50% overlap requires 2,515 s of clean play.
    table = make_clean_table(2515.0, players_per_team=3)
    scenes = extract_scenes(table, window_s=5.0, overlap=0.5)
    assert len(scenes) == 1005


def test_csv_round_trip(tmp_path):
    table = make_clean_table(2.0, players_per_team=2)
    path = tmp_path / "game.csv"
    write_tracking_csv(table, path)
    back = read_tracking_csv(path)
    assert back.teams == table.teams
    for pid in table.positions:
        np.testing.assert_allclose(back.positions[pid], table.positions[pid], atol=1e-4)


def test_unsorted_rows_error_with_row_index(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "frame,agent_id,team,x,y\n"
        "1,p1,home,0,0\n"
        "0,p1,home,0,0\n"
    )
    with pytest.raises(TrackingParseError) as exc:
        read_tracking_csv(path)
    assert exc.value.row == 2


def test_malformed_numeric_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("frame,agent_id,team,x,y\n0,p1,home,oops,0\n")
    with pytest.raises(TrackingParseError):
        read_tracking_csv(path)
