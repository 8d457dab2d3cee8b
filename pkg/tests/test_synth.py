import numpy as np
import pytest
from scipy.stats import chisquare

from scenesim.errors import InvalidInputError
from scenesim.synth import DESK_PROFILE, SynthProfile, synth_generate


def test_determinism_bit_identical():
    a = synth_generate(7, 100, DESK_PROFILE)
    b = synth_generate(7, 100, DESK_PROFILE)
    for sa, sb in zip(a, b):
        assert sa.id == sb.id
        np.testing.assert_array_equal(sa.agents, sb.agents)
        assert sa.meta == sb.meta


def test_default_profile_contract():
    scenes = synth_generate(1, 5)
    for s in scenes:
        assert s.n_agents == 23
        assert s.n_steps == 125
        assert s.hz == 25.0


def test_invalid_count():
    with pytest.raises(InvalidInputError):
        synth_generate(1, 0)


def test_archetype_histogram_long_tail():
    profile = SynthProfile(team_size=2, hz=5.0, duration_s=2.0)
    scenes = synth_generate(42, 10_000, profile)
    names = [name for name, _ in profile.archetype_mix]
    probs = np.array([p for _, p in profile.archetype_mix])
    counts = np.array([sum(s.meta["archetype"] == n for s in scenes) for n in names])
    assert counts.sum() == 10_000
    _, p_value = chisquare(counts, probs * 10_000)
    assert p_value > 1e-3  # consistent with the configured mix


def test_scenes_satisfy_invariants():
    for s in synth_generate(3, 20, DESK_PROFILE):
        s.validate()  # raises on violation
        assert s.roles.count("ball") == 1
