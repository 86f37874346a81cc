import dataclasses
import json

import pytest

from hapsim.scenario import (
    AERIAL,
    BALLOON,
    ConfigError,
    ScenarioConfig,
    TERRESTRIAL,
    build_scenario,
    eligible_clusters,
)


@pytest.fixture(scope="module")
def desk():
    return build_scenario(ScenarioConfig.desk_scale(seed=3))


def test_paper_scale_counts():
    sc = build_scenario(ScenarioConfig.paper_scale(seed=0))
    assert len(sc.base_stations) == 48
    assert sum(1 for b in sc.base_stations if b.tier == TERRESTRIAL) == 18
    assert sum(1 for b in sc.base_stations if b.tier == BALLOON) == 30
    assert len(sc.users) == 100
    assert sum(1 for u in sc.users if u.kind == AERIAL) == 30
    assert len(sc.clusters) == 8
    assert all(len(c.members) == 6 for c in sc.clusters)


def test_desk_scale_counts(desk):
    assert len(desk.base_stations) == 12
    assert len(desk.clusters) == 4
    assert all(len(c.members) == 3 for c in desk.clusters)
    assert len(desk.users) == 20


def test_build_is_deterministic():
    cfg = ScenarioConfig.desk_scale(seed=11)
    assert build_scenario(cfg) == build_scenario(cfg)


def test_different_seeds_differ():
    a = build_scenario(ScenarioConfig.desk_scale(seed=1))
    b = build_scenario(ScenarioConfig.desk_scale(seed=2))
    assert a != b


def test_cluster_partition_property(desk):
    seen = []
    for cl in desk.clusters:
        seen.extend(cl.members)
    assert sorted(seen) == sorted(b.id for b in desk.base_stations)


def test_cluster_tier_purity(desk):
    for cl in desk.clusters:
        tiers = {desk.bs(b).tier for b in cl.members}
        assert tiers == {TERRESTRIAL if cl.tier == TERRESTRIAL else BALLOON}


def test_altitude_invariants(desk):
    for b in desk.base_stations:
        if b.tier == TERRESTRIAL:
            assert 0.0 <= b.position[2] <= 50.0
        else:
            assert b.position[2] <= 2000.0
    for u in desk.users:
        if u.kind == AERIAL:
            assert u.position[2] <= 100.0
        else:
            assert u.position[2] == pytest.approx(1.5)


def test_eligibility_mixed_tiers(desk):
    aerial_ids = {c.id for c in desk.clusters if c.tier == AERIAL}
    all_ids = {c.id for c in desk.clusters}
    for user in desk.users:
        allowed = eligible_clusters(user, desk)
        if user.kind == AERIAL:
            assert allowed == aerial_ids
        else:
            assert allowed == all_ids


def test_eligibility_no_aerial_clusters():
    cfg = ScenarioConfig.desk_scale(seed=0, hbs_count=0)
    sc = build_scenario(cfg)
    aerial_users = [u for u in sc.users if u.kind == AERIAL]
    assert aerial_users
    assert eligible_clusters(aerial_users[0], sc) == frozenset()


def test_eligibility_unknown_user(desk):
    other = build_scenario(ScenarioConfig.desk_scale(seed=99, terrestrial_users=15))
    stranger = other.users[-1]
    with pytest.raises(KeyError):
        eligible_clusters(dataclasses.replace(stranger, id=999), desk)


def test_matched_seed_shares_terrestrial_layout():
    # dropping the balloon tier must not move users or terrestrial BSs
    full = build_scenario(ScenarioConfig.desk_scale(seed=5))
    terr = build_scenario(ScenarioConfig.desk_scale(seed=5, hbs_count=0))
    assert terr.users == full.users
    full_tbs = [b for b in full.base_stations if b.tier == TERRESTRIAL]
    assert list(terr.base_stations) == full_tbs


def test_config_json_round_trip(tmp_path):
    cfg = ScenarioConfig.desk_scale(seed=9, tones=4)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ScenarioConfig.from_json(path) == cfg


def test_config_schema_rejects_unknown_key(tmp_path):
    payload = ScenarioConfig.desk_scale().to_dict()
    payload["bogus"] = 1
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(payload)


def test_config_schema_rejects_bad_types():
    payload = ScenarioConfig.desk_scale().to_dict()
    payload["tones"] = 0
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(payload)


def test_build_rejects_nondivisible_clusters():
    with pytest.raises(ConfigError):
        build_scenario(ScenarioConfig.desk_scale(tbs_count=7))


def test_build_rejects_bad_fractions():
    cfg = ScenarioConfig.desk_scale()
    cfg.zone_user_fractions = (0.5, 0.2, 0.1)
    with pytest.raises(ConfigError):
        build_scenario(cfg)
