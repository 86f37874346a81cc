import numpy as np
import pytest

from hapsim.channel import (
    draw_channel_set,
    dump_csv,
    load_entries_csv,
    path_loss_db,
    rician_small_scale,
    tier_path_loss_db,
)
from hapsim.numerics import SHADOWING, stream_rng, crandn
from hapsim.scenario import (
    AERIAL,
    ChannelParams,
    ScenarioConfig,
    TERRESTRIAL,
    build_scenario,
)


@pytest.fixture(scope="module")
def desk():
    return build_scenario(ScenarioConfig.desk_scale(seed=2))


def test_free_space_reference_term():
    # 2 GHz intercept at the 1 m reference distance
    assert path_loss_db(1.0, 2.0) == pytest.approx(38.46, abs=0.01)


def test_decade_steps_per_exponent():
    ref = path_loss_db(1.0, 2.0)
    assert path_loss_db(10.0, 2.0) - ref == pytest.approx(20.0, abs=1e-9)
    ref_t = path_loss_db(1.0, 3.76)
    assert path_loss_db(10.0, 3.76) - ref_t == pytest.approx(37.6, abs=1e-9)


def test_path_loss_below_reference_rejected():
    with pytest.raises(ValueError):
        path_loss_db(0.5, 2.0)


def test_tier_dispatch():
    params = ChannelParams()
    assert tier_path_loss_db(TERRESTRIAL, 100.0, params) > tier_path_loss_db(
        "hot-air-balloon", 100.0, params
    )


def test_large_scale_monotone_in_distance():
    params = ChannelParams()
    distances = np.linspace(10.0, 5000.0, 40)
    for tier in (TERRESTRIAL, "hot-air-balloon"):
        losses = [tier_path_loss_db(tier, d, params) for d in distances]
        assert np.all(np.diff(losses) > 0)


def test_rician_los_limb_is_deterministic():
    # scatter zeroed: every antenna sits at the LOS amplitude
    k = 10.0
    x = rician_small_scale(0.7, np.zeros(4, dtype=complex), k)
    assert np.allclose(np.abs(x), np.sqrt(k / (k + 1.0)))


def test_zero_leakage_for_aerial_users(desk):
    cs = draw_channel_set(desk)
    terrestrial_clusters = [c.id for c in desk.clusters if c.tier == TERRESTRIAL]
    aerial_users = [u.id for u in desk.users if u.kind == AERIAL]
    for u in aerial_users:
        for q in terrestrial_clusters:
            assert not np.any(cs.vector(u, q, 0))
            assert (u, q, 0) not in cs.entries


def test_entry_count_matches_eligibility(desk):
    cs = draw_channel_set(desk)
    terrestrial = sum(1 for u in desk.users if u.kind != AERIAL)
    aerial = len(desk.users) - terrestrial
    q_all = len(desk.clusters)
    q_a = sum(1 for c in desk.clusters if c.tier == AERIAL)
    assert len(cs.entries) == (terrestrial * q_all + aerial * q_a) * desk.tones


def test_entry_count_paper_scale():
    sc = build_scenario(ScenarioConfig.paper_scale(seed=0))
    cs = draw_channel_set(sc)
    assert len(cs.entries) == 70 * 8 + 30 * 5


def test_vector_length_and_blocks(desk):
    cs = draw_channel_set(desk)
    for (u, q, n), vec in cs.entries.items():
        assert vec.shape == (len(desk.cluster(q).members) * cs.block_size,)


def test_small_scale_power_calibration():
    # mean |entry|^2 of the unit-power fading component, both tiers
    rng = stream_rng(0, 77)
    n = 100000
    ray = crandn(rng, n)
    assert np.mean(np.abs(ray) ** 2) == pytest.approx(1.0, rel=0.02)
    k = 10.0
    phases = rng.uniform(0, 2 * np.pi, size=n)
    scatter = crandn(rng, n)
    ric = np.sqrt(k / (k + 1)) * np.exp(1j * phases) + np.sqrt(1 / (k + 1)) * scatter
    assert np.mean(np.abs(ric) ** 2) == pytest.approx(1.0, rel=0.02)


def test_shadowing_statistics():
    rng = stream_rng(0, SHADOWING)
    draws = rng.normal(0.0, 8.0, size=100000)
    assert np.std(draws) == pytest.approx(8.0, rel=0.03)
    assert abs(np.mean(draws)) < 0.1
    centered = draws - np.mean(draws)
    skew = np.mean(centered ** 3) / np.std(draws) ** 3
    assert abs(skew) < 0.05


def test_tone_zero_matches_single_carrier(desk):
    import dataclasses

    multi = draw_channel_set(dataclasses.replace(desk, tones=4))
    single = draw_channel_set(desk)
    for (u, q, n), vec in single.entries.items():
        assert np.array_equal(vec, multi.entries[(u, q, 0)])


def test_tones_share_large_scale_gain(desk):
    import dataclasses

    multi = draw_channel_set(dataclasses.replace(desk, tones=4))
    # per-tone vectors differ (independent small-scale) but the stored
    # large-scale gain is common by construction
    (u, q, _) = next(iter(multi.entries))
    vecs = [multi.entries[(u, q, n)] for n in range(4)]
    assert not np.array_equal(vecs[0], vecs[1])
    assert multi.noise_per_tone == pytest.approx(multi.noise_total / 4)


def test_draws_are_deterministic(desk):
    a = draw_channel_set(desk)
    b = draw_channel_set(desk)
    for key, vec in a.entries.items():
        assert np.array_equal(vec, b.entries[key])


def test_matched_seed_shares_terrestrial_channels():
    full = build_scenario(ScenarioConfig.desk_scale(seed=5))
    terr = build_scenario(ScenarioConfig.desk_scale(seed=5, hbs_count=0))
    cs_full = draw_channel_set(full)
    cs_terr = draw_channel_set(terr)
    terrestrial_clusters = {c.id for c in terr.clusters}
    # cluster ids of the terrestrial tier coincide between the two builds
    for (u, q, n), vec in cs_terr.entries.items():
        assert np.array_equal(vec, cs_full.entries[(u, q, n)])


def test_dump_load_round_trip(tmp_path, desk):
    cs = draw_channel_set(desk)
    path = tmp_path / "channels.csv"
    dump_csv(cs, path)
    loaded = load_entries_csv(path)
    assert set(loaded) == set(cs.entries)
    for key, vec in cs.entries.items():
        assert np.array_equal(vec, loaded[key])
