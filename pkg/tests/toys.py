"""Hand-size fixtures: channel sets built directly from dicts, plus random
small instances with tight auxiliary states for oracle checks."""

import numpy as np

from hapsim.channel import ChannelSet
from hapsim.fp_core import update_gamma, update_y
from hapsim.numerics import crandn, stream_rng


def scalar_channels(h_map, sigma2=1.0, members=None, tones=1, eligible=None):
    """ChannelSet with scalar (M=1, L=1) channels given as {(u, q): complex}."""
    clusters = sorted({q for (_, q) in h_map})
    users = sorted({u for (u, _) in h_map})
    if members is None:
        members = {q: (q,) for q in clusters}
    entries = {}
    for (u, q), h in h_map.items():
        for n in range(tones):
            entries[(u, q, n)] = np.atleast_1d(np.asarray(h, dtype=complex))
    if eligible is None:
        eligible = {u: frozenset(clusters) for u in users}
    gains = {(u, q): np.abs(np.atleast_1d(np.asarray(h))) ** 2
             for (u, q), h in h_map.items()}
    return ChannelSet(
        entries=entries, gains=gains, noise_total=sigma2 * tones, tones=tones,
        block_size=1, members=members, eligible=eligible,
    )


def vector_channels(rng, users, clusters, l, m, sigma2=1.0, tones=1,
                    eligible=None):
    """Dense random CN(0, I) channels for every (user, cluster, tone)."""
    entries = {}
    members = {q: tuple(q * l + i for i in range(l)) for q in range(clusters)}
    for u in range(users):
        for q in range(clusters):
            for n in range(tones):
                entries[(u, q, n)] = crandn(rng, l * m)
    if eligible is None:
        eligible = {u: frozenset(range(clusters)) for u in range(users)}
    gains = {
        (u, q): np.ones(l) for u in range(users) for q in range(clusters)
    }
    return ChannelSet(
        entries=entries, gains=gains, noise_total=sigma2 * tones, tones=tones,
        block_size=m, members=members, eligible=eligible,
    )


def random_tight_state(seed, users=4, clusters=2, l=2, m=2, sigma2=1.0,
                       power=4.0):
    """Random beams + association with auxiliaries at their tight optimum."""
    rng = stream_rng(seed, 900)
    channels = vector_channels(rng, users, clusters, l, m, sigma2)
    beams = {}
    for u in range(users):
        q = int(rng.integers(clusters))
        w = crandn(rng, l * m)
        w *= np.sqrt(power * rng.uniform(0.2, 1.0)) / np.linalg.norm(w)
        beams[(u, q, 0)] = w
    gamma = update_gamma(beams, channels)
    y = update_y(gamma, beams, channels)
    return channels, beams, gamma, y
