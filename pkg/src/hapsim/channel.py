"""Composite air/ground channel generation.

Terrestrial links combine a free-space intercept, a distance power law,
log-normal shadowing, and Rayleigh small-scale fading.  Balloon links use
the power law plus Rician small-scale fading (no shadowing).  A terrestrial
cluster never reaches an aerial user: those entries are exactly zero.

Per-link draws are keyed by (seed, stream, user, bs[, tone]) so removing a
station or changing the tone count never perturbs the remaining draws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    SHADOWING,
    SMALL_SCALE,
    TONE_FADING,
    crandn,
    stream_rng,
)
from .scenario import AERIAL, BALLOON, Scenario, TERRESTRIAL, eligible_clusters

_SPEED_OF_LIGHT = 299792458.0

Link = tuple[int, int, int]  # (user id, cluster id, tone)


def path_loss_db(distance_m: float, exponent: float, *,
                 carrier_hz: float = 2e9, ref_distance_m: float = 1.0) -> float:
    """Free-space intercept at the reference distance plus a log-distance law."""
    if distance_m < ref_distance_m:
        raise ValueError(f"distance {distance_m} m below reference {ref_distance_m} m")
    intercept = 20.0 * np.log10(
        4.0 * np.pi * carrier_hz * ref_distance_m / _SPEED_OF_LIGHT
    )
    return float(intercept + 10.0 * exponent * np.log10(distance_m / ref_distance_m))


def tier_path_loss_db(tier: str, distance_m: float, params) -> float:
    """Path loss for a BS tier using the scenario's channel parameters."""
    exponent = params.pathloss_exp_tbs if tier == TERRESTRIAL else params.pathloss_exp_hbs
    return path_loss_db(
        distance_m, exponent,
        carrier_hz=params.carrier_hz, ref_distance_m=params.ref_distance_m,
    )


def rician_small_scale(phase: float, scatter: np.ndarray, k_linear: float) -> np.ndarray:
    """Unit-mean-power Rician fading: common-phase LOS limb plus scatter."""
    los = np.sqrt(k_linear / (k_linear + 1.0)) * np.exp(1j * phase)
    return los + np.sqrt(1.0 / (k_linear + 1.0)) * scatter


def _draw_small_scale(tier: str, m: int, k_linear: float,
                      rng: np.random.Generator) -> np.ndarray:
    if tier == TERRESTRIAL:
        return crandn(rng, m)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return rician_small_scale(phase, crandn(rng, m), k_linear)


@dataclass
class ChannelSet:
    """Channel vectors per (user, cluster, tone), with per-BS block structure."""

    entries: dict[Link, np.ndarray]               # (L*M,) complex per eligible link
    gains: dict[tuple[int, int], np.ndarray]      # (user, cluster) -> per-BS (L,) gain
    noise_total: float                            # W over the full band
    tones: int
    block_size: int                               # antennas per BS (M)
    members: dict[int, tuple[int, ...]]           # cluster -> member BS ids
    eligible: dict[int, frozenset[int]] = field(default_factory=dict)

    @property
    def noise_per_tone(self) -> float:
        return self.noise_total / self.tones

    def dim(self, cluster: int) -> int:
        return len(self.members[cluster]) * self.block_size

    def vector(self, user: int, cluster: int, tone: int = 0) -> np.ndarray:
        """Channel vector; exactly zero for ineligible (tier-blocked) pairs."""
        vec = self.entries.get((user, cluster, tone))
        if vec is None:
            return np.zeros(self.dim(cluster), dtype=complex)
        return vec

    def block(self, user: int, cluster: int, bs_index: int, tone: int = 0) -> np.ndarray:
        m = self.block_size
        return self.vector(user, cluster, tone)[bs_index * m:(bs_index + 1) * m]

    def large_scale(self, user: int, cluster: int) -> np.ndarray:
        g = self.gains.get((user, cluster))
        if g is None:
            return np.zeros(len(self.members[cluster]))
        return g


def draw_channel(scenario: Scenario, user_id: int, cluster_id: int, tone: int,
                 seed: int | None = None) -> np.ndarray:
    """Single link draw, identical to the corresponding draw_channel_set entry."""
    cs = draw_channel_set(scenario, seed=seed)
    return cs.vector(user_id, cluster_id, tone)


def draw_channel_set(scenario: Scenario, seed: int | None = None) -> ChannelSet:
    """Draw every eligible (user, cluster, tone) channel vector.

    Large-scale gain (path loss + shadowing) is common to all tones of a
    link; small-scale fading is independent per tone.  Tone 0 uses the
    single-carrier stream, so an N-tone set restricted to tone 0 matches
    the N=1 set bit for bit.
    """
    if seed is None:
        seed = scenario.seed
    params = scenario.channel
    k_linear = 10.0 ** (params.rician_k_db / 10.0)
    m = None
    for b in scenario.base_stations:
        if m is None:
            m = b.antennas
        elif b.antennas != m:
            raise ValueError("all base stations must share the antenna count")
    members = {c.id: tuple(c.members) for c in scenario.clusters}

    # Per (user, bs): large-scale gain, then per-tone small-scale blocks.
    gain: dict[tuple[int, int], float] = {}
    blocks: dict[tuple[int, int, int], np.ndarray] = {}
    for user in scenario.users:
        upos = np.array(user.position)
        for bs in scenario.base_stations:
            if user.kind == AERIAL and bs.tier == TERRESTRIAL:
                continue  # terrestrial signals do not reach aerial receivers
            dist = float(np.linalg.norm(upos - np.array(bs.position)))
            loss_db = tier_path_loss_db(bs.tier, dist, params)
            if bs.tier == TERRESTRIAL and params.shadowing_std_db > 0:
                srng = stream_rng(seed, SHADOWING, user.id, bs.id)
                loss_db += srng.normal(0.0, params.shadowing_std_db)
            g = 10.0 ** (-loss_db / 10.0)
            gain[(user.id, bs.id)] = g
            for tone in range(scenario.tones):
                if tone == 0:
                    rng = stream_rng(seed, SMALL_SCALE, user.id, bs.id)
                else:
                    rng = stream_rng(seed, TONE_FADING, user.id, bs.id, tone)
                x = _draw_small_scale(bs.tier, m, k_linear, rng)
                blocks[(user.id, bs.id, tone)] = np.sqrt(g) * x

    entries: dict[Link, np.ndarray] = {}
    gains: dict[tuple[int, int], np.ndarray] = {}
    elig: dict[int, frozenset[int]] = {}
    for user in scenario.users:
        allowed = eligible_clusters(user, scenario)
        elig[user.id] = allowed
        for cluster in scenario.clusters:
            if cluster.id not in allowed:
                continue
            gains[(user.id, cluster.id)] = np.array(
                [gain[(user.id, b)] for b in cluster.members]
            )
            for tone in range(scenario.tones):
                entries[(user.id, cluster.id, tone)] = np.concatenate(
                    [blocks[(user.id, b, tone)] for b in cluster.members]
                )

    return ChannelSet(
        entries=entries,
        gains=gains,
        noise_total=scenario.noise_power_watts,
        tones=scenario.tones,
        block_size=m,
        members=members,
        eligible=elig,
    )


def dump_csv(channels: ChannelSet, path) -> None:
    """Long-format dump (one row per complex entry) for regression pinning."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "cluster", "tone", "index", "re", "im"])
        for (u, q, n) in sorted(channels.entries):
            vec = channels.entries[(u, q, n)]
            for k, val in enumerate(vec):
                writer.writerow([u, q, n, k, repr(float(val.real)), repr(float(val.imag))])


def load_entries_csv(path) -> dict[Link, np.ndarray]:
    """Rebuild the entry map written by dump_csv."""
    rows: dict[Link, list[tuple[int, complex]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (int(row["user"]), int(row["cluster"]), int(row["tone"]))
            rows.setdefault(key, []).append(
                (int(row["index"]), float(row["re"]) + 1j * float(row["im"]))
            )
    return {
        key: np.array([v for _, v in sorted(vals)], dtype=complex)
        for key, vals in rows.items()
    }
