"""Network topology: base stations, fixed disjoint clusters, users, budgets.

Geometry is a square service area with three nested density zones
(urban / suburban / rural).  Terrestrial base stations sit on a jittered
grid inside the urban zone, balloon stations on a uniform grid over the
whole area.  Base stations are grouped once, per tier, into equal-size
clusters that stay fixed afterwards.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .numerics import PLACEMENT, dbm_to_watts, noise_power, stream_rng

TERRESTRIAL = "terrestrial"
AERIAL = "aerial"
BALLOON = "hot-air-balloon"

# Sub-keys of the placement stream: dropping one entity class must not
# shift the draws of another (needed for matched-seed tier comparisons).
_PK_USERS = 0
_PK_TBS = 1
_PK_HBS = 2
_PK_CLUSTERING = 3

_GRID_JITTER = 0.35  # fraction of a grid cell, each axis


class ConfigError(ValueError):
    """Raised when a scenario configuration violates the schema or invariants."""


@dataclass(frozen=True)
class BaseStation:
    id: int
    tier: str                       # "terrestrial" | "hot-air-balloon"
    position: tuple[float, float, float]  # m
    antennas: int
    max_power: float                # W
    fronthaul_capacity: float       # bit/s

    def __post_init__(self):
        z = self.position[2]
        if self.tier == TERRESTRIAL and not 0.0 <= z <= 50.0:
            raise ConfigError(f"terrestrial BS {self.id} height {z} m outside [0, 50]")
        if self.tier == BALLOON and z > 2000.0:
            raise ConfigError(f"balloon BS {self.id} altitude {z} m above 2 km")
        if self.antennas < 1:
            raise ConfigError(f"BS {self.id} needs at least one antenna")
        if self.max_power <= 0 or self.fronthaul_capacity <= 0:
            raise ConfigError(f"BS {self.id} budgets must be positive")


@dataclass(frozen=True)
class Cluster:
    id: int
    tier: str                       # "terrestrial" | "aerial"
    members: tuple[int, ...]        # BS ids, sorted


@dataclass(frozen=True)
class User:
    id: int
    kind: str                       # "terrestrial" | "aerial"
    position: tuple[float, float, float]  # m

    def __post_init__(self):
        z = self.position[2]
        if self.kind == AERIAL and z > 100.0:
            raise ConfigError(f"aerial user {self.id} altitude {z} m above 100 m")
        if self.kind == TERRESTRIAL and abs(z - 1.5) > 1e-9:
            raise ConfigError(f"terrestrial user {self.id} must sit at 1.5 m")


@dataclass(frozen=True)
class ChannelParams:
    carrier_hz: float = 2e9
    ref_distance_m: float = 1.0
    pathloss_exp_tbs: float = 3.76
    pathloss_exp_hbs: float = 2.0
    shadowing_std_db: float = 8.0
    rician_k_db: float = 10.0


@dataclass(frozen=True)
class Scenario:
    area_side: float                # m
    bandwidth: float                # Hz
    tones: int
    noise_psd: float                # dBm/Hz
    base_stations: tuple[BaseStation, ...]
    clusters: tuple[Cluster, ...]
    users: tuple[User, ...]
    seed: int
    channel: ChannelParams = field(default_factory=ChannelParams)
    epsilon: float = 1e-12          # reweighted-l0 regularizer

    def __post_init__(self):
        if self.tones < 1:
            raise ConfigError("tone count must be >= 1")
        seen: set[int] = set()
        bs_ids = {b.id for b in self.base_stations}
        for cl in self.clusters:
            for b in cl.members:
                if b in seen:
                    raise ConfigError(f"BS {b} appears in more than one cluster")
                if b not in bs_ids:
                    raise ConfigError(f"cluster {cl.id} references unknown BS {b}")
                seen.add(b)
        if seen != bs_ids:
            raise ConfigError("clusters do not partition the base stations")
        for cl in self.clusters:
            tiers = {self.bs(b).tier for b in cl.members}
            want = TERRESTRIAL if cl.tier == TERRESTRIAL else BALLOON
            if tiers != {want}:
                raise ConfigError(f"cluster {cl.id} mixes tiers {tiers}")

    def bs(self, bs_id: int) -> BaseStation:
        return self._bs_index[bs_id]

    @property
    def _bs_index(self) -> dict[int, BaseStation]:
        return {b.id: b for b in self.base_stations}

    def cluster(self, cluster_id: int) -> Cluster:
        for cl in self.clusters:
            if cl.id == cluster_id:
                return cl
        raise KeyError(f"unknown cluster {cluster_id}")

    def user(self, user_id: int) -> User:
        for u in self.users:
            if u.id == user_id:
                return u
        raise KeyError(f"unknown user {user_id}")

    @property
    def noise_power_watts(self) -> float:
        """Total thermal noise over the full bandwidth."""
        return noise_power(self.noise_psd, self.bandwidth)


@dataclass
class ScenarioConfig:
    """Flat scenario description; defaults follow the standard simulation setup."""

    seed: int = 0
    area_km2: float = 300.0
    bandwidth_hz: float = 10e6
    tones: int = 1
    noise_psd_dbm_hz: float = -169.0
    antennas_per_bs: int = 2
    cluster_size: int = 6
    tbs_count: int = 18
    hbs_count: int = 30
    terrestrial_users: int = 70
    aerial_users: int = 30
    tbs_power_dbm: float = 32.0
    hbs_power_dbm: float = 32.0
    fronthaul_bps: float = 500e6
    tbs_height_m: float = 30.0
    hbs_altitude_m: float = 2000.0
    uav_altitude_max_m: float = 100.0
    user_height_m: float = 1.5
    zone_user_fractions: tuple[float, float, float] = (0.6, 0.3, 0.1)
    zone_area_fractions: tuple[float, float, float] = (0.2, 0.3, 0.5)
    pathloss_exp_tbs: float = 3.76
    pathloss_exp_hbs: float = 2.0
    shadowing_std_db: float = 8.0
    rician_k_db: float = 10.0
    carrier_hz: float = 2e9
    epsilon: float = 1e-12

    @classmethod
    def paper_scale(cls, **overrides) -> "ScenarioConfig":
        """Full-scale setup: 48 BSs in clusters of 6, 100 users."""
        return cls(**overrides)

    @classmethod
    def desk_scale(cls, **overrides) -> "ScenarioConfig":
        """Small setup for tests and quick runs: 12 BSs in 4 clusters, 20 users."""
        base = dict(
            area_km2=9.0,
            cluster_size=3,
            tbs_count=6,
            hbs_count=6,
            terrestrial_users=14,
            aerial_users=6,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["zone_user_fractions"] = list(self.zone_user_fractions)
        d["zone_area_fractions"] = list(self.zone_area_fractions)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        try:
            jsonschema.validate(data, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config schema violation: {exc.message}") from exc
        kwargs = dict(data)
        for key in ("zone_user_fractions", "zone_area_fractions"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


_fraction_triplet = {
    "type": "array",
    "items": {"type": "number", "minimum": 0.0, "maximum": 1.0},
    "minItems": 3,
    "maxItems": 3,
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "area_km2": {"type": "number", "exclusiveMinimum": 0},
        "bandwidth_hz": {"type": "number", "exclusiveMinimum": 0},
        "tones": {"type": "integer", "minimum": 1},
        "noise_psd_dbm_hz": {"type": "number"},
        "antennas_per_bs": {"type": "integer", "minimum": 1},
        "cluster_size": {"type": "integer", "minimum": 1},
        "tbs_count": {"type": "integer", "minimum": 0},
        "hbs_count": {"type": "integer", "minimum": 0},
        "terrestrial_users": {"type": "integer", "minimum": 0},
        "aerial_users": {"type": "integer", "minimum": 0},
        "tbs_power_dbm": {"type": "number"},
        "hbs_power_dbm": {"type": "number"},
        "fronthaul_bps": {"type": "number", "exclusiveMinimum": 0},
        "tbs_height_m": {"type": "number", "minimum": 0, "maximum": 50},
        "hbs_altitude_m": {"type": "number", "exclusiveMinimum": 0, "maximum": 2000},
        "uav_altitude_max_m": {"type": "number", "exclusiveMinimum": 0, "maximum": 100},
        "user_height_m": {"type": "number", "exclusiveMinimum": 0},
        "zone_user_fractions": _fraction_triplet,
        "zone_area_fractions": _fraction_triplet,
        "pathloss_exp_tbs": {"type": "number", "exclusiveMinimum": 0},
        "pathloss_exp_hbs": {"type": "number", "exclusiveMinimum": 0},
        "shadowing_std_db": {"type": "number", "minimum": 0},
        "rician_k_db": {"type": "number"},
        "carrier_hz": {"type": "number", "exclusiveMinimum": 0},
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
    },
}


def _check_counts(config: ScenarioConfig) -> None:
    for name, count in (("tbs_count", config.tbs_count), ("hbs_count", config.hbs_count)):
        if count % config.cluster_size != 0:
            raise ConfigError(
                f"{name}={count} is not a multiple of cluster_size={config.cluster_size}"
            )
    if abs(sum(config.zone_user_fractions) - 1.0) > 1e-9:
        raise ConfigError("zone_user_fractions must sum to 1")
    if sum(config.zone_area_fractions[:2]) > 1.0 + 1e-9:
        raise ConfigError("urban + suburban area fractions exceed the service area")
    if config.tbs_count + config.hbs_count == 0:
        raise ConfigError("scenario needs at least one base station")


def _largest_remainder(total: int, fractions) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    remainder = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _zone_bounds(side: float, area_fractions) -> list[tuple[float, float]]:
    """Inner square sides of the urban and urban+suburban zones (centered)."""
    urban = side * math.sqrt(area_fractions[0])
    suburban = side * math.sqrt(area_fractions[0] + area_fractions[1])
    return [(0.0, urban), (urban, suburban), (suburban, side)]


def _sample_in_ring(rng: np.random.Generator, side: float, inner: float, outer: float):
    """Uniform point in the centered square ring between side lengths inner/outer."""
    c = side / 2.0
    if inner <= 0.0:
        x = c + rng.uniform(-outer / 2.0, outer / 2.0)
        y = c + rng.uniform(-outer / 2.0, outer / 2.0)
        return x, y
    half_gap = (outer - inner) / 2.0
    rects = [
        # (x0, y0, width, height), all relative to the center
        (-outer / 2.0, inner / 2.0, outer, half_gap),    # top
        (-outer / 2.0, -outer / 2.0, outer, half_gap),   # bottom
        (-outer / 2.0, -inner / 2.0, half_gap, inner),   # left
        (inner / 2.0, -inner / 2.0, half_gap, inner),    # right
    ]
    areas = np.array([w * h for (_, _, w, h) in rects])
    idx = rng.choice(len(rects), p=areas / areas.sum())
    x0, y0, w, h = rects[idx]
    return c + x0 + rng.uniform(0.0, w), c + y0 + rng.uniform(0.0, h)


def _sample_zone_point(rng, side, bounds, zone):
    inner, outer = bounds[zone]
    return _sample_in_ring(rng, side, inner, outer)


def _grid_positions(n: int, x0: float, y0: float, width: float, height: float):
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    cell_w, cell_h = width / cols, height / rows
    out = []
    for k in range(n):
        i, j = k % cols, k // cols
        out.append((x0 + (i + 0.5) * cell_w, y0 + (j + 0.5) * cell_h, cell_w, cell_h))
    return out


def _balanced_clusters(positions: np.ndarray, k: int, size: int,
                       rng: np.random.Generator) -> list[list[int]]:
    """Equal-size k-means: Lloyd iterations with capacity-constrained assignment."""
    n = len(positions)
    if k == 1:
        return [list(range(n))]
    # k-means++ seeding
    centroids = [positions[rng.integers(n)]]
    while len(centroids) < k:
        d2 = np.min(
            [np.sum((positions - c) ** 2, axis=1) for c in centroids], axis=0
        )
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centroids.append(positions[rng.choice(n, p=probs)])
    centroids = np.array(centroids)
    assign = np.full(n, -1)
    for _ in range(30):
        # greedy nearest-with-capacity assignment, closest pairs first
        dists = np.linalg.norm(positions[:, None, :] - centroids[None, :, :], axis=2)
        order = np.dstack(np.unravel_index(np.argsort(dists, axis=None), dists.shape))[0]
        new_assign = np.full(n, -1)
        counts = np.zeros(k, dtype=int)
        for bs, cl in order:
            if new_assign[bs] == -1 and counts[cl] < size:
                new_assign[bs] = cl
                counts[cl] += 1
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = np.array([positions[assign == j].mean(axis=0) for j in range(k)])
    return [sorted(np.flatnonzero(assign == j).tolist()) for j in range(k)]


def build_scenario(config: ScenarioConfig) -> Scenario:
    """Deterministically realize a scenario from its configuration."""
    jsonschema.validate(config.to_dict(), CONFIG_SCHEMA)
    _check_counts(config)

    side = math.sqrt(config.area_km2) * 1000.0
    bounds = _zone_bounds(side, config.zone_area_fractions)

    # Users: zone-distributed, terrestrial first, then aerial.
    users = []
    uid = 0
    for kind, count, key in (
        (TERRESTRIAL, config.terrestrial_users, 0),
        (AERIAL, config.aerial_users, 1),
    ):
        rng = stream_rng(config.seed, PLACEMENT, _PK_USERS, key)
        zone_counts = _largest_remainder(count, config.zone_user_fractions)
        for zone, zc in enumerate(zone_counts):
            for _ in range(zc):
                x, y = _sample_zone_point(rng, side, bounds, zone)
                if kind == AERIAL:
                    z = rng.uniform(config.user_height_m, config.uav_altitude_max_m)
                else:
                    z = config.user_height_m
                users.append(User(uid, kind, (x, y, z)))
                uid += 1

    # Terrestrial BSs: jittered grid inside the urban zone.
    stations = []
    bid = 0
    if config.tbs_count:
        rng = stream_rng(config.seed, PLACEMENT, _PK_TBS)
        urban_side = bounds[0][1]
        origin = (side - urban_side) / 2.0
        for (cx, cy, cw, ch) in _grid_positions(
            config.tbs_count, origin, origin, urban_side, urban_side
        ):
            x = cx + rng.uniform(-_GRID_JITTER, _GRID_JITTER) * cw
            y = cy + rng.uniform(-_GRID_JITTER, _GRID_JITTER) * ch
            stations.append(
                BaseStation(
                    bid, TERRESTRIAL, (x, y, config.tbs_height_m),
                    config.antennas_per_bs,
                    dbm_to_watts(config.tbs_power_dbm),
                    config.fronthaul_bps,
                )
            )
            bid += 1

    # Balloon BSs: uniform grid over the full area.
    if config.hbs_count:
        for (cx, cy, _, _) in _grid_positions(config.hbs_count, 0.0, 0.0, side, side):
            stations.append(
                BaseStation(
                    bid, BALLOON, (cx, cy, config.hbs_altitude_m),
                    config.antennas_per_bs,
                    dbm_to_watts(config.hbs_power_dbm),
                    config.fronthaul_bps,
                )
            )
            bid += 1

    # Fixed equal-size clusters, per tier.
    crng = stream_rng(config.seed, PLACEMENT, _PK_CLUSTERING)
    clusters = []
    cid = 0
    for tier, bs_tier in ((TERRESTRIAL, TERRESTRIAL), (AERIAL, BALLOON)):
        tier_bs = [b for b in stations if b.tier == bs_tier]
        if not tier_bs:
            continue
        pos = np.array([b.position[:2] for b in tier_bs])
        groups = _balanced_clusters(pos, len(tier_bs) // config.cluster_size,
                                    config.cluster_size, crng)
        for grp in groups:
            clusters.append(Cluster(cid, tier, tuple(tier_bs[i].id for i in grp)))
            cid += 1

    return Scenario(
        area_side=side,
        bandwidth=config.bandwidth_hz,
        tones=config.tones,
        noise_psd=config.noise_psd_dbm_hz,
        base_stations=tuple(stations),
        clusters=tuple(clusters),
        users=tuple(users),
        seed=config.seed,
        channel=ChannelParams(
            carrier_hz=config.carrier_hz,
            pathloss_exp_tbs=config.pathloss_exp_tbs,
            pathloss_exp_hbs=config.pathloss_exp_hbs,
            shadowing_std_db=config.shadowing_std_db,
            rician_k_db=config.rician_k_db,
        ),
        epsilon=config.epsilon,
    )


def eligible_clusters(user: User, scenario: Scenario) -> frozenset[int]:
    """Cluster ids allowed to serve `user`: aerial users are balloon-only."""
    if all(u.id != user.id for u in scenario.users):
        raise KeyError(f"user {user.id} is not part of the scenario")
    if user.kind == AERIAL:
        return frozenset(c.id for c in scenario.clusters if c.tier == AERIAL)
    return frozenset(c.id for c in scenario.clusters)
