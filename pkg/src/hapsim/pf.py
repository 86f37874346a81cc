"""Proportional-fair OFDMA driver: slot loop of scheduling, priority
weights, fronthaul ledger freeze, and a weighted-rate inner beam loop.

User pools per cluster are fixed up front (strongest large-scale gain among
eligible clusters).  Each slot:
    1. exponential update of the long-run average rates
    2. per (cluster, tone) pick of argmax estimated-rate / average-rate
    3. priority weights = reciprocal average rates
    4. freeze per-link frozen rates and sparsity weights from the previous
       slot's beams (a newly scheduled link carried no rate: free entry)
    5. inner loop: weighted auxiliary updates + concave beam subproblem
       until the weighted surrogate converges

Scheduling estimates a candidate's per-tone rate by retargeting the tone's
previous beam to the candidate; on the first slot (no beams yet) a
matched-ratio equal-power hypothesis is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fp_core, qcqp
from .channel import ChannelSet, draw_channel_set
from .fp_core import BeamMap
from .scenario import Scenario
from .sumrate import RunFailure, fronthaul_caps, power_caps, _usage

_FEAS_TOL = 1e-6


@dataclass
class PfSettings:
    slots: int = 60                 # outer budget T
    smoothing: float = 0.1          # exponential-average weight
    rate_floor: float = 1e-6        # bit/s/Hz floor on average rates
    inner_tol: float = 1e-4
    inner_max_iters: int = 25
    solver_tol: float = 1e-6
    served_threshold: float = 0.01  # bit/s/Hz on the average rate


@dataclass
class AvgRates:
    """Long-run average rates, updated exponentially and floored."""

    values: dict[int, float]
    smoothing: float
    floor: float

    def update(self, realized: dict[int, float]) -> None:
        eta = self.smoothing
        for u in self.values:
            r = realized.get(u, 0.0)
            self.values[u] = max(self.floor, (1.0 - eta) * self.values[u] + eta * r)


@dataclass
class SlotRecord:
    slot: int
    sum_log_avg_rate: float
    jain: float
    served_fraction: float
    inner_iters: int
    weighted_sum_rate: float
    sum_rate: float                 # realized instantaneous sum rate
    max_power_residual: float
    max_fronthaul_residual: float
    scheduled: int
    init_invalidated: bool = False
    inner_violations: int = 0


@dataclass
class PfRun:
    scenario: Scenario
    settings: PfSettings
    records: list[SlotRecord]
    avg_rates: dict[int, float]     # final averages, 0.0 for pool-less users
    pools: dict[int, int | None]
    beams: BeamMap
    schedule: dict[tuple[int, int], int]
    channels: ChannelSet = field(repr=False, default=None)

    @property
    def inner_monotonicity_violations(self) -> int:
        return sum(r.inner_violations for r in self.records)


def user_pools(channels: ChannelSet) -> dict[int, int | None]:
    """Fixed per-user serving pool: strongest eligible cluster by mean gain."""
    pools: dict[int, int | None] = {}
    for u, allowed in channels.eligible.items():
        best_q, best = None, 0.0
        for q in sorted(allowed):
            gain = float(np.sum(channels.large_scale(u, q)))
            if gain > best:
                best_q, best = q, gain
        pools[u] = best_q
    return pools


def _mf_beam(channels: ChannelSet, user: int, cluster: int, tone: int,
             pcaps: dict[int, float]) -> np.ndarray:
    """Matched-ratio beam with each BS block at its per-tone power share."""
    m = channels.block_size
    h = channels.vector(user, cluster, tone)
    w = np.zeros_like(h)
    for bi, b in enumerate(channels.members[cluster]):
        block = h[bi * m:(bi + 1) * m]
        norm = np.linalg.norm(block)
        if norm > 0:
            w[bi * m:(bi + 1) * m] = np.sqrt(pcaps[b] / channels.tones) * block / norm
    return w


def estimate_tone_rate(user: int, cluster: int, tone: int, prev_beams: BeamMap,
                       channels: ChannelSet, pcaps: dict[int, float]) -> float:
    """Candidate rate on (cluster, tone): previous beams, retargeted own tone."""
    own = None
    for (i, q, n), w in prev_beams.items():
        if q == cluster and n == tone:
            own = w
            break
    if own is None:
        own = _mf_beam(channels, user, cluster, tone, pcaps)
    h = channels.vector(user, cluster, tone)
    signal = abs(np.vdot(h, own)) ** 2
    interference = 0.0
    for (i, j, n), w in prev_beams.items():
        if n != tone or j == cluster:
            continue
        interference += abs(np.vdot(channels.vector(user, j, n), w)) ** 2
    sinr = signal / (channels.noise_per_tone + interference)
    return float(np.log2(1.0 + sinr)) / channels.tones


def pf_schedule(channels: ChannelSet, prev_beams: BeamMap, avg: AvgRates,
                pools: dict[int, int | None],
                pcaps: dict[int, float]) -> dict[tuple[int, int], int]:
    """Per (cluster, tone) argmax of estimated rate over average rate.

    Ties break toward the lowest user id; a cluster with an empty pool
    leaves its tones unscheduled.
    """
    schedule: dict[tuple[int, int], int] = {}
    for q in sorted(channels.members):
        pool = sorted(u for u, p in pools.items() if p == q)
        if not pool:
            continue
        for n in range(channels.tones):
            best_u, best = None, -np.inf
            for u in pool:
                ratio = (
                    estimate_tone_rate(u, q, n, prev_beams, channels, pcaps)
                    / max(avg.values[u], avg.floor)
                )
                if ratio > best:
                    best_u, best = u, ratio
            if best_u is not None:
                schedule[(q, n)] = best_u
    return schedule


def pf_weights(avg: AvgRates) -> dict[int, float]:
    """Priority weights: reciprocal (floored) average rates."""
    return {u: 1.0 / max(v, avg.floor) for u, v in avg.values.items()}


def _schedule_links(schedule: dict[tuple[int, int], int]) -> list[tuple[int, int, int]]:
    return [(u, q, n) for (q, n), u in sorted(schedule.items())]


def _init_beams(schedule, prev_beams, channels, pcaps, fcaps, fw):
    """Warm beams for the inner loop: carry over same-link beams, give new
    links matched-ratio shares, rescale into the (frozen-weight) caps."""
    beams: BeamMap = {}
    for link in _schedule_links(schedule):
        u, q, n = link
        prev = prev_beams.get(link)
        beams[link] = prev.copy() if prev is not None else _mf_beam(
            channels, u, q, n, pcaps
        )
    power, fronthaul = _usage(beams, channels, fw)
    scale = 1.0
    for b, p in power.items():
        if p > pcaps[b]:
            scale = min(scale, np.sqrt(pcaps[b] / p))
    invalidated = False
    for b, f in fronthaul.items():
        if f > fcaps[b] * (1.0 + _FEAS_TOL):
            invalidated = True
            scale = min(scale, np.sqrt(fcaps[b] / f))
    if scale < 1.0:
        beams = {k: scale * v for k, v in beams.items()}
    return beams, invalidated


def solve_beams(schedule: dict[tuple[int, int], int], weights: dict[int, float],
                channels: ChannelSet, pcaps: dict[int, float],
                fcaps: dict[int, float], fw: dict, init_beams: BeamMap,
                settings: PfSettings) -> tuple[BeamMap, list[tuple[float, float]], int]:
    """Inner weighted-rate loop: auxiliaries then beam solve, to tolerance.

    Returns (beams, trace of (tight, post-solve) surrogate pairs, violations)
    where a violation is a post-solve value below the tight value by more
    than 1e-6 (certified not to happen once the warm beams are feasible).
    """
    beams = dict(init_beams)
    trace: list[tuple[float, float]] = []
    multipliers = None
    prev_val = None
    for _ in range(settings.inner_max_iters):
        gamma = fp_core.update_gamma(beams, channels)
        y = fp_core.update_y(gamma, beams, channels, weights)
        tight = fp_core.fp_objective(gamma, y, beams, channels, weights)
        problem = fp_core.beam_subproblem(
            gamma, y, channels, pcaps, fcaps, fw, weights,
        )
        beams, report = qcqp.solve(
            problem, tol=settings.solver_tol,
            initial_multipliers=multipliers,
        )
        multipliers = report.multipliers
        val = fp_core.fp_objective(gamma, y, beams, channels, weights)
        trace.append((tight, val))
        if prev_val is not None and abs(val - prev_val) <= settings.inner_tol * max(
            1.0, abs(prev_val)
        ):
            break
        prev_val = val
    violations = sum(1 for tight, val in trace[1:] if val < tight - 1e-6)
    return beams, trace, violations


def run_pf(scenario: Scenario, channels: ChannelSet | None = None,
           settings: PfSettings | None = None) -> PfRun:
    """Outer slot loop; returns per-slot fairness trace and final averages."""
    from .metrics import jain_index, served_fraction

    settings = settings or PfSettings()
    if channels is None:
        channels = draw_channel_set(scenario)
    pcaps = power_caps(scenario)
    fcaps = fronthaul_caps(scenario)
    pools = user_pools(channels)
    pool_users = sorted(u for u, q in pools.items() if q is not None)
    all_users = sorted(u.id for u in scenario.users)

    # Warm start: rate-driven schedule under matched-ratio hypotheses.
    avg = AvgRates(values={u: 1.0 for u in pool_users},
                   smoothing=settings.smoothing, floor=settings.rate_floor)
    schedule = pf_schedule(channels, {}, avg, pools, pcaps)
    beams = {
        link: _mf_beam(channels, link[0], link[1], link[2], pcaps)
        for link in _schedule_links(schedule)
    }
    realized = fp_core.user_rates(beams, channels)
    avg.values = {
        u: max(settings.rate_floor, realized.get(u, 0.0)) for u in pool_users
    }

    records: list[SlotRecord] = []
    for t in range(1, settings.slots + 1):
        avg.update(realized)
        schedule = pf_schedule(channels, beams, avg, pools, pcaps)
        weights = pf_weights(avg)

        frozen_prev = fp_core.frozen_link_rates(beams, channels)
        beta_prev = fp_core.update_beta(beams, channels, scenario.epsilon)
        frozen = {
            link: frozen_prev.get(link, 0.0) for link in _schedule_links(schedule)
        }
        fw = fp_core.fronthaul_weight_map(frozen, beta_prev, channels,
                                          scenario.epsilon)

        init, invalidated = _init_beams(schedule, beams, channels, pcaps, fcaps, fw)
        try:
            beams, trace, violations = solve_beams(
                schedule, weights, channels, pcaps, fcaps, fw, init, settings,
            )
        except qcqp.SolverFailure as exc:
            raise RunFailure(f"inner solve failed at slot {t}: {exc}",
                             records) from exc
        realized = fp_core.user_rates(beams, channels)

        avg_vector = [avg.values.get(u, 0.0) for u in all_users]
        p_res, f_res = _residuals(beams, channels, pcaps, fcaps, fw)
        records.append(SlotRecord(
            slot=t,
            sum_log_avg_rate=float(
                sum(np.log(avg.values[u]) for u in pool_users)
            ),
            jain=jain_index(np.array(avg_vector)) if any(avg_vector) else 1.0 / max(
                1, len(avg_vector)
            ),
            served_fraction=served_fraction(
                np.array(avg_vector), settings.served_threshold
            ),
            inner_iters=len(trace),
            weighted_sum_rate=trace[-1][1] if trace else 0.0,
            sum_rate=float(sum(realized.values())),
            max_power_residual=p_res,
            max_fronthaul_residual=f_res,
            scheduled=len(schedule),
            init_invalidated=invalidated,
            inner_violations=violations,
        ))

    final_avg = {u: 0.0 for u in all_users}
    final_avg.update(avg.values)
    return PfRun(
        scenario=scenario, settings=settings, records=records,
        avg_rates=final_avg, pools=pools, beams=beams, schedule=schedule,
        channels=channels,
    )


def _residuals(beams, channels, pcaps, fcaps, fw):
    power, fronthaul = _usage(beams, channels, fw)
    p_res = max(((p - pcaps[b]) / pcaps[b] for b, p in power.items()), default=0.0)
    f_res = max(((u - fcaps[b]) / fcaps[b] for b, u in fronthaul.items()), default=0.0)
    return p_res, f_res
