"""Sum-rate driver: iterate auxiliaries, association, beams, and the
fronthaul ledger until the surrogate converges.

Per outer iteration, with the frozen-rate/sparsity weights held fixed:
    1. closed-form auxiliary updates (tight: surrogate == current sum rate)
    2. candidate beams and association benefits, association update
    3. concave beam subproblem at the new association
    4. weight refresh at the solved beams

The association step is a heuristic (benefits are evaluated at auxiliary
beams), so when it changes the association the driver also solves the
subproblem at the previous association and keeps whichever beam set scores
higher on the surrogate.  That makes every recorded within-iteration step a
certified non-decrease; only a weight refresh that invalidates the
incumbent beams can force the surrogate down, and those iterations are
flagged in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fp_core, qcqp
from .channel import ChannelSet, draw_channel_set
from .fp_core import BeamMap
from .scenario import Scenario

_FEAS_TOL = 1e-6


@dataclass
class SumRateSettings:
    tol: float = 1e-4               # relative surrogate change to stop
    max_iters: int = 50
    solver_tol: float = 1e-6
    solver_max_rounds: int = 200
    solver_max_bisect: int = 100
    guard: bool = True              # keep-better fallback on association moves


@dataclass
class IterationRecord:
    iteration: int
    fp_value: float                 # surrogate after the beam solve
    fp_tight: float                 # surrogate at the fresh auxiliaries
    sum_rate: float                 # true sum rate at the iterate, bit/s/Hz
    max_power_residual: float
    max_fronthaul_residual: float
    served: int
    assoc_changed: bool = False
    refresh_invalidated: bool = False
    guard_reverted: bool = False
    solver_iterations: int = 0


@dataclass
class SumRateRun:
    scenario: Scenario
    settings: SumRateSettings
    records: list[IterationRecord]
    converged: bool
    assoc: dict[int, int | None]
    beams: BeamMap
    rates: dict[int, float]         # final per-user rate, 0 when unserved
    channels: ChannelSet = field(repr=False, default=None)

    @property
    def initial_sum_rate(self) -> float:
        return self.records[0].sum_rate

    @property
    def final_sum_rate(self) -> float:
        return self.records[-1].sum_rate

    @property
    def monotonicity_violations(self) -> int:
        """Within-iteration surrogate decreases not explained by a refresh."""
        count = 0
        for rec in self.records[1:]:
            if rec.refresh_invalidated:
                continue
            if rec.fp_value < rec.fp_tight - 1e-6:
                count += 1
        return count


class RunFailure(RuntimeError):
    """Solver breakdown inside a run; carries the partial trace."""

    def __init__(self, message: str, records: list[IterationRecord]):
        super().__init__(message)
        self.records = records


def power_caps(scenario: Scenario) -> dict[int, float]:
    return {b.id: b.max_power for b in scenario.base_stations}


def fronthaul_caps(scenario: Scenario) -> dict[int, float]:
    """Fronthaul budgets normalized to bit/s/Hz of the access bandwidth."""
    return {b.id: b.fronthaul_capacity / scenario.bandwidth
            for b in scenario.base_stations}


def _usage(beams: BeamMap, channels: ChannelSet,
           fw: dict | None) -> tuple[dict[int, float], dict[int, float]]:
    m = channels.block_size
    power: dict[int, float] = {}
    fronthaul: dict[int, float] = {}
    for link, w in beams.items():
        members = channels.members[link[1]]
        weights = fw.get(link) if fw else None
        for bi, b in enumerate(members):
            p = float(np.sum(np.abs(w[bi * m:(bi + 1) * m]) ** 2))
            power[b] = power.get(b, 0.0) + p
            if weights is not None:
                fronthaul[b] = fronthaul.get(b, 0.0) + weights[bi] * p
    return power, fronthaul


def residuals(beams: BeamMap, channels: ChannelSet, scenario: Scenario,
              fw: dict | None) -> tuple[float, float]:
    """Worst relative power / fronthaul constraint violations (can be <= 0)."""
    power, fronthaul = _usage(beams, channels, fw)
    pcaps = power_caps(scenario)
    fcaps = fronthaul_caps(scenario)
    p_res = max(((p - pcaps[b]) / pcaps[b] for b, p in power.items()), default=0.0)
    f_res = max(((u - fcaps[b]) / fcaps[b] for b, u in fronthaul.items()), default=0.0)
    return p_res, f_res


def initialize(scenario: Scenario, channels: ChannelSet
               ) -> tuple[BeamMap, dict[int, int | None]]:
    """Feasible starting point: strongest-gain association, matched-ratio
    equal-power beams, uniform down-scaling until the fronthaul ledger fits."""
    assoc: dict[int, int | None] = {}
    for u, allowed in channels.eligible.items():
        best_q, best_gain = None, 0.0
        for q in sorted(allowed):
            gain = float(np.sum(channels.large_scale(u, q)))
            if gain > best_gain:
                best_q, best_gain = q, gain
        assoc[u] = best_q

    counts: dict[int, int] = {}
    for u, q in assoc.items():
        if q is not None:
            counts[q] = counts.get(q, 0) + 1

    m = channels.block_size
    pcaps = power_caps(scenario)
    beams: BeamMap = {}
    for u, q in assoc.items():
        if q is None:
            continue
        members = channels.members[q]
        h = channels.vector(u, q, 0)
        w = np.zeros_like(h)
        for bi, b in enumerate(members):
            block = h[bi * m:(bi + 1) * m]
            norm = np.linalg.norm(block)
            if norm > 0:
                w[bi * m:(bi + 1) * m] = (
                    np.sqrt(pcaps[b] / counts[q]) * block / norm
                )
        beams[(u, q, 0)] = w

    # Uniform back-off until the self-consistent fronthaul ledger fits.
    fcaps = fronthaul_caps(scenario)
    scale = 1.0
    for _ in range(200):
        scaled = {k: scale * v for k, v in beams.items()}
        frozen = fp_core.frozen_link_rates(scaled, channels)
        beta = fp_core.update_beta(scaled, channels, scenario.epsilon)
        fw = fp_core.fronthaul_weight_map(frozen, beta, channels, scenario.epsilon)
        _, fronthaul = _usage(scaled, channels, fw)
        if all(u <= fcaps[b] * (1.0 + _FEAS_TOL) for b, u in fronthaul.items()):
            return scaled, assoc
        scale *= 0.7
    raise RunFailure("could not scale the initial beams into the fronthaul caps", [])


def run(scenario: Scenario, channels: ChannelSet | None = None,
        settings: SumRateSettings | None = None) -> SumRateRun:
    """Full driver loop; returns the trace plus the final operating point."""
    settings = settings or SumRateSettings()
    if channels is None:
        channels = draw_channel_set(scenario)
    pcaps = power_caps(scenario)
    fcaps = fronthaul_caps(scenario)

    beams, assoc = initialize(scenario, channels)
    frozen = fp_core.frozen_link_rates(beams, channels)
    beta = fp_core.update_beta(beams, channels, scenario.epsilon)
    fw = fp_core.fronthaul_weight_map(frozen, beta, channels, scenario.epsilon)

    records: list[IterationRecord] = []
    gamma = fp_core.update_gamma(beams, channels)
    y = fp_core.update_y(gamma, beams, channels)
    tight0 = fp_core.fp_objective(gamma, y, beams, channels)
    p_res, f_res = residuals(beams, channels, scenario, fw)
    records.append(IterationRecord(
        iteration=0, fp_value=tight0, fp_tight=tight0,
        sum_rate=_sum_rate(beams, channels),
        max_power_residual=p_res, max_fronthaul_residual=f_res,
        served=sum(1 for q in assoc.values() if q is not None),
    ))

    multipliers = None
    converged = False
    for it in range(1, settings.max_iters + 1):
        gamma = fp_core.update_gamma(beams, channels)
        y = fp_core.update_y(gamma, beams, channels)
        fp_tight = fp_core.fp_objective(gamma, y, beams, channels)

        gamma_u = {u: gamma.get((u, q, 0), 0.0) for u, q in assoc.items() if q is not None}
        y_u = {u: y.get((u, q, 0), 0.0 + 0.0j) for u, q in assoc.items() if q is not None}

        cand, _ = fp_core.candidate_beams(
            gamma_u, y_u, y, channels, pcaps, tol=settings.solver_tol,
        )
        benefits = fp_core.association_benefits(gamma_u, y_u, cand, channels, y)
        assoc_new = fp_core.update_association(benefits, channels.eligible)
        assoc_changed = assoc_new != assoc

        # Does the refreshed ledger still admit the incumbent beams?
        _, fh_now = _usage(beams, channels, fw)
        refresh_invalidated = any(
            u > fcaps[b] * (1.0 + _FEAS_TOL) for b, u in fh_now.items()
        )

        def solve_at(assoc_try):
            g_links = {
                (u, q, 0): gamma_u.get(u, 0.0)
                for u, q in assoc_try.items() if q is not None
            }
            y_links = {
                (u, q, 0): y_u.get(u, 0.0 + 0.0j)
                for u, q in assoc_try.items() if q is not None
            }
            problem = fp_core.beam_subproblem(
                g_links, y_links, channels, pcaps, fcaps, fw,
            )
            try:
                new_beams, report = qcqp.solve(
                    problem, tol=settings.solver_tol,
                    max_rounds=settings.solver_max_rounds,
                    max_bisect=settings.solver_max_bisect,
                    initial_multipliers=multipliers,
                )
            except qcqp.SolverFailure as exc:
                raise RunFailure(f"beam solve failed at iteration {it}: {exc}",
                                 records) from exc
            value = fp_core.fp_objective(g_links, y_links, new_beams, channels)
            return new_beams, report, value

        beams_new, report, value_new = solve_at(assoc_new)
        guard_reverted = False
        if settings.guard and assoc_changed:
            beams_keep, report_keep, value_keep = solve_at(assoc)
            if value_keep > value_new:
                beams_new, report, value_new = beams_keep, report_keep, value_keep
                assoc_new = dict(assoc)
                guard_reverted = True

        beams, assoc = beams_new, assoc_new
        multipliers = report.multipliers
        p_res, f_res = residuals(beams, channels, scenario, fw)
        records.append(IterationRecord(
            iteration=it, fp_value=value_new, fp_tight=fp_tight,
            sum_rate=_sum_rate(beams, channels),
            max_power_residual=p_res, max_fronthaul_residual=f_res,
            served=sum(1 for q in assoc.values() if q is not None),
            assoc_changed=assoc_changed, refresh_invalidated=refresh_invalidated,
            guard_reverted=guard_reverted,
            solver_iterations=report.iterations,
        ))

        # Ledger refresh at the solved beams.
        frozen = fp_core.frozen_link_rates(beams, channels)
        beta = fp_core.update_beta(beams, channels, scenario.epsilon)
        fw = fp_core.fronthaul_weight_map(frozen, beta, channels, scenario.epsilon)

        prev = records[-2].fp_value
        if it > 1 and abs(value_new - prev) <= settings.tol * max(1.0, abs(prev)):
            converged = True
            break

    rates = {u.id: 0.0 for u in scenario.users}
    rates.update(fp_core.user_rates(beams, channels))
    return SumRateRun(
        scenario=scenario, settings=settings, records=records,
        converged=converged, assoc=assoc, beams=beams, rates=rates,
        channels=channels,
    )


def _sum_rate(beams: BeamMap, channels: ChannelSet) -> float:
    return float(sum(fp_core.user_rates(beams, channels).values()))
