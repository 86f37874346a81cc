"""Concave quadratic beam subproblems under per-BS power and fronthaul caps.

The problem family solved here is

    max_w  sum_l 2 Re{r_l^H w_l} - w_l^H A_l w_l
    s.t.   sum_l ||w_l[b]||^2            <= P_b      (power, per BS)
           sum_l f_{l,b} ||w_l[b]||^2    <= C_b      (fronthaul, per BS)

with A_l Hermitian PSD and f_{l,b} >= 0.  Constraints only couple links of
the same cluster, so the dual splits into independent per-cluster problems.
For fixed multipliers the primal is a closed-form batched Hermitian solve
(A_l + D_l) w_l = r_l with D_l block-diagonal loading.  Multipliers come
from per-constraint bisection sweeps repeated to a fixed point; when a
sweep plateaus above tolerance (nearly degenerate active set), a projected
Newton polish on the active multipliers drives complementarity to machine
level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np
from scipy.optimize import nnls


class SolverFailure(RuntimeError):
    """Solver did not reach the KKT tolerance; carries the last report."""

    def __init__(self, message: str, report: "KktReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass
class LinkTerm:
    """One beam variable: linear reward, interference quadratic, cap weights."""

    key: Hashable
    cluster: int
    reward: np.ndarray                 # (L*M,) complex
    quad: np.ndarray                   # (L*M, L*M) Hermitian PSD
    fronthaul_weight: np.ndarray       # (L,) >= 0, per member BS


@dataclass
class BeamProblem:
    links: list[LinkTerm]
    block_size: int                            # antennas per BS
    members: dict[int, tuple[int, ...]]        # cluster -> member BS ids
    power_caps: dict[int, float]               # BS id -> watts
    fronthaul_caps: dict[int, float] | None = None  # BS id -> rate cap; None = no caps
    trusted: bool = False                      # builder guarantees PSD quads

    def validate(self, psd_tol: float = 1e-8) -> None:
        checked: set[int] = set()
        for link in self.links:
            d = len(self.members[link.cluster]) * self.block_size
            if link.reward.shape != (d,) or link.quad.shape != (d, d):
                raise ValueError(f"link {link.key}: inconsistent shapes")
            if not self.trusted and id(link.quad) not in checked:
                checked.add(id(link.quad))
                scale = max(1.0, float(np.linalg.norm(link.quad)))
                if np.linalg.norm(link.quad - link.quad.conj().T) > psd_tol * scale:
                    raise ValueError(f"link {link.key}: quadratic form not Hermitian")
                if float(np.linalg.eigvalsh(link.quad)[0]) < -psd_tol * scale:
                    raise ValueError(f"link {link.key}: quadratic form not PSD")
            if np.any(link.fronthaul_weight < 0):
                raise ValueError(f"link {link.key}: negative fronthaul weight")
        for b, cap in self.power_caps.items():
            if cap <= 0:
                raise ValueError(f"BS {b}: power cap must be positive")
        if self.fronthaul_caps:
            for b, cap in self.fronthaul_caps.items():
                if cap <= 0:
                    raise ValueError(f"BS {b}: fronthaul cap must be positive")


@dataclass
class KktReport:
    stationarity: float
    power_residuals: dict[int, float]          # (usage - cap) / cap
    fronthaul_residuals: dict[int, float]
    comp_slackness: float
    primal_objective: float
    dual_bound: float
    gap: float
    iterations: int
    converged: bool
    multipliers: dict[str, dict[int, float]] = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        vals = list(self.power_residuals.values()) + list(
            self.fronthaul_residuals.values()
        )
        return max(vals) if vals else 0.0


class _ClusterDual:
    """Dual subproblem of one cluster: batched primal, usages, multipliers.

    Multipliers live in a flat vector: first the power loadings of the
    member BSs, then the fronthaul loadings of the capped member BSs.
    """

    def __init__(self, links: list[LinkTerm], members: tuple[int, ...],
                 m: int, power_caps: dict[int, float],
                 fronthaul_caps: dict[int, float]):
        self.members = members
        self.m = m
        self.n = len(links)
        self.keys = [l.key for l in links]
        self.r_stack = np.stack([np.asarray(l.reward, dtype=complex) for l in links])
        self.fw = np.stack([np.asarray(l.fronthaul_weight, dtype=float) for l in links])
        self.power_caps = np.array([power_caps[b] for b in members])
        self.fh_slots = [bi for bi, b in enumerate(members) if b in fronthaul_caps]
        self.fh_caps = np.array([fronthaul_caps[members[bi]] for bi in self.fh_slots])
        self.n_power = len(members)
        self.n_theta = self.n_power + len(self.fh_slots)
        # Links of one cluster often share the interference quadratic; when
        # they also share the diagonal loading, one factorization serves all.
        self.shared = all(l.quad is links[0].quad for l in links) and not (
            self.fh_slots
            and bool(np.any(np.ptp(self.fw[:, self.fh_slots], axis=0) > 0))
        )
        if self.shared:
            self.a_one = np.asarray(links[0].quad, dtype=complex)
            self.a_stack = None
            self.dim = self.a_one.shape[0]
        else:
            self.a_stack = np.stack([np.asarray(l.quad, dtype=complex) for l in links])
            self.dim = self.a_stack.shape[1]
        self._diag_idx = np.arange(self.dim)

    def caps(self) -> np.ndarray:
        return np.concatenate([self.power_caps, self.fh_caps])

    def beams(self, theta: np.ndarray) -> np.ndarray:
        """Stationary beams for the multiplier vector (min-norm if singular)."""
        if self.shared:
            per_bs = theta[: self.n_power].copy()
            for j, bi in enumerate(self.fh_slots):
                per_bs[bi] += theta[self.n_power + j] * self.fw[0, bi]
            mat = self.a_one + np.diag(np.repeat(per_bs, self.m))
            try:
                return np.linalg.solve(mat, self.r_stack.T).T
            except np.linalg.LinAlgError:
                return np.stack(
                    [_minnorm(mat, self.r_stack[i]) for i in range(self.n)]
                )
        per_bs = np.tile(theta[: self.n_power], (self.n, 1))  # (n, L)
        for j, bi in enumerate(self.fh_slots):
            per_bs[:, bi] = per_bs[:, bi] + theta[self.n_power + j] * self.fw[:, bi]
        diag = np.repeat(per_bs, self.m, axis=1)              # (n, dim)
        mat = self.a_stack.copy()
        mat[:, self._diag_idx, self._diag_idx] += diag
        try:
            return np.linalg.solve(mat, self.r_stack[..., None])[..., 0]
        except np.linalg.LinAlgError:
            out = np.empty_like(self.r_stack)
            for i in range(self.n):
                out[i] = _minnorm(mat[i], self.r_stack[i])
            return out

    def usage(self, beams: np.ndarray) -> np.ndarray:
        """Per-constraint usage vector: powers then fronthaul loads."""
        block_p = np.sum(
            np.abs(beams.reshape(self.n, self.n_power, self.m)) ** 2, axis=2
        )  # (n, L)
        power = block_p.sum(axis=0)
        fronthaul = np.array(
            [float(np.sum(self.fw[:, bi] * block_p[:, bi])) for bi in self.fh_slots]
        )
        return np.concatenate([power, fronthaul])

    def usage_at(self, theta: np.ndarray) -> np.ndarray:
        return self.usage(self.beams(theta))


def _minnorm(a: np.ndarray, r: np.ndarray) -> np.ndarray:
    if not np.any(r):
        return np.zeros_like(r)
    x, *_ = np.linalg.lstsq(a, r, rcond=None)
    if np.linalg.norm(a @ x - r) > 1e-9 * max(1.0, float(np.linalg.norm(r))):
        # Reward has a component outside range(A): unbounded direction;
        # overscale so the cap search reacts and loads the diagonal.
        return x * 1e12
    return x


def _solve_cluster(dual: _ClusterDual, tol: float, max_rounds: int,
                   max_bisect: int, theta0: np.ndarray | None
                   ) -> tuple[np.ndarray, np.ndarray, int]:
    """Multiplier search for one cluster.

    Base path: per-constraint bisection sweeps repeated to a fixed point,
    followed by a projected Newton polish of the active complementarity
    system.  A warm-started call tries the Newton polish directly first
    (the drivers re-solve near-identical problems every outer iteration).
    """
    caps = dual.caps()
    rounds = 0

    if theta0 is not None:
        theta = _newton_polish(dual, np.maximum(theta0, 0.0), caps, tol)
        if _comp_score(dual, theta, caps) <= 0.25 * tol:
            return dual.beams(theta), theta, 1
    theta = np.zeros(dual.n_theta)
    tol_m = tol / 10.0

    def bisect_coord(j: int) -> None:
        theta[j] = 0.0
        if dual.usage_at(theta)[j] <= caps[j] * (1.0 + tol_m):
            return  # minimal multiplier: constraint loose at zero
        hi = 1.0
        for _ in range(100):
            theta[j] = hi
            if dual.usage_at(theta)[j] <= caps[j]:
                break
            hi *= 10.0
        lo = 0.0
        for _ in range(max_bisect):
            mid = 0.5 * (lo + hi)
            theta[j] = mid
            u = dual.usage_at(theta)[j]
            if abs(u - caps[j]) <= caps[j] * tol_m:
                return
            if u > caps[j]:
                lo = mid
            else:
                hi = mid
        theta[j] = hi  # land on the feasible side of the bracket

    check_every = 4  # polish attempts between sweep blocks
    for rounds in range(1, max_rounds + 1):
        before = theta.copy()
        for j in range(dual.n_theta):
            bisect_coord(j)
        stable = np.allclose(theta, before, rtol=1e-6, atol=1e-12)
        if stable or rounds % check_every == 0:
            polished = _newton_polish(dual, theta, caps, tol)
            if _comp_score(dual, polished, caps) <= 0.25 * tol:
                return dual.beams(polished), polished, rounds
            if stable:
                theta = polished
                break
    return dual.beams(theta), theta, rounds


def _newton_polish(dual: _ClusterDual, theta: np.ndarray, caps: np.ndarray,
                   tol: float) -> np.ndarray:
    """Projected Newton on the active complementarity equations."""
    best = theta.copy()
    best_score = _comp_score(dual, best, caps)
    for _ in range(25):
        usage = dual.usage_at(theta)
        active = (theta > 0) | (usage > caps * (1.0 + 1e-12))
        idx = np.flatnonzero(active)
        resid = usage[idx] - caps[idx]
        if idx.size == 0 or np.max(np.abs(resid) / caps[idx]) <= 1e-11:
            break
        jac = np.empty((idx.size, idx.size))
        for col, j in enumerate(idx):
            h = max(1e-9, 1e-7 * theta[j])
            probe = theta.copy()
            probe[j] += h
            jac[:, col] = (dual.usage_at(probe)[idx] - usage[idx]) / h
        try:
            step = np.linalg.solve(jac, resid)
        except np.linalg.LinAlgError:
            break
        new_theta = theta.copy()
        new_theta[idx] = np.maximum(0.0, theta[idx] - step)
        if np.allclose(new_theta, theta, rtol=1e-14, atol=1e-18):
            break
        theta = new_theta
        score = _comp_score(dual, theta, caps)
        if score < best_score:
            best, best_score = theta.copy(), score
    return best if best_score <= _comp_score(dual, theta, caps) else theta


def _comp_score(dual: _ClusterDual, theta: np.ndarray, caps: np.ndarray) -> float:
    usage = dual.usage_at(theta)
    feas = np.max((usage - caps) / caps, initial=0.0)
    slack = np.max(theta * np.abs(caps - usage) / (1.0 + caps), initial=0.0)
    return max(feas, slack)


def solve(problem: BeamProblem, tol: float = 1e-6, *,
          max_rounds: int = 200, max_bisect: int = 100,
          initial_multipliers: dict[str, dict[int, float]] | None = None,
          ) -> tuple[dict[Hashable, np.ndarray], KktReport]:
    """Dual-decomposition solve to KKT tolerance `tol`.

    Raises SolverFailure (with the report attached) if some cluster's
    multiplier search cannot reach tolerance within the iteration caps.
    """
    problem.validate()
    if not problem.links:
        return {}, KktReport(0.0, {}, {}, 0.0, 0.0, 0.0, 0.0, 0, True)

    fronthaul_caps = problem.fronthaul_caps or {}
    by_cluster: dict[int, list[LinkTerm]] = {}
    for link in problem.links:
        by_cluster.setdefault(link.cluster, []).append(link)

    beams: dict[Hashable, np.ndarray] = {}
    eta: dict[int, float] = {}
    lam: dict[int, float] = {}
    total_rounds = 0
    for q, links in sorted(by_cluster.items()):
        members = problem.members[q]
        dual = _ClusterDual(links, members, problem.block_size,
                            problem.power_caps, fronthaul_caps)
        theta0 = None
        if initial_multipliers:
            theta0 = np.zeros(dual.n_theta)
            for bi, b in enumerate(members):
                theta0[bi] = initial_multipliers.get("power", {}).get(b, 0.0)
            for j, bi in enumerate(dual.fh_slots):
                theta0[dual.n_power + j] = initial_multipliers.get(
                    "fronthaul", {}
                ).get(members[bi], 0.0)
        sol, theta, rounds = _solve_cluster(dual, tol, max_rounds, max_bisect, theta0)
        total_rounds = max(total_rounds, rounds)
        for i, key in enumerate(dual.keys):
            beams[key] = sol[i]
        for bi, b in enumerate(members):
            eta[b] = float(theta[bi])
        for j, bi in enumerate(dual.fh_slots):
            lam[members[bi]] = float(theta[dual.n_power + j])

    report = _build_report(problem, beams, eta, lam, total_rounds, tol)
    if not report.converged:
        raise SolverFailure(
            f"dual decomposition did not reach tol={tol}"
            f" (residual {report.max_residual:.3e}, gap {report.gap:.3e})",
            report,
        )
    return beams, report


def _accumulate_usage(problem: BeamProblem, beams) -> tuple[dict, dict]:
    m = problem.block_size
    power: dict[int, float] = {}
    fronthaul: dict[int, float] = {}
    for link in problem.links:
        w = np.asarray(beams[link.key])
        for bi, b in enumerate(problem.members[link.cluster]):
            p = float(np.sum(np.abs(w[bi * m:(bi + 1) * m]) ** 2))
            power[b] = power.get(b, 0.0) + p
            fronthaul[b] = fronthaul.get(b, 0.0) + link.fronthaul_weight[bi] * p
    return power, fronthaul


def _objective(problem: BeamProblem, beams) -> float:
    total = 0.0
    for link in problem.links:
        w = np.asarray(beams[link.key])
        total += 2.0 * float(np.real(np.vdot(link.reward, w)))
        total -= float(np.real(np.vdot(w, link.quad @ w)))
    return total


def _stationarity(problem: BeamProblem, beams, eta, lam) -> float:
    m = problem.block_size
    worst = 0.0
    for link in problem.links:
        w = np.asarray(beams[link.key])
        members = problem.members[link.cluster]
        loading = np.repeat(
            np.array([
                eta.get(b, 0.0) + lam.get(b, 0.0) * link.fronthaul_weight[bi]
                for bi, b in enumerate(members)
            ]),
            m,
        )
        res = link.quad @ w + loading * w - link.reward
        worst = max(
            worst,
            float(np.linalg.norm(res)) / (1.0 + float(np.linalg.norm(link.reward))),
        )
    return worst


def _build_report(problem: BeamProblem, beams, eta, lam, rounds, tol) -> KktReport:
    fronthaul_caps = problem.fronthaul_caps or {}
    power, fronthaul = _accumulate_usage(problem, beams)
    p_res = {b: (power.get(b, 0.0) - cap) / cap
             for b, cap in problem.power_caps.items() if b in power}
    f_res = {b: (fronthaul.get(b, 0.0) - cap) / cap
             for b, cap in fronthaul_caps.items() if b in fronthaul}
    slack = 0.0
    for b, v in eta.items():
        slack = max(slack, v * abs(problem.power_caps[b] - power.get(b, 0.0)))
    for b, v in lam.items():
        slack = max(slack, v * abs(fronthaul_caps[b] - fronthaul.get(b, 0.0)))
    primal = _objective(problem, beams)
    dual_value = 0.0
    for link in problem.links:
        dual_value += float(np.real(np.vdot(link.reward, np.asarray(beams[link.key]))))
    dual_value += sum(eta[b] * problem.power_caps[b] for b in eta)
    dual_value += sum(lam[b] * fronthaul_caps[b] for b in lam)
    gap = dual_value - primal
    stat = _stationarity(problem, beams, eta, lam)
    feasible = all(r <= tol for r in p_res.values()) and all(
        r <= tol for r in f_res.values()
    )
    converged = feasible and stat <= tol and gap <= tol * (1.0 + abs(dual_value))
    return KktReport(
        stationarity=stat,
        power_residuals=p_res,
        fronthaul_residuals=f_res,
        comp_slackness=slack,
        primal_objective=primal,
        dual_bound=dual_value,
        gap=gap,
        iterations=rounds,
        converged=converged,
        multipliers={"power": dict(eta), "fronthaul": dict(lam)},
    )


def certify(problem: BeamProblem, beams: dict[Hashable, np.ndarray],
            tol: float = 1e-6) -> KktReport:
    """Recompute KKT residuals for given beams, independently of any solve.

    Multipliers are recovered by nonnegative least squares on the
    stationarity system; feasibility and slackness follow directly.
    """
    problem.validate()
    m = problem.block_size
    vecs = [np.asarray(beams[l.key], dtype=complex) for l in problem.links]
    fronthaul_caps = problem.fronthaul_caps or {}

    # Stationarity: r_l - A_l w_l = sum_j theta_j g_{j,l}, theta >= 0.
    target = (
        np.concatenate([l.reward - l.quad @ v for l, v in zip(problem.links, vecs)])
        if problem.links else np.zeros(0, dtype=complex)
    )
    columns = []
    labels: list[tuple[str, int]] = []
    touched = {
        b for l in problem.links for b in problem.members[l.cluster]
    }
    for kind, caps in (("power", problem.power_caps), ("fronthaul", fronthaul_caps)):
        for b in sorted(caps):
            if b not in touched:
                continue
            col = np.zeros_like(target)
            offset = 0
            for li, link in enumerate(problem.links):
                d = len(vecs[li])
                for bi, bb in enumerate(problem.members[link.cluster]):
                    if bb == b:
                        sl = slice(offset + bi * m, offset + (bi + 1) * m)
                        weight = 1.0 if kind == "power" else link.fronthaul_weight[bi]
                        col[sl] = weight * vecs[li][bi * m:(bi + 1) * m]
                offset += d
            columns.append(col)
            labels.append((kind, b))

    if columns and target.size:
        a_real = np.vstack([np.concatenate([c.real, c.imag]) for c in columns]).T
        b_real = np.concatenate([target.real, target.imag])
        theta, _ = nnls(a_real, b_real)
        residual = float(np.linalg.norm(b_real - a_real @ theta))
    else:
        theta = np.zeros(len(columns))
        residual = float(np.linalg.norm(target))
    scale = 1.0 + max(
        (float(np.linalg.norm(l.reward)) for l in problem.links), default=0.0
    )

    eta = {b: 0.0 for b in problem.power_caps if b in touched}
    lam = {b: 0.0 for b in fronthaul_caps if b in touched}
    for (kind, b), v in zip(labels, theta):
        (eta if kind == "power" else lam)[b] = float(v)

    saved = {l.key: v for l, v in zip(problem.links, vecs)}
    report = _build_report(problem, saved, eta, lam, 0, tol)
    report.stationarity = residual / scale
    report.converged = (
        all(r <= tol for r in report.power_residuals.values())
        and all(r <= tol for r in report.fronthaul_residuals.values())
        and report.stationarity <= tol
    )
    return report


def dump_problem(problem: BeamProblem, path) -> None:
    """JSON dump for offline debugging; complex arrays as [re, im] pairs."""

    def c2j(arr):
        arr = np.asarray(arr)
        return [[float(v.real), float(v.imag)] for v in arr.ravel()], list(arr.shape)

    payload = {
        "block_size": problem.block_size,
        "members": {str(q): list(m) for q, m in problem.members.items()},
        "power_caps": {str(b): v for b, v in problem.power_caps.items()},
        "fronthaul_caps": (
            {str(b): v for b, v in problem.fronthaul_caps.items()}
            if problem.fronthaul_caps else None
        ),
        "links": [
            {
                "key": list(l.key) if isinstance(l.key, tuple) else l.key,
                "cluster": l.cluster,
                "reward": c2j(l.reward),
                "quad": c2j(l.quad),
                "fronthaul_weight": [float(v) for v in l.fronthaul_weight],
            }
            for l in problem.links
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
