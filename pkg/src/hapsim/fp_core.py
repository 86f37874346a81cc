"""Closed-form quantities of the fractional-programming surrogate.

A *link* is (user, cluster, tone).  Beams exist only for active links, so
the beam map doubles as the association/schedule indicator.  The surrogate
objective handled here is the Lagrangian-dual + quadratic-transform form
with per-link weights w_l (w_l = 1 for plain sum rate):

    f  =  sum_l  w_l log2(1+g_l)
        + log2(e) * [ - w_l g_l
                      + 2 sqrt(w_l (1+g_l)) Re{conj(y_l) h_l^H w-beam_l}
                      - |y_l|^2 (noise + total received power at the link user) ]

Internally the non-log terms are the natural-log-exact dual transform
scaled by log2(e), so every closed-form update below is an exact
coordinate maximizer and the value at the updated auxiliaries equals the
true weighted sum of log2(1+SINR).  The denominator convention includes
the desired-signal term; the plain SINR (and its auxiliary g) excludes it.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelSet, Link
from .numerics import LOG2E
from .qcqp import BeamProblem, LinkTerm

BeamMap = dict[Link, np.ndarray]


def _signal(channels: ChannelSet, link: Link, beam: np.ndarray) -> complex:
    u, q, n = link
    return complex(np.vdot(channels.vector(u, q, n), beam))


def received_power(user: int, tone: int, beams: BeamMap, channels: ChannelSet) -> float:
    """Total power arriving at `user` on `tone` from every active beam."""
    total = 0.0
    for (i, j, n), w in beams.items():
        if n != tone:
            continue
        total += abs(np.vdot(channels.vector(user, j, n), w)) ** 2
    return total


def sinr(user: int, cluster: int, beams: BeamMap, channels: ChannelSet,
         tone: int = 0, served: bool | None = None) -> float:
    """SINR of the (user, cluster, tone) link under the active beams.

    `served=False` forces the gated value 0 (an unassociated link carries
    no signal); by default a link counts as served iff it has a beam.
    """
    link = (user, cluster, tone)
    if served is None:
        served = link in beams
    if not served or link not in beams:
        return 0.0
    sig = abs(_signal(channels, link, beams[link])) ** 2
    total = received_power(user, tone, beams, channels)
    denom = channels.noise_per_tone + total - sig
    return sig / denom


def link_rate(user: int, cluster: int, beams: BeamMap, channels: ChannelSet,
              tone: int = 0) -> float:
    """Per-tone spectral efficiency log2(1 + SINR), bit/s/Hz."""
    return float(np.log2(1.0 + sinr(user, cluster, beams, channels, tone)))


def user_rates(beams: BeamMap, channels: ChannelSet) -> dict[int, float]:
    """Full-band rate per user: per-tone rates averaged over the tone grid."""
    rates: dict[int, float] = {}
    for (u, q, n) in beams:
        rates[u] = rates.get(u, 0.0) + link_rate(u, q, beams, channels, n) / channels.tones
    return rates


def _totals(beams: BeamMap, channels: ChannelSet) -> dict[tuple[int, int], float]:
    """Received-power totals per (receiver user, tone) across active links."""
    users = {(u, n) for (u, _, n) in beams}
    return {(u, n): received_power(u, n, beams, channels) for (u, n) in users}


def update_gamma(beams: BeamMap, channels: ChannelSet) -> dict[Link, float]:
    """SINR auxiliaries at their closed-form optimum: g_l = SINR_l."""
    totals = _totals(beams, channels)
    gamma: dict[Link, float] = {}
    for link, w in beams.items():
        u, _, n = link
        sig = abs(_signal(channels, link, w)) ** 2
        denom = channels.noise_per_tone + totals[(u, n)] - sig
        gamma[link] = sig / denom
    return gamma


def update_y(gamma: dict[Link, float], beams: BeamMap, channels: ChannelSet,
             weights: dict[int, float] | None = None) -> dict[Link, complex]:
    """Quadratic-transform auxiliaries at their closed-form optimum.

    y_l = sqrt(w_l (1+g_l)) * (h_l^H beam_l) / (noise + total received power),
    the denominator including the link's own signal.  Inactive links carry 0.
    """
    totals = _totals(beams, channels)
    out: dict[Link, complex] = {}
    for link, w in beams.items():
        u, _, n = link
        wl = 1.0 if weights is None else weights[u]
        s = _signal(channels, link, w)
        denom = channels.noise_per_tone + totals[(u, n)]
        out[link] = np.sqrt(wl * (1.0 + gamma[link])) * s / denom
    return out


def fp_objective(gamma: dict[Link, float], y: dict[Link, complex], beams: BeamMap,
                 channels: ChannelSet,
                 weights: dict[int, float] | None = None) -> float:
    """Surrogate value in bit/s/Hz (summed over links, averaged over tones).

    At (g*, y*) from the updates above this equals the true weighted sum of
    log2(1+SINR); for any other auxiliaries it is a lower bound.
    """
    totals = _totals(beams, channels)
    value = 0.0
    for link in gamma:
        u, _, n = link
        g = gamma[link]
        yl = y.get(link, 0.0 + 0.0j)
        wl = 1.0 if weights is None else weights[u]
        term = wl * np.log2(1.0 + g) - LOG2E * wl * g
        total = totals.get((u, n), received_power(u, n, beams, channels))
        term -= LOG2E * abs(yl) ** 2 * (channels.noise_per_tone + total)
        beam = beams.get(link)
        if beam is not None:  # linear term is gated by the association
            s = _signal(channels, link, beam)
            term += LOG2E * 2.0 * np.sqrt(wl * (1.0 + g)) * float(
                np.real(np.conj(yl) * s)
            )
        value += term
    return float(value) / channels.tones


def update_beta(beams: BeamMap, channels: ChannelSet, epsilon: float
                ) -> dict[Link, np.ndarray]:
    """Reweighted-l0 ledger: per (link, member BS), beta = 1/(eps + ||block||^2)."""
    out: dict[Link, np.ndarray] = {}
    m = channels.block_size
    for link, w in beams.items():
        blocks = w.reshape(-1, m)
        out[link] = 1.0 / (epsilon + np.sum(np.abs(blocks) ** 2, axis=1))
    return out


def frozen_link_rates(beams: BeamMap, channels: ChannelSet) -> dict[Link, float]:
    """Per-link full-band rate contributions, frozen for the fronthaul cap."""
    return {
        link: link_rate(link[0], link[1], beams, channels, link[2]) / channels.tones
        for link in beams
    }


def fronthaul_weight_map(frozen: dict[Link, float], beta: dict[Link, np.ndarray],
                         channels: ChannelSet, epsilon: float) -> dict[Link, np.ndarray]:
    """Per-link per-BS fronthaul weights R~ * beta.

    Links absent from `beta` (no previous beam) get R~ = 0, hence weight 0:
    a link that carried no rate is free to enter and is priced next refresh.
    """
    out: dict[Link, np.ndarray] = {}
    for link, rate in frozen.items():
        b = beta.get(link)
        if b is None:
            ncl = len(channels.members[link[1]])
            b = np.full(ncl, 1.0 / epsilon)
        out[link] = rate * b
    return out


def interference_matrix(y: dict[Link, complex], channels: ChannelSet,
                        cluster: int, tone: int) -> np.ndarray:
    """A_{q,n} = sum over active links of |y|^2 h_{receiver,q,n} h^H."""
    dim = channels.dim(cluster)
    a = np.zeros((dim, dim), dtype=complex)
    for (i, _, n), yl in y.items():
        if n != tone or yl == 0:
            continue
        h = channels.vector(i, cluster, n)
        a += (abs(yl) ** 2) * np.outer(h, h.conj())
    return a


_RIDGE_REL = 1e-7


def _stabilize(a: np.ndarray) -> np.ndarray:
    """Ridge a rank-deficient interference quadratic.

    The surrogate is exactly flat along directions no receiver prices, which
    makes the beam subproblem degenerate; a relative ridge pins those
    directions to zero.  Well-conditioned matrices pass through untouched.
    """
    lam = np.linalg.eigvalsh(a)
    lam_max = float(lam[-1])
    if lam_max <= 0.0:
        return a
    if float(lam[0]) < _RIDGE_REL * lam_max:
        return a + (_RIDGE_REL * lam_max) * np.eye(a.shape[0])
    return a


def candidate_beams(gamma_user: dict[int, float], y_user: dict[int, complex],
                    y_links: dict[Link, complex], channels: ChannelSet,
                    power_caps: dict[int, float], tone: int = 0,
                    tol: float = 1e-6, max_bisect: int = 100,
                    ) -> tuple[dict[tuple[int, int], np.ndarray], dict[int, float]]:
    """Stationarity beams for every eligible (user, cluster) candidate pair.

    v_{u,q} = (A_q + diag(per-BS eta))^-1 sqrt(1+g_u) y_u h_{u,q}, with each
    cluster's per-BS eta the minimal nonnegative loading that keeps the
    summed candidate power within the BS cap (zero when already feasible).
    """
    from . import qcqp

    cand: dict[tuple[int, int], np.ndarray] = {}
    etas: dict[int, float] = {}
    for q, members in channels.members.items():
        users = sorted(u for u, allowed in channels.eligible.items() if q in allowed)
        if not users:
            continue
        dim = channels.dim(q)
        a = _stabilize(interference_matrix(y_links, channels, q, tone))
        rewards = {}
        for u in users:
            scale = np.sqrt(1.0 + gamma_user.get(u, 0.0)) * y_user.get(u, 0.0)
            rewards[u] = scale * channels.vector(u, q, tone) if scale != 0 else None
        if all(r is None for r in rewards.values()):
            for u in users:
                cand[(u, q)] = np.zeros(dim, dtype=complex)
            for b in members:
                etas[b] = 0.0
            continue
        problem = qcqp.BeamProblem(
            links=[
                qcqp.LinkTerm(
                    key=(u, q), cluster=q,
                    reward=(rewards[u] if rewards[u] is not None
                            else np.zeros(dim, dtype=complex)),
                    quad=a, fronthaul_weight=np.zeros(len(members)),
                )
                for u in users
            ],
            block_size=channels.block_size,
            members={q: tuple(members)},
            power_caps={b: power_caps[b] for b in members},
            fronthaul_caps=None,
            trusted=True,
        )
        beams, report = qcqp.solve(problem, tol=tol, max_bisect=max_bisect)
        for u in users:
            cand[(u, q)] = beams[(u, q)]
        etas.update(report.multipliers["power"])
    return cand, etas


def association_benefit(user: int, cluster: int, gamma_u: float, y_u: complex,
                        v: np.ndarray, channels: ChannelSet,
                        y_links: dict[Link, complex], tone: int = 0) -> float:
    """Net surrogate gain of serving `user` from `cluster` with beam `v`.

    Combines the link's own surrogate terms with the interference its
    candidate beam would inflict on every currently active link.
    """
    h = channels.vector(user, cluster, tone)
    a = interference_matrix(y_links, channels, cluster, tone)
    damage = float(np.real(np.vdot(v, a @ v)))
    gain = 2.0 * np.sqrt(1.0 + gamma_u) * float(np.real(np.conj(y_u) * np.vdot(h, v)))
    own = np.log2(1.0 + gamma_u) + LOG2E * (
        -gamma_u - abs(y_u) ** 2 * channels.noise_per_tone
    )
    return float(own + LOG2E * (gain - damage))


def association_benefits(gamma_user: dict[int, float], y_user: dict[int, complex],
                         cand: dict[tuple[int, int], np.ndarray],
                         channels: ChannelSet, y_links: dict[Link, complex],
                         tone: int = 0) -> dict[tuple[int, int], float]:
    mats = {
        q: interference_matrix(y_links, channels, q, tone)
        for q in {q for (_, q) in cand}
    }
    out: dict[tuple[int, int], float] = {}
    for (u, q), v in cand.items():
        g = gamma_user.get(u, 0.0)
        yl = y_user.get(u, 0.0 + 0.0j)
        h = channels.vector(u, q, tone)
        damage = float(np.real(np.vdot(v, mats[q] @ v)))
        gain = 2.0 * np.sqrt(1.0 + g) * float(np.real(np.conj(yl) * np.vdot(h, v)))
        own = np.log2(1.0 + g) + LOG2E * (
            -g - abs(yl) ** 2 * channels.noise_per_tone
        )
        out[(u, q)] = float(own + LOG2E * (gain - damage))
    return out


def update_association(benefits: dict[tuple[int, int], float],
                       eligibility: dict[int, frozenset[int]]) -> dict[int, int | None]:
    """Pick per user the eligible cluster of largest positive benefit.

    Ties break toward the lowest cluster id; a user whose eligible benefits
    are all <= 0 is left unassociated.
    """
    assoc: dict[int, int | None] = {}
    for u, allowed in eligibility.items():
        best_q = None
        best = 0.0
        for q in sorted(allowed):
            val = benefits.get((u, q))
            if val is None:
                continue
            if val > best:
                best = val
                best_q = q
        assoc[u] = best_q
    return assoc


def beam_subproblem(gamma: dict[Link, float], y: dict[Link, complex],
                    channels: ChannelSet, power_caps: dict[int, float],
                    fronthaul_caps: dict[int, float] | None,
                    fronthaul_weights: dict[Link, np.ndarray],
                    weights: dict[int, float] | None = None) -> BeamProblem:
    """Assemble the concave quadratic subproblem at fixed auxiliaries.

    Rewards r_l = sqrt(w_l (1+g_l)) y_l h_l; the quadratic form for every
    link of (cluster, tone) aggregates all active receivers' |y|^2 h h^H.
    """
    mats: dict[tuple[int, int], np.ndarray] = {}
    links: list[LinkTerm] = []
    for link in gamma:
        u, q, n = link
        if (q, n) not in mats:
            mats[(q, n)] = _stabilize(interference_matrix(y, channels, q, n))
        wl = 1.0 if weights is None else weights[u]
        reward = np.sqrt(wl * (1.0 + gamma[link])) * y[link] * channels.vector(u, q, n)
        fw = fronthaul_weights.get(link)
        if fw is None:
            fw = np.zeros(len(channels.members[q]))
        links.append(
            LinkTerm(key=link, cluster=q, reward=reward, quad=mats[(q, n)],
                     fronthaul_weight=np.asarray(fw, dtype=float))
        )
    return BeamProblem(
        links=links,
        block_size=channels.block_size,
        members=dict(channels.members),
        power_caps=dict(power_caps),
        fronthaul_caps=dict(fronthaul_caps) if fronthaul_caps else None,
        trusted=True,
    )
