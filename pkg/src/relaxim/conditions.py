"""Recovery-condition checkers for planted instances.

``check_noisy_conditions`` evaluates the deterministic noisy-model guarantee
(clean cores ``H_l``, coverage ratios ``beta``, noise counts ``z``) under which
the LP relaxation returns the influencers.  ``check_cascade_conditions``
evaluates the independent-cascade guarantee under which threshold rounding of
the smooth relaxation returns the influencers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from relaxim.generators import PlantedInstance


@dataclass(frozen=True)
class NoisyConditionReport:
    core_sizes: np.ndarray  # |H_l|
    theta: np.ndarray
    beta: np.ndarray  # max clean-core coverage ratio over each group's subordinates
    rho: float  # nan when some theta_l is zero
    z: dict[int, int]  # subordinate -> number of G_0 neighbours
    n_min: int
    assumptions_hold: bool  # influencers cover their groups and avoid G_0
    beta_condition: bool
    noise_condition: bool

    @property
    def passed(self) -> bool:
        return self.assumptions_hold and self.beta_condition and self.noise_condition


@dataclass(frozen=True)
class CascadeConditionReport:
    n: np.ndarray
    n_hat: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    p: float
    xi_round: float
    assumptions_hold: bool
    balance_condition: bool  # min n_hat >= (1-p)^(1/2 + xi/2) max(alpha + gamma/(1-p))
    noise_condition: bool  # n_l - alpha_l > (1-p)^(-k) gamma_l for every l

    @property
    def passed(self) -> bool:
        return (
            self.assumptions_hold
            and bool(np.all(self.alpha < self.n))
            and self.balance_condition
            and self.noise_condition
        )


def clean_cores(inst: PlantedInstance) -> list[np.ndarray]:
    """For each group, the receivers of ``G_l`` whose senders all belong to ``L_l``."""
    g = inst.graph
    sgroup = inst.sender_group_of()
    cores = []
    for l in range(1, inst.k + 1):
        G = np.asarray(inst.receiver_groups[l], dtype=np.int64)
        keep = [j for j in G if np.all(sgroup[g.senders_of(j)] == l)]
        cores.append(np.array(keep, dtype=np.int64))
    return cores


def _influencer_assumptions(inst: PlantedInstance) -> bool:
    g = inst.graph
    for l, inf in enumerate(inst.influencers, start=1):
        G = np.asarray(inst.receiver_groups[l], dtype=np.int64)
        if np.setdiff1d(G, g.receivers_of(inf)).size:
            return False
        if np.intersect1d(g.receivers_of(inf), inst.receiver_groups[0]).size:
            return False
    return True


def check_noisy_conditions(inst: PlantedInstance) -> NoisyConditionReport:
    """Evaluate ``beta_l < rho/2`` (strict) and ``z_i <= n_min theta_l rho / 2`` for every subordinate."""
    g = inst.graph
    cores = clean_cores(inst)
    n = inst.group_sizes()
    sizes = np.array([c.size for c in cores], dtype=np.int64)
    theta = sizes / n
    rho = float(theta.min() / theta.max()) if theta.min() > 0 else float("nan")
    G0 = np.asarray(inst.receiver_groups[0], dtype=np.int64)
    beta = np.zeros(inst.k)
    z: dict[int, int] = {}
    noise_ok = True
    n_min = int(n.min())
    for l in range(1, inst.k + 1):
        H = cores[l - 1]
        for sub in inst.subordinates(l):
            nbrs = g.receivers_of(sub)
            if H.size:
                beta[l - 1] = max(beta[l - 1], np.intersect1d(nbrs, H).size / H.size)
            zi = int(np.intersect1d(nbrs, G0).size)
            z[int(sub)] = zi
            if np.isnan(rho) or zi > n_min * theta[l - 1] * rho / 2 + 1e-12:
                noise_ok = False
    beta_ok = (not np.isnan(rho)) and bool(np.all(beta < rho / 2))
    return NoisyConditionReport(
        core_sizes=sizes, theta=theta, beta=beta, rho=rho, z=z, n_min=n_min,
        assumptions_hold=_influencer_assumptions(inst),
        beta_condition=beta_ok, noise_condition=noise_ok and not np.isnan(rho),
    )


def cascade_conditions(n, n_hat, alpha, gamma, p: float, xi_round: float) -> tuple[bool, bool]:
    """The two inequalities of the cascade recovery guarantee, from group statistics alone."""
    n, n_hat, alpha, gamma = (np.asarray(v, dtype=float) for v in (n, n_hat, alpha, gamma))
    k = n.size
    balance = n_hat.min() >= (1 - p) ** (0.5 + xi_round / 2) * np.max(alpha + gamma / (1 - p))
    noise = bool(np.all(n - alpha > (1 - p) ** (-k) * gamma))
    return bool(balance), noise


def check_cascade_conditions(inst: PlantedInstance, p: float, xi_round: float = 0.0) -> CascadeConditionReport:
    if not 0.0 < p < 1.0:
        raise ValueError(f"arc probability must lie in (0, 1), got {p}")
    if not 0.0 <= xi_round < 1.0 / (2 * inst.k + 1):
        raise ValueError(f"xi_round must lie in [0, 1/(2k+1)) = [0, {1 / (2 * inst.k + 1):.6g}), got {xi_round}")
    g = inst.graph
    n = inst.group_sizes()
    n_hat = np.array([c.size for c in clean_cores(inst)], dtype=np.int64)
    alpha = np.zeros(inst.k, dtype=np.int64)
    gamma = np.zeros(inst.k, dtype=np.int64)
    for l in range(1, inst.k + 1):
        G = np.asarray(inst.receiver_groups[l], dtype=np.int64)
        for sub in inst.subordinates(l):
            nbrs = g.receivers_of(sub)
            inside = np.intersect1d(nbrs, G).size
            alpha[l - 1] = max(alpha[l - 1], inside)
            gamma[l - 1] = max(gamma[l - 1], nbrs.size - inside)
    balance, noise = cascade_conditions(n, n_hat, alpha, gamma, p, xi_round)
    return CascadeConditionReport(
        n=n, n_hat=n_hat, alpha=alpha, gamma=gamma, p=p, xi_round=xi_round,
        assumptions_hold=_influencer_assumptions(inst),
        balance_condition=balance, noise_condition=noise,
    )


def satisfies_noiseless_assumptions(inst: PlantedInstance) -> bool:
    """Influencers cover their own group, no arc crosses groups, subordinates cover proper subsets."""
    if inst.receiver_groups[0].size:
        return False
    g = inst.graph
    rgroup = inst.receiver_group_of()
    for l in range(1, inst.k + 1):
        G = np.asarray(inst.receiver_groups[l], dtype=np.int64)
        inf = inst.influencers[l - 1]
        if not np.array_equal(np.sort(g.receivers_of(inf)), np.sort(G)):
            return False
        for sub in inst.subordinates(l):
            nbrs = g.receivers_of(sub)
            if np.any(rgroup[nbrs] != l) or nbrs.size >= G.size:
                return False
    return True
