"""Planted-influencer instance generators.

Senders are laid out group by group (``L_1, ..., L_k``), the influencer first
in each group; receivers are laid out ``G_1, ..., G_k`` followed by the noise
block ``G_0``.  Forest-fire instances put the ``k`` influencers at indices
``0..k-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from relaxim.graph import BipartiteGraph
from relaxim.rng import make_rng


class InvalidSpecError(ValueError):
    """Generator parameters outside the model's admissible range."""


@dataclass(frozen=True)
class PlantedInstance:
    graph: BipartiteGraph
    k: int
    sender_groups: tuple[np.ndarray, ...]
    # receiver_groups[0] is the noise block G_0, receiver_groups[l] is G_l
    receiver_groups: tuple[np.ndarray, ...]
    kind: str = "planted"
    seed: int | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.graph.num_senders, self.graph.num_receivers
        if len(self.sender_groups) != self.k or len(self.receiver_groups) != self.k + 1:
            raise ValueError("need k sender groups and k+1 receiver groups")
        s = np.sort(np.concatenate([np.asarray(g, dtype=np.int64) for g in self.sender_groups]))
        if not np.array_equal(s, np.arange(m)):
            raise ValueError("sender groups must partition the senders")
        r = np.sort(np.concatenate([np.asarray(g, dtype=np.int64) for g in self.receiver_groups]))
        if not np.array_equal(r, np.arange(n)):
            raise ValueError("receiver groups must partition the receivers")
        if any(len(g) == 0 for g in self.sender_groups):
            raise ValueError("every sender group needs an influencer")

    @property
    def influencers(self) -> np.ndarray:
        return np.array([int(g[0]) for g in self.sender_groups], dtype=np.int64)

    @property
    def x_star(self) -> np.ndarray:
        x = np.zeros(self.graph.num_senders)
        x[self.influencers] = 1.0
        return x

    def subordinates(self, l: int) -> np.ndarray:
        """Subordinates of group ``l`` (1-based)."""
        return np.asarray(self.sender_groups[l - 1][1:], dtype=np.int64)

    def group_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.receiver_groups[1:]], dtype=np.int64)

    def sender_group_of(self) -> np.ndarray:
        lab = np.empty(self.graph.num_senders, dtype=np.int64)
        for l, g in enumerate(self.sender_groups, start=1):
            lab[np.asarray(g, dtype=np.int64)] = l
        return lab

    def receiver_group_of(self) -> np.ndarray:
        lab = np.empty(self.graph.num_receivers, dtype=np.int64)
        for l, g in enumerate(self.receiver_groups):
            lab[np.asarray(g, dtype=np.int64)] = l
        return lab


def _layout(n: Sequence[int], r: Sequence[int], g0: int):
    sender_groups, receiver_groups = [], []
    s0 = 0
    for rl in r:
        sender_groups.append(np.arange(s0, s0 + rl + 1))
        s0 += rl + 1
    r0 = 0
    for nl in n:
        receiver_groups.append(np.arange(r0, r0 + nl))
        r0 += nl
    receiver_groups.insert(0, np.arange(r0, r0 + g0))
    return sender_groups, receiver_groups, s0, r0 + g0


def _check_sizes(k: int, n: Sequence[int], r: Sequence[int]) -> None:
    if k < 1:
        raise InvalidSpecError("k must be at least 1")
    if len(n) != k or len(r) != k:
        raise InvalidSpecError(f"need {k} group sizes and {k} subordinate counts")
    if any(int(v) < 1 for v in n):
        raise InvalidSpecError("every receiver group needs n_l >= 1")
    if any(int(v) < 0 for v in r):
        raise InvalidSpecError("subordinate counts must be nonnegative")


def gen_noiseless(k: int, n: Sequence[int], r: Sequence[int], seed: int) -> PlantedInstance:
    """Noiseless planted instance: each subordinate covers a random proper subset of its group."""
    _check_sizes(k, n, r)
    rng = make_rng(seed)
    sg, rg, m, nr = _layout(n, r, 0)
    arcs = []
    for l in range(k):
        G = rg[l + 1]
        inf = sg[l][0]
        arcs.extend((inf, j) for j in G)
        for sub in sg[l][1:]:
            size = int(rng.integers(0, len(G)))
            arcs.extend((sub, int(j)) for j in rng.choice(G, size=size, replace=False))
    g = BipartiteGraph(m, nr, arcs)
    return PlantedInstance(
        g, k, tuple(sg), tuple(rg), kind="noiseless", seed=seed,
        params={"n": list(map(int, n)), "r": list(map(int, r))},
    )


def gen_deterministic_noisy(
    k: int,
    n: Sequence[int],
    r: Sequence[int],
    g0_size: int,
    theta: Sequence[float],
    beta: Sequence[float],
    z_cap: int,
    seed: int,
    cross_density: float = 0.5,
) -> PlantedInstance:
    """Noisy planted instance with a clean core ``H_l`` of ``floor(theta_l n_l)`` receivers per group.

    Each subordinate of group ``l`` gets exactly ``floor(beta_l |H_l|)`` arcs into
    ``H_l`` and exactly ``min(z_cap, g0_size)`` arcs into ``G_0``.  Every sender is
    joined to each receiver of ``G_l' \\ H_l'`` (any group) with probability
    ``cross_density``; a receiver of ``G_l \\ H_l`` left without an out-of-group
    sender is given one, so the realized clean core is exactly ``H_l``.
    """
    _check_sizes(k, n, r)
    if len(theta) != k or len(beta) != k:
        raise InvalidSpecError("theta and beta need one entry per group")
    if g0_size < 0 or z_cap < 0:
        raise InvalidSpecError("g0_size and z_cap must be nonnegative")
    if not 0.0 <= cross_density <= 1.0:
        raise InvalidSpecError("cross_density must lie in [0, 1]")
    h = []
    for nl, th, be in zip(n, theta, beta):
        if not 0.0 < th <= 1.0:
            raise InvalidSpecError(f"theta must lie in (0, 1], got {th}")
        if not 0.0 < be < 1.0:
            raise InvalidSpecError(f"beta must lie in (0, 1), got {be}")
        hl = int(math.floor(th * nl + 1e-9))
        if hl < 1:
            raise InvalidSpecError(f"theta={th} leaves an empty clean core for n_l={nl}")
        h.append(hl)
    if k == 1 and h[0] < n[0]:
        raise InvalidSpecError("with k=1 there is no out-of-group sender, so theta must be 1")

    rng = make_rng(seed)
    sg, rg, m, nr = _layout(n, r, g0_size)
    group_of = np.empty(m, dtype=np.int64)
    for l, grp in enumerate(sg):
        group_of[grp] = l
    subs_all = np.concatenate([grp[1:] for grp in sg])
    arcs: set[tuple[int, int]] = set()
    cores, fringes = [], []
    for l in range(k):
        G = rg[l + 1]
        perm = rng.permutation(G)
        H, F = np.sort(perm[: h[l]]), np.sort(perm[h[l]:])
        cores.append(H)
        fringes.append(F)
        inf = int(sg[l][0])
        arcs.update((inf, int(j)) for j in G)
        cap = int(math.floor(beta[l] * h[l] + 1e-9))
        for sub in sg[l][1:]:
            arcs.update((int(sub), int(j)) for j in rng.choice(H, size=cap, replace=False))
    # fringe receivers: random arcs from every sender, then force one out-of-group arc
    for l in range(k):
        F = fringes[l]
        if F.size == 0:
            continue
        hits = rng.random((F.size, m)) < cross_density
        for a, j in enumerate(F):
            for i in np.flatnonzero(hits[a]):
                arcs.add((int(i), int(j)))
        outside_subs = subs_all[group_of[subs_all] != l]
        pool = outside_subs if outside_subs.size else np.array([int(sg[o][0]) for o in range(k) if o != l])
        for j in F:
            senders_j = hits[F.searchsorted(j)]
            if not senders_j[group_of != l].any():
                arcs.add((int(rng.choice(pool)), int(j)))
    G0 = rg[0]
    z = min(int(z_cap), int(g0_size))
    for sub in subs_all:
        if z:
            arcs.update((int(sub), int(j)) for j in rng.choice(G0, size=z, replace=False))
    g = BipartiteGraph(m, nr, sorted(arcs))
    return PlantedInstance(
        g, k, tuple(sg), tuple(rg), kind="deterministic-noisy", seed=seed,
        params={
            "n": list(map(int, n)), "r": list(map(int, r)), "g0_size": int(g0_size),
            "theta": [hl / nl for hl, nl in zip(h, n)], "beta": [float(b) for b in beta],
            "z_cap": int(z_cap), "cross_density": float(cross_density),
        },
    )


@dataclass(frozen=True)
class RandomPlantedSpec:
    k: int
    n: tuple[int, ...]
    r: tuple[int, ...]
    g0_size: int
    q: float
    s: float
    seed: int = 0

    @property
    def total_senders(self) -> int:
        return sum(self.r) + self.k

    @property
    def r_min(self) -> int:
        return min(self.r)

    def probabilities(self) -> tuple[list[float], float, float]:
        """In-group subordinate probability per group, cross-group probability, noise-block probability."""
        rt = self.total_senders
        in_group = [self.s * self.r_min / rl if rl > 0 else 0.0 for rl in self.r]
        return in_group, self.q / rt, self.s * self.r_min / rt

    def validate(self) -> None:
        _check_sizes(self.k, self.n, self.r)
        if self.q < 0 or self.s <= 0:
            raise InvalidSpecError("need q >= 0 and s > 0")
        if self.g0_size < 0:
            raise InvalidSpecError("g0_size must be nonnegative")
        in_group, cross, noise = self.probabilities()
        for name, p in [("s*r_min/r_l", max(in_group)), ("q/r", cross), ("s*r_min/r", noise)]:
            if p > 1.0:
                raise InvalidSpecError(f"rule probability {name} = {p:g} exceeds 1")


def gen_random_planted(spec: RandomPlantedSpec) -> PlantedInstance:
    """Random planted model: receivers draw their incoming arcs independently.

    A group receiver always links to its influencer, to each own-group
    subordinate with probability ``s r_min / r_l`` and to every sender of
    another group with probability ``q / r``.  A ``G_0`` receiver links to each
    subordinate (of any group) with probability ``s r_min / r`` and never to an
    influencer.
    """
    spec.validate()
    rng = make_rng(spec.seed)
    sg, rg, m, nr = _layout(spec.n, spec.r, spec.g0_size)
    in_group, cross, noise = spec.probabilities()
    prob = np.zeros((nr, m))
    for l in range(spec.k):
        rows = rg[l + 1]
        prob[np.ix_(rows, np.arange(m))] = cross
        prob[np.ix_(rows, sg[l][1:])] = in_group[l]
        prob[rows, sg[l][0]] = 1.0
    is_sub = np.ones(m, dtype=bool)
    is_sub[[grp[0] for grp in sg]] = False
    prob[np.ix_(rg[0], np.flatnonzero(is_sub))] = noise
    draws = rng.random((nr, m))
    jj, ii = np.nonzero(draws < prob)
    g = BipartiteGraph(m, nr, np.column_stack([ii, jj]))
    return PlantedInstance(
        g, spec.k, tuple(sg), tuple(rg), kind="random-planted", seed=spec.seed,
        params={"n": list(spec.n), "r": list(spec.r), "g0_size": spec.g0_size, "q": spec.q, "s": spec.s},
    )


@dataclass(frozen=True)
class ForestFireSpec:
    k: int
    u_i: int
    u_f: int
    p1: float
    p2: float
    sigma_pct: float
    seed: int = 0

    def validate(self) -> None:
        if self.k < 1:
            raise InvalidSpecError("k must be at least 1")
        if not 0.0 < self.p1 < 1.0 or not 0.0 < self.p2 < 1.0:
            raise InvalidSpecError("p1 and p2 must lie in (0, 1)")
        if self.sigma_pct < 0:
            raise InvalidSpecError("sigma_pct must be nonnegative")
        if self.u_i < self.k or self.u_f < self.k:
            raise InvalidSpecError("caps u_i and u_f must be at least k")


class _Uniforms:
    """Buffered U[0,1) draws; ``pick`` chooses a uniform element of a sequence."""

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buf = rng.random(block)
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == self._block:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def pick(self, seq):
        return seq[int(self() * len(seq))]


def _burn(new, pool_size, own_adj, other_adj, linked, link, uniform, p2, cap) -> int:
    """Grow ``new``'s neighbourhood by the copying walk and return the seed node.

    ``own_adj`` maps nodes on ``new``'s side to their neighbours on the far side,
    ``other_adj`` the reverse.  The walk starts at a random existing node of
    ``new``'s side, copies one of its neighbours, then repeatedly (with
    probability ``p2``) hops to a random co-neighbour of the last copied node
    and copies one of that co-neighbour's neighbours.  Already-copied nodes are
    skipped but the walk continues through them.
    """
    start = int(uniform() * pool_size)
    target = uniform.pick(own_adj[start])
    link(new, target)
    steps = 1
    while steps < cap and uniform() < p2:
        peers = other_adj[target]
        if len(peers) < 2:  # only ``new`` itself
            break
        peer = uniform.pick(peers)
        while peer == new:
            peer = uniform.pick(peers)
        target = uniform.pick(own_adj[peer])
        if target not in linked[new]:
            link(new, target)
        steps += 1
    return start


def gen_forest_fire(spec: ForestFireSpec) -> PlantedInstance:
    """Two-layer forest-fire network with ``k`` planted influencers and uniform noise arcs.

    ``params`` records ``E_orig`` (arcs after the influencer tweak) and
    ``E_noise`` (noise arcs added from the complement).
    """
    spec.validate()
    rng = make_rng(spec.seed)
    uni = _Uniforms(rng)
    k = spec.k
    s_adj: list[list[int]] = [[l] for l in range(k)]
    r_adj: list[list[int]] = [[l] for l in range(k)]
    s_set: list[set[int]] = [{l} for l in range(k)]
    r_set: list[set[int]] = [{l} for l in range(k)]
    lineage = list(range(k))

    def add_arc(i: int, j: int) -> None:
        s_adj[i].append(j)
        r_adj[j].append(i)
        s_set[i].add(j)
        r_set[j].add(i)

    def add_arc_from_receiver(j: int, i: int) -> None:
        add_arc(i, j)

    while len(s_adj) < spec.u_i or len(r_adj) < spec.u_f:
        if len(s_adj) >= spec.u_i:
            add_receiver = True
        elif len(r_adj) >= spec.u_f:
            add_receiver = False
        else:
            add_receiver = uni() < spec.p1
        cap = len(s_adj) + len(r_adj)
        if add_receiver:
            j = len(r_adj)
            r_adj.append([])
            r_set.append(set())
            _burn(j, j, r_adj, s_adj, r_set, lambda a, b: add_arc(b, a), uni, spec.p2, cap)
        else:
            i = len(s_adj)
            s_adj.append([])
            s_set.append(set())
            start = _burn(i, i, s_adj, r_adj, s_set, add_arc, uni, spec.p2, cap)
            lineage.append(lineage[start])

    m, n = len(s_adj), len(r_adj)
    label = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        infl = [i for i in r_adj[j] if i < k]
        if infl:
            label[j] = min(infl)
        else:
            l = int(uni() * k)
            add_arc(l, j)
            label[j] = l
    e_orig = sum(len(a) for a in s_adj)
    complement = m * n - e_orig
    e_noise = int(math.floor(spec.sigma_pct / 100.0 * complement + 1e-9))
    arcs = np.array([(i, j) for i in range(m) for j in s_adj[i]], dtype=np.int64).reshape(-1, 2)
    if e_noise:
        taken = set((arcs[:, 0] * n + arcs[:, 1]).tolist())
        noise: list[int] = []
        while len(noise) < e_noise:
            for code in rng.integers(0, m * n, size=max(1024, 2 * (e_noise - len(noise)))).tolist():
                if code not in taken:
                    taken.add(code)
                    noise.append(code)
                    if len(noise) == e_noise:
                        break
        codes = np.array(noise, dtype=np.int64)
        arcs = np.vstack([arcs, np.column_stack([codes // n, codes % n])])
    g = BipartiteGraph(m, n, arcs)
    lineage_arr = np.array(lineage, dtype=np.int64)
    sender_groups = tuple(np.concatenate([[l], np.flatnonzero(lineage_arr[k:] == l) + k]) for l in range(k))
    receiver_groups = (np.array([], dtype=np.int64),) + tuple(np.flatnonzero(label == l) for l in range(k))
    return PlantedInstance(
        g, k, sender_groups, receiver_groups, kind="forest-fire", seed=spec.seed,
        params={
            "u_i": spec.u_i, "u_f": spec.u_f, "p1": spec.p1, "p2": spec.p2,
            "sigma_pct": spec.sigma_pct, "E_orig": e_orig, "E_noise": e_noise,
        },
    )
