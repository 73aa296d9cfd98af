"""Bipartite sender -> receiver graphs.

The incidence matrix ``A`` has one row per sender and one column per receiver;
``A[i, j] = 1`` when there is an arc from sender ``i`` to receiver ``j``.
Adjacency is kept in both orientations (CSR over senders and over receivers)
because every solver needs both.
"""

from __future__ import annotations

from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    """Index or vector length incompatible with the graph."""


class GraphParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class BipartiteGraph:
    """Immutable bipartite digraph with arcs from senders to receivers."""

    def __init__(self, num_senders: int, num_receivers: int, arcs: Iterable[tuple[int, int]] | np.ndarray = ()):
        m, n = int(num_senders), int(num_receivers)
        if m < 0 or n < 0:
            raise DimensionError("node counts must be nonnegative")
        arr = np.asarray(list(arcs) if not isinstance(arcs, np.ndarray) else arcs, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if arr.size:
            if arr[:, 0].min() < 0 or arr[:, 0].max() >= m:
                raise DimensionError(f"sender index out of range [0, {m})")
            if arr[:, 1].min() < 0 or arr[:, 1].max() >= n:
                raise DimensionError(f"receiver index out of range [0, {n})")
        order = np.lexsort((arr[:, 1], arr[:, 0]))
        arr = arr[order]
        if len(arr) > 1:
            dup = np.all(arr[1:] == arr[:-1], axis=1)
            if dup.any():
                i, j = arr[1:][dup][0]
                raise ValueError(f"duplicate arc ({i}, {j})")
        self.num_senders = m
        self.num_receivers = n
        self._s_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(arr[:, 0], minlength=m), out=self._s_ptr[1:])
        self._s_idx = arr[:, 1].copy()
        rorder = np.lexsort((arr[:, 0], arr[:, 1]))
        self._r_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(arr[:, 1], minlength=n), out=self._r_ptr[1:])
        self._r_idx = arr[rorder, 0].copy()
        for a in (self._s_ptr, self._s_idx, self._r_ptr, self._r_idx):
            a.setflags(write=False)

    def __repr__(self) -> str:
        return f"BipartiteGraph(senders={self.num_senders}, receivers={self.num_receivers}, arcs={self.num_arcs})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BipartiteGraph):
            return NotImplemented
        return (
            self.num_senders == other.num_senders
            and self.num_receivers == other.num_receivers
            and np.array_equal(self._s_ptr, other._s_ptr)
            and np.array_equal(self._s_idx, other._s_idx)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def num_arcs(self) -> int:
        return int(self._s_idx.size)

    def receivers_of(self, i: int) -> np.ndarray:
        return self._s_idx[self._s_ptr[i] : self._s_ptr[i + 1]]

    def senders_of(self, j: int) -> np.ndarray:
        return self._r_idx[self._r_ptr[j] : self._r_ptr[j + 1]]

    def has_arc(self, i: int, j: int) -> bool:
        row = self.receivers_of(i)
        pos = np.searchsorted(row, j)
        return bool(pos < row.size and row[pos] == j)

    def arcs(self) -> np.ndarray:
        """All arcs as an ``(E, 2)`` array sorted lexicographically."""
        senders = np.repeat(np.arange(self.num_senders), np.diff(self._s_ptr))
        return np.column_stack([senders, self._s_idx])

    def out_degrees(self) -> np.ndarray:
        return np.diff(self._s_ptr)

    def in_degrees(self) -> np.ndarray:
        return np.diff(self._r_ptr)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Sparse 0-1 incidence matrix, senders x receivers."""
        data = np.ones(self.num_arcs)
        return sp.csr_matrix((data, self._s_idx, self._s_ptr), shape=(self.num_senders, self.num_receivers))

    def with_arcs(self, extra: Iterable[tuple[int, int]] | np.ndarray) -> "BipartiteGraph":
        extra = np.asarray(list(extra) if not isinstance(extra, np.ndarray) else extra, dtype=np.int64).reshape(-1, 2)
        return BipartiteGraph(self.num_senders, self.num_receivers, np.vstack([self.arcs(), extra]))


def apply_incidence_transpose(g: BipartiteGraph, x: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``A^T x``: for each receiver, the total weight of its senders."""
    x = np.asarray(x, dtype=float)
    if x.shape != (g.num_senders,):
        raise DimensionError(f"expected vector of length {g.num_senders}, got shape {x.shape}")
    return g.incidence.T @ x


def reachable_count(g: BipartiteGraph, senders: Iterable[int]) -> int:
    """Number of receivers adjacent to at least one sender in ``senders``."""
    s = np.fromiter((int(i) for i in senders), dtype=np.int64)
    if s.size and (s.min() < 0 or s.max() >= g.num_senders):
        raise DimensionError(f"sender index out of range [0, {g.num_senders})")
    if s.size == 0:
        return 0
    hit = np.zeros(g.num_receivers, dtype=bool)
    for i in np.unique(s):
        hit[g.receivers_of(i)] = True
    return int(hit.sum())


def indicator(m: int, members: Iterable[int]) -> np.ndarray:
    x = np.zeros(m)
    x[list(members)] = 1.0
    return x


def _parse_header(line: str, key: str, lineno: int) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise GraphParseError(lineno, f"expected '{key} <count>', got {line!r}")
    try:
        value = int(parts[1])
    except ValueError:
        raise GraphParseError(lineno, f"bad count {parts[1]!r}") from None
    if value < 0:
        raise GraphParseError(lineno, "count must be nonnegative")
    return value


def read_graph(text: str) -> BipartiteGraph:
    """Parse the plain-text graph format (see ``write_graph``)."""
    header: list[int] = []
    arcs: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    m = n = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if len(header) == 0:
            m = _parse_header(line, "senders", lineno)
            header.append(m)
            continue
        if len(header) == 1:
            n = _parse_header(line, "receivers", lineno)
            header.append(n)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(lineno, f"expected '<sender> <receiver>', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(lineno, f"non-integer index in {line!r}") from None
        if not 0 <= i < m:
            raise GraphParseError(lineno, f"sender index {i} out of range [0, {m})")
        if not 0 <= j < n:
            raise GraphParseError(lineno, f"receiver index {j} out of range [0, {n})")
        if (i, j) in seen:
            raise GraphParseError(lineno, f"duplicate arc ({i}, {j})")
        seen.add((i, j))
        arcs.append((i, j))
    if len(header) < 2:
        raise GraphParseError(len(text.split("\n")), "missing 'senders'/'receivers' header")
    return BipartiteGraph(m, n, arcs)


def write_graph(g: BipartiteGraph) -> str:
    """Serialize ``g``: ``senders m``, ``receivers n``, then one sorted ``i j`` arc per line."""
    lines = [f"senders {g.num_senders}", f"receivers {g.num_receivers}"]
    lines.extend(f"{i} {j}" for i, j in g.arcs().tolist())
    return "\n".join(lines) + "\n"
