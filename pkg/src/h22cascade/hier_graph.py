"""Dyson hierarchical lattice, its wired finite balls, and weighted graphs.

Vertices of the lattice are the positive integers (1-based, as usual for the
hierarchical structure).  Finite graphs are stored densely: vertex ``i`` of a
level graph lives at array index ``i - 1`` and the wired boundary vertex is
the last index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Iterable, Optional, Sequence

import numpy as np


class InvalidGraphError(ValueError):
    pass


@dataclass(frozen=True)
class HierParams:
    """Inverse temperature ``wbar``, decay ``rho`` and ball radius ``level``."""

    wbar: float = 1.0
    rho: float = 2.0
    level: int = 0

    def __post_init__(self):
        if not self.wbar > 0:
            raise ValueError(f"wbar must be positive, got {self.wbar}")
        if not self.rho > 1:
            raise ValueError(f"rho must be > 1, got {self.rho}")
        if int(self.level) != self.level or self.level < 0:
            raise ValueError(f"level must be a nonnegative integer, got {self.level}")

    @property
    def spectral_dimension(self) -> float:
        return 2.0 * math.log(2.0) / math.log(self.rho)

    @property
    def n_sites(self) -> int:
        return 2 ** self.level

    def with_level(self, level: int, wbar: Optional[float] = None) -> "HierParams":
        return HierParams(self.wbar if wbar is None else wbar, self.rho, level)


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Finite graph with a dense symmetric weight matrix.

    ``boundary`` is an optional nonnegative vector (the eta boundary condition)
    and ``pinning`` an optional distinguished vertex index (0-based).
    """

    weights: np.ndarray
    boundary: Optional[np.ndarray] = None
    pinning: Optional[int] = None
    labels: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InvalidGraphError("weights must be a square matrix")
        if np.any(np.diag(w) != 0):
            raise InvalidGraphError("weights must have zero diagonal")
        if not np.array_equal(w, w.T):
            raise InvalidGraphError("weights must be symmetric")
        if np.any(w < 0):
            raise InvalidGraphError("weights must be nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.boundary is not None:
            eta = np.array(self.boundary, dtype=float)
            if eta.shape != (w.shape[0],):
                raise InvalidGraphError("boundary vector has wrong length")
            if np.any(eta < 0):
                raise InvalidGraphError("boundary weights must be nonnegative")
            eta.setflags(write=False)
            object.__setattr__(self, "boundary", eta)
        if self.pinning is not None and not 0 <= self.pinning < w.shape[0]:
            raise InvalidGraphError("pinning vertex out of range")
        if self.labels is not None and len(self.labels) != w.shape[0]:
            raise InvalidGraphError("labels must match the number of vertices")

    @property
    def n_vertices(self) -> int:
        return self.weights.shape[0]

    @property
    def eta(self) -> np.ndarray:
        if self.boundary is None:
            return np.zeros(self.n_vertices)
        return self.boundary

    def is_connected(self) -> bool:
        n = self.n_vertices
        if n == 1:
            return True
        adj = self.weights > 0
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = [0]
        while frontier:
            i = frontier.pop()
            new = adj[i] & ~seen
            seen |= new
            frontier.extend(np.flatnonzero(new).tolist())
        if seen.all():
            return True
        # boundary links act as a common external vertex
        if self.boundary is not None:
            return _connected_with_boundary(adj, self.boundary > 0)
        return False

    def require_connected(self):
        if not self.is_connected():
            raise InvalidGraphError("graph is not connected")


def _connected_with_boundary(adj: np.ndarray, linked: np.ndarray) -> bool:
    n = adj.shape[0]
    big = np.zeros((n + 1, n + 1), dtype=bool)
    big[:n, :n] = adj
    big[:n, n] = linked
    big[n, :n] = linked
    seen = np.zeros(n + 1, dtype=bool)
    seen[n] = True
    frontier = [n]
    while frontier:
        i = frontier.pop()
        new = big[i] & ~seen
        seen |= new
        frontier.extend(np.flatnonzero(new).tolist())
    return bool(seen.all())


def hier_distance(i: int, j: int) -> int:
    """Smallest ``n`` such that ``i`` and ``j`` share a block ``(k 2^n, (k+1) 2^n]``."""
    if i < 1 or j < 1:
        raise ValueError("hierarchical vertices are positive integers")
    return ((int(i) - 1) ^ (int(j) - 1)).bit_length()


def hier_distance_matrix(n_sites: int) -> np.ndarray:
    idx = np.arange(n_sites, dtype=np.int64)
    x = idx[:, None] ^ idx[None, :]
    # bit_length via frexp: x = m * 2**e with m in [0.5, 1)
    _, e = np.frexp(x.astype(float))
    return np.where(x == 0, 0, e).astype(np.int64)


def hier_weight(i: int, j: int, params: HierParams) -> float:
    if i == j:
        raise ValueError("invalid pair: hierarchical weight needs i != j")
    return params.wbar * (2.0 * params.rho) ** (-hier_distance(i, j))


def wired_boundary_weight(i: int, params: HierParams) -> float:
    """Total weight from site ``i`` of the ball to everything outside it."""
    if not 1 <= i <= params.n_sites:
        raise ValueError(f"vertex {i} outside the ball of radius {params.level}")
    return params.wbar * params.rho ** (-params.level) / (2.0 * (params.rho - 1.0))


def tail_weight_partial_sum(i: int, params: HierParams, m: int) -> float:
    """Sum of ``W_ij`` over ``j`` outside the ball up to distance ``level + m``."""
    n = params.level
    total = 0.0
    for d in range(n + 1, n + m + 1):
        # 2**(d-1) sites sit at distance exactly d from any site of the ball
        total += 2.0 ** (d - 1) * params.wbar * (2.0 * params.rho) ** (-d)
    return total


def build_level_graph(params: HierParams) -> WeightedGraph:
    """Ball ``{1..2^n}`` plus a wired boundary vertex, pinned at the boundary."""
    size = params.n_sites
    d = hier_distance_matrix(size)
    w = np.zeros((size + 1, size + 1))
    inner = params.wbar * (2.0 * params.rho) ** (-d.astype(float))
    np.fill_diagonal(inner, 0.0)
    w[:size, :size] = inner
    wb = wired_boundary_weight(1, params)
    w[:size, size] = wb
    w[size, :size] = wb
    labels = tuple(range(1, size + 1)) + ("delta",)
    return WeightedGraph(w, pinning=size, labels=labels)


def is_indistinguishable(g: WeightedGraph, U: Iterable[int]) -> bool:
    """Whether every vertex outside ``U`` sees all of ``U`` with one weight (0-based)."""
    members = sorted(set(int(i) for i in U))
    if not members:
        raise ValueError("invalid subset: U must be nonempty")
    if members[0] < 0 or members[-1] >= g.n_vertices:
        raise ValueError("invalid subset: index out of range")
    outside = np.setdiff1d(np.arange(g.n_vertices), members)
    cols = g.weights[np.ix_(outside, members)]
    if not np.all(cols == cols[:, :1]):
        return False
    if g.boundary is not None:
        eta = g.boundary[members]
        if not np.all(eta == eta[0]):
            return False
    return True


def sibling_pairs(level: int) -> list[tuple[int, int]]:
    """0-based index pairs ``(2k-2, 2k-1)`` of the ball of radius ``level``."""
    return [(2 * k, 2 * k + 1) for k in range(2 ** (level - 1))] if level > 0 else []


def block_swap(i: int, n: int) -> int:
    """Automorphism exchanging ``[1, 2^n]`` with ``[2^n + 1, 2^(n+1)]``."""
    if n == 0:
        return i
    half = 2 ** n
    if 1 <= i <= half:
        return i + half
    if half < i <= 2 * half:
        return i - half
    return i


def dyadic_index(x: float, level: int) -> int:
    """1-based index ``i`` with ``x`` in ``[(i-1) 2^-n, i 2^-n)``."""
    if not 0.0 <= x < 1.0:
        raise ValueError("x must lie in [0, 1)")
    return int(math.floor(x * 2 ** level)) + 1


def dyadic_path(x: float, depth: int) -> Sequence[int]:
    return [dyadic_index(x, n) for n in range(depth + 1)]
