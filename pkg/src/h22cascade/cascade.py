"""Fine-graining coupling on the hierarchical lattice and its martingale observables.

A realization stores, for every level ``n``, the beta-potential on
``Lambda_n`` plus the boundary vertex, and the u-field on ``Lambda_n``.  Each
level is obtained from the previous one by splitting every site into its two
children with the exact pair sampler; the pinning variable ``gamma`` is shared
by all levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import List, Optional

import numpy as np

from .graining import coarse_grain_pair, fine_grain_pair
from .hier_graph import HierParams, build_level_graph, dyadic_index, wired_boundary_weight
from .samplers import (PinnedEdgeLaw, RngStream, as_generator, sample_gamma_half,
                       sample_u_mcmc, MetropolisUSampler)
from .schrodinger import SchrodingerState, beta_from_u, green_matrix, assemble_H, u_field

log = logging.getLogger(__name__)

DEFAULT_MAX_LEVEL = 20
VALIDATION_MAX_LEVEL = 10
CONSERVATION_TOL = 1e-10


class InvariantError(RuntimeError):
    pass


@dataclass
class CascadeLevel:
    level: int
    wbar: float
    beta: np.ndarray  # length 2**level + 1, boundary vertex last
    u: np.ndarray  # length 2**level

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.u)


@dataclass
class CascadeRealization:
    gamma: float
    params: HierParams
    levels: List[CascadeLevel] = field(default_factory=list)
    rng: Optional[np.random.Generator] = None
    max_level: int = DEFAULT_MAX_LEVEL
    validation_log: list = field(default_factory=list)

    @property
    def depth(self) -> int:
        return self.levels[-1].level

    def level(self, n: int) -> CascadeLevel:
        if n > self.depth:
            raise ValueError(f"realization grown to {self.depth}, asked for level {n}")
        return self.levels[n]

    def params_at(self, n: int) -> HierParams:
        return HierParams(self.level(n).wbar, self.params.rho, n)

    def state(self, n: int) -> SchrodingerState:
        return SchrodingerState(build_level_graph(self.params_at(n)), self.level(n).beta)

    def total_mass(self) -> float:
        return float(np.exp(self.levels[0].u[0]))

    def truncated(self, n: int, rng=None) -> "CascadeRealization":
        """Copy of the first ``n + 1`` levels, continuing with ``rng``."""
        return CascadeRealization(self.gamma, self.params, list(self.levels[:n + 1]),
                                  as_generator(rng) if rng is not None else self.rng,
                                  self.max_level)


def wbar_at(params: HierParams, n: int) -> float:
    return params.wbar * (params.rho / 2.0) ** n


def intra_weight(wbar_child: float, rho: float) -> float:
    """Weight between the two children (they sit at distance 1)."""
    return wbar_child / (2.0 * rho)


def root_law(params: HierParams) -> PinnedEdgeLaw:
    return _root_law_cached(float(params.wbar), float(params.rho))


_ROOT_CACHE: dict = {}


def _root_law_cached(wbar: float, rho: float) -> PinnedEdgeLaw:
    key = (wbar, rho)
    if key not in _ROOT_CACHE:
        a = wired_boundary_weight(1, HierParams(wbar, rho, 0))
        _ROOT_CACHE[key] = PinnedEdgeLaw(a)
    return _ROOT_CACHE[key]


def init_root(params: HierParams, rng, max_level: int = DEFAULT_MAX_LEVEL) -> CascadeRealization:
    """Sample gamma and the level-0 u-field on the two-point graph {1, delta}."""
    rng = as_generator(rng)
    root = params.with_level(0)
    gamma = float(sample_gamma_half(rng))
    u1 = float(root_law(root).sample(rng))
    g = build_level_graph(root)
    beta = beta_from_u(g, np.array([u1, 0.0]), gamma, g.pinning)
    r = CascadeRealization(gamma, root, rng=rng, max_level=max_level)
    r.levels.append(CascadeLevel(0, root.wbar, beta, np.array([u1])))
    return r


def split_level(beta_parent: np.ndarray, eu_parent: np.ndarray, w: float, rng=None, z=None):
    """Split every cell: children betas and children e^u, all vectorized."""
    b1, b2, _ = fine_grain_pair(beta_parent, w, rng, z=z)
    # e^{u_1} / e^{u_2} = (2 b2 + w) / (2 b1 + w), and the pair averages to the parent
    r1 = 2.0 * b2 + w
    r2 = 2.0 * b1 + w
    s = r1 + r2
    eu1 = 2.0 * eu_parent * r1 / s
    eu2 = 2.0 * eu_parent * r2 / s
    beta = np.empty(2 * len(beta_parent))
    beta[0::2], beta[1::2] = b1, b2
    eu = np.empty(2 * len(eu_parent))
    eu[0::2], eu[1::2] = eu1, eu2
    return beta, eu


def grow_one_level(r: CascadeRealization, validate: bool = False) -> CascadeRealization:
    n = r.depth
    if n + 1 > r.max_level:
        raise OverflowError(f"refusing to grow past max level {r.max_level}")
    top = r.levels[-1]
    wbar_child = top.wbar * r.params.rho / 2.0
    w = intra_weight(wbar_child, r.params.rho)
    beta_kids, eu_kids = split_level(top.beta[:-1], np.exp(top.u), w, r.rng)
    beta = np.append(beta_kids, top.beta[-1])
    level = CascadeLevel(n + 1, wbar_child, beta, np.log(eu_kids))
    r.levels.append(level)
    if validate and n + 1 <= VALIDATION_MAX_LEVEL:
        _validate_level(r, n + 1)
    return r


def grow_to(r: CascadeRealization, depth: int, validate: bool = False) -> CascadeRealization:
    while r.depth < depth:
        grow_one_level(r, validate=validate)
    return r


def _validate_level(r: CascadeRealization, n: int):
    """Cross-check the ratio-based u-field against a full Green-matrix inversion."""
    lvl = r.levels[n]
    state = r.state(n)
    u_full = u_field(state.G, state.pinning)[:-1]
    gamma_full = state.gamma
    dev = float(np.max(np.abs(np.exp(u_full - lvl.u) - 1.0)))
    gdev = abs(gamma_full / r.gamma - 1.0)
    entry = {"level": n, "u_rel_dev": dev, "gamma_rel_dev": gdev}
    r.validation_log.append(entry)
    if dev > 1e-8 or gdev > 1e-8:
        log.warning("level %d: ratio u-field deviates from full inversion (%s)", n, entry)


def conservation_defect(r: CascadeRealization) -> float:
    """Largest relative gap between a cell's density and the mean of its children."""
    worst = 0.0
    for parent, child in zip(r.levels[:-1], r.levels[1:]):
        ep = np.exp(parent.u)
        ec = np.exp(child.u)
        gap = np.abs(ep - 0.5 * (ec[0::2] + ec[1::2])) / ep
        worst = max(worst, float(gap.max()))
    return worst


def coarse_grain_defect(r: CascadeRealization) -> float:
    """Largest relative gap between coarse-grained children and the stored parent beta."""
    worst = 0.0
    for parent, child in zip(r.levels[:-1], r.levels[1:]):
        w = intra_weight(child.wbar, r.params.rho)
        bp = coarse_grain_pair(child.beta[:-1:2], child.beta[1:-1:2], w)
        worst = max(worst, float(np.max(np.abs(bp / parent.beta[:-1] - 1.0))))
        worst = max(worst, abs(child.beta[-1] / parent.beta[-1] - 1.0))
    return worst


def check_invariants(r: CascadeRealization, tol: float = CONSERVATION_TOL):
    for k, lvl in enumerate(r.levels):
        if lvl.level != k:
            raise InvariantError("levels are not consecutive")
        expected = wbar_at(r.params, k)
        if abs(lvl.wbar / expected - 1.0) > 1e-12:
            raise InvariantError(f"level {k}: inverse temperature {lvl.wbar} != {expected}")
        if lvl.beta.shape != (2 ** k + 1,) or lvl.u.shape != (2 ** k,):
            raise InvariantError(f"level {k}: wrong array sizes")
        if np.any(lvl.beta <= 0):
            raise InvariantError(f"level {k}: nonpositive beta")
    root = r.levels[0]
    g = build_level_graph(r.params_at(0))
    b0 = beta_from_u(g, np.array([root.u[0], 0.0]), r.gamma, g.pinning)
    if np.max(np.abs(b0 / root.beta - 1.0)) > 1e-12:
        raise InvariantError("root beta inconsistent with (u, gamma)")
    cons = conservation_defect(r)
    if cons > tol:
        raise InvariantError(f"mass conservation violated ({cons:.3e})")
    cg = coarse_grain_defect(r)
    if cg > 1e-12:
        raise InvariantError(f"coarse-graining of children violated ({cg:.3e})")


@dataclass(frozen=True)
class DyadicPoint:
    x: float

    def __post_init__(self):
        if not 0.0 <= self.x < 1.0:
            raise ValueError("x must lie in [0, 1)")

    def index(self, n: int) -> int:
        return dyadic_index(self.x, n)

    def path(self, depth: int) -> list:
        return [self.index(n) for n in range(depth + 1)]


def phi_path(r: CascadeRealization, x) -> np.ndarray:
    """phi_x^(n) = e^{u^(n)} at the cell containing x, n = 0..depth."""
    pt = x if isinstance(x, DyadicPoint) else DyadicPoint(float(x))
    return np.array([np.exp(lvl.u[pt.index(lvl.level) - 1]) for lvl in r.levels])


def grow_paths(params: HierParams, depth: int, N: int, rng, x: float = 0.0):
    """Follow one dyadic point through N independent cascades.

    Only the ancestors of the cell containing ``x`` are ever split, so this is
    O(N * depth).  Returns ``(gamma, beta, u)`` with ``beta`` and ``u`` of
    shape ``(N, depth + 1)`` holding the values at the cell of ``x``.
    """
    rng = as_generator(rng)
    root = params.with_level(0)
    gamma = sample_gamma_half(rng, size=N)
    u = np.empty((N, depth + 1))
    beta = np.empty((N, depth + 1))
    u[:, 0] = root_law(root).sample(rng, size=N)
    a = wired_boundary_weight(1, root)
    beta[:, 0] = 0.5 * a * np.exp(-u[:, 0])
    wbar = root.wbar
    pt = DyadicPoint(x)
    for n in range(depth):
        wbar *= params.rho / 2.0
        w = intra_weight(wbar, params.rho)
        kids_beta, kids_eu = split_level(beta[:, n], np.exp(u[:, n]), w, rng)
        left = pt.index(n + 1) % 2 == 1
        pick = 0 if left else 1
        beta[:, n + 1] = kids_beta[pick::2]
        u[:, n + 1] = np.log(kids_eu[pick::2])
    return gamma, beta, u


def regrow_children(r: CascadeRealization, n: int, cell: int, N: int, rng):
    """N independent one-step fine-grainings of cell ``cell`` (1-based) at level n.

    Returns the children's e^u, shape ``(N, 2)``.
    """
    lvl = r.level(n)
    w = intra_weight(lvl.wbar * r.params.rho / 2.0, r.params.rho)
    bp = np.full(N, lvl.beta[cell - 1])
    ep = np.full(N, np.exp(lvl.u[cell - 1]))
    _, eu = split_level(bp, ep, w, as_generator(rng))
    return np.stack([eu[0::2], eu[1::2]], axis=1)


def wired_coupling_sample(n: int, params: HierParams, gamma: float, rng,
                          sweeps: int = 2000) -> SchrodingerState:
    """Level-n model from an independent MCMC u-field, sharing ``gamma``."""
    g = build_level_graph(HierParams(wbar_at(params, n), params.rho, n))
    u = sample_u_mcmc(g, g.pinning, sweeps, rng)
    return SchrodingerState(g, beta_from_u(g, u, gamma, g.pinning))


def wired_coupling_batch(n: int, params: HierParams, gamma, rng, n_chains: int,
                         sweeps: int = 2000):
    """Batched wired-coupling draws: returns ``(beta, u)`` each of shape (chains, V)."""
    rng = as_generator(rng)
    g = build_level_graph(HierParams(wbar_at(params, n), params.rho, n))
    sampler = MetropolisUSampler(g, g.pinning, n_chains=n_chains, burn_in=sweeps)
    u = sampler.run(rng)[:, 0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n_chains,))
    beta = beta_from_u(g, u, gamma, g.pinning)
    return beta, u


def psi_field(state: SchrodingerState, size: Optional[int] = None) -> np.ndarray:
    """e^{u_i} on the ball (boundary vertex dropped); padded with ones up to ``size``."""
    psi = np.exp(state.pinned_u)
    psi = np.delete(psi, state.pinning)
    if size is not None and size > len(psi):
        psi = np.concatenate([psi, np.ones(size - len(psi))])
    return psi
