"""Exact coarse-graining over indistinguishable pairs and its inverse sampler.

Reduced graphs keep the vertex order of the fine graph, with a merged set
``U`` placed at the position of its smallest member.  Fine graphs produced by
:func:`split_graph` put the two children at ``parent`` and ``parent + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .hier_graph import WeightedGraph, is_indistinguishable
from .reports import TestReport
from .samplers import as_generator
from .schrodinger import SchrodingerState, assemble_H, green_matrix

ALGEBRA_TOL = 1e-12


class NotIndistinguishableError(ValueError):
    pass


class InconsistentStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class PairSplit:
    """Blow-up of reduced vertex ``parent`` into fine vertices ``children``."""

    parent: int
    children: tuple
    intra_weight: float

    def __post_init__(self):
        if len(self.children) != 2:
            raise ValueError("only pair splits are supported")
        if not self.intra_weight > 0:
            raise ValueError("intra weight must be positive")

    @classmethod
    def at(cls, parent: int, w: float) -> "PairSplit":
        return cls(parent, (parent, parent + 1), float(w))


@dataclass(frozen=True)
class SplitDraw:
    t: float
    eps: float
    beta_check: float


def _reduced_order(n: int, U: Sequence[int]):
    U = sorted(set(int(i) for i in U))
    first = U[0]
    order = [i for i in range(n) if i not in U or i == first]
    return U, order, order.index(first)


def _require(g: WeightedGraph, U):
    if not is_indistinguishable(g, U):
        raise NotIndistinguishableError(f"{sorted(U)} is not indistinguishable from outside")


def coarse_grain_G(G: np.ndarray, U: Iterable[int], g: Optional[WeightedGraph] = None) -> np.ndarray:
    """Average the rows and columns of G over U (|U|^-1 per side)."""
    G = np.asarray(G, dtype=float)
    U, order, pos = _reduced_order(G.shape[0], list(U))
    if g is not None:
        _require(g, U)
    n = G.shape[0]
    A = np.zeros((len(order), n))
    for r, v in enumerate(order):
        if r == pos:
            A[r, U] = 1.0 / len(U)
        else:
            A[r, v] = 1.0
    return A @ G @ A.T


def reduced_weights(g: WeightedGraph, U: Iterable[int]) -> WeightedGraph:
    U = list(U)
    _require(g, U)
    U, order, pos = _reduced_order(g.n_vertices, U)
    n = g.n_vertices
    S = np.zeros((len(order), n))
    for r, v in enumerate(order):
        if r == pos:
            S[r, U] = 1.0
        else:
            S[r, v] = 1.0
    W = S @ g.weights @ S.T
    np.fill_diagonal(W, 0.0)
    boundary = None if g.boundary is None else S @ g.boundary
    pinning = None
    if g.pinning is not None:
        pinning = pos if g.pinning in U else order.index(g.pinning)
    labels = None
    if g.labels is not None:
        labels = tuple(g.labels[v] if r != pos else tuple(g.labels[i] for i in U)
                       for r, v in enumerate(order))
    return WeightedGraph(W, boundary=boundary, pinning=pinning, labels=labels)


def split_graph(g: WeightedGraph, parent: int, w: float) -> WeightedGraph:
    """Inverse of :func:`reduced_weights` for a pair: halve parent weights, add ``w`` inside."""
    n = g.n_vertices
    idx = list(range(parent + 1)) + list(range(parent, n))
    W = 0.5 * g.weights[np.ix_(idx, idx)]
    # rows/cols not touching the children are not halved
    others = [r for r in range(n + 1) if r not in (parent, parent + 1)]
    W[np.ix_(others, others)] *= 2.0
    W[parent, parent + 1] = W[parent + 1, parent] = w
    W[parent, parent] = W[parent + 1, parent + 1] = 0.0
    boundary = None
    if g.boundary is not None:
        boundary = g.boundary[idx].copy()
        boundary[[parent, parent + 1]] *= 0.5
    pinning = None
    if g.pinning is not None:
        if g.pinning == parent:
            raise ValueError("cannot split the pinning vertex")
        pinning = g.pinning + (1 if g.pinning > parent else 0)
    return WeightedGraph(W, boundary=boundary, pinning=pinning)


def coarse_grain_pair(beta1, beta2, w):
    """beta'_u with 1/(2 beta'_u) = (2b1 + 2b2 + 2w) / (4 (4 b1 b2 - w^2)); vectorized."""
    beta1 = np.asarray(beta1, dtype=float)
    beta2 = np.asarray(beta2, dtype=float)
    det = 4.0 * beta1 * beta2 - w * w
    if np.any(det <= 0):
        raise InconsistentStateError("4 b1 b2 - w^2 must be positive")
    return 2.0 * det / (2.0 * beta1 + 2.0 * beta2 + 2.0 * w)


def coarse_grain_beta(beta, g: WeightedGraph, U: Sequence[int]) -> float:
    i, j = sorted(U)
    return float(coarse_grain_pair(beta[i], beta[j], g.weights[i, j]))


def beta_prime_schur(H_UU: np.ndarray) -> float:
    """|U|^2 / (2 <1, H_UU^{-1} 1>), valid for any |U|."""
    k = H_UU.shape[0]
    one = np.ones(k)
    return float(k * k / (2.0 * one @ np.linalg.solve(H_UU, one)))


def fine_grain_pair(beta_prime_u, w, rng, z=None):
    """Sample (beta1, beta2) on the level set of the coarse-grained potential.

    ``z`` is a standard normal; ``t = z**2`` is the chi-square(1) variable and
    ``sign(z)`` the independent Rademacher sign.  It may be forced for testing.
    """
    bp = np.asarray(beta_prime_u, dtype=float)
    if np.any(bp <= 0):
        raise ValueError("beta'_u must be positive")
    if not np.all(np.asarray(w) > 0):
        raise ValueError("w must be positive")
    if z is None:
        z = as_generator(rng).standard_normal(bp.shape)
    z = np.asarray(z, dtype=float)
    t = z * z
    check = (t + 2.0 * bp + 4.0 * w) / 4.0
    half_gap = 0.5 * np.abs(z) * np.sqrt(check)  # |b1 - b2| / 2 = sqrt(t check) / 2
    mid = check - 0.5 * w  # (b1 + b2) / 2
    big = mid + half_gap
    # the smaller root from b1 b2 = (2 beta' check + w^2) / 4, free of cancellation
    small = (2.0 * bp * check + w * w) / (4.0 * big)
    b1 = np.where(z >= 0, big, small)
    b2 = np.where(z >= 0, small, big)
    eps = np.where(z >= 0, 1.0, -1.0)
    if bp.ndim == 0:
        return float(b1), float(b2), SplitDraw(float(t), float(eps), float(check))
    return b1, b2, SplitDraw(t, eps, check)


def beta_check_log_density(check, beta_prime_u, w):
    """Unnormalized log of exp(-check Xi^2 / 2) / (sqrt(2 check) Xi) on its support."""
    check = np.asarray(check, dtype=float)
    inside = 4.0 * check * check - 2.0 * beta_prime_u * check - 4.0 * w * check
    with np.errstate(invalid="ignore", divide="ignore"):
        xi = np.sqrt(inside) / check
        out = -0.5 * check * xi ** 2 - np.log(np.sqrt(2.0 * check) * xi)
    return np.where(inside > 0, out, -np.inf)


def _pair_block(b1, b2, w, gp_uu):
    """In-pair Green block and the off-pair split fractions, vectorized over draws."""
    det = 4.0 * b1 * b2 - w * w
    g11 = 2.0 * b2 / det
    g22 = 2.0 * b1 / det
    g12 = w / det
    a1 = g11 + g12  # row sums of the 2x2 inverse
    a2 = g12 + g22
    s = a1 + a2
    # G_UU = Ghat + kappa a a^T, kappa fixed by averaging back to G'(u, u)
    kappa = (4.0 * gp_uu - s) / (s * s)
    G11 = g11 + kappa * a1 * a1
    G22 = g22 + kappa * a2 * a2
    G12 = g12 + kappa * a1 * a2
    return G11, G12, G22, a1 / s, a2 / s


def fine_grain_G(Gp: np.ndarray, g_fine: WeightedGraph, split: PairSplit, rng,
                 beta_prime: Optional[float] = None, z=None):
    """Sample the fine Green matrix from the reduced one without inverting it.

    Returns ``(G, beta_pair, draw)``.  ``beta_prime`` is read from the caller's
    state when available; otherwise it is recovered from ``Gp^{-1}``.
    """
    Gp = np.asarray(Gp, dtype=float)
    c1, c2 = split.children
    p = split.parent
    if (c1, c2) != (p, p + 1):
        raise ValueError("children must sit at (parent, parent + 1)")
    if not is_indistinguishable(g_fine, split.children):
        raise NotIndistinguishableError("split children are distinguishable")
    w = g_fine.weights[c1, c2]
    if not np.isclose(w, split.intra_weight, rtol=1e-12, atol=0):
        raise ValueError("split intra weight disagrees with the fine graph")
    if beta_prime is None:
        beta_prime = _beta_prime_from_green(Gp, g_fine, split)
    b1, b2, draw = fine_grain_pair(beta_prime, w, rng, z=z)
    G11, G12, G22, f1, f2 = _pair_block(b1, b2, w, Gp[p, p])

    n = Gp.shape[0]
    outer = [k for k in range(n) if k != p]
    fine_outer = [k if k < p else k + 1 for k in outer]
    G = np.empty((n + 1, n + 1))
    G[np.ix_(fine_outer, fine_outer)] = Gp[np.ix_(outer, outer)]
    G[c1, fine_outer] = G[fine_outer, c1] = 2.0 * f1 * Gp[p, outer]
    G[c2, fine_outer] = G[fine_outer, c2] = 2.0 * f2 * Gp[p, outer]
    G[c1, c1], G[c2, c2] = G11, G22
    G[c1, c2] = G[c2, c1] = G12
    return G, (b1, b2), draw


def _beta_prime_from_green(Gp, g_fine, split) -> float:
    Hp = np.linalg.inv(Gp)
    g_red = reduced_weights(g_fine, split.children)
    off = Hp + g_red.weights
    np.fill_diagonal(off, 0.0)
    scale = max(1.0, np.max(np.abs(Hp)))
    if np.max(np.abs(off)) > 1e-8 * scale:
        raise InconsistentStateError("Gp^-1 is not of the form 2 beta - W for the reduced graph")
    return float(Hp[split.parent, split.parent] / 2.0)


def refine_beta_field(beta_reduced, g_reduced: WeightedGraph, split: PairSplit, rng, z=None):
    """Fine-grain a beta-field: copy off-pair entries and sample the pair."""
    beta_reduced = np.asarray(beta_reduced, dtype=float)
    p = split.parent
    b1, b2, draw = fine_grain_pair(beta_reduced[p], split.intra_weight, rng, z=z)
    out = np.insert(beta_reduced, p + 1, b2)
    out[p] = b1
    return out, draw


def orthonormal_reduce(vec, parent: int, size: int = 2) -> np.ndarray:
    """Fine vector -> reduced vector with the pair entry sum(vec_U) / sqrt(|U|)."""
    vec = np.asarray(vec, dtype=float)
    out = np.delete(vec, parent + 1)
    out[parent] = (vec[parent] + vec[parent + 1]) / np.sqrt(size)
    return out


def exponential_martingale_rhs(Gp, split: PairSplit, lam, eta) -> float:
    """exp(-<l^, G'_P e^> - <l^, G'_P l^>/2), with G'_P the reduced Green matrix
    expressed in the orthonormal basis of the merged pair."""
    p = split.parent
    D = np.ones(Gp.shape[0])
    D[p] = np.sqrt(2.0)
    GpP = D[:, None] * Gp * D[None, :]
    lh = orthonormal_reduce(lam, p)
    eh = orthonormal_reduce(eta, p)
    return float(np.exp(-lh @ GpP @ eh - 0.5 * lh @ GpP @ lh))


def exponential_martingale_lhs(Gp, split: PairSplit, beta_prime, lam, eta, rng, N: int, z=None):
    """N draws of exp(-<l, G e> - <l, G l>/2) over independent fine-grainings."""
    Gp = np.asarray(Gp, dtype=float)
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    p = split.parent
    w = split.intra_weight
    bp = np.full(N, float(beta_prime))
    b1, b2, _ = fine_grain_pair(bp, w, rng, z=z)
    G11, G12, G22, f1, f2 = _pair_block(b1, b2, w, Gp[p, p])
    n = Gp.shape[0]
    outer = [k for k in range(n) if k != p]
    fo = [k if k < p else k + 1 for k in outer]
    lo, eo = lam[fo], eta[fo]
    l1, l2 = lam[p], lam[p + 1]
    e1, e2 = eta[p], eta[p + 1]
    Goo = Gp[np.ix_(outer, outer)]
    gu = 2.0 * Gp[p, outer]

    def quad(x1, x2, xo, y1, y2, yo):
        cross = (x1 * f1 + x2 * f2) * (gu @ yo) + (y1 * f1 + y2 * f2) * (gu @ xo)
        inner = x1 * y1 * G11 + x2 * y2 * G22 + (x1 * y2 + x2 * y1) * G12
        return xo @ Goo @ yo + cross + inner

    expo = quad(l1, l2, lo, e1, e2, eo) + 0.5 * quad(l1, l2, lo, l1, l2, lo)
    return np.exp(-expo)


def exponential_martingale_conditional(Gp, split: PairSplit, beta_prime, lam, eta,
                                       n_nodes: int = 201) -> float:
    """E[exp(-<l, G e> - <l, G l>/2) | reduced state] by Gauss-Hermite quadrature over z.

    The pair draw is a function of one standard normal ``z``, so the
    conditional expectation is a 1-D Gaussian integral.  When ``lam`` is not
    constant on the pair this differs from :func:`exponential_martingale_rhs`.
    """
    x, wts = np.polynomial.hermite_e.hermegauss(n_nodes)
    vals = exponential_martingale_lhs(Gp, split, beta_prime, lam, eta, None, n_nodes, z=x)
    return float(np.sum(wts * vals) / np.sqrt(2.0 * np.pi))


def verify_exponential_martingale(reduced: SchrodingerState, split: PairSplit, lam, eta,
                                  N: int, rng, name: str = "exponential martingale") -> TestReport:
    """Hold the reduced state fixed, fine-grain N times, compare both sides."""
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda must be nonnegative")
    c1, c2 = split.children
    if eta[c1] != eta[c2]:
        raise ValueError("eta must be constant on the split pair")
    Gp = reduced.G
    vals = exponential_martingale_lhs(Gp, split, reduced.beta[split.parent], lam, eta, rng, N)
    rhs = exponential_martingale_rhs(Gp, split, lam, eta)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(N))
    dev = abs(mean - rhs)
    # draws that do not depend on the split are constant; allow rounding there
    ok = bool(dev <= max(3.0 * se, ALGEBRA_TOL))
    return TestReport(name, dev, 3.0 * se, N, se, passed=ok,
                      metadata={"lhs_mean": mean, "rhs": rhs, "lambda": lam.tolist(),
                                "eta": eta.tolist(), "kind": "statistical"})


def verify_conditional_quadrature(reduced: SchrodingerState, split: PairSplit, lam, eta,
                                  N: int, rng, name: str = "conditional expectation") -> TestReport:
    """Monte Carlo mean over fine-grainings against the quadrature of the same expectation."""
    lam = np.asarray(lam, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Gp = reduced.G
    bp = reduced.beta[split.parent]
    vals = exponential_martingale_lhs(Gp, split, bp, lam, eta, rng, N)
    exact = exponential_martingale_conditional(Gp, split, bp, lam, eta)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(N))
    return TestReport(name, abs(mean - exact), 3.0 * se, N, se,
                      metadata={"lhs_mean": mean, "quadrature": exact,
                                "closed_rhs": exponential_martingale_rhs(Gp, split, lam, eta),
                                "kind": "statistical"})
