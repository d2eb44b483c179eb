"""Random Schrodinger operator H_beta, its Green matrix and the u-field."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import linalg

from .hier_graph import WeightedGraph

INVERSION_TOL = 1e-10


class InvalidStateError(RuntimeError):
    """Raised when a beta-field does not give a positive definite H."""


def assemble_H(g: WeightedGraph, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (g.n_vertices,):
        raise ValueError(
            f"beta has shape {beta.shape}, graph has {g.n_vertices} vertices"
        )
    H = -np.array(g.weights)
    H[np.diag_indices_from(H)] = 2.0 * beta
    return H


def green_matrix(H: np.ndarray, check: bool = True) -> np.ndarray:
    """Inverse of a positive definite H, certified through a Cholesky factorization."""
    H = np.asarray(H, dtype=float)
    try:
        c, low = linalg.cho_factor(H, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise InvalidStateError("H is not positive definite") from exc
    G = linalg.cho_solve((c, low), np.eye(H.shape[0]))
    G = 0.5 * (G + G.T)
    if check:
        if np.any(G <= 0):
            raise InvalidStateError("Green matrix has a nonpositive entry")
        dev = np.max(np.abs(G @ H - np.eye(H.shape[0])))
        if dev > INVERSION_TOL * max(1.0, np.max(np.abs(G)) * np.max(np.abs(H))):
            raise InvalidStateError(f"inversion residual {dev:.3e} too large")
    return G


def u_field(G: np.ndarray, i0: int) -> np.ndarray:
    row = np.asarray(G)[i0]
    if np.any(row <= 0):
        raise ValueError("u-field needs positive Green entries")
    u = np.log(row) - np.log(row[i0])
    u[i0] = 0.0
    return u


def beta_from_u(g: WeightedGraph, u, gamma: float, i0: int) -> np.ndarray:
    """Rebuild beta from the pinned u-field and gamma = 1 / (2 G(i0, i0)).

    ``u`` may carry leading batch dimensions; ``gamma`` broadcasts against them.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.asarray(gamma) > 0):
        raise ValueError("gamma must be positive")
    eu = np.exp(u)
    # 2 beta_i = sum_j W_ij e^{u_j - u_i}
    two_beta = (eu @ g.weights) / eu
    two_beta[..., i0] += 2.0 * np.asarray(gamma)
    return 0.5 * two_beta


def walk_expansion_truncated(g: WeightedGraph, beta, i: int, j: int, L: int) -> float:
    """Sum of W_sigma / (2 beta)_sigma over paths i -> j with at most L steps."""
    beta = np.asarray(beta, dtype=float)
    dinv = 1.0 / (2.0 * beta)
    T = dinv[:, None] * g.weights
    radius = np.max(np.abs(np.linalg.eigvals(T)))
    if radius >= 1.0:
        raise InvalidStateError(f"walk expansion diverges (spectral radius {radius:.4f})")
    # column j of S_L = sum_{l<=L} (D^-1 W)^l D^-1
    col = np.zeros(g.n_vertices)
    col[j] = dinv[j]
    total = col.copy()
    for _ in range(L):
        col = T @ col
        total += col
    return float(total[i])


def spanning_tree_polynomial(g: WeightedGraph, u, delete: Optional[int] = None) -> float:
    """Sum over spanning trees of prod W_ij e^{u_i + u_j}, via a Laplacian cofactor."""
    sign, logdet = log_tree_polynomial(g.weights, np.asarray(u, dtype=float), delete
                                       if delete is not None else _default_delete(g))
    if sign <= 0:
        raise ValueError("graph is disconnected (spanning tree polynomial vanishes)")
    return float(np.exp(logdet))


def _default_delete(g: WeightedGraph) -> int:
    return g.pinning if g.pinning is not None else 0


def log_tree_polynomial(W: np.ndarray, u: np.ndarray, delete: int):
    """(sign, log) of the reduced weighted Laplacian determinant; ``u`` may be batched."""
    eu = np.exp(u)
    keep = np.delete(np.arange(W.shape[0]), delete)
    m = len(keep)
    if m == 0:
        shape = u.shape[:-1]
        return np.ones(shape), np.zeros(shape)
    ek = eu[..., keep]
    # diagonal: e^{u_k} sum_j W_kj e^{u_j}, including edges to the deleted vertex
    diag = ek * (eu @ W[:, keep])
    if m == 1:
        d = diag[..., 0]
    elif m == 2:
        off = W[keep[0], keep[1]] * ek[..., 0] * ek[..., 1]
        d = diag[..., 0] * diag[..., 1] - off * off
    else:
        Lr = -W[np.ix_(keep, keep)] * ek[..., :, None] * ek[..., None, :]
        k = np.arange(m)
        Lr[..., k, k] = diag
        try:
            # reduced Laplacians of connected graphs are positive definite
            chol = np.linalg.cholesky(Lr)
        except np.linalg.LinAlgError:
            return np.linalg.slogdet(Lr)
        logdet = 2.0 * np.log(chol[..., k, k]).sum(axis=-1)
        return np.ones_like(logdet), logdet
    with np.errstate(divide="ignore"):
        return np.sign(d), np.log(np.abs(d))


@dataclass(frozen=True, eq=False)
class SchrodingerState:
    """A graph with a beta-potential; H, G and the pinned u-field are derived lazily."""

    graph: WeightedGraph
    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.shape != (self.graph.n_vertices,):
            raise ValueError("beta does not match the graph")
        if np.any(b <= 0):
            raise InvalidStateError("beta must be strictly positive")
        object.__setattr__(self, "beta", b)

    @cached_property
    def H(self) -> np.ndarray:
        return assemble_H(self.graph, self.beta)

    @cached_property
    def G(self) -> np.ndarray:
        return green_matrix(self.H)

    @property
    def pinning(self) -> int:
        return _default_delete(self.graph)

    @cached_property
    def pinned_u(self) -> np.ndarray:
        return u_field(self.G, self.pinning)

    @property
    def gamma(self) -> float:
        return 1.0 / (2.0 * self.G[self.pinning, self.pinning])

    @classmethod
    def from_u(cls, g: WeightedGraph, u, gamma: float) -> "SchrodingerState":
        i0 = _default_delete(g)
        return cls(g, beta_from_u(g, u, gamma, i0))
