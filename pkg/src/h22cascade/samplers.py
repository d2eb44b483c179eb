"""Samplers for the beta- and u-fields of the H^{2|2}-model on finite graphs.

The Metropolis sampler here is the cross-validation route; the exact route on
the hierarchical lattice is the fine-graining cascade.  Chains are run as a
batch (one row per independent chain), which is what makes 10^4 - 10^5
independent draws affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .hier_graph import WeightedGraph
from .schrodinger import beta_from_u, log_tree_polynomial

DEFAULT_BURN_IN = 10_000
DEFAULT_THIN = 10
ACCEPT_BAND = (0.30, 0.50)


@dataclass(frozen=True)
class RngStream:
    """A (seed, stream) pair; the same pair always yields the same draws."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, k: int) -> "RngStream":
        return RngStream(self.seed, self.stream * 1_000_003 + 1 + int(k))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def sample_gamma_half(rng, size=None):
    """Gamma(1/2) with unit scale: density e^{-t} / (sqrt(t) Gamma(1/2))."""
    return as_generator(rng).standard_gamma(0.5, size=size)


@dataclass(frozen=True, eq=False)
class MIGParams:
    """Multivariate inverse Gaussian parameters: graph weights, theta (=1), eta."""

    graph: WeightedGraph
    theta: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.graph.n_vertices
        theta = np.ones(n) if self.theta is None else np.asarray(self.theta, dtype=float)
        if theta.shape != (n,) or not np.all(theta == 1.0):
            raise ValueError("only theta == 1 is supported")
        eta = self.graph.eta if self.eta is None else np.asarray(self.eta, dtype=float)
        if eta.shape != (n,) or np.any(eta < 0):
            raise ValueError("eta must be a nonnegative vector over the vertices")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)


def laplace_closed_form(p: MIGParams, lam) -> float:
    """E[exp(-<lambda, beta>)] under nu^{W, theta, eta}."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != p.theta.shape:
        raise ValueError("lambda has the wrong length")
    if np.any(lam < 0):
        raise ValueError("lambda must be componentwise nonnegative")
    r = np.sqrt(lam + p.theta ** 2)
    W = p.graph.weights
    # each unordered edge once
    edge = 0.5 * np.sum(W * (np.outer(r, r) - np.outer(p.theta, p.theta)))
    bnd = np.sum(p.eta * (r - p.theta))
    return float(np.exp(-edge - bnd) * np.prod(p.theta / r))


def laplace_mc(sampler: Callable, lam, N: int, rng):
    """Monte Carlo estimate of E[exp(-<lambda, beta>)] with its standard error.

    ``sampler(N, rng)`` returns beta draws of shape ``(N, V)``, or
    ``(chains, per_chain, V)`` when draws within a chain are correlated; in
    that case the standard error is taken across chain means.
    """
    if N < 1000:
        raise ValueError("laplace_mc needs N >= 1000")
    lam = np.asarray(lam, dtype=float)
    beta = np.asarray(sampler(N, as_generator(rng)))
    vals = np.exp(-(beta @ lam))
    if vals.ndim == 2:
        means = vals.mean(axis=1)
        se = means.std(ddof=1) / np.sqrt(len(means))
        return float(means.mean()), float(se)
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    return float(vals.mean()), float(se)


def log_u_density(g: WeightedGraph, u: np.ndarray, i0: int) -> np.ndarray:
    """Unnormalized log density of the pinned u-field (batched over leading axes)."""
    W = g.weights
    diff = u[..., :, None] - u[..., None, :]
    interaction = 0.5 * np.sum(W * (np.cosh(diff) - 1.0), axis=(-2, -1))
    sign, logdet = log_tree_polynomial(W, u, i0)
    out = -u.sum(axis=-1) - interaction + 0.5 * logdet
    return np.where(sign > 0, out, -np.inf)


@dataclass
class MetropolisUSampler:
    """Single-site Gaussian-proposal Metropolis on the free coordinates of u.

    Runs ``n_chains`` independent chains side by side.  Proposal scales are
    tuned per site during the first half of the burn-in and frozen after.
    """

    graph: WeightedGraph
    i0: int
    n_chains: int = 1
    burn_in: int = DEFAULT_BURN_IN
    thin: int = DEFAULT_THIN
    scales: np.ndarray = field(default=None)
    acceptance: np.ndarray = field(default=None, init=False)

    def __post_init__(self):
        self.graph.require_connected()
        n = self.graph.n_vertices
        if self.scales is None:
            self.scales = np.ones(n)
        self.free = np.array([i for i in range(n) if i != self.i0], dtype=int)

    def _sweep(self, u, logdet, rng, counts):
        W = self.graph.weights
        for i in self.free:
            step = self.scales[i] * rng.standard_normal(self.n_chains)
            prop = u.copy()
            prop[:, i] += step
            sign, prop_logdet = log_tree_polynomial(W, prop, self.i0)
            prop_logdet = np.where(sign > 0, prop_logdet, -np.inf)
            delta = (self._local(prop, i, W) - self._local(u, i, W)
                     + 0.5 * (prop_logdet - logdet))
            accept = np.log(rng.random(self.n_chains)) < delta
            u[accept, i] = prop[accept, i]
            logdet[accept] = prop_logdet[accept]
            counts[i] += accept.sum()

    @staticmethod
    def _local(u, i, W):
        # terms of the log density that involve site i
        d = u[:, i][:, None] - u
        return -u[:, i] - np.sum(W[i] * (np.cosh(d) - 1.0), axis=1)

    def run(self, rng, n_samples: int = 1, u0: Optional[np.ndarray] = None) -> np.ndarray:
        """Return draws of shape ``(n_chains, n_samples, V)``."""
        rng = as_generator(rng)
        n = self.graph.n_vertices
        u = np.zeros((self.n_chains, n)) if u0 is None else np.array(u0, dtype=float)
        sign, logdet = log_tree_polynomial(self.graph.weights, u, self.i0)
        logdet = np.where(sign > 0, logdet, -np.inf)
        counts = np.zeros(n)
        tune_until = self.burn_in // 2
        window = 20
        for sweep in range(self.burn_in):
            self._sweep(u, logdet, rng, counts)
            if sweep < tune_until and (sweep + 1) % window == 0:
                rate = counts / (window * self.n_chains)
                lo, hi = ACCEPT_BAND
                self.scales = np.where(rate < lo, self.scales * 0.7,
                                       np.where(rate > hi, self.scales * 1.4, self.scales))
                counts[:] = 0
        counts[:] = 0
        out = np.empty((self.n_chains, n_samples, n))
        total_sweeps = 0
        for k in range(n_samples):
            for _ in range(self.thin if k > 0 else 1):
                self._sweep(u, logdet, rng, counts)
                total_sweeps += 1
            out[:, k] = u
        self.acceptance = counts / max(1, total_sweeps * self.n_chains)
        return out


def sample_u_mcmc(g: WeightedGraph, i0: int, sweeps: int, rng, n_chains: int = 1,
                  n_samples: int = 1, thin: int = DEFAULT_THIN) -> np.ndarray:
    """Approximate draws from the pinned u-field law.

    With the defaults this returns a single vector; otherwise an array of shape
    ``(n_chains, V)`` (``n_samples == 1``) or ``(n_chains, n_samples, V)``.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be positive")
    sampler = MetropolisUSampler(g, i0, n_chains=n_chains, burn_in=sweeps, thin=thin)
    out = sampler.run(rng, n_samples=n_samples)
    if n_samples == 1:
        out = out[:, 0]
        return out[0] if n_chains == 1 else out
    return out


def sample_beta_direct(g: WeightedGraph, i0: int, sweeps: int, rng, n_chains: int = 1,
                       n_samples: int = 1, thin: int = DEFAULT_THIN) -> np.ndarray:
    """beta = beta_from_u(u, gamma) with u from the Metropolis sampler and gamma ~ Gamma(1/2)."""
    rng = as_generator(rng)
    u = sample_u_mcmc(g, i0, sweeps, rng, n_chains=n_chains, n_samples=n_samples, thin=thin)
    gamma = sample_gamma_half(rng, size=u.shape[:-1] if u.ndim > 1 else None)
    return beta_from_u(g, u, gamma, i0)


class PinnedEdgeLaw:
    """Law of u_1 on the two-vertex graph {1, delta} with weight ``a``, pinned at delta.

    The density is tabulated on a fine u-grid and integrated numerically; the
    inverse CDF is read from that table.
    """

    def __init__(self, a: float, n_grid: int = 400_001):
        if not a > 0:
            raise ValueError("edge weight must be positive")
        self.a = float(a)
        half = self._half_width()
        self.grid = np.linspace(-half, half, n_grid)
        pdf = self.pdf(self.grid)
        cdf = integrate.cumulative_trapezoid(pdf, self.grid, initial=0.0)
        self.mass = cdf[-1]
        self.cdf_table = cdf / cdf[-1]

    def _half_width(self) -> float:
        # log-density ~ -a e^{|u|} / 2 in both tails
        return max(12.0, np.log(2.0 * 60.0 / self.a) + 2.0)

    def log_pdf(self, u):
        u = np.asarray(u, dtype=float)
        return (-0.5 * np.log(2.0 * np.pi) + 0.5 * np.log(self.a)
                - 0.5 * u - self.a * (np.cosh(u) - 1.0))

    def pdf(self, u):
        return np.exp(self.log_pdf(u))

    def cdf(self, u):
        return np.interp(u, self.grid, self.cdf_table, left=0.0, right=1.0)

    def ppf(self, q):
        return np.interp(q, self.cdf_table, self.grid)

    def sample(self, rng, size=None):
        return self.ppf(as_generator(rng).random(size))
