"""Verification suites run by ``h22cascade verify``.

Every suite takes a :class:`RunConfig` and an :class:`RngStream` and returns a
list of :class:`TestReport`.  Reports carry ``metadata["kind"]``: ``"exact"``
for algebraic identities and ``"statistical"`` for Monte Carlo comparisons.
"""

from __future__ import annotations

from typing import Callable, Dict, List

import numpy as np

from .cascade import (check_invariants, conservation_defect, grow_paths, grow_to, init_root,
                      regrow_children, root_law)
from .config import RunConfig
from .graining import (PairSplit, coarse_grain_pair, fine_grain_G, fine_grain_pair,
                       reduced_weights, verify_conditional_quadrature,
                       verify_exponential_martingale)
from .hier_graph import HierParams, build_level_graph
from .reports import TestReport
from .samplers import (MIGParams, MetropolisUSampler, RngStream, laplace_closed_form,
                       sample_gamma_half)
from .schrodinger import SchrodingerState, assemble_H, beta_from_u, walk_expansion_truncated
from .stats import paired_martingale_test, total_mass_test, ward_identity_test

GREEN_TOL = 1e-8
PAIR_TOL = 1e-12


def _tag(reports, kind):
    for r in reports:
        r.metadata.setdefault("kind", kind)
    return reports


def _params(cfg: RunConfig, level: int = 0) -> HierParams:
    return HierParams(cfg.wbar, cfg.rho, level)


def pair_round_trip(n: int, rng) -> tuple:
    """Max relative error of coarse(fine(beta')) over n random (beta', w)."""
    rng = rng.generator() if isinstance(rng, RngStream) else rng
    bp = np.exp(rng.uniform(-3.0, 3.0, n))
    w = np.exp(rng.uniform(-3.0, 3.0, n))
    b1, b2, _ = fine_grain_pair(bp, w, rng)
    back = coarse_grain_pair(b1, b2, w)
    return float(np.max(np.abs(back / bp - 1.0))), bp, w


def green_split_chain(beta1: np.ndarray, params1: HierParams, rng, beta_scale: float = 1.0):
    """Fine-grain a level-1 state into level 2, one pair at a time, from G alone.

    Returns ``(max |G H - I|, max change of entries off the split pair)``.
    ``beta_scale`` != 1 corrupts the beta handed to the sampler (fault injection).
    """
    rho = params1.rho
    g1 = build_level_graph(params1)
    g2 = build_level_graph(HierParams(params1.wbar * rho / 2.0, rho, 2))
    g_mid = reduced_weights(g2, [2, 3])
    G1 = SchrodingerState(g1, beta1).G

    split_a = PairSplit.at(0, g_mid.weights[0, 1])
    G_mid, (a1, a2), _ = fine_grain_G(G1, g_mid, split_a, rng, beta_prime=beta1[0] * beta_scale)
    off_a = float(np.max(np.abs(G_mid[2:, 2:] - G1[1:, 1:])))
    beta_mid = np.array([a1, a2, beta1[1], beta1[2]])

    split_b = PairSplit.at(2, g2.weights[2, 3])
    G2, (c1, c2), _ = fine_grain_G(G_mid, g2, split_b, rng, beta_prime=beta_mid[2])
    keep_f, keep_r = [0, 1, 4], [0, 1, 3]
    off_b = float(np.max(np.abs(G2[np.ix_(keep_f, keep_f)] - G_mid[np.ix_(keep_r, keep_r)])))

    beta2 = np.array([a1, a2, c1, c2, beta1[2]])
    err = float(np.max(np.abs(G2 @ assemble_H(g2, beta2) - np.eye(5))))
    return err, max(off_a, off_b)


def suite_graining(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    rel, _, _ = pair_round_trip(10_000, rng)
    reports = [TestReport("pair coarse/fine round trip", rel, PAIR_TOL, 10_000)]
    params1 = _params(cfg, 0)
    n_rep = min(cfg.replicates * 100, 1000)
    worst_gh, worst_off = 0.0, 0.0
    scale = 1.001 if cfg.inject_fault else 1.0
    for _ in range(n_rep):
        r = grow_to(init_root(params1, rng), 1)
        lvl = r.levels[1]
        err, off = green_split_chain(lvl.beta, r.params_at(1), rng, beta_scale=scale)
        worst_gh, worst_off = max(worst_gh, err), max(worst_off, off)
    reports.append(TestReport("green reconstruction |GH - I|", worst_gh, GREEN_TOL, n_rep,
                              metadata={"fault_injected": cfg.inject_fault}))
    reports.append(TestReport("green reconstruction off-pair entries", worst_off, 0.0, n_rep))
    return _tag(reports, "exact")


def default_lambdas(n_vertices: int) -> list:
    V = n_vertices
    ramp = np.linspace(0.2, 1.0, V)
    return [np.full(V, 0.5), np.r_[np.ones(V - 1), 0.0], 2.0 * np.eye(V)[0],
            ramp, np.eye(V)[-1]]


def laplace_reports(level: int, cfg: RunConfig, rng, lams=None, n_chains=None,
                    per_chain: int = 1, thin: int = 10) -> List[TestReport]:
    """MCMC estimates of E exp(-<lambda, beta>) on the level graph against the closed form."""
    g = build_level_graph(_params(cfg, level).with_level(level))
    n_chains = n_chains or cfg.samples
    sampler = MetropolisUSampler(g, g.pinning, n_chains=n_chains, burn_in=cfg.burn_in, thin=thin)
    u = sampler.run(rng, n_samples=per_chain)
    gamma = sample_gamma_half(rng, size=u.shape[:-1])
    beta = beta_from_u(g, u, gamma, g.pinning)
    mig = MIGParams(g)
    if lams is None:
        lams = default_lambdas(g.n_vertices)
    out = []
    for k, lam in enumerate(lams):
        lam = np.asarray(lam, dtype=float)
        vals = np.exp(-(beta @ lam))
        means = vals.mean(axis=1)  # one value per chain
        se = float(means.std(ddof=1) / np.sqrt(len(means)))
        est = float(means.mean())
        exact = laplace_closed_form(mig, lam)
        out.append(TestReport(f"laplace level {level} lambda #{k}", abs(est - exact), 3.0 * se,
                              int(vals.size), se,
                              metadata={"mc": est, "closed_form": exact, "lambda": lam.tolist(),
                                        "acceptance": sampler.acceptance.tolist()}))
    return out


def suite_laplace(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    reports = []
    for level in (0, 1):
        lams = None
        if cfg.lam:
            V = 2 ** level + 1
            lams = [np.full(V, c) for c in cfg.lam]
        reports += laplace_reports(level, cfg, rng, lams)
    return _tag(reports, "statistical")


def suite_ward(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    level = min(cfg.level, 8)
    _, _, u = grow_paths(_params(cfg), level, cfg.samples, rng)
    reports = [ward_identity_test(u[:, level], s, name=f"ward identity level {level} s={s}")
               for s in sorted(set(cfg.s) | {0.5})]
    return _tag(reports, "statistical")


def martingale_report(r, n_parents: int, N: int, rng) -> TestReport:
    """Left child's e^u over N regrowths against its parent, for n_parents cells."""
    cells = []
    for lvl in r.levels[:-1]:
        for i in range(1, 2 ** lvl.level + 1):
            cells.append((lvl.level, i))
    cells = cells[:n_parents]
    parents, kids = [], []
    for n, i in cells:
        parents.append(float(np.exp(r.levels[n].u[i - 1])))
        kids.append(regrow_children(r, n, i, N, rng)[:, 0])
    rep = paired_martingale_test(parents, np.array(kids),
                                 name=f"one-step martingale ({len(cells)} parents)")
    rep.metadata["cells"] = cells
    return rep


def suite_martingale(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    r = grow_to(init_root(_params(cfg), rng), max(cfg.level, 5))
    return _tag([martingale_report(r, 20, min(cfg.samples, 10_000), rng)], "statistical")


def expmart_settings(V: int) -> list:
    """(lambda, eta) pairs on the fine graph, split pair at indices 0 and 1.

    Every lambda is constant on the pair.  That is the class where the closed
    right side equals the conditional expectation; for uneven lambda it does
    not, and :func:`expmart_reports` checks the quadrature value instead.
    """
    zero = np.zeros(V)
    off = np.zeros(V)
    off[2:] = np.linspace(0.3, 0.9, V - 2)
    pair = np.zeros(V)
    pair[:2] = 1.0
    eta = np.zeros(V)
    eta[:2] = 0.4
    eta[2:] = np.linspace(0.1, 0.3, V - 2)
    mixed = np.r_[0.6, 0.6, np.linspace(0.2, 0.5, V - 2)]
    return [(zero, eta), (off, eta), (pair, zero), (pair * 0.5, eta), (mixed, zero)]


QUADRATURE_FIXTURE = np.array([1.0, 0.8])  # reduced beta on the level-0 graph


def expmart_reports(cfg: RunConfig, rng, N: int) -> List[TestReport]:
    # level-1 state reduced over its sibling pair
    r = grow_to(init_root(_params(cfg), rng), 1)
    g1 = build_level_graph(r.params_at(1))
    w = g1.weights[0, 1]
    beta = r.levels[1].beta
    g_red = reduced_weights(g1, [0, 1])
    reduced = SchrodingerState(g_red, np.r_[coarse_grain_pair(beta[0], beta[1], w), beta[2:]])
    split = PairSplit.at(0, w)
    reports = [verify_exponential_martingale(reduced, split, lam, eta, N, rng,
                                             name=f"exponential martingale #{k}")
               for k, (lam, eta) in enumerate(expmart_settings(g1.n_vertices))]
    # lambda split unevenly over the pair: check the sampler against quadrature
    fixture = SchrodingerState(g_red, QUADRATURE_FIXTURE)
    reports.append(verify_conditional_quadrature(
        fixture, split, np.array([0.8, 0.1, 0.3]), np.array([0.3, 0.3, 0.2]), N, rng,
        name="uneven lambda: fine-graining mean vs quadrature"))
    return reports


def suite_expmart(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    return _tag(expmart_reports(cfg, stream.generator(), cfg.samples), "statistical")


def suite_totalmass(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    N = max(cfg.samples, 10_000)
    mass = np.exp(root_law(_params(cfg)).sample(rng, size=N))
    return _tag(total_mass_test(mass, _params(cfg)), "statistical")


def suite_conservation(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    rng = stream.generator()
    r = grow_to(init_root(_params(cfg), rng, max_level=cfg.max_level), cfg.max_level)
    check_invariants(r)
    return _tag([TestReport(f"mass conservation to level {cfg.max_level}",
                            conservation_defect(r), 1e-10, metadata={"kind": "exact"})], "exact")


def suite_walk(cfg: RunConfig, stream: RngStream) -> List[TestReport]:
    """Random-walk expansion of G on a level-2 state, truncated far out."""
    rng = stream.generator()
    r = grow_to(init_root(_params(cfg), rng), 2)
    state = r.state(2)
    V = state.graph.n_vertices
    worst = 0.0
    for i in range(V):
        for j in range(V):
            approx = walk_expansion_truncated(state.graph, state.beta, i, j, 4000)
            worst = max(worst, abs(approx / state.G[i, j] - 1.0))
    return _tag([TestReport("random-walk expansion of G", worst, 1e-8)], "exact")


SUITES: Dict[str, Callable] = {
    "graining": suite_graining,
    "laplace": suite_laplace,
    "ward": suite_ward,
    "martingale": suite_martingale,
    "expmart": suite_expmart,
    "totalmass": suite_totalmass,
    "conservation": suite_conservation,
    "walk": suite_walk,
}


def run_suites(cfg: RunConfig) -> List[TestReport]:
    names = list(SUITES)
    reports = []
    for name in cfg.suites:
        # stream id fixed per suite so a suite's draws do not depend on the selection
        stream = RngStream(cfg.seed, names.index(name) + 1)
        for rep in SUITES[name](cfg, stream):
            rep.metadata.setdefault("suite", name)
            reports.append(rep)
    return reports
