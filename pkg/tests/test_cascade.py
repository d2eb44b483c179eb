import numpy as np
import pytest

from h22cascade.cascade import (DyadicPoint, InvariantError, check_invariants,
                                coarse_grain_defect, conservation_defect, grow_paths, grow_to,
                                init_root, phi_path, psi_field, regrow_children, root_law,
                                wbar_at, wired_coupling_batch)
from h22cascade.hier_graph import HierParams
from h22cascade.stats import ig_cdf, ks_test, mean_test, paired_martingale_test, two_sample_test


def test_wbar_schedule():
    assert wbar_at(HierParams(1.0, 2.0, 0), 7) == 1.0
    assert wbar_at(HierParams(1.0, 4.0, 0), 3) == 8.0
    r = grow_to(init_root(HierParams(1.0, 4.0, 0), np.random.default_rng(0)), 3)
    assert [lvl.wbar for lvl in r.levels] == [1.0, 2.0, 4.0, 8.0]


@pytest.mark.parametrize("rho", [2.0, 1.5, 3.0])
def test_conservation_and_shapes(rho):
    r = grow_to(init_root(HierParams(0.7, rho, 0), np.random.default_rng(1)), 12)
    check_invariants(r)
    assert conservation_defect(r) < 1e-12
    assert coarse_grain_defect(r) < 1e-12
    for lvl in r.levels:
        assert len(lvl.u) == 2 ** lvl.level and len(lvl.beta) == 2 ** lvl.level + 1
        assert np.mean(lvl.density) == pytest.approx(r.total_mass(), rel=1e-12)
    assert len({lvl.beta[-1] for lvl in r.levels}) == 1


def test_validation_mode_matches_full_inversion():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(2)), 6, validate=True)
    assert len(r.validation_log) == 6
    assert max(e["u_rel_dev"] for e in r.validation_log) < 1e-8
    assert max(e["gamma_rel_dev"] for e in r.validation_log) < 1e-8


def test_max_level_guard():
    r = init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(3), max_level=3)
    grow_to(r, 3)
    with pytest.raises(OverflowError):
        grow_to(r, 4)


def test_invariant_violation_detected():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(4)), 4)
    r.levels[3].u[0] += 1e-6
    with pytest.raises(InvariantError):
        check_invariants(r)


def test_root_law_and_gamma_independence():
    p = HierParams(1.0, 2.0, 0)
    gamma, _, u = grow_paths(p, 0, 100_000, np.random.default_rng(5))
    mass = np.exp(u[:, 0])
    assert ks_test(mass, ig_cdf(p)).passed
    assert mean_test(mass, 1.0).passed
    assert abs(np.corrcoef(gamma, mass)[0, 1]) < 4 / np.sqrt(len(gamma))


def test_grow_paths_matches_full_cascade():
    p = HierParams(1.0, 2.0, 0)
    rng = np.random.default_rng(6)
    _, _, u = grow_paths(p, 3, 5000, rng, x=0.6)
    full = np.array([np.log(phi_path(grow_to(init_root(p, rng), 3), 0.6)[3])
                     for _ in range(5000)])
    assert two_sample_test(u[:, 3], full).passed


def test_phi_path():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(7)), 5)
    path = phi_path(r, DyadicPoint(0.75))
    assert len(path) == 6
    assert path[0] == r.total_mass()
    assert path[2] == pytest.approx(np.exp(r.levels[2].u[3]))
    with pytest.raises(ValueError):
        DyadicPoint(1.0)


def test_one_step_martingale():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(8)), 3)
    rng = np.random.default_rng(9)
    parents, kids = [], []
    for n, i in [(0, 1), (1, 2), (2, 3), (3, 1)]:
        parents.append(np.exp(r.levels[n].u[i - 1]))
        eu = regrow_children(r, n, i, 20_000, rng)
        np.testing.assert_allclose(eu.mean(axis=1), parents[-1], rtol=1e-12)
        kids.append(eu[:, 1])
    assert paired_martingale_test(parents, np.array(kids)).passed


def test_wired_coupling_mean_one():
    p = HierParams(1.0, 2.0, 0)
    beta, u = wired_coupling_batch(1, p, 0.5, np.random.default_rng(10), 20_000, sweeps=300)
    assert beta.shape == (20_000, 3) and u.shape == (20_000, 3)
    assert np.all(u[:, -1] == 0.0) and np.all(beta > 0)
    assert mean_test(np.exp(u[:, 0]), 1.0).passed


def test_psi_field():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(11)), 2)
    psi = psi_field(r.state(2))
    np.testing.assert_allclose(psi, np.exp(r.levels[2].u), rtol=1e-10)
    padded = psi_field(r.state(2), size=8)
    assert padded.shape == (8,) and np.all(padded[4:] == 1.0)


def test_truncated_copy():
    r = grow_to(init_root(HierParams(1.0, 2.0, 0), np.random.default_rng(12)), 4)
    t = r.truncated(2, rng=0)
    assert t.depth == 2 and r.depth == 4
    with pytest.raises(ValueError):
        t.level(3)


def test_root_law_cached():
    p = HierParams(1.0, 2.0, 0)
    assert root_law(p) is root_law(p)
