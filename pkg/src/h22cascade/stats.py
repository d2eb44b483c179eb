"""Empirical cascade measure, goodness-of-fit tests and singularity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from .cascade import CascadeRealization, conservation_defect, grow_paths
from .hier_graph import HierParams, wired_boundary_weight
from .reports import TestReport

KS_LEVEL = 0.001
SIGMA = 3.0
SLOPE_DEAD_BAND = 0.02


def ks_critical(level: float = KS_LEVEL) -> float:
    """Asymptotic Kolmogorov quantile: reject when sqrt(n) D exceeds it."""
    return float(sps.kstwobign.isf(level))


def ks_statistic(samples, cdf: Callable) -> float:
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n - F
    lo = F - np.arange(0, n) / n
    return float(max(hi.max(), lo.max()))


def ks_test(samples, cdf: Callable, name: str = "ks", level: float = KS_LEVEL) -> TestReport:
    n = len(samples)
    d = ks_statistic(samples, cdf)
    return TestReport(name, d, ks_critical(level) / np.sqrt(n), n,
                      metadata={"level": level})


def two_sample_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / len(a)
    Fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.max(np.abs(Fa - Fb)))


def two_sample_test(a, b, name: str = "two-sample ks", level: float = KS_LEVEL) -> TestReport:
    n, m = len(a), len(b)
    d = two_sample_statistic(a, b)
    thr = ks_critical(level) * np.sqrt((n + m) / (n * m))
    return TestReport(name, d, thr, n + m, metadata={"n": n, "m": m, "level": level})


def mean_test(samples, target: float, name: str = "mean") -> TestReport:
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    se = float(x.std(ddof=1) / np.sqrt(len(x)))
    m = float(x.mean())
    return TestReport(name, abs(m - target), SIGMA * se, len(x), se,
                      metadata={"mean": m, "target": target})


def paired_martingale_test(parent_values, child_samples, name: str = "martingale") -> TestReport:
    """Each parent value against the mean of its own regrown children.

    ``child_samples`` has shape (parents, N).  The statistic is the worst
    standardized gap; it passes when every gap is within 3 standard errors.
    """
    parent = np.asarray(parent_values, dtype=float)
    kids = np.atleast_2d(np.asarray(child_samples, dtype=float))
    if parent.size == 0 or kids.size == 0:
        raise ValueError("empty input")
    means = kids.mean(axis=1)
    if kids.shape[1] > 1:
        se = kids.std(axis=1, ddof=1) / np.sqrt(kids.shape[1])
    else:
        se = np.zeros(len(parent))
    gaps = np.abs(means - parent)
    z = np.where(se > 0, gaps / np.where(se > 0, se, 1.0), np.where(gaps > 0, np.inf, 0.0))
    return TestReport(name, float(z.max()), SIGMA, int(kids.size),
                      float(se.max()) if se.size else 0.0,
                      metadata={"parents": parent.tolist(), "child_means": means.tolist()})


@dataclass
class EmpiricalMeasure:
    depth: int
    density: np.ndarray

    def __post_init__(self):
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != (2 ** self.depth,):
            raise ValueError("density must have 2**depth cells")
        if np.any(self.density <= 0):
            raise ValueError("density must be positive")

    @property
    def cell_mass(self) -> np.ndarray:
        return self.density * 2.0 ** -self.depth

    @property
    def left_endpoints(self) -> np.ndarray:
        return np.arange(2 ** self.depth) * 2.0 ** -self.depth

    def total_mass(self) -> float:
        return float(self.cell_mass.sum())

    def mass(self, a: float, b: float) -> float:
        """Mass of [a, b); the endpoints are rounded to the cell grid."""
        n = 2 ** self.depth
        i, j = int(round(a * n)), int(round(b * n))
        return float(self.cell_mass[i:j].sum())


def measure_density(r: CascadeRealization, n: int) -> EmpiricalMeasure:
    if n > r.depth:
        raise ValueError(f"depth {n} exceeds grown depth {r.depth}")
    return EmpiricalMeasure(n, np.exp(r.levels[n].u))


def ig_shape(params: HierParams) -> float:
    """Shape of the inverse Gaussian total-mass law (the mean is 1)."""
    return wired_boundary_weight(1, params.with_level(0))


def ig_cdf(params: HierParams) -> Callable:
    """CDF of IG(mean 1, shape W/(2(rho-1))) in the mean/shape convention."""
    lam = ig_shape(params)
    return sps.invgauss(mu=1.0 / lam, scale=lam).cdf


def total_mass_test(samples, params: HierParams) -> list:
    x = np.asarray(samples, dtype=float)
    if len(x) < 10_000:
        raise ValueError("total_mass_test needs at least 10^4 samples")
    ks = ks_test(x, ig_cdf(params), name="total mass ~ IG")
    ks.metadata["shape"] = ig_shape(params)
    return [ks, mean_test(x, 1.0, name="total mass mean = 1")]


def negative_moment_stability(samples, p: float = -1.0):
    """Empirical E[X^p] on the first half and on the whole sample."""
    x = np.asarray(samples, dtype=float)
    half = x[: len(x) // 2]
    return float(np.mean(half ** p)), float(np.mean(x ** p))


def ward_identity_test(u_samples, s: float, name: Optional[str] = None) -> TestReport:
    """E[e^{s u}] against E[e^{(1-s) u}] on the same draws.

    The standard error is that of the paired difference, which accounts for
    the two estimates sharing samples.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    u = np.asarray(u_samples, dtype=float)
    diff = np.exp(s * u) - np.exp((1.0 - s) * u)
    se = float(diff.std(ddof=1) / np.sqrt(len(u))) if len(u) > 1 else 0.0
    stat = float(abs(diff.mean()))
    return TestReport(name or f"ward identity s={s}", stat, SIGMA * se, len(u), se,
                      metadata={"lhs": float(np.mean(np.exp(s * u))),
                                "rhs": float(np.mean(np.exp((1.0 - s) * u)))})


def fractional_moment_curve(params: HierParams, s: float, n_max: int, N: int, rng):
    """[(n, mean of e^{s u^(n)_1}, SE, N)] along the leftmost cell of N cascades."""
    if not 0 < s < 0.5:
        raise ValueError("s must lie in (0, 1/2)")
    _, _, u = grow_paths(params, n_max, N, rng, x=0.0)
    vals = np.exp(s * u)
    means = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(N)
    return [(n, float(means[n]), float(se[n]), N) for n in range(n_max + 1)]


def decay_test(curve, name: str = "fractional moment decay") -> TestReport:
    """Each level at most the previous one plus 3 combined standard errors."""
    if len(curve) < 2:
        raise ValueError("need at least two levels")
    worst = -np.inf
    for a, b in zip(curve[:-1], curve[1:]):
        worst = max(worst, (b[1] - a[1]) / np.hypot(a[2], b[2]))
    n = int(curve[0][3]) if len(curve[0]) > 3 else 0
    return TestReport(name, float(worst), SIGMA, n_samples=n,
                      metadata={"curve": [list(c) for c in curve]})


@dataclass
class SingularitySummary:
    depths: list
    quantiles: np.ndarray  # rows: depth, columns: QUANTILES
    low_fraction: list
    slope: float
    label: str
    conserved: bool
    floor: float = 1e-3
    extra: dict = field(default_factory=dict)


QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def singularity_diagnostic(r: CascadeRealization, floor: float = 1e-3,
                           dead_band: float = SLOPE_DEAD_BAND,
                           min_depth: int = 12) -> SingularitySummary:
    """Per-level spread of ln phi over cells and the drift of its median.

    A clearly negative drift of the median is what mass concentrating on a
    Lebesgue-null set looks like; this is a numerical probe only.
    """
    if r.depth < min_depth:
        raise ValueError(f"need depth >= {min_depth}, have {r.depth}")
    depths = list(range(r.depth + 1))
    qs, low = [], []
    for lvl in r.levels:
        qs.append(np.quantile(lvl.u, QUANTILES))
        low.append(float(np.mean(np.exp(lvl.u) < floor)))
    qs = np.array(qs)
    slope = float(np.polyfit(depths, qs[:, QUANTILES.index(0.5)], 1)[0])
    if slope < -dead_band:
        label = "singular-consistent"
    elif slope > dead_band:
        label = "density-consistent"
    else:
        label = "inconclusive"
    return SingularitySummary(depths, qs, low, slope, label,
                              conserved=conservation_defect(r) < 1e-10, floor=floor)
