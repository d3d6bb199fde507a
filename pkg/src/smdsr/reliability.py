"""Confidence amplification over independent replicas.

Selectors: geometric median (Weiszfeld), medoid, and the distance order
statistic rule. Also the median-of-groups estimator of an objective difference
along a segment and the aggregation rule built on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import NumericError, RngStream, as_generator, split_sample
from .smd_sr import SmdSrConfig, default_nu, preliminary_schedule, practical_m0, run_smd_sr
from .sparsify import sparsify_point

ALPHA = {"geoMedian": 10.0, "medoid": 58.46, "orderStat": 12.05}


def _stack(points) -> np.ndarray:
    pts = np.asarray([np.asarray(p, dtype=float) for p in points])
    if pts.ndim < 2 or pts.shape[0] < 1:
        raise ValueError("need at least one point")
    return pts


def pairwise_distances(points) -> np.ndarray:
    pts = _stack(points)
    flat = pts.reshape(pts.shape[0], -1)
    sq = np.sum(flat * flat, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T
    d2 = np.maximum(d2, 0.0)
    np.fill_diagonal(d2, 0.0)
    # recompute small entries directly to avoid cancellation
    small = d2 < 1e-8 * (sq[:, None] + sq[None, :] + 1e-300)
    if np.any(small):
        ii, jj = np.nonzero(small)
        d2[ii, jj] = np.sum((flat[ii] - flat[jj]) ** 2, axis=1)
    return np.sqrt(d2)


def replicas_required(selector: str, epsilon: float) -> int:
    if selector not in ALPHA:
        raise ValueError(f"unknown selector {selector!r}")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    return int(math.ceil(ALPHA[selector] * math.log(1.0 / epsilon)))


def sum_distances(points, x) -> float:
    pts = _stack(points)
    flat = pts.reshape(pts.shape[0], -1)
    return float(np.sum(np.linalg.norm(flat - np.ravel(x), axis=1)))


def geometric_median(points, tol: float = 1e-10, max_iter: int = 10000) -> np.ndarray:
    """Minimizer of the summed Euclidean distances (Weiszfeld, Vardi-Zhang step at data points)."""
    pts = _stack(points)
    shape = pts.shape[1:]
    flat = pts.reshape(pts.shape[0], -1)
    if flat.shape[0] == 1:
        return pts[0].copy()
    scale = max(float(np.max(np.abs(flat))), 1.0)
    y = flat.mean(axis=0)
    f_prev = np.inf
    for it in range(max_iter):
        diff = flat - y
        dist = np.linalg.norm(diff, axis=1)
        at = dist < 1e-12 * scale
        wts = np.zeros_like(dist)
        wts[~at] = 1.0 / dist[~at]
        if not np.any(~at):
            return y.reshape(shape)
        t = (wts[:, None] * flat).sum(axis=0) / wts.sum()
        if np.any(at):
            # y coincides with a data point: move only if the pull of the others exceeds 1
            r = np.linalg.norm((wts[:, None] * diff).sum(axis=0))
            eta = float(np.sum(at))
            if r <= eta:
                return y.reshape(shape)
            y_new = (1.0 - eta / r) * t + (eta / r) * y
        else:
            y_new = t
        step = np.linalg.norm(y_new - y)
        y = y_new
        f = float(np.sum(np.linalg.norm(flat - y, axis=1)))
        if step <= tol * scale or abs(f_prev - f) <= tol * max(f, 1e-300):
            break
        f_prev = f
    else:
        raise NumericError("Weiszfeld iteration did not converge", residual=float(step))
    # never worse than the best input point
    obj = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=2).sum(axis=1) if flat.shape[0] <= 512 else None
    if obj is not None:
        k = int(np.argmin(obj))
        if obj[k] < float(np.sum(np.linalg.norm(flat - y, axis=1))):
            y = flat[k].copy()
    return y.reshape(shape)


def medoid_select(points) -> tuple:
    """Input point with the smallest summed distance to the others; ties to the lowest index."""
    pts = _stack(points)
    obj = pairwise_distances(pts).sum(axis=1)
    k = int(np.argmin(obj))
    return k, pts[k].copy()


def order_index(L: int) -> int:
    """1-based order ``floor(L/2) + 1``, capped at the ``L - 1`` available distances."""
    return min(L // 2 + 1, max(L - 1, 1))


def order_stat_select(points) -> tuple:
    """Point minimizing its ``order_index(L)``-th smallest distance to the other points."""
    pts = _stack(points)
    L = pts.shape[0]
    if L < 2:
        raise ValueError("order statistic selection needs at least two points")
    D = pairwise_distances(pts)
    k = order_index(L)
    radii = np.empty(L)
    for i in range(L):
        others = np.sort(np.delete(D[i], i))
        radii[i] = others[k - 1]
    i_hat = int(np.argmin(radii))
    return i_hat, pts[i_hat].copy(), float(radii[i_hat])


def reliable_run(oracle, setup, structure, cfg: SmdSrConfig, epsilon: float, selector: str, rng,
                 L: Optional[int] = None):
    """Split the budget into ``L`` replicas, run each on its own stream and select.

    Returns ``(x_bar, y_bar, info)`` where ``info`` holds the replicas, their
    traces and the selected index.
    """
    L = replicas_required(selector, epsilon) if L is None else int(L)
    if cfg.mode == "theoretical":
        m0 = preliminary_schedule(cfg.constants)[1]
    elif cfg.practical.m0_override is not None:
        m0 = cfg.practical.m0_override
    else:
        nu = default_nu(oracle) if cfg.practical.nu is None else cfg.practical.nu
        m0 = practical_m0(structure.s, int(np.prod(setup.shape)), nu)
    if cfg.total_budget < L * m0:
        raise ValueError(f"budget {cfg.total_budget} below L*m0 = {L}*{m0}")
    budgets = split_sample(cfg.total_budget, L)
    base = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
    outs = []
    for ell, M in enumerate(budgets):
        sub = SmdSrConfig(M, cfg.constants, cfg.mode, cfg.practical, cfg.x0)
        outs.append(run_smd_sr(oracle, setup, structure, sub, base.child(ell)))
    xs = [o[0] for o in outs]
    if selector == "geoMedian":
        idx = None
        x_bar = geometric_median(xs)
    elif selector == "medoid":
        idx, x_bar = medoid_select(xs)
    else:
        idx, x_bar, _ = order_stat_select(xs)
    info = {"L": L, "replicas": xs, "traces": [o[2] for o in outs], "index": idx}
    return x_bar, sparsify_point(structure, x_bar), info


def segment_nodes(m: int) -> np.ndarray:
    return (2.0 * np.arange(1, m + 1) - 1.0) / (2.0 * m)


def robust_gap_estimate(oracle, xi, xj, m: int, J: int, rng, return_groups: bool = False):
    """Median over ``J`` groups of midpoint-rule averages of directional stochastic
    derivatives along ``xj -> xi``; estimates ``g(xi) - g(xj)``.

    Each of the ``m * J`` oracle calls uses a fresh sample. Oracles exposing
    ``row_gradients`` are evaluated one group at a time.
    """
    if m < 1 or J < 1:
        raise ValueError("m and J must be >= 1")
    gen = as_generator(rng)
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    d = xi - xj
    t = segment_nodes(m)
    groups = np.empty(J)
    row_gradients = getattr(oracle, "row_gradients", None)
    pts = xj[None] + t.reshape((m,) + (1,) * d.ndim) * d[None]
    for j in range(J):
        phi, eta = oracle.sample(gen, m)
        if row_gradients is not None:
            groups[j] = float(np.sum(row_gradients(pts, phi, eta) * d)) / m
            continue
        vals = 0.0
        for k in range(m):
            g = oracle.gradient(pts[k], phi[k:k + 1], eta[k:k + 1])
            vals += float(np.sum(g * d))
        groups[j] = vals / m
    est = float(np.median(groups))
    return (est, groups) if return_groups else est


def prop5_radius(mu: float, varsigma: float, m: int, u1_gap: float, u0_gap: float) -> float:
    """Deviation bound ``2 sqrt(mu/m) (sqrt(u(1)-u*) + sqrt(u(0)-u*)) + 2 varsigma / sqrt(m)``."""
    return 2.0 * math.sqrt(mu / m) * (math.sqrt(max(u1_gap, 0.0)) + math.sqrt(max(u0_gap, 0.0))) \
        + 2.0 * varsigma / math.sqrt(m)


def linear_segment_constants(model, xi, xj) -> tuple:
    """``(mu, varsigma, u1 - u*, u0 - u*)`` of the segment problem for a Gaussian linear model."""
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    sig = model.sigma_diag
    d = (xi - xj).ravel()
    e0 = (xj - model.x_star).ravel()
    dd = float(np.dot(sig, d * d))
    u = lambda t: 0.5 * float(np.dot(sig, (e0 + t * d) ** 2))
    if dd > 0:
        t_star = min(max(-float(np.dot(sig, d * e0)) / dd, 0.0), 1.0)
    else:
        t_star = 0.0
    u_star = u(t_star)
    mu = 4.0 * dd
    varsigma = math.sqrt(dd * (4.0 * u_star + model.sigma ** 2))
    return mu, varsigma, u(1.0) - u_star, u(0.0) - u_star


@dataclass(frozen=True)
class AggregationConfig:
    """Parameters of the aggregation rule; ``L_prime`` groups of ``m`` samples."""

    epsilon: float
    L_prime: int
    m: int
    L2: float
    chi: float
    chi_prime: float
    sigma_star: float
    tau_M: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 0.5:
            raise ValueError("epsilon must be in (0, 1/2]")
        if self.L_prime < min_groups(self.epsilon):
            raise ValueError(f"L_prime must be >= {min_groups(self.epsilon)}")
        if self.m < 1:
            raise ValueError("m must be >= 1")


def min_groups(epsilon: float) -> int:
    return int(math.ceil(7.0 * math.log(2.0 / epsilon)))


def tau_m(c, M: int) -> float:
    """Expected-gap bound of one replica with unit absolute constants."""
    a = c.lowkap * c.R ** 2 / c.s_bar * math.exp(-M * c.lowkap / (c.theta * c.varkappa * c.s_bar * c.nu))
    b = c.sigma_star_sq * c.s_bar * c.varkappa_prime * c.theta / (c.lowkap * M)
    return math.sqrt(a + b)


def gamma_fn(r: float, cfg: AggregationConfig) -> float:
    a = 4.0 * r * math.sqrt(cfg.chi * cfg.L2 / cfg.m) + cfg.tau_M
    return math.sqrt(a * a + 4.0 * r * cfg.sigma_star * math.sqrt(cfg.chi_prime / cfg.m))


def rho_threshold(r: float, cfg: AggregationConfig) -> float:
    return (2.0 * r * math.sqrt(cfg.L2 * cfg.chi / cfg.m) * (gamma_fn(r, cfg) + cfg.tau_M)
            + 2.0 * r * cfg.sigma_star * math.sqrt(cfg.chi_prime / cfg.m))


def closest_set(points, center_index: int) -> list:
    """Indices of the ``floor(L/2) + 1`` points closest to the selected one (itself included)."""
    pts = _stack(points)
    L = pts.shape[0]
    D = pairwise_distances(pts)
    order = np.argsort(D[center_index], kind="stable")
    k = min(L // 2 + 1, L)
    return sorted(int(i) for i in order[:k])


def aggregate_select(points: Sequence, oracle, cfg: AggregationConfig, rng) -> tuple:
    """Pick an admissible replica by pairwise robust gap comparisons.

    Returns ``(index, point, info)``; falls back to replica 0 when no replica
    is admissible.
    """
    pts = _stack(points)
    L = pts.shape[0]
    gen = as_generator(rng)
    if L == 1:
        return 0, pts[0].copy(), {"I": [0], "v": {0: 0.0}}
    i_hat, _, _ = order_stat_select(pts)
    I = closest_set(pts, i_hat)
    D = pairwise_distances(pts)
    est = {}
    for i in I:
        for j in I:
            if i != j and (j, i) not in est:
                est[(j, i)] = robust_gap_estimate(oracle, pts[i], pts[j], cfg.m, cfg.L_prime, gen)
    v = {}
    for i in I:
        vals = [est[(j, i)] - rho_threshold(D[i, j], cfg) for j in I if j != i]
        v[i] = max(vals) if vals else 0.0
    admissible = [i for i in I if v[i] <= 0.0]
    k = admissible[0] if admissible else 0
    return k, pts[k].copy(), {"I": I, "v": v, "i_hat": i_hat}


def s3_constants(model) -> dict:
    """``L2``, ``chi``, ``chi_prime`` and ``sigma_star`` of the gradient-noise bound for a GLR
    model with Gaussian-type regressors, taking ``sigma_star = sigma`` so that ``chi_prime``
    is the top of the covariance spectrum.
    """
    sig = np.asarray(model.sigma_diag, dtype=float)
    act = model.activation
    ul, ol = (1.0, 1.0) if act.kind == "linear" else (act.ul, act.ol)
    s1 = float(np.max(sig))
    # fourth-moment bound E(z'phi)^2 (phi'd)^2 <= 3 |z|_S^2 |d|_S^2 for Gaussians
    chi = 6.0 * ol / ul * model.regressor.kurtosis_ratio
    return {"L2": ol * s1, "chi": chi, "chi_prime": s1, "sigma_star": float(model.sigma)}
