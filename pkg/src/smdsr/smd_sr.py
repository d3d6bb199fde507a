"""Multistage mirror descent for sparse recovery.

Preliminary stages restart mirror descent from the sparsified average of the
previous stage with a fixed stepsize and stage length; asymptotic stages
double the stepsize parameter and the stage length (theoretical mode) or keep
the length and grow a minibatch (practical mode).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ASYMPTOTIC, PRELIMINARY, AlgoConstants, RunTrace, as_generator, risk_metrics
from .prox import ProxSetup
from .smd import StageConfig, run_stage
from .sparsify import SparsityStructure, sparsify_point

KBAR_INF = math.inf
# floor applied to zero stage movements before they enter the log-based CUSUM
_PROXY_FLOOR = 1e-300


@dataclass(frozen=True)
class CusumConfig:
    threshold: float = 2.0
    drift_guard: float = 0.1
    statistic: str = "logErrorProxy"

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("CUSUM threshold must be positive")
        if self.drift_guard < 0:
            raise ValueError("drift guard must be nonnegative")
        if self.statistic != "logErrorProxy":
            raise ValueError(f"unknown CUSUM statistic {self.statistic!r}")


@dataclass(frozen=True)
class PracticalConfig:
    beta0: float = 1.0
    m0_override: Optional[int] = None
    min_prelim_stages: int = 4
    cusum: CusumConfig = field(default_factory=CusumConfig)
    minibatch_growth: float = 2.0
    nu: Optional[float] = None


@dataclass(frozen=True, eq=False)
class SmdSrConfig:
    total_budget: int
    constants: Optional[AlgoConstants] = None
    mode: str = "theoretical"
    practical: PracticalConfig = field(default_factory=PracticalConfig)
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.total_budget < 1:
            raise ValueError("total budget must be >= 1")
        if self.mode not in ("theoretical", "practical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "theoretical" and self.constants is None:
            raise ValueError("theoretical mode needs AlgoConstants")


def preliminary_schedule(c: AlgoConstants) -> tuple:
    """``(beta0, m0, Kbar)``; ``Kbar`` is ``inf`` when ``sigma_star_sq == 0``."""
    beta0 = 2.0 * c.varkappa * c.nu
    m0 = int(math.ceil(16.0 * c.s_bar * (8.0 * c.theta * c.varkappa + 1.0) * c.nu / c.lowkap))
    if c.sigma_star_sq == 0:
        return beta0, m0, KBAR_INF
    arg = c.R ** 2 * c.lowkap * c.nu * c.varkappa / (32.0 * c.sigma_star_sq * c.s_bar * c.varkappa_prime)
    kbar = int(math.ceil(math.log2(arg))) if arg > 1.0 else 0
    return beta0, m0, kbar


def asymptotic_schedule(c: AlgoConstants, k: int) -> tuple:
    """``(beta_k, m_k)`` for asymptotic stage ``k >= 1``."""
    if not 1 <= k <= 60:
        raise ValueError("asymptotic stage index must be in [1, 60]")
    beta = 2.0 ** k * c.nu * c.varkappa
    m = int(math.ceil(512.0 * c.s_bar * c.theta * c.nu * c.varkappa / c.lowkap * 2.0 ** k))
    return beta, m


def asymptotic_stage_count(c: AlgoConstants, M: float) -> int:
    """Largest ``K'`` with ``m_1 + ... + m_K' <= M``."""
    total, k = 0, 0
    while k < 60:
        _, m = asymptotic_schedule(c, k + 1)
        if total + m > M:
            break
        total += m
        k += 1
    return k


def practical_m0(s: int, n: int, nu: float = 1.0) -> int:
    return int(math.ceil(0.5 * s * nu * (math.log(n) + 1.0)))


def default_nu(oracle) -> float:
    """Scale of the default stage length: ``oracle.practical_nu`` if defined, else the
    largest regressor variance."""
    nu = getattr(oracle, "practical_nu", None)
    if nu is not None:
        return float(nu)
    sig = getattr(oracle, "sigma_diag", None)
    return float(np.max(sig)) if sig is not None else 1.0


def scaled_m0(s: int, n: int, cn: float, budget: Optional[int] = None, min_stages: int = 4,
              nu: float = 1.0) -> int:
    """Practical stage length multiplied by ``2 cn``, the gain between dual and primal
    movement of the normalized potential; capped so ``min_stages`` stages fit in ``budget``."""
    m0 = int(math.ceil(practical_m0(s, n, nu) * 2.0 * cn))
    if budget is not None:
        m0 = min(m0, max(budget // max(min_stages, 1), 1))
    return max(m0, 1)


def cusum_statistic(proxies, cfg: CusumConfig) -> float:
    p = np.asarray(proxies, dtype=float)
    if np.any(~(p > 0)):
        raise ValueError("CUSUM proxies must be positive")
    S = 0.0
    lp = np.log(p)
    for k in range(1, p.size):
        d = lp[k] - lp[k - 1] + 0.5 * math.log(2.0)
        S = max(0.0, S + d - cfg.drift_guard)
    return S


def cusum_switch(proxies, cfg: CusumConfig = CusumConfig()) -> bool:
    """True once the stage-movement decay has flattened relative to halving."""
    if len(proxies) < 2:
        if len(proxies) == 1 and not proxies[0] > 0:
            raise ValueError("CUSUM proxies must be positive")
        return False
    return cusum_statistic(proxies, cfg) > cfg.threshold


def _metrics(oracle, structure, y) -> dict:
    x_star = getattr(oracle, "x_star", None)
    if x_star is None:
        return {}
    return risk_metrics(y, x_star, oracle, structure)


def run_smd_sr(oracle, setup: ProxSetup, structure: SparsityStructure, cfg: SmdSrConfig, rng):
    """Run the multistage method; returns ``(x_hat, y_hat, trace)``.

    ``x_hat`` is the last stage average before sparsification and ``y_hat``
    its sparsification. The trace holds one record per completed stage with
    the error metrics of the stage output ``y_k`` (plus a record for ``x0``).
    """
    gen = as_generator(rng)
    x0 = np.zeros(setup.shape) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)
    trace = RunTrace()
    trace.add(0, 0, PRELIMINARY, _metrics(oracle, structure, x0))
    if cfg.mode == "theoretical":
        return _run_theoretical(oracle, setup, structure, cfg, gen, x0, trace)
    return _run_practical(oracle, setup, structure, cfg, gen, x0, trace)


def _run_theoretical(oracle, setup, structure, cfg, gen, x0, trace):
    c = cfg.constants
    N = cfg.total_budget
    beta0, m0, kbar = preliminary_schedule(c)
    if N < m0:
        raise ValueError(f"budget {N} is below one preliminary stage (m0 = {m0})")
    K = N // m0 if kbar == KBAR_INF else min(N // m0, kbar)
    y = x0
    x_hat = x0
    used = 0
    stage = 0
    for _ in range(K):
        res = run_stage(oracle, setup, StageConfig(m0, y, beta0), gen)
        x_hat = res.average
        y = sparsify_point(structure, x_hat)
        used += res.oracle_calls
        stage += 1
        trace.add(used, stage, PRELIMINARY, _metrics(oracle, structure, y))
    if kbar == KBAR_INF or K < kbar:
        return x_hat, y, trace
    M = N - m0 * kbar
    kp = asymptotic_stage_count(c, M)
    for k in range(1, kp + 1):
        beta, m = asymptotic_schedule(c, k)
        res = run_stage(oracle, setup, StageConfig(m, y, beta), gen)
        x_hat = res.average
        y = sparsify_point(structure, x_hat)
        used += res.oracle_calls
        stage += 1
        trace.add(used, stage, ASYMPTOTIC, _metrics(oracle, structure, y))
    return x_hat, y, trace


def _run_practical(oracle, setup, structure, cfg, gen, x0, trace):
    pc = cfg.practical
    N = cfg.total_budget
    n = int(np.prod(setup.shape))
    if pc.m0_override is not None:
        m0 = int(pc.m0_override)
    else:
        nu = default_nu(oracle) if pc.nu is None else pc.nu
        m0 = practical_m0(structure.s, n, nu)
    if m0 < 1:
        raise ValueError("m0 must be >= 1")
    if N < m0:
        raise ValueError(f"budget {N} is below one preliminary stage (m0 = {m0})")
    y = x0
    x_hat = x0
    used = 0
    stage = 0
    proxies = []
    while N - used >= m0:
        res = run_stage(oracle, setup, StageConfig(m0, y, pc.beta0, "perSample"), gen)
        x_hat = res.average
        y_new = sparsify_point(structure, x_hat)
        proxies.append(max(float(np.linalg.norm(y_new - y)), _PROXY_FLOOR))
        y = y_new
        used += res.oracle_calls
        stage += 1
        trace.add(used, stage, PRELIMINARY, _metrics(oracle, structure, y))
        if stage >= pc.min_prelim_stages and cusum_switch(proxies, pc.cusum):
            break
    k = 0
    while True:
        k += 1
        batch = int(math.ceil(pc.minibatch_growth ** k))
        remaining = N - used
        if m0 * batch > remaining:
            batch = remaining // m0
            if batch < 1:
                break
        res = run_stage(oracle, setup, StageConfig(m0, y, pc.beta0, "perSample", batch), gen)
        x_hat = res.average
        y = sparsify_point(structure, x_hat)
        used += res.oracle_calls
        stage += 1
        trace.add(used, stage, ASYMPTOTIC, _metrics(oracle, structure, y))
    return x_hat, y, trace
