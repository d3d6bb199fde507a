"""Comparison methods: single-phase mirror descent and Lasso by coordinate descent."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import PRELIMINARY, RunTrace, risk_metrics
from .prox import ProxSetup
from .smd import StageConfig, run_stage


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    max_iters: int = 30000
    tol: float = 1e-8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def lambda_theory(sigma: float, n: int, N: int) -> float:
    """Penalty level ``2 sigma sqrt(2 ln n / N)``."""
    if N < 1 or n < 2:
        raise ValueError("need N >= 1 and n >= 2")
    return 2.0 * sigma * math.sqrt(2.0 * math.log(n) / N)


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_objective(phi, eta, x, lam: float) -> float:
    r = eta - phi @ x
    return 0.5 * float(r @ r) / phi.shape[0] + lam * float(np.sum(np.abs(x)))


def lasso_cd(phi, eta, cfg: LassoConfig, x_init=None, history: Optional[list] = None) -> np.ndarray:
    """Cyclic coordinate descent on ``(1/2N)|eta - phi x|^2 + lam |x|_1``.

    Sweeps alternate between the nonzero coordinates and all columns; stops
    when a sweep over all columns changes no coordinate by more than
    ``tol * max(1, |x|_inf)`` or after ``max_iters`` sweeps in total. Coordinates with
    zero empirical variance are left unchanged. If ``history`` is a list, the
    objective after each sweep is appended to it.
    """
    phi = np.asarray(phi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    N, n = phi.shape
    if N < 1:
        raise ValueError("need at least one observation")
    x = np.zeros(n) if x_init is None else np.array(x_init, dtype=float)
    # column-major copy makes column access contiguous
    A = np.asfortranarray(phi)
    col_sq = np.einsum("ij,ij->j", A, A) / N
    r = eta - A @ x
    usable = np.flatnonzero(col_sq > 0).astype(np.int64)
    sweeps = 0
    full = True
    # active-set strategy: sweep the nonzero coordinates until they settle, then
    # confirm with a sweep over all usable columns
    while sweeps < cfg.max_iters:
        idx = usable if full else usable[x[usable] != 0.0]
        max_delta = _kernels.cd_sweep(A, r, x, col_sq, idx, cfg.lam)
        sweeps += 1
        if history is not None:
            history.append(lasso_objective(A, eta, x, cfg.lam))
        converged = max_delta <= cfg.tol * max(1.0, float(np.max(np.abs(x))) if n else 1.0)
        if converged and full:
            break
        full = converged
    return x


def vanilla_smd(oracle, setup: ProxSetup, budget: int, rng, beta: float = 1.0,
                rule: str = "perSample", checkpoints: Optional[Sequence[int]] = None,
                structure=None, x0=None):
    """Single stage of mirror descent over the whole budget; returns ``(average, trace)``.

    The trace holds the error metrics of the running average at each checkpoint
    and at the end of the budget.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    x0 = np.zeros(setup.shape) if x0 is None else np.asarray(x0, dtype=float)
    trace = RunTrace()
    x_star = getattr(oracle, "x_star", None)

    def record(step, avg):
        if x_star is not None:
            trace.add(step, 1, PRELIMINARY, risk_metrics(avg, x_star, oracle, structure))

    if x_star is not None:
        trace.add(0, 0, PRELIMINARY, risk_metrics(x0, x_star, oracle, structure))
    marks = sorted({int(c) for c in (() if checkpoints is None else checkpoints)} | {budget})
    res = run_stage(oracle, setup, StageConfig(budget, x0, beta, rule), rng,
                    checkpoints=marks, callback=record)
    return res.average, trace
