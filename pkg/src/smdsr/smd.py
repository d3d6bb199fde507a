"""One stage of stochastic mirror descent with weighted averaging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .core import NumericError, as_generator
from .prox import ProxSetup, prox_map

# target number of float64 regressor entries sampled per chunk (about 16 MB)
CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True, eq=False)
class StageConfig:
    """Stage parameters.

    ``rule`` is ``constant`` (stepsize parameter ``beta``) or ``perSample``
    (``beta_i = beta * ||phi_i||_*^2``, averaged over the minibatch).
    """

    steps: int
    x0: np.ndarray
    beta: float
    rule: str = "constant"
    minibatch: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.rule not in ("constant", "perSample"):
            raise ValueError(f"unknown stepsize rule {self.rule!r}")
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")


@dataclass
class StageResult:
    average: np.ndarray
    last: np.ndarray
    oracle_calls: int
    weight_sum: float


def averaging_weights(betas: Sequence[float]) -> np.ndarray:
    """Normalized weights ``beta_i^{-1} / sum_j beta_j^{-1}``."""
    b = np.asarray(betas, dtype=float)
    if b.size == 0 or np.any(~(b > 0)):
        raise ValueError("betas must be positive")
    inv = 1.0 / b
    return inv / inv.sum()


def _chunk_steps(oracle, batch: int) -> int:
    per_row = int(np.prod(oracle.shape))
    return max(1, CHUNK_ELEMS // max(per_row * batch, 1))


def _use_kernel(oracle, setup: ProxSetup) -> bool:
    if setup.domain is not None:
        return False
    kind = getattr(oracle, "kernel", None)
    if kind == "vector":
        return setup.kind in ("l1Power", "euclidean") and len(setup.shape) == 1
    if kind == "matrix":
        return setup.kind in ("nuclear", "euclidean") and len(setup.shape) == 2
    return False


def run_stage(oracle, setup: ProxSetup, cfg: StageConfig, rng,
              checkpoints: Optional[Sequence[int]] = None,
              callback: Optional[Callable[[int, np.ndarray], None]] = None,
              use_kernel: Optional[bool] = None) -> StageResult:
    """Run ``cfg.steps`` mirror descent steps anchored at ``cfg.x0``.

    ``callback(step, average)`` is invoked after each step count listed in
    ``checkpoints``. Samples are drawn in chunks, so the compiled path and the
    generic prox path consume the stream identically.
    """
    gen = as_generator(rng)
    x0 = np.array(cfg.x0, dtype=float)
    if x0.shape != setup.shape or tuple(oracle.shape) != setup.shape:
        raise ValueError("oracle, setup and x0 shapes must agree")
    if use_kernel is None:
        use_kernel = _use_kernel(oracle, setup)
    batch = cfg.minibatch
    per_sample = cfg.rule == "perSample"
    marks = sorted({int(c) for c in (() if checkpoints is None else checkpoints) if 0 < c <= cfg.steps})
    x = x0.copy()
    w = np.zeros_like(x0)
    acc = np.zeros_like(x0)
    tmp = np.zeros_like(x0)
    g = np.zeros_like(x0)
    wsum = 0.0
    done = 0
    chunk = _chunk_steps(oracle, batch)
    mi = 0
    while done < cfg.steps:
        # chunk boundaries do not depend on checkpoints, so checkpoints never change the trajectory
        end = min(cfg.steps, done + chunk)
        phi_all, eta_all = oracle.sample(gen, (end - done) * batch)
        base = done
        while done < end:
            while mi < len(marks) and marks[mi] <= done:
                mi += 1
            stop = min(end, marks[mi]) if mi < len(marks) else end
            k = stop - done
            lo = (done - base) * batch
            phi = phi_all[lo:lo + k * batch]
            eta = eta_all[lo:lo + k * batch]
            if use_kernel:
                if oracle.kernel == "vector":
                    wsum += _kernels.vec_chunk(phi, eta, batch, per_sample, float(cfg.beta),
                                               oracle.activation.code, oracle.activation.ul,
                                               oracle.activation.ol, x0, w, x, acc, tmp, g,
                                               setup.p, setup.cn)
                else:
                    wsum += _kernels.mat_chunk(phi, eta, batch, per_sample, float(cfg.beta),
                                               x0, w, x, acc, setup.p, setup.cn)
                if not np.all(np.isfinite(x)):
                    raise NumericError("non-finite iterate", index=stop)
            else:
                for i in range(k):
                    rows = phi[i * batch:(i + 1) * batch]
                    grad = oracle.gradient(x, rows, eta[i * batch:(i + 1) * batch])
                    if per_sample:
                        beta = cfg.beta * float(np.mean(oracle.regressor_scale(rows)))
                        if not beta > 0:
                            beta = cfg.beta
                    else:
                        beta = cfg.beta
                    x = prox_map(setup, grad, x, x0, beta)
                    if not np.all(np.isfinite(x)):
                        raise NumericError("non-finite iterate", index=done + i + 1)
                    acc += x / beta
                    wsum += 1.0 / beta
            done = stop
            if callback is not None and mi < len(marks) and marks[mi] == done:
                callback(done, acc / wsum)
    return StageResult(acc / wsum, x.copy(), cfg.steps * batch, wsum)
