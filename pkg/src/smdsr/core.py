"""Shared types, norms, error metrics and the seeded random stream contract."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

METRIC_NAMES = ("l2_error", "struct_error", "sigma_error", "objective_gap")
PRELIMINARY = "preliminary"
ASYMPTOTIC = "asymptotic"


class DimensionError(ValueError):
    pass


class NumericError(RuntimeError):
    """Raised when an iterative routine fails or an iterate stops being finite."""

    def __init__(self, message: str, residual: float = float("nan"), index: int = -1):
        super().__init__(message)
        self.residual = residual
        self.index = index


@dataclass(frozen=True)
class AlgoConstants:
    """Problem constants driving the theoretical schedules of the multistage driver.

    Attributes
    ----------
    varkappa, varkappa_prime : float
        Multipliers in the variance bound of the stochastic oracle (both >= 1).
    nu : float
        Smoothness scale.
    sigma_star_sq : float
        Noise level at the optimum in the dual norm, squared.
    lowkap : float
        Quadratic growth modulus with respect to the Euclidean norm.
    s_bar : int
        Sparsity level used by the sparsification step.
    R : float
        Bound on the initial distance to the solution in the structural norm.
    theta : float
        Quadratic growth constant of the distance-generating function.
    """

    varkappa: float
    varkappa_prime: float
    nu: float
    sigma_star_sq: float
    lowkap: float
    s_bar: int
    R: float
    theta: float

    def __post_init__(self):
        if self.varkappa < 1 or self.varkappa_prime < 1:
            raise ValueError("varkappa and varkappa_prime must be >= 1")
        for name in ("nu", "lowkap", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_star_sq < 0:
            raise ValueError("sigma_star_sq must be nonnegative")
        if self.s_bar < 1:
            raise ValueError("s_bar must be >= 1")
        if self.theta < 0.5:
            raise ValueError("theta must be >= 1/2")


@dataclass
class TraceRecord:
    oracle_calls: int
    stage: int
    phase: str
    metrics: dict


@dataclass
class RunTrace:
    """Ordered per-stage or per-checkpoint records; oracle calls strictly increase."""

    records: list = field(default_factory=list)

    def add(self, oracle_calls: int, stage: int, phase: str, metrics: Optional[dict] = None):
        if self.records and oracle_calls <= self.records[-1].oracle_calls:
            raise ValueError(
                f"oracle_calls must increase: {oracle_calls} after {self.records[-1].oracle_calls}"
            )
        self.records.append(TraceRecord(int(oracle_calls), int(stage), phase, dict(metrics or {})))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def oracle_calls(self) -> np.ndarray:
        return np.array([r.oracle_calls for r in self.records], dtype=np.int64)

    def metric(self, name: str) -> np.ndarray:
        return np.array([r.metrics.get(name, np.nan) for r in self.records], dtype=float)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream identified by ``(seed, stream_id)``.

    Backed by the counter-based Philox generator; distinct stream ids map to
    distinct spawn keys of one seed sequence, so streams are independent.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) % 2**64, spawn_key=(int(self.stream_id),) + self.path)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))


def as_generator(rng: Any) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def _singular_values(x: np.ndarray) -> np.ndarray:
    if x.ndim != 2:
        raise DimensionError("matrix norm requested for a non-matrix point")
    return np.linalg.svd(x, compute_uv=False)


def norm_eval(x, which: str, partition: Optional[Sequence] = None, sigma=None) -> float:
    """Evaluate one of the norms used throughout the package.

    ``which`` is one of ``l1``, ``l2``, ``linf``, ``block_l1l2``, ``nuclear``,
    ``spectral`` or ``sigma``. ``sigma`` may be a diagonal (1-D) or a full
    covariance matrix.
    """
    x = np.asarray(x, dtype=float)
    if which == "l1":
        return float(np.abs(x).sum())
    if which == "l2":
        return float(np.sqrt(np.sum(x * x)))
    if which == "linf":
        return float(np.abs(x).max()) if x.size else 0.0
    if which == "block_l1l2":
        if partition is None:
            raise ValueError("block_l1l2 needs a partition")
        flat = x.ravel()
        return float(sum(np.linalg.norm(flat[np.asarray(b)]) for b in partition))
    if which == "nuclear":
        return float(_singular_values(x).sum())
    if which == "spectral":
        return float(_singular_values(x).max())
    if which == "sigma":
        if sigma is None:
            raise ValueError("sigma norm needs a covariance")
        sigma = np.asarray(sigma, dtype=float)
        flat = x.ravel()
        if sigma.ndim == 1:
            if sigma.shape[0] != flat.shape[0]:
                raise DimensionError("covariance diagonal does not match point")
            return float(np.sqrt(np.dot(sigma, flat * flat)))
        if sigma.shape != (flat.shape[0], flat.shape[0]):
            raise DimensionError("covariance does not match point")
        return float(np.sqrt(max(flat @ sigma @ flat, 0.0)))
    raise ValueError(f"unknown norm {which!r}")


def risk_metrics(x, x_star, model=None, structure=None) -> dict:
    """Error metrics of ``x`` against ``x_star``; absent metrics are omitted.

    ``model`` may expose ``sigma_diag`` (diagonal covariance) and
    ``exact_gap(x)``; ``structure`` supplies the structural norm.
    """
    x = np.asarray(x, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x.shape != x_star.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {x_star.shape}")
    diff = x - x_star
    out = {"l2_error": norm_eval(diff, "l2")}
    if structure is not None:
        out["struct_error"] = structure.norm(diff)
    elif x.ndim == 1:
        out["struct_error"] = norm_eval(diff, "l1")
    else:
        out["struct_error"] = norm_eval(diff, "nuclear")
    if model is not None:
        sig = getattr(model, "sigma_diag", None)
        if sig is not None:
            out["sigma_error"] = norm_eval(diff, "sigma", sigma=sig)
        gap = getattr(model, "exact_gap", None)
        if gap is not None:
            try:
                out["objective_gap"] = float(gap(x))
            except NotImplementedError:
                pass
    return out


def split_sample(total_budget: int, parts: int) -> list:
    """Equal budgets for ``parts`` independent runs; the remainder is dropped."""
    if parts < 1:
        raise ValueError("parts must be >= 1")
    if parts > total_budget:
        raise ValueError(f"cannot split {total_budget} oracle calls into {parts} parts")
    return [total_budget // parts] * parts

