"""Sparsification operators: top-s entries, top-s blocks and rank-s truncation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DimensionError, norm_eval


@dataclass(frozen=True)
class SparsityStructure:
    """Sparsity structure with level ``s``.

    kind is ``vanilla`` (``shape=(n,)``), ``group`` (``partition`` of 0..n-1 into
    disjoint blocks) or ``lowRank`` (``shape=(p, q)``).
    """

    kind: str
    s: int
    shape: tuple
    partition: Optional[tuple] = None

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.kind == "vanilla":
            if self.s > self.shape[0]:
                raise ValueError("s exceeds dimension")
        elif self.kind == "group":
            if self.partition is None:
                raise ValueError("group structure needs a partition")
            flat = np.sort(np.concatenate([np.asarray(b, dtype=int) for b in self.partition]))
            if not np.array_equal(flat, np.arange(self.shape[0])):
                raise ValueError("partition must cover 0..n-1 with disjoint blocks")
            if self.s > len(self.partition):
                raise ValueError("s exceeds number of blocks")
        elif self.kind == "lowRank":
            if self.s > min(self.shape):
                raise ValueError("rank exceeds min(p, q)")
        else:
            raise ValueError(f"unknown structure {self.kind!r}")

    def norm(self, x) -> float:
        """Structural norm: l1, block l1/l2 or nuclear."""
        if self.kind == "vanilla":
            return norm_eval(x, "l1")
        if self.kind == "group":
            return norm_eval(x, "block_l1l2", partition=self.partition)
        return norm_eval(x, "nuclear")


def vanilla(n: int, s: int) -> SparsityStructure:
    return SparsityStructure("vanilla", s, (n,))


def group(partition: Sequence, s: int) -> SparsityStructure:
    blocks = tuple(tuple(int(i) for i in b) for b in partition)
    n = sum(len(b) for b in blocks)
    return SparsityStructure("group", s, (n,), blocks)


def low_rank(p: int, q: int, s: int) -> SparsityStructure:
    return SparsityStructure("lowRank", s, (p, q))


def _check(structure: SparsityStructure, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != structure.shape:
        raise DimensionError(f"point shape {x.shape} does not match structure {structure.shape}")
    return x


def top_s_indices(values: np.ndarray, s: int) -> np.ndarray:
    """Indices of the s largest values; ties go to the lowest index."""
    return np.argsort(-values, kind="stable")[:s]


def sparsify_point(structure: SparsityStructure, x) -> np.ndarray:
    """Best s-sparse approximation of ``x`` in the Euclidean norm."""
    x = _check(structure, x)
    s = structure.s
    if structure.kind == "vanilla":
        out = np.zeros_like(x)
        idx = top_s_indices(np.abs(x), s)
        out[idx] = x[idx]
        return out
    if structure.kind == "group":
        blocks = structure.partition
        norms = np.array([np.linalg.norm(x[list(b)]) for b in blocks])
        out = np.zeros_like(x)
        for k in top_s_indices(norms, s):
            b = list(blocks[k])
            out[b] = x[b]
        return out
    u, sv, vt = np.linalg.svd(x, full_matrices=False)
    return (u[:, :s] * sv[:s]) @ vt[:s]


def is_sparse(structure: SparsityStructure, x, tol: float = 0.0) -> bool:
    x = _check(structure, x)
    s = structure.s
    if structure.kind == "vanilla":
        return int(np.sum(np.abs(x) > tol)) <= s
    if structure.kind == "group":
        return sum(np.linalg.norm(x[list(b)]) > tol for b in structure.partition) <= s
    sv = np.linalg.svd(x, compute_uv=False)
    thr = max(tol, 1e-12 * (sv[0] if sv.size else 0.0))
    return int(np.sum(sv > thr)) <= s


def sparsify_error(structure: SparsityStructure, x, x_star) -> tuple:
    """Euclidean and structural distances from ``sparse(x)`` to an s-sparse ``x_star``."""
    x_star = _check(structure, x_star)
    if not is_sparse(structure, x_star):
        raise ValueError("x_star is not s-sparse under the structure")
    diff = sparsify_point(structure, x) - x_star
    return norm_eval(diff, "l2"), structure.norm(diff)


def lemma_bounds(structure: SparsityStructure, x, x_star) -> tuple:
    """Return ``(struct_err, sqrt(2s)*l2_err, 2*sqrt(2s)*||x - x_star||_2)``.

    These satisfy ``a <= b <= c`` for any s-sparse ``x_star``.
    """
    l2, st = sparsify_error(structure, x, x_star)
    c = math.sqrt(2 * structure.s)
    return st, c * l2, 2 * c * norm_eval(np.asarray(x) - x_star, "l2")
