"""Distance-generating functions, Bregman divergences and prox mappings.

Three setups are provided:

* ``l1_power(n)``: the power-norm function ``cn * ||x||_p**2`` with
  ``p = 1 + 1/ln n``, 1-strongly convex with respect to the l1 norm;
* ``nuclear(p, q)``: the same construction on the singular values of a
  ``p x q`` matrix, strongly convex with respect to the nuclear norm;
* ``euclidean(shape)``: ``0.5 * ||x||_2**2``.

All prox mappings use a dual-space closed form on the whole space. A norm-ball
domain is handled by bisection on the constraint multiplier.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DimensionError, NumericError, norm_eval


@dataclass(frozen=True)
class NormBall:
    center: np.ndarray
    radius: float
    norm: str = "l1"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        if self.norm not in ("l1", "nuclear"):
            raise ValueError(f"unsupported ball norm {self.norm!r}")


@dataclass(frozen=True)
class ProxSetup:
    """A proximal setup: the d.-g.f. ``cn * ||.||_p**2`` (on singular values for matrices).

    ``p`` is the power exponent and ``cn`` the scale; for the nuclear setup ``r = p - 1``.
    ``theta`` bounds ``dgf(x) <= theta * ||x||**2`` in the primal norm.
    """

    kind: str
    shape: tuple
    p: float
    cn: float
    theta: float
    r: Optional[float] = None
    domain: Optional[NormBall] = None

    @property
    def q(self) -> float:
        """Dual exponent of ``p``."""
        return math.inf if self.p == 1 else self.p / (self.p - 1.0)

    @property
    def is_matrix(self) -> bool:
        return self.kind == "nuclear"

    def with_domain(self, domain: Optional[NormBall]) -> "ProxSetup":
        return ProxSetup(self.kind, self.shape, self.p, self.cn, self.theta, self.r, domain)

    def norm(self, x) -> float:
        """Primal norm of the setup."""
        if self.kind == "l1Power":
            return norm_eval(x, "l1")
        if self.kind == "nuclear":
            return norm_eval(x, "nuclear")
        return norm_eval(x, "l2")


def l1_power(n: int, domain: Optional[NormBall] = None) -> ProxSetup:
    """Power-norm setup for the l1 geometry on R^n.

    For n <= 2 the exponent ``1 + 1/ln n`` is not in (1, 2]; there the function
    ``||x||_2**2`` is used, which is 1-strongly convex for ``||.||_1`` when n <= 2.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n <= 2:
        return ProxSetup("l1Power", (n,), 2.0, 1.0, 1.0, None, domain)
    ln = math.log(n)
    p = 1.0 + 1.0 / ln
    cn = 0.5 * math.e * ln * n ** ((p - 1.0) * (2.0 - p) / p)
    theta = 0.5 * math.e ** 2 * ln
    return ProxSetup("l1Power", (n,), p, cn, theta, None, domain)


def nuclear(p: int, q: int, domain: Optional[NormBall] = None) -> ProxSetup:
    """Schatten power setup for ``p x q`` matrices (``p >= q``)."""
    if p < q:
        raise ValueError("nuclear setup expects p >= q")
    if domain is not None and domain.norm != "nuclear":
        raise ValueError("nuclear setup needs a nuclear-norm ball")
    lq = math.log(2 * q)
    r = 1.0 / (2.0 * lq)
    cn = 2.0 * math.e * lq
    return ProxSetup("nuclear", (p, q), 1.0 + r, cn, cn, r, domain)


def euclidean(shape, domain: Optional[NormBall] = None) -> ProxSetup:
    if isinstance(shape, int):
        shape = (shape,)
    return ProxSetup("euclidean", tuple(shape), 2.0, 0.5, 0.5, None, domain)


def _check(setup: ProxSetup, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != setup.shape:
        raise DimensionError(f"point shape {x.shape} does not match setup {setup.shape}")
    return x


def _pnorm(v: np.ndarray, p: float) -> float:
    a = np.abs(v)
    m = a.max() if a.size else 0.0
    if m == 0.0:
        return 0.0
    if p == 2.0:
        return float(m * np.sqrt(np.sum((a / m) ** 2)))
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def _vec_grad(v: np.ndarray, p: float, cn: float) -> np.ndarray:
    if p == 2.0:
        return 2.0 * cn * v
    t = _pnorm(v, p)
    if t == 0.0:
        return np.zeros_like(v)
    return 2.0 * cn * t * np.sign(v) * (np.abs(v) / t) ** (p - 1.0)


def _vec_grad_inverse(y: np.ndarray, p: float, cn: float) -> np.ndarray:
    if p == 2.0:
        return y / (2.0 * cn)
    q = p / (p - 1.0)
    yq = _pnorm(y, q)
    if yq == 0.0:
        return np.zeros_like(y)
    return (yq / (2.0 * cn)) * np.sign(y) * (np.abs(y) / yq) ** (1.0 / (p - 1.0))


def dgf_value(setup: ProxSetup, x) -> float:
    x = _check(setup, x)
    if setup.kind == "nuclear":
        sv = np.linalg.svd(x, compute_uv=False)
        return setup.cn * _pnorm(sv, setup.p) ** 2
    return setup.cn * _pnorm(x, setup.p) ** 2


def dgf_grad(setup: ProxSetup, x) -> np.ndarray:
    x = _check(setup, x)
    if setup.kind == "nuclear":
        u, sv, vt = np.linalg.svd(x, full_matrices=False)
        return (u * _vec_grad(sv, setup.p, setup.cn)) @ vt
    return _vec_grad(x, setup.p, setup.cn)


def dgf_grad_inverse(setup: ProxSetup, y) -> np.ndarray:
    y = _check(setup, y)
    if setup.kind == "nuclear":
        u, sv, vt = np.linalg.svd(y, full_matrices=False)
        return (u * _vec_grad_inverse(sv, setup.p, setup.cn)) @ vt
    return _vec_grad_inverse(y, setup.p, setup.cn)


def bregman(setup: ProxSetup, x0, x, z) -> float:
    """``V_{x0}(x, z) = dgf(z - x0) - dgf(x - x0) - <grad dgf(x - x0), z - x>``."""
    x0, x, z = (_check(setup, a) for a in (x0, x, z))
    g = dgf_grad(setup, x - x0)
    v = dgf_value(setup, z - x0) - dgf_value(setup, x - x0) - float(np.sum(g * (z - x)))
    return max(v, 0.0)


def dual_norm(setup: ProxSetup, s) -> float:
    s = _check(setup, s)
    if setup.kind == "l1Power":
        return norm_eval(s, "linf")
    if setup.kind == "nuclear":
        return norm_eval(s, "spectral")
    return norm_eval(s, "l2")


def prox_objective(setup: ProxSetup, u, x, x0, beta: float, z) -> float:
    return float(np.sum(np.asarray(u) * np.asarray(z))) + beta * bregman(setup, x0, x, z)


def prox_map(setup: ProxSetup, u, x, x0, beta: float, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Minimizer over the domain of ``<u, z> + beta * V_{x0}(x, z)``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    u, x, x0 = (_check(setup, a) for a in (u, x, x0))
    y = dgf_grad(setup, x - x0) - u / beta
    z = x0 + dgf_grad_inverse(setup, y)
    dom = setup.domain
    if dom is None:
        return z
    center = _check(setup, dom.center)
    if setup.norm(z - center) <= dom.radius * (1.0 + tol):
        return z
    if setup.kind == "nuclear":
        return _nuclear_ball_prox(setup, y, x0, center, dom.radius, tol, max_iter)
    return _l1_ball_prox(setup, y, x0, center, dom.radius, beta, tol, max_iter)


def _coord_solve(a: np.ndarray, e: np.ndarray, kappa: float, lam: float, p: float) -> np.ndarray:
    """Separable minimizer of ``a d + kappa |d|^p / p + lam |d - e|`` per coordinate."""
    inv = 1.0 / (p - 1.0)
    psi_e = a + kappa * np.sign(e) * np.abs(e) ** (p - 1.0)
    d = e.copy()
    hi = psi_e > lam
    lo = psi_e < -lam
    if np.any(hi):
        t = lam - a[hi]
        d[hi] = np.sign(t) * (np.abs(t) / kappa) ** inv
    if np.any(lo):
        t = -lam - a[lo]
        d[lo] = np.sign(t) * (np.abs(t) / kappa) ** inv
    return d


def _l1_penalized(a, e, lam, beta, cn, p, tol, max_iter):
    """Minimize ``<a, d> + beta*cn*||d||_p^2 + lam*||d - e||_1`` over d.

    The coupling through ``||d||_p`` is resolved by bisection on ``t = ||d||_p``:
    for fixed t the problem is separable, and ``t - ||d(t)||_p`` is increasing.
    """
    if p == 2.0:
        return _coord_solve(a, e, 2.0 * beta * cn, lam, p)

    def d_of(t):
        return _coord_solve(a, e, 2.0 * beta * cn * t ** (2.0 - p), lam, p)

    # ||a||_1 / (2 beta cn) bounds the norm of the unpenalized minimizer
    hi = max(_pnorm(e, p), float(np.abs(a).sum()) / (2.0 * beta * cn), 1e-300)
    for _ in range(2000):
        if hi >= _pnorm(d_of(hi), p):
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mid - _pnorm(d_of(mid), p) >= 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return d_of(hi)


def _l1_ball_prox(setup, y, x0, center, radius, beta, tol, max_iter):
    # minimize <a, d> + beta*dgf(d) over ||d - e||_1 <= radius with d = z - x0
    p, cn = setup.p, setup.cn
    a = -beta * y
    e = center - x0
    kappa_e = 2.0 * beta * cn * _pnorm(e, p) ** (2.0 - p) if p != 2.0 else 2.0 * beta * cn
    lam_hi = float(np.max(np.abs(a + kappa_e * np.sign(e) * np.abs(e) ** (p - 1.0)))) * (1 + 1e-12) + 1e-300
    lam_lo = 0.0
    d = e.copy()
    resid = np.inf
    for _ in range(max_iter):
        lam = 0.5 * (lam_lo + lam_hi)
        dm = _l1_penalized(a, e, lam, beta, cn, p, tol, max_iter)
        gap = np.abs(dm - e).sum() - radius
        if gap > 0:
            lam_lo = lam
        else:
            lam_hi = lam
            d = dm
            resid = -gap
            if resid <= tol * radius:
                break
        if lam_hi - lam_lo <= 1e-16 * lam_hi:
            break
    if not np.isfinite(resid):
        d = _l1_penalized(a, e, lam_hi, beta, cn, p, tol, max_iter)
        resid = abs(np.abs(d - e).sum() - radius)
    if resid > max(tol * radius, 1e-12) and resid > 1e-9 * radius:
        raise NumericError("ball prox root-find did not converge", residual=float(resid))
    return x0 + d


def _nuclear_ball_prox(setup, y, x0, center, radius, tol, max_iter):
    # spectral reduction is exact only when the ball is centered at the prox center
    if not np.allclose(center, x0, atol=1e-14):
        raise NotImplementedError("nuclear ball prox requires the ball center to equal x0")
    u, sv, vt = np.linalg.svd(y, full_matrices=False)
    n = sv.shape[0]
    sub = ProxSetup("l1Power", (n,), setup.p, setup.cn, setup.theta)
    beta = 1.0
    d = _l1_ball_prox(sub, sv, np.zeros(n), np.zeros(n), radius, beta, tol, max_iter)
    return x0 + (u * d) @ vt
