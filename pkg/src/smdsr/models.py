"""Synthetic sparse regression models and their stochastic gradient oracles.

Oracles share a small protocol used by the solvers:

* ``shape``                       point shape
* ``sample(gen, size)``           ``(phi, eta)`` with ``phi.shape == (size, *shape)``
* ``gradient(x, phi, eta)``       mean stochastic gradient over the rows
* ``regressor_scale(phi)``        per-row squared dual norm of the regressor
* ``kernel``                      compiled kernel family or ``None``
* ``exact_gap(x)``, ``x_star``, ``sigma_diag`` for error reporting
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import ACT_LINEAR, ACT_RAMP
from .core import AlgoConstants, as_generator, norm_eval
from .prox import ProxSetup, l1_power, nuclear


@dataclass(frozen=True)
class Activation:
    """Link function ``u``: identity, or ``ul*t + (ol - ul)*clip(t, -1, 1)``.

    The ramp version is strongly monotone with modulus ``ul`` and Lipschitz
    with constant ``ol``.
    """

    kind: str = "linear"
    ul: float = 1.0
    ol: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rampLinear"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "linear" and (self.ul != 1.0 or self.ol != 1.0):
            raise ValueError("linear activation has ul = ol = 1")
        if not (self.ol >= self.ul > 0):
            raise ValueError("need ol >= ul > 0")

    @property
    def code(self) -> int:
        return ACT_RAMP if self.kind == "rampLinear" else ACT_LINEAR

    def u(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return t
        return self.ul * t + (self.ol - self.ul) * np.clip(t, -1.0, 1.0)

    def primitive(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "linear":
            return 0.5 * t * t
        a = np.abs(t)
        h = np.where(a <= 1.0, 0.5 * t * t, a - 0.5)
        return 0.5 * self.ul * t * t + (self.ol - self.ul) * h


def ramp(ul: float, ol: float) -> Activation:
    return Activation("rampLinear", ul, ol)


@dataclass(frozen=True, eq=False)
class RegressorDistribution:
    """Regressor law with covariance ``diag(sigma_diag)``.

    kind: ``gaussian``, ``studentT`` (multivariate t with ``dof`` > 4),
    ``rademacherScaled`` or ``gaussianScaleMixture`` with ``mixer`` in
    ``studentT`` / ``exponential``. Scale mixtures ``sqrt(Z) * eta`` are
    normalized by ``E Z`` so the covariance is exactly ``diag(sigma_diag)``.
    """

    kind: str
    sigma_diag: np.ndarray
    dof: float = 5.0
    mixer: str = "studentT"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "studentT", "rademacherScaled", "gaussianScaleMixture"):
            raise ValueError(f"unknown regressor family {self.kind!r}")
        if self._mixer is not None and self._mixer == "studentT" and not self.dof > 4:
            raise ValueError("Student-t regressors need dof > 4")
        if self.kind == "gaussianScaleMixture" and self.mixer not in ("studentT", "exponential"):
            raise ValueError(f"unknown mixer {self.mixer!r}")
        if np.any(np.asarray(self.sigma_diag) <= 0):
            raise ValueError("covariance diagonal must be positive")

    @property
    def _mixer(self) -> Optional[str]:
        if self.kind == "studentT":
            return "studentT"
        if self.kind == "gaussianScaleMixture":
            return self.mixer
        return None

    @property
    def n(self) -> int:
        return int(np.asarray(self.sigma_diag).shape[0])

    @property
    def bounded(self) -> bool:
        return self.kind == "rademacherScaled"

    @property
    def kurtosis_ratio(self) -> float:
        """``E Z^2 / (E Z)^2`` of the mixing variable (1 without mixing)."""
        m = self._mixer
        if m == "studentT":
            return (self.dof - 2.0) / (self.dof - 4.0)
        if m == "exponential":
            return 2.0
        return 1.0

    def mixing(self, gen: np.random.Generator, size: int) -> Optional[np.ndarray]:
        m = self._mixer
        if m == "studentT":
            # Z = dof / chi2_dof, E Z = dof / (dof - 2)
            z = self.dof / gen.chisquare(self.dof, size)
            return z * (self.dof - 2.0) / self.dof
        if m == "exponential":
            return gen.exponential(1.0 / self.lam, size) * self.lam
        return None

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        scale = np.sqrt(np.asarray(self.sigma_diag, dtype=float))
        if self.kind == "rademacherScaled":
            return (2.0 * gen.integers(0, 2, (size, self.n)) - 1.0) * scale
        phi = gen.standard_normal((size, self.n))
        phi *= scale
        z = self.mixing(gen, size)
        if z is not None:
            phi *= np.sqrt(z)[:, None]
        return phi


def draw_noise(gen: np.random.Generator, size: int, kind: str) -> np.ndarray:
    """Unit-variance noise: standard normal or Student t4 scaled by 1/sqrt(2)."""
    if kind == "gaussian":
        return gen.standard_normal(size)
    if kind == "t4":
        return gen.standard_t(4, size) / math.sqrt(2.0)
    raise ValueError(f"unknown noise {kind!r}")


@dataclass(frozen=True, eq=False)
class GlrModel:
    """Sparse generalized linear regression ``eta = u(phi^T x*) + sigma * xi``."""

    x_star: np.ndarray
    sigma: float
    regressor: RegressorDistribution
    activation: Activation = field(default_factory=Activation)
    noise: str = "gaussian"

    def __post_init__(self):
        if self.x_star.shape != (self.regressor.n,):
            raise ValueError("x_star does not match the regressor dimension")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "_support", np.flatnonzero(self.x_star))

    kernel = "vector"

    @property
    def n(self) -> int:
        return self.regressor.n

    @property
    def shape(self) -> tuple:
        return (self.n,)

    @property
    def s(self) -> int:
        return int(self._support.size)

    @property
    def sigma_diag(self) -> np.ndarray:
        return np.asarray(self.regressor.sigma_diag, dtype=float)

    def sample(self, gen, size: int):
        gen = as_generator(gen)
        phi = self.regressor.sample(gen, size)
        sup = self._support
        lin = phi[:, sup] @ self.x_star[sup] if sup.size else np.zeros(size)
        eta = self.activation.u(lin)
        if self.sigma > 0:
            eta = eta + self.sigma * draw_noise(gen, size, self.noise)
        return phi, eta

    def gradient(self, x, phi, eta) -> np.ndarray:
        phi = np.atleast_2d(phi)
        res = self.activation.u(phi @ x) - np.atleast_1d(eta)
        return phi.T @ res / phi.shape[0]

    def row_gradients(self, xs, phi, eta) -> np.ndarray:
        """Per-row stochastic gradients, row ``k`` evaluated at ``xs[k]``."""
        res = self.activation.u(np.einsum("bi,bi->b", phi, xs)) - np.atleast_1d(eta)
        return phi * res[:, None]

    def loss(self, x, phi, eta) -> float:
        """Mean of ``G(x, omega) = U(phi^T x) - eta * phi^T x`` over rows."""
        phi = np.atleast_2d(phi)
        t = phi @ x
        return float(np.mean(self.activation.primitive(t) - np.atleast_1d(eta) * t))

    def regressor_scale(self, phi) -> np.ndarray:
        phi = np.atleast_2d(phi)
        return np.max(phi * phi, axis=1)

    def exact_gap(self, x) -> float:
        if self.activation.kind != "linear":
            raise NotImplementedError("closed-form gap needs the linear activation")
        d = np.asarray(x, dtype=float) - self.x_star
        return 0.5 * float(np.dot(self.sigma_diag, d * d))

    def mean_gradient(self, x) -> np.ndarray:
        if self.activation.kind != "linear":
            raise NotImplementedError("closed-form gradient needs the linear activation")
        return self.sigma_diag * (np.asarray(x, dtype=float) - self.x_star)


@dataclass(frozen=True, eq=False)
class TraceModel:
    """Trace regression ``eta = <phi, x*> + sigma * xi`` with i.i.d. matrix regressors."""

    x_star: np.ndarray
    sigma: float
    regressor: str = "gaussianIID"
    noise: str = "gaussian"

    def __post_init__(self):
        if self.x_star.ndim != 2 or self.x_star.shape[0] < self.x_star.shape[1]:
            raise ValueError("x_star must be a p x q matrix with p >= q")
        if self.regressor not in ("gaussianIID", "rademacherIID"):
            raise ValueError(f"unknown regressor family {self.regressor!r}")

    kernel = "matrix"

    @property
    def shape(self) -> tuple:
        return tuple(self.x_star.shape)

    @property
    def sigma_diag(self) -> np.ndarray:
        return np.ones(self.x_star.size)

    @property
    def practical_nu(self) -> float:
        """Chosen so the default stage length ``s nu (ln(pq) + 1) / 2`` equals
        ``s (sqrt(p) + sqrt(q))^2 / 2``, i.e. tracks ``E ||phi||_op^2``."""
        p, q = self.shape
        return (math.sqrt(p) + math.sqrt(q)) ** 2 / (math.log(p * q) + 1.0)

    @property
    def rank(self) -> int:
        sv = np.linalg.svd(self.x_star, compute_uv=False)
        return int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))

    def sample(self, gen, size: int):
        gen = as_generator(gen)
        p, q = self.shape
        if self.regressor == "gaussianIID":
            phi = gen.standard_normal((size, p, q))
        else:
            phi = 2.0 * gen.integers(0, 2, (size, p, q)) - 1.0
        eta = np.einsum("bij,ij->b", phi, self.x_star)
        if self.sigma > 0:
            eta = eta + self.sigma * draw_noise(gen, size, self.noise)
        return phi, eta

    def gradient(self, x, phi, eta) -> np.ndarray:
        phi = np.asarray(phi)
        if phi.ndim == 2:
            phi = phi[None]
        res = np.einsum("bij,ij->b", phi, x) - np.atleast_1d(eta)
        return np.einsum("b,bij->ij", res, phi) / phi.shape[0]

    def row_gradients(self, xs, phi, eta) -> np.ndarray:
        """Per-row stochastic gradients, row ``k`` evaluated at ``xs[k]``."""
        res = np.einsum("bij,bij->b", phi, xs) - np.atleast_1d(eta)
        return phi * res[:, None, None]

    def loss(self, x, phi, eta) -> float:
        phi = np.asarray(phi)
        if phi.ndim == 2:
            phi = phi[None]
        t = np.einsum("bij,ij->b", phi, x)
        return float(np.mean(0.5 * t * t - np.atleast_1d(eta) * t))

    def regressor_scale(self, phi) -> np.ndarray:
        phi = np.asarray(phi)
        if phi.ndim == 2:
            phi = phi[None]
        return np.linalg.norm(phi, ord=2, axis=(1, 2)) ** 2

    def exact_gap(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.x_star
        return 0.5 * float(np.sum(d * d))

    def mean_gradient(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.x_star


def support_indices(n: int, s: int) -> np.ndarray:
    """Evenly spaced support, 0-based ``k * (n // s)``."""
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    return np.arange(s) * (n // s)


def make_sparse_instance(n: int, s: int, kappa_sigma: float, nu_top: float, sigma: float,
                        dist: str = "gaussian", rng=None, noise: str = "gaussian",
                        activation: Optional[Activation] = None, **dist_kw) -> GlrModel:
    """Diagonal covariance evenly spaced on ``[kappa_sigma, nu_top]``, evenly spaced
    support, standard normal nonzero values."""
    if s > n:
        raise ValueError("s exceeds n")
    gen = as_generator(rng)
    sig = np.linspace(kappa_sigma, nu_top, n)
    x_star = np.zeros(n)
    x_star[support_indices(n, s)] = gen.standard_normal(s)
    reg = RegressorDistribution(dist, sig, **dist_kw)
    return GlrModel(x_star, float(sigma), reg, activation or Activation(), noise)


def make_trace_instance(p: int, q: int, rank: int, sigma: float, regressor: str = "gaussianIID",
                        rng=None, noise: str = "gaussian") -> TraceModel:
    """Rank-``rank`` signal ``U diag(d) V^T`` with Haar factors and ``d`` i.i.d. in [1, 2]."""
    if not 1 <= rank <= q <= p:
        raise ValueError("need 1 <= rank <= q <= p")
    gen = as_generator(rng)
    u, _ = np.linalg.qr(gen.standard_normal((p, rank)))
    v, _ = np.linalg.qr(gen.standard_normal((q, rank)))
    d = gen.uniform(1.0, 2.0, rank)
    return TraceModel((u * d) @ v.T, float(sigma), regressor, noise)


def log_factor(n: int) -> float:
    return math.log(2 * n)


def suggest_constants(model, setup: Optional[ProxSetup] = None, x0=None, R: Optional[float] = None,
                      varkappa: float = 4.0, varkappa_prime: float = 2.0) -> AlgoConstants:
    """Constants for the theoretical schedules of a synthetic model.

    Suppressed absolute constants are 1; ``varkappa`` and ``varkappa_prime``
    are the multipliers of the variance bound.
    """
    if isinstance(model, GlrModel):
        setup = setup or l1_power(model.n)
        act = model.activation
        reg = model.regressor
        sig = model.sigma_diag
        ups = float(sig.max())
        ratio = act.ol ** 2 / act.ul
        if reg.bounded:
            mu = math.sqrt(ups)
            nu = ratio * (mu + math.sqrt(ups)) ** 2
            s2 = mu * mu * model.sigma ** 2
        else:
            nu = ratio * reg.kurtosis_ratio * ups * log_factor(model.n)
            s2 = ups * model.sigma ** 2 * log_factor(model.n)
        lowkap = act.ul * float(sig.min())
        s_bar = max(model.s, 1)
        norm = "l1"
    elif isinstance(model, TraceModel):
        p, q = model.shape
        setup = setup or nuclear(p, q)
        nu = (math.sqrt(p) + math.sqrt(q)) ** 2
        s2 = model.sigma ** 2 * nu
        lowkap = 1.0
        s_bar = max(model.rank, 1)
        norm = "nuclear"
    else:
        raise NotImplementedError(f"no constant formulas for {type(model).__name__}")
    if R is None:
        x0 = np.zeros(model.shape) if x0 is None else np.asarray(x0, dtype=float)
        R = norm_eval(model.x_star - x0, norm)
        if R <= 0:
            R = 1.0
    return AlgoConstants(varkappa, varkappa_prime, nu, s2, lowkap, s_bar, float(R), setup.theta)
