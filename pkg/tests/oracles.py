"""Independent reference solvers shared by the test modules."""
import math

import numpy as np
from scipy.optimize import minimize

from smdsr.core import RngStream
from smdsr.models import Activation, GlrModel, RegressorDistribution
from smdsr.sparsify import group, low_rank, sparsify_point, vanilla


def l1_prox_problem(n, u, x, x0, beta):
    """Objective and gradient of ``<u, z> + beta * V_{x0}(x, z)`` for the l1 setup, written from scratch."""
    if n >= 3:
        p = 1.0 + 1.0 / math.log(n)
        cn = 0.5 * math.e * math.log(n) * n ** ((p - 1.0) * (2.0 - p) / p)
    else:
        p, cn = 2.0, 1.0

    def pnorm(v):
        return float(np.sum(np.abs(v) ** p) ** (1.0 / p))

    def theta(v):
        return cn * pnorm(v) ** 2

    def grad_theta(v):
        t = pnorm(v)
        if t == 0.0:
            return np.zeros_like(v)
        return 2.0 * cn * t ** (2.0 - p) * np.sign(v) * np.abs(v) ** (p - 1.0)

    gx = grad_theta(x - x0)
    cst = theta(x - x0)

    def f(z):
        return float(u @ z + beta * (theta(z - x0) - cst - gx @ (z - x)))

    def jac(z):
        return u + beta * (grad_theta(z - x0) - gx)

    return f, jac


def brute_prox_value(n, u, x, x0, beta):
    """Smallest objective found by BFGS from three starts (the problem is strongly convex)."""
    f, jac = l1_prox_problem(n, u, x, x0, beta)
    best = math.inf
    for z0 in (x, x0, np.zeros(n)):
        r = minimize(f, z0, jac=jac, method="BFGS", options={"gtol": 1e-13, "maxiter": 10000})
        best = min(best, r.fun)
    return f, best


def brute_ball_prox_value(n, u, x, x0, beta, center, radius):
    """Same problem restricted to ``||z - center||_1 <= radius`` via a split ``z - center = a - b``, a, b >= 0."""
    f, jac = l1_prox_problem(n, u, x, x0, beta)

    def g(w):
        return f(center + w[:n] - w[n:])

    def gj(w):
        d = jac(center + w[:n] - w[n:])
        return np.concatenate([d, -d])

    cons = {"type": "ineq", "fun": lambda w: radius - w.sum(), "jac": lambda w: -np.ones(2 * n)}
    best = math.inf
    for start in (np.zeros(2 * n), np.full(2 * n, radius / (4 * n))):
        r = minimize(g, start, jac=gj, method="SLSQP", bounds=[(0, None)] * (2 * n), constraints=[cons],
                     options={"ftol": 1e-15, "maxiter": 1000})
        if r.success or r.status == 8:
            best = min(best, r.fun)
    return f, best


VECTOR_FAMILIES = [
    ("gaussian", {}),
    ("studentT", {"dof": 6.0}),
    ("rademacherScaled", {}),
    ("gaussianScaleMixture", {"mixer": "studentT", "dof": 8.0}),
    ("gaussianScaleMixture", {"mixer": "exponential"}),
]


def mc_gradient_stats(model, x, gen, reps=200_000, chunk=20_000, true_grad=None):
    """Monte-Carlo mean of per-sample gradients and of their squared dual-norm deviation."""
    n = model.n
    total = np.zeros(n)
    grads = []
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        phi, eta = model.sample(gen, k)
        res = model.activation.u(phi @ x) - eta
        g = phi * res[:, None]
        total += g.sum(axis=0)
        if true_grad is not None:
            grads.append(np.max(np.abs(g - true_grad), axis=1) ** 2)
        done += k
    mean = total / reps
    var = float(np.mean(np.concatenate(grads))) if grads else None
    return mean, var


def vector_model(kind, kw, seed, noise="gaussian", activation=None):
    n = 30
    sig = np.linspace(0.5, 1.5, n)
    gen = RngStream(seed, 0).generator()
    x_star = np.zeros(n)
    x_star[[0, 10, 20]] = gen.standard_normal(3)
    reg = RegressorDistribution(kind, sig, **kw)
    return GlrModel(x_star, 0.3, reg, activation or Activation(), noise)


class DeterministicQuadratic:
    """Noiseless oracle of ``g(x) = (x - c)' Q (x - c) / 2``; its gradient is linear in ``x``."""

    def __init__(self, Q, c):
        self.Q = np.asarray(Q, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.shape = self.c.shape

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return 0.5 * float(d @ self.Q @ d)

    def sample(self, gen, size):
        return np.zeros((size,) + self.shape), np.zeros(size)

    def gradient(self, x, phi, eta):
        return self.Q @ (np.asarray(x, dtype=float) - self.c)


def random_sparse_case(rng, kind):
    """Random structure of ``kind``, an s-sparse target and a perturbed point around it."""
    if kind == "vanilla":
        n = int(rng.integers(2, 40))
        s = int(rng.integers(1, n + 1))
        st_ = vanilla(n, s)
        x_star = sparsify_point(st_, rng.normal(size=n))
        x = x_star + rng.normal(size=n) * rng.choice([1e-3, 0.1, 1, 10])
    elif kind == "group":
        n = int(rng.integers(4, 40))
        perm = rng.permutation(n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=int(rng.integers(1, min(n - 1, 8) + 1)), replace=False))
        blocks = [b.tolist() for b in np.split(perm, cuts)]
        s = int(rng.integers(1, len(blocks) + 1))
        st_ = group(blocks, s)
        x_star = sparsify_point(st_, rng.normal(size=n))
        x = x_star + rng.normal(size=n) * rng.choice([1e-3, 0.1, 1, 10])
    else:
        p = int(rng.integers(2, 12))
        q = int(rng.integers(2, p + 1))
        s = int(rng.integers(1, q + 1))
        st_ = low_rank(p, q, s)
        x_star = sparsify_point(st_, rng.normal(size=(p, q)))
        x = x_star + rng.normal(size=(p, q)) * rng.choice([1e-3, 0.1, 1, 10])
    return st_, x, x_star
