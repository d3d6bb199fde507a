"""Timing of the compiled step kernel against the numpy fallback."""
from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .core import RngStream
from .models import make_sparse_instance
from .prox import l1_power


def _time_chunk(fn, phi, eta, setup, repeats: int) -> tuple:
    n = phi.shape[1]
    best = np.inf
    out = None
    for _ in range(repeats):
        x0 = np.zeros(n)
        state = [np.zeros(n) for _ in range(5)]
        t = time.perf_counter()
        fn(phi, eta, 1, True, 1.0, _kernels.ACT_LINEAR, 1.0, 1.0, x0, *state, setup.p, setup.cn)
        best = min(best, time.perf_counter() - t)
        out = state[1]
    return best, out


def run_bench(n: int = 500, steps: int = 2000, repeats: int = 3, seed: int = 0) -> list:
    """Per-step times of both backends on identical samples; returns report lines."""
    model = make_sparse_instance(n, max(1, n // 100), 1.0, 1.0, 0.1, rng=RngStream(seed, 0).generator())
    setup = l1_power(n)
    phi, eta = model.sample(RngStream(seed, 1).generator(), steps)
    lines = [f"n={n} steps={steps} repeats={repeats}"]
    t_np, x_np = _time_chunk(_kernels.numpy_vec_chunk, phi, eta, setup, repeats)
    lines.append(f"numpy  {t_np / steps * 1e6:10.2f} us/step")
    if _kernels.HAVE_NUMBA:
        fn = _kernels.numba.njit(cache=True)(_kernels._nb_vec_chunk)
        _time_chunk(fn, phi[:2], eta[:2], setup, 1)
        t_nb, x_nb = _time_chunk(fn, phi, eta, setup, repeats)
        lines.append(f"numba  {t_nb / steps * 1e6:10.2f} us/step")
        lines.append(f"speedup {t_np / t_nb:8.1f}x  max|diff| {float(np.max(np.abs(x_nb - x_np))):.2e}")
    else:
        lines.append("numba not installed")
    return lines
