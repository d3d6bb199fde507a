"""Compiled inner loops of the mirror descent stage.

The numba versions are used unless the environment variable
``SMDSR_DISABLE_NUMBA`` is set to a true value (``1``, ``true``, ``yes``), in
which case vectorized numpy equivalents run instead. Both backends implement
the same recursion on a chunk of samples and update the state in place:

* ``w``   dual accumulator, ``x = x0 + grad dgf^{-1}(w)``
* ``x``   current iterate
* ``acc`` running sum of ``x_i / beta_{i-1}``

and return the sum of ``1 / beta`` over the processed steps.
"""
from __future__ import annotations

import math
import os

import numpy as np

ACT_LINEAR = 0
ACT_RAMP = 1


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_flag("SMDSR_DISABLE_NUMBA")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------------------
# numba kernels (plain loops)


def _nb_mirror(w, x0, x, tmp, p, cn, amax):
    n = w.shape[0]
    if p == 2.0:
        s = 1.0 / (2.0 * cn)
        for j in range(n):
            x[j] = x0[j] + s * w[j]
        return
    if amax == 0.0:
        for j in range(n):
            x[j] = x0[j]
        return
    inv = 1.0 / (p - 1.0)
    q = 1.0 + inv
    tot = 0.0
    for j in range(n):
        r = abs(w[j]) / amax
        t = math.exp(inv * math.log(r)) if r > 0.0 else 0.0
        tmp[j] = t
        tot += r * t
    scale = amax / (2.0 * cn) * tot ** ((1.0 - inv) / q)
    for j in range(n):
        v = scale * tmp[j]
        x[j] = x0[j] + (v if w[j] >= 0.0 else -v)


_nb_mirror_j = _jit(_nb_mirror)


def _nb_vec_chunk(phi, eta, batch, per_sample, beta, act, ul, ol, x0, w, x, acc, tmp, g, p, cn):
    n = x.shape[0]
    steps = phi.shape[0] // batch
    wsum = 0.0
    for i in range(steps):
        bsc = 0.0
        for j in range(n):
            g[j] = 0.0
        for b in range(batch):
            r = i * batch + b
            dot = 0.0
            mx = 0.0
            for j in range(n):
                v = phi[r, j]
                dot += v * x[j]
                if per_sample:
                    a = v * v
                    if a > mx:
                        mx = a
            if act == 1:
                c = dot
                if c > 1.0:
                    c = 1.0
                elif c < -1.0:
                    c = -1.0
                val = ul * dot + (ol - ul) * c
            else:
                val = dot
            res = (val - eta[r]) / batch
            for j in range(n):
                g[j] += phi[r, j] * res
            bsc += mx
        bi = beta * bsc / batch if per_sample else beta
        if not bi > 0.0:
            bi = beta if beta > 0.0 else 1.0
        inv_b = 1.0 / bi
        amax = 0.0
        for j in range(n):
            w[j] -= g[j] * inv_b
            a = abs(w[j])
            if a > amax:
                amax = a
        _nb_mirror_j(w, x0, x, tmp, p, cn, amax)
        for j in range(n):
            acc[j] += x[j] * inv_b
        wsum += inv_b
    return wsum


def _nb_sv_map(sv, p, cn, inverse):
    # scalar power map on a nonnegative singular-value vector
    k = sv.shape[0]
    out = np.zeros(k)
    if p == 2.0:
        f = 1.0 / (2.0 * cn) if inverse else 2.0 * cn
        for j in range(k):
            out[j] = f * sv[j]
        return out
    m = 0.0
    for j in range(k):
        if sv[j] > m:
            m = sv[j]
    if m == 0.0:
        return out
    e = p / (p - 1.0) if inverse else p
    tot = 0.0
    for j in range(k):
        tot += (sv[j] / m) ** e
    nrm = m * tot ** (1.0 / e)
    if inverse:
        scale = nrm / (2.0 * cn)
        ex = 1.0 / (p - 1.0)
    else:
        scale = 2.0 * cn * nrm
        ex = p - 1.0
    for j in range(k):
        out[j] = scale * (sv[j] / nrm) ** ex
    return out


_nb_sv_map_j = _jit(_nb_sv_map)


def _nb_mat_chunk(phi, eta, batch, per_sample, beta, x0, w, x, acc, p, cn):
    steps = phi.shape[0] // batch
    pr = x.shape[0]
    qc = x.shape[1]
    g = np.zeros((pr, qc))
    coef = np.zeros(qc)
    wsum = 0.0
    for i in range(steps):
        g[:, :] = 0.0
        bsc = 0.0
        for b in range(batch):
            r = i * batch + b
            f = phi[r]
            dot = 0.0
            for a in range(pr):
                for c in range(qc):
                    dot += f[a, c] * x[a, c]
            res = (dot - eta[r]) / batch
            for a in range(pr):
                for c in range(qc):
                    g[a, c] += f[a, c] * res
            if per_sample:
                ev = np.linalg.eigvalsh(f.T @ f)
                bsc += ev[ev.shape[0] - 1]
        bi = beta * bsc / batch if per_sample else beta
        if not bi > 0.0:
            bi = beta if beta > 0.0 else 1.0
        inv_b = 1.0 / bi
        for a in range(pr):
            for c in range(qc):
                w[a, c] -= g[a, c] * inv_b
        # eigh of the q x q Gram matrix is cheaper than an SVD of w, and
        # U h(S) V^T = w V diag(h(s) / s) V^T; null directions map to zero
        lam, v = np.linalg.eigh(w.T @ w)
        sv = np.sqrt(np.maximum(lam, 0.0))
        d = _nb_sv_map_j(sv, p, cn, True)
        for k in range(qc):
            coef[k] = d[k] / sv[k] if sv[k] > 0.0 else 0.0
        step = (w @ (v * coef)) @ v.T
        for a in range(pr):
            for c in range(qc):
                x[a, c] = x0[a, c] + step[a, c]
                acc[a, c] += x[a, c] * inv_b
        wsum += inv_b
    return wsum


# ---------------------------------------------------------------------------
# numpy fallbacks (vectorized per step)


def _np_vec_mirror(w, x0, p, cn):
    if p == 2.0:
        return x0 + w / (2.0 * cn)
    amax = np.abs(w).max()
    if amax == 0.0:
        return x0.copy()
    inv = 1.0 / (p - 1.0)
    q = 1.0 + inv
    r = np.abs(w) / amax
    with np.errstate(divide="ignore"):
        t = np.where(r > 0.0, np.exp(inv * np.log(np.where(r > 0.0, r, 1.0))), 0.0)
    tot = float(np.sum(r * t))
    scale = amax / (2.0 * cn) * tot ** ((1.0 - inv) / q)
    return x0 + np.where(w >= 0.0, scale * t, -scale * t)


def _np_vec_chunk(phi, eta, batch, per_sample, beta, act, ul, ol, x0, w, x, acc, tmp, g, p, cn):
    steps = phi.shape[0] // batch
    wsum = 0.0
    for i in range(steps):
        rows = phi[i * batch:(i + 1) * batch]
        dots = rows @ x
        if act == ACT_RAMP:
            vals = ul * dots + (ol - ul) * np.clip(dots, -1.0, 1.0)
        else:
            vals = dots
        res = (vals - eta[i * batch:(i + 1) * batch]) / batch
        g[:] = rows.T @ res
        bi = beta * float(np.mean(np.max(rows * rows, axis=1))) if per_sample else beta
        if not bi > 0.0:
            bi = beta if beta > 0.0 else 1.0
        inv_b = 1.0 / bi
        w -= g * inv_b
        x[:] = _np_vec_mirror(w, x0, p, cn)
        acc += x * inv_b
        wsum += inv_b
    return wsum


def _np_sv_map(sv, p, cn, inverse):
    if p == 2.0:
        return sv / (2.0 * cn) if inverse else 2.0 * cn * sv
    m = sv.max() if sv.size else 0.0
    if m == 0.0:
        return np.zeros_like(sv)
    e = p / (p - 1.0) if inverse else p
    nrm = m * np.sum((sv / m) ** e) ** (1.0 / e)
    if inverse:
        return nrm / (2.0 * cn) * (sv / nrm) ** (1.0 / (p - 1.0))
    return 2.0 * cn * nrm * (sv / nrm) ** (p - 1.0)


def _np_mat_chunk(phi, eta, batch, per_sample, beta, x0, w, x, acc, p, cn):
    steps = phi.shape[0] // batch
    wsum = 0.0
    for i in range(steps):
        rows = phi[i * batch:(i + 1) * batch]
        dots = np.einsum("bij,ij->b", rows, x)
        res = (dots - eta[i * batch:(i + 1) * batch]) / batch
        g = np.einsum("b,bij->ij", res, rows)
        if per_sample:
            bi = beta * float(np.mean(np.linalg.norm(rows, ord=2, axis=(1, 2)) ** 2))
        else:
            bi = beta
        if not bi > 0.0:
            bi = beta if beta > 0.0 else 1.0
        inv_b = 1.0 / bi
        w -= g * inv_b
        u, sv, vt = np.linalg.svd(w, full_matrices=False)
        x[:] = x0 + (u * _np_sv_map(sv, p, cn, True)) @ vt
        acc += x * inv_b
        wsum += inv_b
    return wsum


# ---------------------------------------------------------------------------
# Lasso coordinate descent sweep over the columns ``idx`` of a Fortran-ordered ``A``;
# updates ``x`` and the residual ``r = eta - A x`` in place, returns the largest change


def _nb_cd_sweep(A, r, x, col_sq, idx, lam):
    N = A.shape[0]
    max_delta = 0.0
    for t in range(idx.shape[0]):
        j = idx[t]
        old = x[j]
        z = 0.0
        for i in range(N):
            z += A[i, j] * r[i]
        z = z / N + col_sq[j] * old
        mag = abs(z) - lam
        new = 0.0
        if mag > 0.0:
            new = math.copysign(mag, z) / col_sq[j]
        if new != old:
            d = new - old
            for i in range(N):
                r[i] -= d * A[i, j]
            x[j] = new
            if abs(d) > max_delta:
                max_delta = abs(d)
    return max_delta


def _np_cd_sweep(A, r, x, col_sq, idx, lam):
    N = A.shape[0]
    max_delta = 0.0
    for j in idx:
        a = A[:, j]
        old = x[j]
        z = float(a @ r) / N + col_sq[j] * old
        new = math.copysign(max(abs(z) - lam, 0.0), z) / col_sq[j]
        if new != old:
            r -= (new - old) * a
            x[j] = new
            max_delta = max(max_delta, abs(new - old))
    return max_delta


if USE_NUMBA:
    cd_sweep = _jit(_nb_cd_sweep)
else:
    cd_sweep = _np_cd_sweep

if USE_NUMBA:
    vec_chunk = _jit(_nb_vec_chunk)
    mat_chunk = _jit(_nb_mat_chunk)
else:
    vec_chunk = _np_vec_chunk
    mat_chunk = _np_mat_chunk

# both implementations stay importable for equivalence tests and benchmarks
numpy_vec_chunk = _np_vec_chunk
numpy_mat_chunk = _np_mat_chunk
numpy_cd_sweep = _np_cd_sweep
