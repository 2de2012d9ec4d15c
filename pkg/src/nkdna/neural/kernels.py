"""Flat-parameter MLP kernels.

Parameters for all layers live in one float64 vector. Layer ``l`` occupies
``sizes[l+1] * sizes[l]`` weight entries (row-major, rows = outputs) followed
by ``sizes[l+1]`` bias entries. Activations are integer codes (``ACT_CODES``).

Two interchangeable backends implement the same three kernels:

* ``numba`` -- explicit loops compiled with ``@njit``
* ``numpy`` -- layer-wise matrix products

The active backend is chosen once at import time. Set ``NKDNA_DISABLE_JIT=1``
(or leave numba uninstalled) to force the numpy path. Both backends are always
reachable through :func:`get_backend` for benchmarking and cross-checks.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

ACT_CODES = {"linear": 0, "tanh": 1, "relu": 2}


def param_count(sizes) -> int:
    return int(sum(sizes[l + 1] * sizes[l] + sizes[l + 1] for l in range(len(sizes) - 1)))


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------

def _np_layers(params, sizes):
    off = 0
    for l in range(len(sizes) - 1):
        nin, nout = int(sizes[l]), int(sizes[l + 1])
        W = params[off:off + nout * nin].reshape(nout, nin)
        off += nout * nin
        b = params[off:off + nout]
        off += nout
        yield W, b


def _np_act(z, code):
    if code == 1:
        return np.tanh(z)
    if code == 2:
        return np.maximum(z, 0.0)
    return z


def _np_dact(z, a, code):
    if code == 1:
        return 1.0 - a * a
    if code == 2:
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def np_forward_batch(params, sizes, acts, X):
    a = X
    for (W, b), code in zip(_np_layers(params, sizes), acts):
        a = _np_act(a @ W.T + b, code)
    return a


def np_grad_batch(params, sizes, acts, X, T, M):
    """Mean over rows of the masked MSE, and its gradient w.r.t. ``params``."""
    layers = list(_np_layers(params, sizes))
    zs, as_ = [], [X]
    a = X
    for (W, b), code in zip(layers, acts):
        z = a @ W.T + b
        a = _np_act(z, code)
        zs.append(z)
        as_.append(a)
    B = X.shape[0]
    Mf = M.astype(np.float64)
    cnt = Mf.sum(axis=1)
    inv = np.where(cnt > 0, 1.0 / np.maximum(cnt, 1.0), 0.0)
    diff = (a - T) * Mf
    loss = float(np.sum(np.sum(diff * diff, axis=1) * inv) / B)
    delta = 2.0 * diff * (inv / B)[:, None]
    grads = []
    for l in range(len(layers) - 1, -1, -1):
        delta = delta * _np_dact(zs[l], as_[l + 1], acts[l])
        gW = delta.T @ as_[l]
        gb = delta.sum(axis=0)
        grads.append((gW, gb))
        if l > 0:
            delta = delta @ layers[l][0]
    out = np.empty_like(params)
    off = 0
    for gW, gb in reversed(grads):
        out[off:off + gW.size] = gW.ravel()
        off += gW.size
        out[off:off + gb.size] = gb
        off += gb.size
    return loss, out


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------

try:
    import numba as nb
except ImportError:  # pragma: no cover - exercised only without numba
    nb = None

if nb is not None:

    @nb.njit(cache=True)
    def _nb_act(z, code):
        if code == 1:
            return np.tanh(z)
        if code == 2:
            return z if z > 0.0 else 0.0
        return z

    @nb.njit(cache=True)
    def _nb_dact(z, a, code):
        if code == 1:
            return 1.0 - a * a
        if code == 2:
            return 1.0 if z > 0.0 else 0.0
        return 1.0

    @nb.njit(cache=True)
    def nb_forward_batch(params, sizes, acts, X):
        B = X.shape[0]
        L = sizes.shape[0] - 1
        width = 0
        for l in range(L + 1):
            if sizes[l] > width:
                width = sizes[l]
        out = np.empty((B, sizes[L]))
        cur = np.empty(width)
        nxt = np.empty(width)
        for r in range(B):
            for j in range(sizes[0]):
                cur[j] = X[r, j]
            off = 0
            for l in range(L):
                nin = sizes[l]
                nout = sizes[l + 1]
                boff = off + nout * nin
                for i in range(nout):
                    acc = 0.0
                    row = off + i * nin
                    for j in range(nin):
                        acc += params[row + j] * cur[j]
                    nxt[i] = _nb_act(acc + params[boff + i], acts[l])
                off = boff + nout
                for i in range(nout):
                    cur[i] = nxt[i]
            for i in range(sizes[L]):
                out[r, i] = cur[i]
        return out

    @nb.njit(cache=True)
    def nb_grad_batch(params, sizes, acts, X, T, M):
        B = X.shape[0]
        L = sizes.shape[0] - 1
        total = 0
        for l in range(L + 1):
            total += sizes[l]
        # a_buf holds activations of every layer (input included); z_buf the
        # pre-activations aligned to the same offsets.
        a_buf = np.empty(total)
        z_buf = np.empty(total)
        starts = np.empty(L + 1, dtype=np.int64)
        poffs = np.empty(L, dtype=np.int64)
        s = 0
        p = 0
        for l in range(L + 1):
            starts[l] = s
            s += sizes[l]
            if l < L:
                poffs[l] = p
                p += sizes[l + 1] * sizes[l] + sizes[l + 1]
        width = 0
        for l in range(L + 1):
            if sizes[l] > width:
                width = sizes[l]
        delta = np.empty(width)
        prev = np.empty(width)
        grad = np.zeros(params.shape[0])
        loss = 0.0
        for r in range(B):
            for j in range(sizes[0]):
                a_buf[j] = X[r, j]
            for l in range(L):
                nin = sizes[l]
                nout = sizes[l + 1]
                off = poffs[l]
                boff = off + nout * nin
                ain = starts[l]
                aout = starts[l + 1]
                for i in range(nout):
                    acc = 0.0
                    row = off + i * nin
                    for j in range(nin):
                        acc += params[row + j] * a_buf[ain + j]
                    z = acc + params[boff + i]
                    z_buf[aout + i] = z
                    a_buf[aout + i] = _nb_act(z, acts[l])
            cnt = 0
            nL = sizes[L]
            oL = starts[L]
            for i in range(nL):
                if M[r, i]:
                    cnt += 1
            if cnt == 0:
                continue
            scale = 1.0 / (cnt * B)
            for i in range(nL):
                if M[r, i]:
                    d = a_buf[oL + i] - T[r, i]
                    loss += d * d * scale
                    delta[i] = 2.0 * d * scale
                else:
                    delta[i] = 0.0
            for l in range(L - 1, -1, -1):
                nin = sizes[l]
                nout = sizes[l + 1]
                off = poffs[l]
                boff = off + nout * nin
                ain = starts[l]
                aout = starts[l + 1]
                for i in range(nout):
                    delta[i] *= _nb_dact(z_buf[aout + i], a_buf[aout + i], acts[l])
                for i in range(nout):
                    di = delta[i]
                    row = off + i * nin
                    for j in range(nin):
                        grad[row + j] += di * a_buf[ain + j]
                    grad[boff + i] += di
                if l > 0:
                    for j in range(nin):
                        acc = 0.0
                        for i in range(nout):
                            acc += params[off + i * nin + j] * delta[i]
                        prev[j] = acc
                    for j in range(nin):
                        delta[j] = prev[j]
        return loss, grad


BACKENDS = {
    "numpy": SimpleNamespace(name="numpy", forward_batch=np_forward_batch, grad_batch=np_grad_batch),
}
if nb is not None:
    BACKENDS["numba"] = SimpleNamespace(
        name="numba", forward_batch=nb_forward_batch, grad_batch=nb_grad_batch
    )


def _pick_default() -> str:
    if os.environ.get("NKDNA_DISABLE_JIT", "").strip() not in ("", "0") or nb is None:
        return "numpy"
    return "numba"


BACKEND = _pick_default()


def get_backend(name: str | None = None):
    """Return the kernel namespace for ``name`` (default: the active backend)."""
    try:
        return BACKENDS[name or BACKEND]
    except KeyError:
        raise ValueError(f"unknown or unavailable kernel backend {name!r}") from None
