"""NumPy reference implementations of the hot numeric kernels.

Every function here has a compiled twin in ``_fast`` (Cython).  Both backends
share the exact same signatures; ``rtgnsvdd._kernels`` picks one at import
time.  All arrays are float64; ``x`` may be a single vector ``[n]`` or a
batch of row vectors ``[B, n]``.
"""

import numpy as np

BACKEND_NAME = "pure"


def affine_fwd(x, w, b):
    """y = x @ w.T + b  (row-wise affine map)."""
    return x @ w.T + b


def affine_bwd(gy, x, w):
    """Gradients of the affine map: returns (gx, gw, gb)."""
    if x.ndim == 1:
        return gy @ w, np.outer(gy, x), gy.copy()
    return gy @ w, gy.T @ x, gy.sum(axis=0)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(gy, y):
    return gy * (1.0 - y * y)


def softplus_fwd(x):
    # log(1+exp(x)) with the linear asymptote for x > 30 to avoid overflow.
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def softplus_bwd(gy, x):
    return gy / (1.0 + np.exp(-x))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_fwd(h, m, wz, uz, bz, wr, ur, br, wh, uh, bh):
    """Standard GRU cell; update gate z blends the previous state.

    h: [B,d] or [d] previous state, m: [B,f] or [f] message.
    Returns (h_new, z, r, hbar); the gate activations are cached for the
    backward pass.
    """
    z = _sigmoid(m @ wz.T + h @ uz.T + bz)
    r = _sigmoid(m @ wr.T + h @ ur.T + br)
    hbar = np.tanh(m @ wh.T + (r * h) @ uh.T + bh)
    h_new = z * h + (1.0 - z) * hbar
    return h_new, z, r, hbar


def gru_bwd(ghn, h, m, z, r, hbar, wz, uz, wr, ur, wh, uh):
    """Backward of gru_fwd.

    Returns (gh, gm, gwz, guz, gbz, gwr, gur, gbr, gwh, guh, gbh).
    """
    squeeze = h.ndim == 1
    if squeeze:
        ghn = ghn[None, :]
        h = h[None, :]
        m = m[None, :]
        z = z[None, :]
        r = r[None, :]
        hbar = hbar[None, :]

    rh = r * h
    gz = ghn * (h - hbar)
    ghbar = ghn * (1.0 - z)
    gh = ghn * z

    ghp = ghbar * (1.0 - hbar * hbar)
    gwh = ghp.T @ m
    guh = ghp.T @ rh
    gbh = ghp.sum(axis=0)
    grh = ghp @ uh
    gm = ghp @ wh
    gr = grh * h
    gh = gh + grh * r

    grp = gr * r * (1.0 - r)
    gwr = grp.T @ m
    gur = grp.T @ h
    gbr = grp.sum(axis=0)
    gm = gm + grp @ wr
    gh = gh + grp @ ur

    gzp = gz * z * (1.0 - z)
    gwz = gzp.T @ m
    guz = gzp.T @ h
    gbz = gzp.sum(axis=0)
    gm = gm + gzp @ wz
    gh = gh + gzp @ uz

    if squeeze:
        gh = gh[0]
        gm = gm[0]
    return gh, gm, gwz, guz, gbz, gwr, gur, gbr, gwh, guh, gbh


def time_encode_fwd(dt, omega, phi):
    """cos(dt ⊗ omega + phi): dt [B] -> [B, d_t]; scalar dt -> [d_t]."""
    dt = np.asarray(dt, dtype=np.float64)
    if dt.ndim == 0:
        return np.cos(dt * omega + phi)
    return np.cos(np.outer(dt, omega) + phi)


def time_encode_bwd(gy, dt, omega, phi):
    """Gradients w.r.t. omega and phi (dt is data, never differentiated)."""
    dt = np.asarray(dt, dtype=np.float64)
    if dt.ndim == 0:
        s = -np.sin(dt * omega + phi) * gy
        return s * dt, s
    s = -np.sin(np.outer(dt, omega) + phi) * gy
    return dt @ s, s.sum(axis=0)
