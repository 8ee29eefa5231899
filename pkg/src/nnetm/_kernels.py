"""Compiled fuzzy-rollout forward/backward loops used by training.

Same arithmetic as :mod:`nnetm.fuzzy`'s numpy path, on a flat parameter
vector laid out as ``Mlp.get_flat()`` (W0 row-major, b0, W1, b1, ...).
"""

import numpy as np
from numba import njit

LOGIT_CLIP = 30.0


def layout(dims):
    dims = np.asarray(dims, dtype=np.int64)
    L = dims.size - 1
    off_w = np.zeros(L, dtype=np.int64)
    off_b = np.zeros(L, dtype=np.int64)
    act_off = np.zeros(L + 1, dtype=np.int64)
    pos = 0
    for l in range(L):
        off_w[l] = pos
        pos += dims[l] * dims[l + 1]
        off_b[l] = pos
        pos += dims[l + 1]
    for l in range(L):
        act_off[l + 1] = act_off[l] + dims[l]
    return dims, off_w, off_b, act_off


@njit(cache=True)
def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@njit(cache=True)
def _mlp_row(theta, dims, off_w, off_b, act_off, act):
    """Forward one row whose scaled inputs already sit in act[0:dims[0]]."""
    L = dims.size - 1
    logit = 0.0
    for l in range(L):
        din = dims[l]
        dout = dims[l + 1]
        for o in range(dout):
            s = theta[off_b[l] + o]
            for j in range(din):
                s += act[act_off[l] + j] * theta[off_w[l] + j * dout + o]
            if l < L - 1:
                act[act_off[l + 1] + o] = s if s > 0.0 else 0.0
            else:
                logit = s
    return logit


@njit(cache=True)
def _mlp_row_backward(theta, dims, off_w, off_b, act_off, act, g_out, grad, cur, nxt):
    """Accumulate parameter grads into ``grad``; returns input grads in ``cur``."""
    L = dims.size - 1
    cur[0] = g_out
    for l in range(L - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        for o in range(dout):
            grad[off_b[l] + o] += cur[o]
        for j in range(din):
            a = act[act_off[l] + j]
            acc = 0.0
            base = off_w[l] + j * dout
            for o in range(dout):
                grad[base + o] += a * cur[o]
                acc += theta[base + o] * cur[o]
            if l > 0 and a <= 0.0:
                acc = 0.0
            nxt[j] = acc
        for j in range(din):
            cur[j] = nxt[j]


@njit(cache=True)
def fuzzy_forward(theta, dims, off_w, off_b, act_off, fmean, fstd, z0, dr, deg, adj, lap,
                  h, kappa, sigma, epsilon, alpha, eta_fixed, learned):
    K = dr.shape[0] - 1
    B, N = z0.shape
    A = act_off[-1]
    zs = np.empty((K + 1, B, N))
    held_prev = np.empty((K, B, N))
    tau_prev = np.empty((K, B, N))
    nus = np.empty((K, B, N))
    signs = np.empty((K, B, N))
    etas = np.empty((K, B, N))
    acts = np.zeros((K, B, N, A)) if learned else np.zeros((1, 1, 1, A))
    logits = np.zeros((K, B, N))
    z = z0.copy()
    held = z0.copy()
    tau = np.zeros((B, N))
    zs[0] = z
    act = np.empty(A)
    for k in range(K):
        t = k * h
        for b in range(B):
            for i in range(N):
                if learned:
                    nb = 0.0
                    for j in range(N):
                        nb += adj[i, j] * held[b, j]
                    act[0] = (deg[i] * z[b, i] - nb - fmean[0]) / fstd[0]
                    act[1] = (t - tau[b, i] - fmean[1]) / fstd[1]
                    lg = _mlp_row(theta, dims, off_w, off_b, act_off, act)
                    logits[k, b, i] = lg
                    if lg > LOGIT_CLIP:
                        lg = LOGIT_CLIP
                    elif lg < -LOGIT_CLIP:
                        lg = -LOGIT_CLIP
                    eta = _sigmoid(lg)
                    for a in range(A):
                        acts[k, b, i, a] = act[a]
                else:
                    eta = eta_fixed
                etas[k, b, i] = eta
        for b in range(B):
            for i in range(N):
                held_prev[k, b, i] = held[b, i]
                tau_prev[k, b, i] = tau[b, i]
                e = z[b, i] - held[b, i]
                signs[k, b, i] = np.sign(e)
                if k == 0:
                    nu = 1.0
                else:
                    nu = _sigmoid(alpha * (abs(e) - (sigma * etas[k, b, i] + epsilon)))
                nus[k, b, i] = nu
                held[b, i] = nu * z[b, i] + (1.0 - nu) * held[b, i]
                tau[b, i] = nu * t + (1.0 - nu) * tau[b, i]
        for b in range(B):
            for i in range(N):
                c = 0.0
                for j in range(N):
                    c += lap[i, j] * held[b, j]
                zs[k + 1, b, i] = z[b, i] + h * (dr[k, b, i] - kappa * c)
            for i in range(N):
                z[b, i] = zs[k + 1, b, i]
    return zs, held_prev, tau_prev, nus, signs, etas, acts, logits


@njit(cache=True)
def fuzzy_backward(theta, dims, off_w, off_b, act_off, fstd, zs, held_prev, tau_prev, nus,
                   signs, etas, acts, logits, deg, adj, lap, h, kappa, sigma, alpha,
                   zw, nw, ew, eta_target):
    K = nus.shape[0]
    B = zs.shape[1]
    N = zs.shape[2]
    grad = np.zeros(theta.size)
    width = 1
    for l in range(dims.size):
        if dims[l] > width:
            width = dims[l]
    cur = np.zeros(width)
    nxt = np.zeros(width)
    gz = np.zeros((B, N))
    gb = np.zeros((B, N))
    gtau = np.zeros((B, N))
    gheld = np.zeros((B, N))
    for b in range(B):
        mean = 0.0
        for i in range(N):
            mean += zs[K, b, i]
        mean /= N
        for i in range(N):
            gz[b, i] = 2.0 * zw[b] * (zs[K, b, i] - mean)
    for k in range(K - 1, 0, -1):
        t = k * h
        for b in range(B):
            for i in range(N):
                c = 0.0
                for j in range(N):
                    c += gz[b, j] * lap[j, i]
                gheld[b, i] = gb[b, i] - h * kappa * c
        for b in range(B):
            for i in range(N):
                gb[b, i] = 0.0
        for b in range(B):
            mean = 0.0
            for i in range(N):
                mean += zs[k, b, i]
            mean /= N
            for i in range(N):
                nu = nus[k, b, i]
                gnu = gheld[b, i] * (zs[k, b, i] - held_prev[k, b, i]) \
                    + gtau[b, i] * (t - tau_prev[k, b, i]) + nw[b]
                gzk = gz[b, i] + gheld[b, i] * nu
                gb[b, i] += gheld[b, i] * (1.0 - nu)
                gt = gtau[b, i] * (1.0 - nu)
                ga = gnu * nu * (1.0 - nu) * alpha
                gzk += ga * signs[k, b, i]
                gb[b, i] -= ga * signs[k, b, i]
                eta = etas[k, b, i]
                geta = -sigma * ga + 2.0 * ew[b] * (eta - eta_target)
                lg = logits[k, b, i]
                if lg > LOGIT_CLIP or lg < -LOGIT_CLIP:
                    g_out = 0.0
                else:
                    g_out = geta * eta * (1.0 - eta)
                _mlp_row_backward(theta, dims, off_w, off_b, act_off, acts[k, b, i],
                                  g_out, grad, cur, nxt)
                gs = cur[0] / fstd[0]
                gd = cur[1] / fstd[1]
                gzk += gs * deg[i]
                for j in range(N):
                    gb[b, j] -= gs * adj[i, j]
                gt -= gd
                gz[b, i] = gzk + 2.0 * zw[b] * (zs[k, b, i] - mean)
                gtau[b, i] = gt
    return grad
