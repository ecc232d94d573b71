"""Compiled inner loop for full-batch gradient descent on a stack of MLPs.

Layout: ``ws[l]`` is ``(S, fan_in, fan_out)``, ``bs[l]`` is ``(S, fan_out)``,
``X`` is ``(1 or S, N, d)``, ``Y`` is ``(1 or S, N)`` and ``words[l]`` holds
the raw 32-bit dropout draws ``(members, E, N, h_l)`` of every hidden layer. A
hidden unit survives when its word is ``>= thr`` and is then scaled by
``scale``.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List


@njit(cache=True)
def _dense_forward(inp, W, b, H, G, wmask, thr, scale, dropout):
    N, fan_in = inp.shape
    fan_out = W.shape[1]
    for i in range(N):
        for j in range(fan_out):
            H[i, j] = b[j]
        for k in range(fan_in):
            v = inp[i, k]
            for j in range(fan_out):
                H[i, j] += v * W[k, j]
        # branch-free: masks are random, so branches would mispredict
        if dropout:
            for j in range(fan_out):
                z = H[i, j]
                g = np.float64(z > 0.0) * np.float64(wmask[i, j] >= thr) * scale
                G[i, j] = g
                H[i, j] = z * g
        else:
            for j in range(fan_out):
                z = H[i, j]
                g = np.float64(z > 0.0)
                G[i, j] = g
                H[i, j] = z * g


@njit(cache=True)
def _dense_backward(inp, W, b, D, Dp, Gp, gW, gb, lr, propagate):
    N, fan_in = inp.shape
    fan_out = W.shape[1]
    if propagate:
        for i in range(N):
            for k in range(fan_in):
                acc = 0.0
                for j in range(fan_out):
                    acc += D[i, j] * W[k, j]
                Dp[i, k] = acc * Gp[i, k]
    gW[:, :] = 0.0
    gb[:] = 0.0
    for i in range(N):
        for j in range(fan_out):
            gb[j] += D[i, j]
        for k in range(fan_in):
            v = inp[i, k]
            for j in range(fan_out):
                gW[k, j] += v * D[i, j]
    if lr != 0.0:
        for k in range(fan_in):
            for j in range(fan_out):
                W[k, j] -= lr * gW[k, j]
        for j in range(fan_out):
            b[j] -= lr * gb[j]


@njit(cache=True)
def descend(ws, bs, X, Y, words, thr, scale, dropout, lr, n_epochs, gws, gbs, losses, s0, s1):
    """Run ``n_epochs`` steps of ``w -= lr * grad`` for members ``s0..s1-1``, in place.

    ``words[l]`` is indexed by ``s - s0``.

    ``gws``/``gbs`` receive the gradients of the last step and ``losses[s, e]``
    the mean squared error before step ``e``. A non-finite loss stops that
    member early and is left in ``losses`` for the caller to report.
    """
    L = len(ws)
    N = Y.shape[1]
    acts = List()
    gates = List()
    deltas = List()
    for l in range(L):
        width = ws[l].shape[2]
        if l < L - 1:
            acts.append(np.empty((N, width)))
            gates.append(np.empty((N, width)))
        deltas.append(np.empty((N, width)))
    no_mask = np.zeros((1, 1), dtype=np.uint32)

    for s in range(s0, s1):
        xs = X[0] if X.shape[0] == 1 else X[s]
        ys = Y[0] if Y.shape[0] == 1 else Y[s]
        for e in range(n_epochs):
            inp = xs
            for l in range(L - 1):
                wmask = words[l][s - s0, e] if dropout else no_mask
                _dense_forward(inp, ws[l][s], bs[l][s], acts[l], gates[l], wmask, thr, scale, dropout)
                inp = acts[l]

            W = ws[L - 1][s]
            b0 = bs[L - 1][s][0]
            D = deltas[L - 1]
            sq = 0.0
            for i in range(N):
                acc = b0
                for k in range(W.shape[0]):
                    acc += inp[i, k] * W[k, 0]
                r = acc - ys[i]
                sq += r * r
                D[i, 0] = 2.0 * r / N
            losses[s, e] = sq / N
            if not np.isfinite(sq):
                break

            for l in range(L - 1, -1, -1):
                if l > 0:
                    _dense_backward(acts[l - 1], ws[l][s], bs[l][s], deltas[l], deltas[l - 1], gates[l - 1],
                                    gws[l][s], gbs[l][s], lr, True)
                else:
                    _dense_backward(xs, ws[l][s], bs[l][s], deltas[l], deltas[l], gates[0],
                                    gws[l][s], gbs[l][s], lr, False)
