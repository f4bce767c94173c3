"""Compiled training inner loops.

One call runs a full epoch of mini-batch Adam for one client: gather batch,
forward, backward, pack the flat gradient, update parameters in place. The
arithmetic mirrors `nn.loss_and_grad` + `nn.adam_step` (same BLAS calls, same
mean-over-batch scaling); `tests/test_nn.py` pins the two paths together to
floating-point noise. fastmath stays off so results are bitwise reproducible.

Both kernels assume the two-hidden-layer architectures the run config allows.
The GNN kernel consumes pre-aggregated node features (A_hat @ X computed once
per shard) and applies the second-layer aggregation through sparse adjacency
entries in row-major order.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _adam_update(flat, grad, m, v, t, lr, beta1, beta2, eps):
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for i in range(flat.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        flat[i] -= lr * (m[i] / c1) / (math.sqrt(v[i] / c2) + eps)


@njit(cache=True)
def mlp_epoch(
    x, y, perm, batch_size, flat, m, v, t_start, lr, beta1, beta2, eps,
    in_dim, h1_dim, h2_dim, out_dim,
):
    """One epoch of mini-batch Adam on the 2-hidden-layer MLP.

    Returns (mean cross-entropy over the epoch, adam step counter).
    """
    n = x.shape[0]
    p = 0
    W1 = flat[p : p + in_dim * h1_dim].reshape(in_dim, h1_dim); p += in_dim * h1_dim
    b1 = flat[p : p + h1_dim]; p += h1_dim
    W2 = flat[p : p + h1_dim * h2_dim].reshape(h1_dim, h2_dim); p += h1_dim * h2_dim
    b2 = flat[p : p + h2_dim]; p += h2_dim
    W3 = flat[p : p + h2_dim * out_dim].reshape(h2_dim, out_dim); p += h2_dim * out_dim
    b3 = flat[p : p + out_dim]

    grad = np.empty(flat.shape[0])
    total_loss = 0.0
    t = t_start
    n_batches = (n + batch_size - 1) // batch_size
    for blk in range(n_batches):
        lo = blk * batch_size
        hi = min(lo + batch_size, n)
        bs = hi - lo
        xb = np.empty((bs, in_dim))
        yb = np.empty(bs, dtype=np.int64)
        for s in range(bs):
            idx = perm[lo + s]
            yb[s] = y[idx]
            for k in range(in_dim):
                xb[s, k] = x[idx, k]

        h1 = np.dot(xb, W1)
        for r in range(bs):
            for c in range(h1_dim):
                h1[r, c] += b1[c]
                if h1[r, c] < 0.0:
                    h1[r, c] = 0.0
        h2 = np.dot(h1, W2)
        for r in range(bs):
            for c in range(h2_dim):
                h2[r, c] += b2[c]
                if h2[r, c] < 0.0:
                    h2[r, c] = 0.0
        logits = np.dot(h2, W3)

        # Softmax + cross entropy; `logits` becomes dloss/dlogits (mean over batch).
        inv = 1.0 / bs
        for r in range(bs):
            mx = -1.0e300
            for c in range(out_dim):
                logits[r, c] += b3[c]
                if logits[r, c] > mx:
                    mx = logits[r, c]
            sm = 0.0
            for c in range(out_dim):
                e = math.exp(logits[r, c] - mx)
                logits[r, c] = e
                sm += e
            total_loss += -math.log(logits[r, yb[r]] / sm)
            for c in range(out_dim):
                logits[r, c] = logits[r, c] / sm * inv
            logits[r, yb[r]] -= inv

        gW3 = np.dot(h2.T, logits)
        dh2 = np.dot(logits, W3.T)
        gb3 = np.empty(out_dim)
        for c in range(out_dim):
            acc = 0.0
            for r in range(bs):
                acc += logits[r, c]
            gb3[c] = acc
        for r in range(bs):
            for c in range(h2_dim):
                if h2[r, c] <= 0.0:
                    dh2[r, c] = 0.0
        gW2 = np.dot(h1.T, dh2)
        dh1 = np.dot(dh2, W2.T)
        gb2 = np.empty(h2_dim)
        for c in range(h2_dim):
            acc = 0.0
            for r in range(bs):
                acc += dh2[r, c]
            gb2[c] = acc
        for r in range(bs):
            for c in range(h1_dim):
                if h1[r, c] <= 0.0:
                    dh1[r, c] = 0.0
        gW1 = np.dot(xb.T, dh1)
        gb1 = np.empty(h1_dim)
        for c in range(h1_dim):
            acc = 0.0
            for r in range(bs):
                acc += dh1[r, c]
            gb1[c] = acc

        q = 0
        for i in range(in_dim):
            for j in range(h1_dim):
                grad[q] = gW1[i, j]; q += 1
        for j in range(h1_dim):
            grad[q] = gb1[j]; q += 1
        for i in range(h1_dim):
            for j in range(h2_dim):
                grad[q] = gW2[i, j]; q += 1
        for j in range(h2_dim):
            grad[q] = gb2[j]; q += 1
        for i in range(h2_dim):
            for j in range(out_dim):
                grad[q] = gW3[i, j]; q += 1
        for j in range(out_dim):
            grad[q] = gb3[j]; q += 1

        t += 1
        _adam_update(flat, grad, m, v, t, lr, beta1, beta2, eps)
    return total_loss / n, t


@njit(cache=True)
def gnn_epoch(
    x_agg, y, perm, batch_size, flat, m, v, t_start, lr, beta1, beta2, eps,
    adj_i, adj_j, adj_v, n_nodes, f_dim, c1_dim, c2_dim,
):
    """One epoch of mini-batch Adam on the 2-layer graph-convolution model.

    ``x_agg`` is A_hat @ X per sample, shape (n, n_nodes, f_dim); the
    (adj_i, adj_j, adj_v) triplets are the nonzeros of A_hat row-major.
    Returns (mean cross-entropy over the epoch, adam step counter).
    """
    n = x_agg.shape[0]
    nnz = adj_v.shape[0]
    p = 0
    W1 = flat[p : p + f_dim * c1_dim].reshape(f_dim, c1_dim); p += f_dim * c1_dim
    W2 = flat[p : p + c1_dim * c2_dim].reshape(c1_dim, c2_dim); p += c1_dim * c2_dim
    w_read = flat[p : p + c2_dim]; p += c2_dim
    b_read = flat[p : p + 1]

    grad = np.empty(flat.shape[0])
    dlog = np.empty((batch_size, n_nodes))
    total_loss = 0.0
    t = t_start
    n_batches = (n + batch_size - 1) // batch_size
    for blk in range(n_batches):
        lo = blk * batch_size
        hi = min(lo + batch_size, n)
        bs = hi - lo
        rows = bs * n_nodes
        xb = np.empty((rows, f_dim))
        yb = np.empty(bs, dtype=np.int64)
        for s in range(bs):
            idx = perm[lo + s]
            yb[s] = y[idx]
            base = s * n_nodes
            for i in range(n_nodes):
                for k in range(f_dim):
                    xb[base + i, k] = x_agg[idx, i, k]

        h1 = np.dot(xb, W1)
        for r in range(rows):
            for c in range(c1_dim):
                if h1[r, c] < 0.0:
                    h1[r, c] = 0.0
        mm = np.dot(h1, W2)
        h2 = np.zeros((rows, c2_dim))
        for s in range(bs):
            base = s * n_nodes
            for e in range(nnz):
                i = adj_i[e]
                j = adj_j[e]
                a = adj_v[e]
                for c in range(c2_dim):
                    h2[base + i, c] += a * mm[base + j, c]
        for r in range(rows):
            for c in range(c2_dim):
                if h2[r, c] < 0.0:
                    h2[r, c] = 0.0

        inv = 1.0 / bs
        for s in range(bs):
            base = s * n_nodes
            mx = -1.0e300
            for i in range(n_nodes):
                acc = b_read[0]
                for c in range(c2_dim):
                    acc += h2[base + i, c] * w_read[c]
                dlog[s, i] = acc
                if acc > mx:
                    mx = acc
            sm = 0.0
            for i in range(n_nodes):
                e = math.exp(dlog[s, i] - mx)
                dlog[s, i] = e
                sm += e
            total_loss += -math.log(dlog[s, yb[s]] / sm)
            for i in range(n_nodes):
                dlog[s, i] = dlog[s, i] / sm * inv
            dlog[s, yb[s]] -= inv

        g_read = np.zeros(c2_dim)
        g_bread = 0.0
        dz2 = np.empty((rows, c2_dim))
        for s in range(bs):
            base = s * n_nodes
            for i in range(n_nodes):
                d = dlog[s, i]
                g_bread += d
                for c in range(c2_dim):
                    g_read[c] += d * h2[base + i, c]
                    if h2[base + i, c] > 0.0:
                        dz2[base + i, c] = d * w_read[c]
                    else:
                        dz2[base + i, c] = 0.0
        dm = np.zeros((rows, c2_dim))
        for s in range(bs):
            base = s * n_nodes
            for e in range(nnz):
                i = adj_i[e]
                j = adj_j[e]
                a = adj_v[e]
                for c in range(c2_dim):
                    dm[base + i, c] += a * dz2[base + j, c]
        gW2 = np.dot(h1.T, dm)
        dh1 = np.dot(dm, W2.T)
        for r in range(rows):
            for c in range(c1_dim):
                if h1[r, c] <= 0.0:
                    dh1[r, c] = 0.0
        gW1 = np.dot(xb.T, dh1)

        q = 0
        for i in range(f_dim):
            for j in range(c1_dim):
                grad[q] = gW1[i, j]; q += 1
        for i in range(c1_dim):
            for j in range(c2_dim):
                grad[q] = gW2[i, j]; q += 1
        for c in range(c2_dim):
            grad[q] = g_read[c]; q += 1
        grad[q] = g_bread

        t += 1
        _adam_update(flat, grad, m, v, t, lr, beta1, beta2, eps)
    return total_loss / n, t


def adjacency_triplets(a_hat: np.ndarray):
    """Row-major nonzeros of the normalized adjacency for the GNN kernel."""
    ai, aj = np.nonzero(a_hat)
    return ai.astype(np.int64), aj.astype(np.int64), a_hat[ai, aj].astype(np.float64)


def warm_up():
    """Trigger JIT compilation once (cheap dummy shapes, cached on disk)."""
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 8))
    y = np.array([0, 1, 2, 3], dtype=np.int64)
    perm = np.arange(4, dtype=np.int64)
    n_params = 8 * 8 + 8 + 8 * 8 + 8 + 8 * 4 + 4
    flat = rng.standard_normal(n_params) * 0.1
    mlp_epoch(
        x, y, perm, 2, flat, np.zeros(n_params), np.zeros(n_params), 0,
        1e-3, 0.9, 0.999, 1e-8, 8, 8, 8, 4,
    )
    a_hat = np.eye(4)
    ai, aj, av = adjacency_triplets(a_hat)
    xg = rng.standard_normal((4, 4, 3))
    n_params = 3 * 8 + 8 * 8 + 8 + 1
    flat = rng.standard_normal(n_params) * 0.1
    gnn_epoch(
        xg, y, perm, 2, flat, np.zeros(n_params), np.zeros(n_params), 0,
        1e-3, 0.9, 0.999, 1e-8, ai, aj, av, 4, 3, 8, 8,
    )
