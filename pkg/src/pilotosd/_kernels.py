"""Numba kernels for the per-frame hot path.

Binary rows are packed little-endian into uint64 words: column ``c`` lives
in word ``c >> 6`` at bit ``c & 63``.
"""

from __future__ import annotations

import numba as nb
import numpy as np


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a 2-D 0/1 array into ``(rows, ceil(cols/64))`` uint64 words."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    rows, cols = bits.shape
    n_words = (cols + 63) // 64
    padded = np.zeros((rows, n_words * 64), dtype=np.uint8)
    padded[:, :cols] = bits
    by = np.packbits(padded.reshape(rows, n_words * 8, 8), axis=-1, bitorder="little")
    return by.reshape(rows, n_words * 8).view("<u8").copy()


def unpack_rows(words: np.ndarray, cols: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    by = words.view(np.uint8)
    bits = np.unpackbits(by, axis=-1, bitorder="little")
    return bits[..., :cols]


@nb.njit(cache=True)
def systematize_packed(rows, order):
    """Gauss-Jordan elimination in place, pivots taken greedily in ``order``.

    Returns ``(rank, basis)``; on return row ``r`` has its pivot at column
    ``basis[r]`` and every other row is zero there.
    """
    k = rows.shape[0]
    n_words = rows.shape[1]
    basis = np.full(k, -1, dtype=np.int64)
    r = 0
    for idx in range(order.shape[0]):
        if r == k:
            break
        c = order[idx]
        w = c >> 6
        b = np.uint64(c & 63)
        piv = -1
        for i in range(r, k):
            if (rows[i, w] >> b) & np.uint64(1):
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for q in range(n_words):
                tmp = rows[r, q]
                rows[r, q] = rows[piv, q]
                rows[piv, q] = tmp
        for i in range(k):
            if i != r and (rows[i, w] >> b) & np.uint64(1):
                for q in range(n_words):
                    rows[i, q] ^= rows[r, q]
        basis[r] = c
        r += 1
    return r, basis


@nb.njit(cache=True)
def base_codeword(rows, basis, hard):
    """XOR of the systematic rows whose basis hard decision is 1."""
    k, n_words = rows.shape
    out = np.zeros(n_words, dtype=np.uint64)
    for r in range(k):
        c = basis[r]
        if (hard[c >> 6] >> np.uint64(c & 63)) & np.uint64(1):
            for q in range(n_words):
                out[q] ^= rows[r, q]
    return out


@nb.njit(cache=True)
def list_codewords(rows, c0, teps):
    """Packed candidates ``c0 ^ rows[tep]`` for every test-error pattern.

    ``teps`` holds row indices padded with -1, one pattern per line.
    """
    n_cand, depth = teps.shape
    n_words = rows.shape[1]
    out = np.empty((n_cand, n_words), dtype=np.uint64)
    for t in range(n_cand):
        for q in range(n_words):
            out[t, q] = c0[q]
        for d in range(depth):
            r = teps[t, d]
            if r < 0:
                break
            for q in range(n_words):
                out[t, q] ^= rows[r, q]
    return out


@nb.njit(cache=True)
def byte_tables(weights, block_of, n_blocks):
    """Per-byte lookup of sum_j (1 - 2 bit_j) * weights[j], split by block.

    ``weights[j]`` is the complex weight of interleaved position ``j`` and
    ``block_of[j]`` its coherence block (-1 for positions not transmitted).
    """
    n_pos = weights.shape[0]
    n_bytes = (n_pos + 7) // 8
    table = np.zeros((n_bytes, 256, n_blocks), dtype=np.complex128)
    for p in range(n_bytes):
        for v in range(256):
            for b in range(8):
                j = 8 * p + b
                if j >= n_pos:
                    break
                blk = block_of[j]
                if blk < 0:
                    continue
                if (v >> b) & 1:
                    table[p, v, blk] -= weights[j]
                else:
                    table[p, v, blk] += weights[j]
    return table


@nb.njit(cache=True)
def list_correlations(rows, c0, teps, table, byte_lo, byte_hi):
    """Block correlations of every OSD candidate via the byte tables.

    ``byte_lo[p]..byte_hi[p]`` bounds the blocks touched by byte ``p``; bytes
    with ``byte_lo > byte_hi`` carry no transmitted position and are skipped.
    """
    n_cand, depth = teps.shape
    n_words = rows.shape[1]
    n_bytes = table.shape[0]
    n_blocks = table.shape[2]
    out = np.zeros((n_cand, n_blocks), dtype=np.complex128)
    cw = np.empty(n_words, dtype=np.uint64)
    for t in range(n_cand):
        for q in range(n_words):
            cw[q] = c0[q]
        for d in range(depth):
            r = teps[t, d]
            if r < 0:
                break
            for q in range(n_words):
                cw[q] ^= rows[r, q]
        for p in range(n_bytes):
            lo = byte_lo[p]
            hi = byte_hi[p]
            if lo > hi:
                continue
            v = (cw[p >> 3] >> np.uint64(8 * (p & 7))) & np.uint64(255)
            for blk in range(lo, hi + 1):
                out[t, blk] += table[p, v, blk]
    return out


@nb.njit(cache=True)
def mixture_importance(y, gamma, beta, u, A, log_pi, cum, u_comp, u_sym):
    """Log-mean importance weight of ``exp(gamma|S|^2 + Re(conj(beta) S))`` per block.

    Each proposal component ``c`` draws symbols independently with
    ``P(Re x = +1/sqrt2) = sigmoid(sqrt2 Re(conj(u_c) y_j))`` and likewise for
    the imaginary part; its log-density relative to the uniform law is
    ``Re(conj(u_c) S) - A[c]``. ``u_comp`` and ``u_sym`` hold the uniforms.
    """
    rows, m = y.shape
    n_comp = u.shape[1]
    n_inner = u_comp.shape[1]
    inv = 1.0 / np.sqrt(2.0)
    out = np.empty(rows)
    logw = np.empty(n_inner)
    terms = np.empty(n_comp)
    p_re = np.empty((n_comp, m))
    p_im = np.empty((n_comp, m))
    for r in range(rows):
        for c in range(n_comp):
            for j in range(m):
                v = np.conj(u[r, c]) * y[r, j]
                p_re[c, j] = 0.5 * (1.0 + np.tanh(v.real * inv))
                p_im[c, j] = 0.5 * (1.0 + np.tanh(v.imag * inv))
        for t in range(n_inner):
            c = 0
            while c < n_comp - 1 and cum[r, c] <= u_comp[r, t]:
                c += 1
            s_re = 0.0
            s_im = 0.0
            for j in range(m):
                xr = inv if u_sym[r, t, j, 0] < p_re[c, j] else -inv
                xi = inv if u_sym[r, t, j, 1] < p_im[c, j] else -inv
                # S += y_j * conj(x_j)
                s_re += y[r, j].real * xr + y[r, j].imag * xi
                s_im += y[r, j].imag * xr - y[r, j].real * xi
            top = -np.inf
            for k in range(n_comp):
                val = log_pi[r, k] + (u[r, k].real * s_re + u[r, k].imag * s_im) - A[r, k]
                terms[k] = val
                if val > top:
                    top = val
            acc = 0.0
            for k in range(n_comp):
                acc += np.exp(terms[k] - top)
            log_ratio = top + np.log(acc)
            f = gamma[r] * (s_re * s_re + s_im * s_im) + beta[r].real * s_re + beta[r].imag * s_im
            logw[t] = f - log_ratio
        top = logw.max()
        acc = 0.0
        for t in range(n_inner):
            acc += np.exp(logw[t] - top)
        out[r] = top + np.log(acc / n_inner)
    return out
