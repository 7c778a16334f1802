"""Hot loops: sketch construction and the min-abs contraction step.

Each public kernel dispatches to a numba implementation or to its numpy
twin depending on :data:`compass._backend.USE_NUMBA`.  The twins are kept
importable under ``*_numpy`` / ``*_numba`` names so tests and the
benchmark script can compare them directly.
"""

import numpy as np

from . import _field
from ._backend import USE_NUMBA, njit
from ._field import nb_bucket, nb_reduce, nb_xi

# -- Fast-AGMS build ----------------------------------------------------------


def fa_build_numpy(keys, hash_c, xi_c, b):
    r = hash_c.shape[0]
    out = np.zeros((r, b), dtype=np.int64)
    if len(keys) == 0:
        return out
    x = _field.reduce_key(keys)
    for i in range(r):
        j = (_field.poly_eval(hash_c[i], x) % np.uint64(b)).astype(np.intp)
        pos = (_field.poly_eval(xi_c[i], x) & np.uint64(1)).astype(bool)
        out[i] += np.bincount(j[pos], minlength=b)
        out[i] -= np.bincount(j[~pos], minlength=b)
    return out


@njit
def _fa_build_nb(keys, hash_c, xi_c, b):
    r = hash_c.shape[0]
    out = np.zeros((r, b), dtype=np.int64)
    bb = np.uint64(b)
    for t in range(keys.shape[0]):
        x = nb_reduce(keys[t])
        for i in range(r):
            out[i, nb_bucket(hash_c[i], x, bb)] += nb_xi(xi_c[i], x)
    return out


def fa_build_numba(keys, hash_c, xi_c, b):
    return _fa_build_nb(np.ascontiguousarray(keys, dtype=np.uint64), hash_c, xi_c, int(b))


# -- partitioned build --------------------------------------------------------


def part_build_numpy(keys, hash_c, xi_c, dims):
    # keys: (n, k); hash_c: (r, k, 2); xi_c: (r, k, 4)
    r, k = hash_c.shape[:2]
    size = int(np.prod(dims))
    out = np.zeros((r, size), dtype=np.int64)
    if len(keys) == 0:
        return out
    strides = _strides(dims)
    x = _field.reduce_key(keys)
    for i in range(r):
        cell = np.zeros(len(keys), dtype=np.intp)
        sign = np.ones(len(keys), dtype=np.int64)
        for d in range(k):
            j = (_field.poly_eval(hash_c[i, d], x[:, d]) % np.uint64(dims[d])).astype(np.intp)
            cell += j * strides[d]
            sign *= (_field.poly_eval(xi_c[i, d], x[:, d]) & np.uint64(1)).astype(np.int64) * 2 - 1
        out[i] += np.bincount(cell[sign > 0], minlength=size)
        out[i] -= np.bincount(cell[sign < 0], minlength=size)
    return out


@njit
def _part_build_nb(keys, hash_c, xi_c, dims, strides):
    r = hash_c.shape[0]
    k = hash_c.shape[1]
    size = 1
    for d in range(k):
        size *= dims[d]
    out = np.zeros((r, size), dtype=np.int64)
    for t in range(keys.shape[0]):
        for i in range(r):
            cell = 0
            sign = 1
            for d in range(k):
                x = nb_reduce(keys[t, d])
                cell += nb_bucket(hash_c[i, d], x, np.uint64(dims[d])) * strides[d]
                sign *= nb_xi(xi_c[i, d], x)
            out[i, cell] += sign
    return out


def part_build_numba(keys, hash_c, xi_c, dims):
    dims = np.asarray(dims, dtype=np.int64)
    keys = np.ascontiguousarray(keys, dtype=np.uint64).reshape(-1, len(dims))
    return _part_build_nb(keys, hash_c, xi_c, dims, np.asarray(_strides(dims), dtype=np.int64))


def _strides(dims):
    strides = [1] * len(dims)
    for d in range(len(dims) - 2, -1, -1):
        strides[d] = strides[d + 1] * int(dims[d + 1])
    return strides


# -- AGMS build ----------------------------------------------------------------

_AGMS_CHUNK = 1 << 22


def agms_build_numpy(keys, counts, xi_c):
    # keys: (n, E) distinct tuples, counts: (n,), xi_c: (E, R, 4) -> int64[R]
    n, e_count = keys.shape
    inst = xi_c.shape[1]
    out = np.zeros(inst, dtype=np.int64)
    if n == 0:
        return out
    x = _field.reduce_key(keys)
    step = max(1, _AGMS_CHUNK // n)
    for lo in range(0, inst, step):
        hi = min(inst, lo + step)
        prod = np.broadcast_to(counts.astype(np.int64), (hi - lo, n)).copy()
        for e in range(e_count):
            c = xi_c[e, lo:hi]
            xe = x[None, :, e]
            acc = np.broadcast_to(c[:, 3:4], (hi - lo, n))
            for d in (2, 1, 0):
                acc = _field.addmod(_field.mulmod(acc, xe), c[:, d : d + 1])
            prod *= (acc & np.uint64(1)).astype(np.int64) * 2 - 1
        out[lo:hi] = prod.sum(axis=1)
    return out


@njit
def _agms_build_nb(keys, counts, xi_c):
    n = keys.shape[0]
    e_count = keys.shape[1]
    inst = xi_c.shape[1]
    out = np.zeros(inst, dtype=np.int64)
    red = np.empty((n, e_count), dtype=np.uint64)
    for t in range(n):
        for e in range(e_count):
            red[t, e] = nb_reduce(keys[t, e])
    for q in range(inst):
        s = 0
        for t in range(n):
            v = counts[t]
            for e in range(e_count):
                v *= nb_xi(xi_c[e, q], red[t, e])
            s += v
        out[q] = s
    return out


def agms_build_numba(keys, counts, xi_c):
    return _agms_build_nb(
        np.ascontiguousarray(keys, dtype=np.uint64),
        np.ascontiguousarray(counts, dtype=np.int64),
        xi_c,
    )


# -- min-abs selection step ---------------------------------------------------


def select_step_numpy(F, key_a, val_a, key_b, val_b):
    """Contract a frontier with a selector factor.

    ``F`` has shape (R, nO, nC).  Over the closed index space the factor's
    winning candidate has key ``key_a`` and payoff ``val_a``; over the new
    index space ``key_b`` / ``val_b``.  The factor's value is the payoff of
    whichever side has the smaller key.  Returns (R, nO, nN)::

        out[o, n] = sum_c F[o, c] * (val_a[c] if key_a[c] < key_b[n] else val_b[n])
    """
    R, n_o, n_c = F.shape
    n_n = key_b.shape[1]
    out = np.empty((R, n_o, n_n))
    p1 = np.zeros((n_o, n_c + 1))
    p0 = np.zeros((n_o, n_c + 1))
    for r in range(R):
        perm = np.argsort(key_a[r], kind="stable")
        fp = F[r][:, perm]
        np.cumsum(fp * val_a[r][perm][None, :], axis=1, out=p1[:, 1:])
        np.cumsum(fp, axis=1, out=p0[:, 1:])
        pos = np.searchsorted(key_a[r][perm], key_b[r])
        out[r] = p1[:, pos] + val_b[r][None, :] * (p0[:, n_c : n_c + 1] - p0[:, pos])
    return out


@njit
def _select_step_nb(F, key_a, val_a, key_b, val_b):
    R, n_o, n_c = F.shape
    n_n = key_b.shape[1]
    out = np.empty((R, n_o, n_n))
    p1 = np.zeros(n_c + 1)
    p0 = np.zeros(n_c + 1)
    for r in range(R):
        perm = np.argsort(key_a[r], kind="mergesort")
        ks = key_a[r][perm]
        va = val_a[r][perm]
        pos = np.searchsorted(ks, key_b[r])
        for o in range(n_o):
            for c in range(n_c):
                f = F[r, o, perm[c]]
                p1[c + 1] = p1[c] + f * va[c]
                p0[c + 1] = p0[c] + f
            tot = p0[n_c]
            for n in range(n_n):
                q = pos[n]
                out[r, o, n] = p1[q] + val_b[r, n] * (tot - p0[q])
    return out


def select_step_numba(F, key_a, val_a, key_b, val_b):
    return _select_step_nb(
        np.ascontiguousarray(F, dtype=np.float64),
        np.ascontiguousarray(key_a, dtype=np.int64),
        np.ascontiguousarray(val_a, dtype=np.float64),
        np.ascontiguousarray(key_b, dtype=np.int64),
        np.ascontiguousarray(val_b, dtype=np.float64),
    )


def close_step_numpy(F, val_a):
    """Step with no new edges: ``out[o] = sum_c F[o, c] * val_a[c]`` (sequential order)."""
    prod = F * val_a[:, None, :]
    return np.cumsum(prod, axis=2)[:, :, -1]


@njit
def _close_step_nb(F, val_a):
    R, n_o, n_c = F.shape
    out = np.zeros((R, n_o))
    for r in range(R):
        for o in range(n_o):
            s = 0.0
            for c in range(n_c):
                s = s + F[r, o, c] * val_a[r, c]
            out[r, o] = s
    return out


def close_step_numba(F, val_a):
    return _close_step_nb(
        np.ascontiguousarray(F, dtype=np.float64), np.ascontiguousarray(val_a, dtype=np.float64)
    )


# -- fused select step ---------------------------------------------------------


def select_fused_numpy(F, implicit, key_a, val_a, key_b, val_b, last=None, sortpos=None):
    """:func:`select_step` with an optional implicit frontier and fused final close.

    With ``implicit = (keyO, payO, keyC, payC)`` the frontier is the selector
    ``F[o, c] = payO[o] if keyO[o] < keyC[c] else payC[c]`` and ``F`` is
    ignored.  With ``last = (keyLo, payLo, keyLn, payLn)`` the result is
    immediately contracted against that final selector over (o, n) and
    returned with shape (R, 1, 1).
    """
    if implicit is not None:
        keyO, payO, keyC, payC = implicit
        F = combine_pair_numpy(keyO, payO, keyC, payC)[1].reshape(keyO.shape[0], keyO.shape[1], keyC.shape[1])
    out = select_step_numpy(F, key_a, val_a, key_b, val_b)
    if last is None:
        return out
    R, n_o, n_n = out.shape
    tl = combine_pair_numpy(*last)[1].reshape(R, n_o, n_n)
    return np.cumsum((out * tl).reshape(R, -1), axis=1)[:, -1].reshape(R, 1, 1)


_BLOCK = 64


@njit
def _select_fused_nb(F, implicit, keyO, payO, keyC, payC, perms, poss, val_a, val_b, close, keyLo, payLo, keyLn, payLn):
    R, n_c = perms.shape
    n_n = poss.shape[1]
    n_o = keyO.shape[1] if implicit else F.shape[1]
    if close:
        out = np.zeros((R, 1, 1))
    else:
        out = np.empty((R, n_o, n_n))
    # prefix sums for a block of frontier rows at once: independent chains vectorise
    p1 = np.zeros((n_c + 1, _BLOCK))
    p0 = np.zeros((n_c + 1, _BLOCK))
    run1 = np.zeros(_BLOCK)
    run0 = np.zeros(_BLOCK)
    fb = np.zeros(_BLOCK)
    ko = np.zeros(_BLOCK, dtype=np.int64)
    po = np.zeros(_BLOCK)
    klo = np.zeros(_BLOCK, dtype=np.int64)
    plo = np.zeros(_BLOCK)
    tot = np.zeros(_BLOCK)
    acc = np.zeros(_BLOCK)
    bt = np.zeros((0 if implicit else n_c, _BLOCK))
    o_fast = not implicit and F.strides[1] < F.strides[2]
    for r in range(R):
        perm = perms[r]
        va = val_a[r][perm]
        pos = poss[r]
        kc = keyC[r][perm] if implicit else perm
        pc = payC[r][perm] if implicit else va
        acc[:] = 0.0
        for ob in range(0, n_o, _BLOCK):
            m = min(_BLOCK, n_o - ob)
            run1[:] = 0.0
            run0[:] = 0.0
            if implicit:
                ko[:m] = keyO[r, ob : ob + m]
                po[:m] = payO[r, ob : ob + m]
            elif o_fast:
                for c in range(n_c):
                    pc_ = perm[c]
                    for j in range(m):
                        bt[c, j] = F[r, ob + j, pc_]
            else:
                for j in range(m):
                    for c in range(n_c):
                        bt[c, j] = F[r, ob + j, perm[c]]
            for c in range(n_c):
                vc = va[c]
                if implicit:
                    kcc = kc[c]
                    pcc = pc[c]
                    for j in range(m):
                        fb[j] = po[j] if ko[j] < kcc else pcc
                else:
                    for j in range(m):
                        fb[j] = bt[c, j]
                for j in range(m):
                    run1[j] += fb[j] * vc
                    run0[j] += fb[j]
                p1[c + 1, :] = run1
                p0[c + 1, :] = run0
            tot[:] = run0
            if close:
                klo[:m] = keyLo[r, ob : ob + m]
                plo[:m] = payLo[r, ob : ob + m]
            for n in range(n_n):
                q = pos[n]
                vb = val_b[r, n]
                if close:
                    kln = keyLn[r, n]
                    pln = payLn[r, n]
                    for j in range(m):
                        g = p1[q, j] + vb * (tot[j] - p0[q, j])
                        acc[j] += g * (plo[j] if klo[j] < kln else pln)
                else:
                    for j in range(m):
                        out[r, ob + j, n] = p1[q, j] + vb * (tot[j] - p0[q, j])
        if close:
            out[r, 0, 0] = acc.sum()
    return out


def select_fused_numba(F, implicit, key_a, val_a, key_b, val_b, last=None, sortpos=None):
    R = key_a.shape[0]
    i64 = lambda x: np.ascontiguousarray(x, dtype=np.int64)
    f64 = lambda x: np.ascontiguousarray(x, dtype=np.float64)
    dk, dp = np.zeros((R, 1), dtype=np.int64), np.zeros((R, 1))
    if implicit is None:
        F = np.asarray(F, dtype=np.float64)
        keyO, payO, keyC, payC = dk, dp, dk, dp
    else:
        F = np.zeros((R, 0, 0))
        keyO, payO, keyC, payC = i64(implicit[0]), f64(implicit[1]), i64(implicit[2]), f64(implicit[3])
    if last is None:
        keyLo, payLo, keyLn, payLn = dk, dp, dk, dp
    else:
        keyLo, payLo, keyLn, payLn = i64(last[0]), f64(last[1]), i64(last[2]), f64(last[3])
    perms, poss = sortpos if sortpos is not None else sort_pos_numba(key_a, key_b)
    return _select_fused_nb(
        F, implicit is not None, keyO, payO, keyC, payC,
        perms, poss, f64(val_a), f64(val_b),
        last is not None, keyLo, payLo, keyLn, payLn,
    )


def sort_pos_numpy(key_a, key_b):
    """Per row: stable sort order of ``key_a`` and insertion points of ``key_b`` into it."""
    perms = np.argsort(key_a, axis=1, kind="stable")
    ks = np.take_along_axis(key_a, perms, axis=1)
    poss = np.stack([np.searchsorted(ks[r], key_b[r]) for r in range(key_a.shape[0])])
    return perms.astype(np.int64), poss.astype(np.int64)


@njit
def _sort_pos_nb(key_a, key_b):
    R, n_c = key_a.shape
    perms = np.empty((R, n_c), dtype=np.int64)
    poss = np.empty((R, key_b.shape[1]), dtype=np.int64)
    for r in range(R):
        perm = np.argsort(key_a[r], kind="mergesort")
        perms[r] = perm
        poss[r] = np.searchsorted(key_a[r][perm], key_b[r])
    return perms, poss


def sort_pos_numba(key_a, key_b):
    return _sort_pos_nb(
        np.ascontiguousarray(key_a, dtype=np.int64), np.ascontiguousarray(key_b, dtype=np.int64)
    )


# -- pairwise winner over a product space ---------------------------------------


def combine_pair_numpy(key1, pay1, key2, pay2):
    """Winner over the (n1 x n2) product space, flattened row-major.

    The left side wins ties, so the result matches a left fold of the
    smaller-key rule.
    """
    a = key1[:, :, None]
    b = key2[:, None, :]
    take_a = a < b
    rows = key1.shape[0]
    key = np.where(take_a, a, b).reshape(rows, -1)
    pay = np.where(take_a, pay1[:, :, None], pay2[:, None, :]).reshape(rows, -1)
    return key, pay


@njit
def _combine_pair_nb(key1, pay1, key2, pay2):
    R, n1 = key1.shape
    n2 = key2.shape[1]
    key = np.empty((R, n1 * n2), dtype=np.int64)
    pay = np.empty((R, n1 * n2))
    for r in range(R):
        for i in range(n1):
            ka = key1[r, i]
            pa = pay1[r, i]
            base = i * n2
            for j in range(n2):
                kb = key2[r, j]
                if ka < kb:
                    key[r, base + j] = ka
                    pay[r, base + j] = pa
                else:
                    key[r, base + j] = kb
                    pay[r, base + j] = pay2[r, j]
    return key, pay


def combine_pair_numba(key1, pay1, key2, pay2):
    return _combine_pair_nb(
        np.ascontiguousarray(key1, dtype=np.int64),
        np.ascontiguousarray(pay1, dtype=np.float64),
        np.ascontiguousarray(key2, dtype=np.int64),
        np.ascontiguousarray(pay2, dtype=np.float64),
    )


if USE_NUMBA:
    select_fused = select_fused_numba
    sort_pos = sort_pos_numba
    combine_pair = combine_pair_numba
    fa_build = fa_build_numba
    part_build = part_build_numba
    agms_build = agms_build_numba
    select_step = select_step_numba
    close_step = close_step_numba
else:
    select_fused = select_fused_numpy
    sort_pos = sort_pos_numpy
    combine_pair = combine_pair_numpy
    fa_build = fa_build_numpy
    part_build = part_build_numpy
    agms_build = agms_build_numpy
    select_step = select_step_numpy
    close_step = close_step_numpy
