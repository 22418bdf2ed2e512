"""Triplet-generation kernels for operator assembly.

Every kernel exists twice: a loop version compiled with ``numba.njit`` and a
vectorized numpy version. Both emit identical triplet streams in the same
order. Set ``PNKIT_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

__all__ = ["BACKEND", "face_triplets", "volume_triplets",
           "face_triplets_numpy", "volume_triplets_numpy",
           "face_triplets_numba", "volume_triplets_numba"]

_DISABLED = os.environ.get("PNKIT_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")
NUMBA_AVAILABLE = numba is not None

_CHUNK = 4096


def _face_loop(cells_l, cells_r, own_offset, tr_idx, tr_w,
               side_row, side_col, row_moment, row_mode, col_moment, col_mode, coef):
    nf = cells_l.shape[0]
    ne = coef.shape[0]
    nk = tr_idx.shape[3]
    total = nf * ne * nk
    rows = np.empty(total, np.int64)
    cols = np.empty(total, np.int64)
    vals = np.empty(total, np.float64)
    n = 0
    for f in range(nf):
        for e in range(ne):
            cx = cells_l[f] if side_row[e] == 0 else cells_r[f]
            cy = cells_l[f] if side_col[e] == 0 else cells_r[f]
            row = own_offset[cx, row_moment[e]] + row_mode[e]
            m = col_moment[e]
            p = col_mode[e]
            for k in range(nk):
                w = tr_w[cy, m, p, k]
                if w != 0.0:
                    rows[n] = row
                    cols[n] = tr_idx[cy, m, p, k]
                    vals[n] = coef[e] * w
                    n += 1
    return rows[:n], cols[:n], vals[:n]


def face_triplets_numpy(cells_l, cells_r, own_offset, tr_idx, tr_w,
                        side_row, side_col, row_moment, row_mode, col_moment, col_mode, coef):
    out_r, out_c, out_v = [], [], []
    for start in range(0, cells_l.shape[0], _CHUNK):
        cl = cells_l[start:start + _CHUNK]
        cr = cells_r[start:start + _CHUNK]
        both = np.stack([cl, cr])  # (2, nf)
        cx = both[side_row].T  # (nf, ne)
        cy = both[side_col].T
        row = own_offset[cx, row_moment[None, :]] + row_mode[None, :]
        w = tr_w[cy, col_moment[None, :], col_mode[None, :], :]  # (nf, ne, nk)
        idx = tr_idx[cy, col_moment[None, :], col_mode[None, :], :]
        keep = w != 0.0
        rr = np.broadcast_to(row[:, :, None], w.shape)
        out_r.append(rr[keep])
        out_c.append(idx[keep])
        out_v.append((coef[None, :, None] * w)[keep])
    if not out_r:
        empty = np.empty(0, np.int64)
        return empty, empty.copy(), np.empty(0)
    return (np.concatenate(out_r).astype(np.int64), np.concatenate(out_c).astype(np.int64),
            np.concatenate(out_v))


def _volume_loop(own_offset, row_moment, row_mode, col_moment, col_mode, coef):
    nc = own_offset.shape[0]
    ne = coef.shape[0]
    rows = np.empty(nc * ne, np.int64)
    cols = np.empty(nc * ne, np.int64)
    vals = np.empty(nc * ne, np.float64)
    n = 0
    for c in range(nc):
        for e in range(ne):
            rows[n] = own_offset[c, row_moment[e]] + row_mode[e]
            cols[n] = own_offset[c, col_moment[e]] + col_mode[e]
            vals[n] = coef[e]
            n += 1
    return rows, cols, vals


def volume_triplets_numpy(own_offset, row_moment, row_mode, col_moment, col_mode, coef):
    nc = own_offset.shape[0]
    rows = own_offset[:, row_moment] + row_mode[None, :]
    cols = own_offset[:, col_moment] + col_mode[None, :]
    vals = np.broadcast_to(coef[None, :], rows.shape)
    return (rows.reshape(-1).astype(np.int64), cols.reshape(-1).astype(np.int64),
            np.array(vals.reshape(nc * coef.shape[0])))


if NUMBA_AVAILABLE:
    face_triplets_numba = numba.njit(cache=True)(_face_loop)
    volume_triplets_numba = numba.njit(cache=True)(_volume_loop)
else:  # pragma: no cover
    face_triplets_numba = _face_loop
    volume_triplets_numba = _volume_loop

if NUMBA_AVAILABLE and not _DISABLED:
    BACKEND = "numba"
    face_triplets = face_triplets_numba
    volume_triplets = volume_triplets_numba
else:
    BACKEND = "numpy"
    face_triplets = face_triplets_numpy
    volume_triplets = volume_triplets_numpy
