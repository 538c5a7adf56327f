"""Ten-channel 32x32 image encoding of a record's orbital populations and charges.

Channel layout (see ``model.CHANNEL_MAP``)::

    0/1  O-Map of atom A/B      (l, m) population tile, nearest-neighbour
    2/3  GAF of atom A/B        Gramian angular field of normalised shells
    4/5  MTF of atom A/B        Markov transition field of shell ranks
    6    COM                    outer product of shell populations
    7    COM_NORM               outer product of shell distributions
    8    Q_DIAG                 diag(q_A, q_B)
    9    Q_ABSDIFF              |q_A - q_B| on the anti-diagonal

Channels 2-9 are upsampled with corner-aligned bilinear interpolation.
No per-channel normalisation is applied.
"""

from __future__ import annotations

import numpy as np

from .model import IMAGE_SIZE, N_CHANNELS, DiatomicRecord, ImageTensor

L_MAX = 2
UPSAMPLING = {"omap": "nearest", "other": "bilinear-corner-aligned"}


def shell_populations(populations) -> np.ndarray:
    """P_l = sum_m n_lm for l = 0, 1, 2 from (l, m, n) triples."""
    p = np.zeros(L_MAX + 1)
    for l, _m, n in populations:
        if l > L_MAX:
            raise ValueError(f"angular momentum l={l} exceeds l_max={L_MAX}")
        p[l] += n
    return p


def normalize_shells(p) -> np.ndarray:
    """Min-max normalisation over the three shells; a flat vector maps to 0.5."""
    p = np.asarray(p, dtype=float)
    lo, hi = p.min(), p.max()
    if hi == lo:
        return np.full(p.shape, 0.5)
    return (p - lo) / (hi - lo)


def gaf(p_norm) -> np.ndarray:
    phi = np.arccos(np.clip(np.asarray(p_norm, dtype=float), 0.0, 1.0))
    return np.cos(phi[:, None] + phi[None, :])


def mtf(p_norm) -> np.ndarray:
    """Transition matrix of rank states over the sequence (p0, p1, p2).

    States are ascending ranks 1..3 with ties broken by position.  Entry
    [u-1, v-1] is P(next state v | state u); rows without outgoing
    transitions are zero.
    """
    x = np.asarray(p_norm, dtype=float)
    order = np.argsort(x, kind="stable")
    states = np.empty(len(x), dtype=int)
    states[order] = np.arange(len(x))
    q = len(x)
    counts = np.zeros((q, q))
    for u, v in zip(states[:-1], states[1:]):
        counts[u, v] += 1
    out = np.zeros((q, q))
    rows = counts.sum(axis=1)
    nz = rows > 0
    out[nz] = counts[nz] / rows[nz, None]
    return out


def omap(populations) -> np.ndarray:
    tile = np.zeros((L_MAX + 1, 2 * L_MAX + 1))
    for l, m, n in populations:
        if l > L_MAX:
            raise ValueError(f"angular momentum l={l} exceeds l_max={L_MAX}")
        if abs(m) > l:
            raise ValueError(f"invalid magnetic index m={m} for l={l}")
        tile[l, m + L_MAX] = n
    return tile


def com(p_a, p_b):
    """Co-occupancy map and its normalised variant (outer product of shell distributions)."""
    p_a = np.asarray(p_a, dtype=float)
    p_b = np.asarray(p_b, dtype=float)

    def dist(p):
        total = p.sum()
        return p / total if total != 0 else np.zeros_like(p)

    return np.outer(p_a, p_b), np.outer(dist(p_a), dist(p_b))


def q_images(q_a: float, q_b: float):
    q_diag = np.array([[q_a, 0.0], [0.0, q_b]])
    d = abs(q_a - q_b)
    q_absdiff = np.array([[0.0, d], [d, 0.0]])
    pr = q_a * q_b
    q_prod = np.array([[0.0, pr], [pr, 0.0]])
    return q_diag, q_absdiff, q_prod


def _axis(n_src, n_out):
    if n_out == 1 or n_src == 1:
        x = np.zeros(n_out)
    else:
        x = np.arange(n_out) * (n_src - 1) / (n_out - 1)
    i0 = np.floor(x).astype(int)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, x - i0


def upsample_bilinear(m, out: int = IMAGE_SIZE) -> np.ndarray:
    """Corner-aligned bilinear interpolation; corners are reproduced exactly."""
    m = np.asarray(m, dtype=float)
    h, w = m.shape
    y0, y1, wy = _axis(h, out)
    x0, x1, wx = _axis(w, out)
    top = m[y0][:, x0] + wx * (m[y0][:, x1] - m[y0][:, x0])
    bot = m[y1][:, x0] + wx * (m[y1][:, x1] - m[y1][:, x0])
    res = top + wy[:, None] * (bot - top)
    # Rounding in the lerp may step one ulp outside the source range.
    return np.clip(res, m.min(), m.max())


def upsample_nearest(m, out: int = IMAGE_SIZE) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    h, w = m.shape
    rows = (np.arange(out) * h) // out
    cols = (np.arange(out) * w) // out
    return m[np.ix_(rows, cols)]


def encode_tensor(rec: DiatomicRecord) -> ImageTensor:
    p_a = shell_populations(rec.populations_a)
    p_b = shell_populations(rec.populations_b)
    pn_a, pn_b = normalize_shells(p_a), normalize_shells(p_b)
    com_raw, com_norm = com(p_a, p_b)
    q_diag, q_absdiff, _ = q_images(rec.gross_charge_a, rec.gross_charge_b)

    channels = np.empty((N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE))
    channels[0] = upsample_nearest(omap(rec.populations_a))
    channels[1] = upsample_nearest(omap(rec.populations_b))
    for k, small in enumerate((gaf(pn_a), gaf(pn_b), mtf(pn_a), mtf(pn_b),
                               com_raw, com_norm, q_diag, q_absdiff), start=2):
        channels[k] = upsample_bilinear(small)
    return ImageTensor(rec.pair_id, channels)
