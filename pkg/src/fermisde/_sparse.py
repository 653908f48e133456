"""Bitmask kernels for sparse arrays of Clifford monomials.

A monomial over generators g_0..g_{n-1} is a subset of indices, stored as a
row of W = ceil(n/64) uint64 words (bit j of word j//64 set iff generator j
occurs). An element is a pair (masks, amps): masks of shape (m, W), amps
complex128 of shape (m,).

Canonical layout used throughout: rows sorted lexicographically with the
highest word most significant, no duplicate rows, no exactly-zero amplitudes.
All kernels here either preserve that layout or restore it explicitly.
"""

from __future__ import annotations

import numpy as np

WORD = 64

_U1 = np.uint64(1)
_U0 = np.uint64(0)
_FULL = np.uint64(0xFFFFFFFFFFFFFFFF)

# LOW[b]: bits strictly below b set. HIGH[b]: bits strictly above b set.
LOW = np.array([(1 << b) - 1 for b in range(WORD)], dtype=np.uint64)
HIGH = np.array(
    [(~((1 << (b + 1)) - 1)) & 0xFFFFFFFFFFFFFFFF for b in range(WORD)],
    dtype=np.uint64,
)


def words_for(n: int) -> int:
    """Number of 64-bit words needed for n generators (at least 1)."""
    return max(1, -(-n // WORD))


def empty_masks(w: int) -> np.ndarray:
    return np.zeros((0, w), dtype=np.uint64)


def popcount_rows(masks: np.ndarray) -> np.ndarray:
    """Number of set bits per row, int64."""
    return np.bitwise_count(masks).astype(np.int64).sum(axis=1)


def encode_mask(value: int, w: int) -> np.ndarray:
    """One Python-int mask to a (w,) uint64 row."""
    row = np.zeros(w, dtype=np.uint64)
    for i in range(w):
        row[i] = np.uint64((value >> (WORD * i)) & 0xFFFFFFFFFFFFFFFF)
    return row


def decode_mask(row: np.ndarray) -> int:
    """A (w,) uint64 row back to one Python int."""
    value = 0
    for i in range(row.shape[0]):
        value |= int(row[i]) << (WORD * i)
    return value


def below_row(k: int, w: int) -> np.ndarray:
    """(w,) row with exactly the bits 0..k-1 set."""
    row = np.zeros(w, dtype=np.uint64)
    wk, b = divmod(k, WORD)
    for i in range(min(wk, w)):
        row[i] = _FULL
    if wk < w and b > 0:
        row[wk] = LOW[b]
    return row


def lexsort_rows(masks: np.ndarray) -> np.ndarray:
    """Sort order for rows, highest word most significant."""
    return np.lexsort(tuple(masks[:, i] for i in range(masks.shape[1])))


def canonicalize(
    masks: np.ndarray,
    amps: np.ndarray,
    presorted: bool = False,
    tol: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sort rows, merge duplicates, drop zero amplitudes.

    tol > 0 additionally drops rows with |amp| <= tol * max|amp|; the default
    keeps everything that is not exactly zero.
    """
    if masks.shape[0] == 0:
        return masks.reshape(0, masks.shape[1]), amps[:0].astype(np.complex128)
    if not presorted:
        order = lexsort_rows(masks)
        masks = masks[order]
        amps = amps[order]
    if masks.shape[0] > 1:
        differs = np.any(masks[1:] != masks[:-1], axis=1)
        if not differs.all():
            starts = np.flatnonzero(np.concatenate(([True], differs)))
            amps = np.add.reduceat(amps, starts)
            masks = masks[starts]
    mags = np.abs(amps)
    if tol > 0.0 and mags.size:
        keep = mags > tol * mags.max()
    else:
        keep = amps != 0
    if not keep.all():
        masks = masks[keep]
        amps = amps[keep]
    return masks, amps


def count_above_bit(masks: np.ndarray, k: int) -> np.ndarray:
    """Per row, number of set bits with index strictly greater than k."""
    wk, b = divmod(k, WORD)
    w = masks.shape[1]
    total = np.zeros(masks.shape[0], dtype=np.int64)
    if wk < w:
        total += np.bitwise_count(masks[:, wk] & HIGH[b]).astype(np.int64)
        for i in range(wk + 1, w):
            total += np.bitwise_count(masks[:, i]).astype(np.int64)
    return total


def count_below_bit(masks: np.ndarray, k: int) -> np.ndarray:
    """Per row, number of set bits with index strictly less than k."""
    wk, b = divmod(k, WORD)
    w = masks.shape[1]
    total = np.zeros(masks.shape[0], dtype=np.int64)
    top = min(wk, w)
    for i in range(top):
        total += np.bitwise_count(masks[:, i]).astype(np.int64)
    if wk < w and b > 0:
        total += np.bitwise_count(masks[:, wk] & LOW[b]).astype(np.int64)
    return total


def rows_within(masks: np.ndarray, k: int) -> np.ndarray:
    """Boolean rows whose set bits all lie strictly below k."""
    if masks.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    allowed = below_row(k, masks.shape[1])
    return np.all((masks & ~allowed[None, :]) == 0, axis=1)


def mul_generator(
    masks: np.ndarray,
    amps: np.ndarray,
    k: int,
    side: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Multiply the element by generator k on the given side.

    Output is canonical. When bit k is the highest bit present (the adapted
    situation) no sort is needed: rows split into a block without bit k and a
    block with it, and the blocks swap.
    """
    m, w = masks.shape
    if m == 0:
        return masks, amps
    wk, b = divmod(k, WORD)
    if wk >= w:
        raise ValueError(f"generator index {k} out of range for {w} words")
    if side == "right":
        flips = count_above_bit(masks, k)
    elif side == "left":
        flips = count_below_bit(masks, k)
    else:
        raise ValueError("side must be 'left' or 'right'")
    signs = np.where(flips & 1, -1.0, 1.0)
    new_masks = masks.copy()
    new_masks[:, wk] ^= _U1 << np.uint64(b)
    new_amps = amps * signs
    # Fast path: no bits above k anywhere.
    if not count_above_bit(masks, k).any():
        had_k = (masks[:, wk] >> np.uint64(b)) & _U1
        split = int(np.searchsorted(had_k, 1))
        masks_out = np.concatenate((new_masks[split:], new_masks[:split]))
        amps_out = np.concatenate((new_amps[split:], new_amps[:split]))
        return masks_out, amps_out
    return canonicalize(new_masks, new_amps)


def pair_parity(masks_a: np.ndarray, masks_b: np.ndarray) -> np.ndarray:
    """Inversion parity matrix for products of monomials.

    Entry (i, j) is the parity of #{(s, t): s in row i of a, t in row j of b,
    s > t}, which is the sign exponent of g_S g_T = +/- g_{S xor T}.
    """
    ma, w = masks_a.shape
    mb = masks_b.shape[0]
    par = np.zeros((ma, mb), dtype=np.int64)
    pc_a = np.bitwise_count(masks_a).astype(np.int64)
    # above_w[i, v] = set bits of a-row i in words strictly above v
    above = np.zeros_like(pc_a)
    run = np.zeros(ma, dtype=np.int64)
    for v in range(w - 1, -1, -1):
        above[:, v] = run
        run = run + pc_a[:, v]
    for v in range(w):
        bw = masks_b[:, v]
        if not bw.any():
            continue
        pcb = np.bitwise_count(bw).astype(np.int64)
        par += above[:, v][:, None] * pcb[None, :]
        aw = masks_a[:, v]
        for t in range(WORD):
            col = (bw >> np.uint64(t)) & _U1
            if not col.any():
                continue
            cnt = np.bitwise_count(aw & HIGH[t]).astype(np.int64)
            par += cnt[:, None] * col.astype(np.int64)[None, :]
    return par & 1


def mul_full(
    masks_a: np.ndarray,
    amps_a: np.ndarray,
    masks_b: np.ndarray,
    amps_b: np.ndarray,
    chunk: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """General signed product, canonical output."""
    ma, w = masks_a.shape
    mb = masks_b.shape[0]
    if ma == 0 or mb == 0:
        return empty_masks(w), np.zeros(0, dtype=np.complex128)
    pieces_m = []
    pieces_a = []
    for start in range(0, ma, chunk):
        sl = slice(start, min(start + chunk, ma))
        sub = masks_a[sl]
        par = pair_parity(sub, masks_b)
        signs = np.where(par == 1, -1.0, 1.0)
        prod = (amps_a[sl][:, None] * amps_b[None, :]) * signs
        xored = sub[:, None, :] ^ masks_b[None, :, :]
        pieces_m.append(xored.reshape(-1, w))
        pieces_a.append(prod.reshape(-1))
    return canonicalize(np.concatenate(pieces_m), np.concatenate(pieces_a))


def merge_sum(
    parts: list[tuple[np.ndarray, np.ndarray]],
    w: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Sum of canonical parts, canonical output."""
    parts = [(m, a) for m, a in parts if m.shape[0]]
    if not parts:
        return empty_masks(w), np.zeros(0, dtype=np.complex128)
    if len(parts) == 1:
        return parts[0]
    return canonicalize(
        np.concatenate([m for m, _ in parts]),
        np.concatenate([a for _, a in parts]),
    )


def dot_conj(
    masks_a: np.ndarray,
    amps_a: np.ndarray,
    masks_b: np.ndarray,
    amps_b: np.ndarray,
) -> complex:
    """Sum of conj(amp_a) * amp_b over rows with equal masks.

    Both inputs must be canonical.
    """
    ma, w = masks_a.shape
    mb = masks_b.shape[0]
    if ma == 0 or mb == 0:
        return 0.0 + 0.0j
    if w == 1:
        ka = masks_a[:, 0]
        kb = masks_b[:, 0]
        pos = np.searchsorted(ka, kb)
        pos_c = np.minimum(pos, ma - 1)
        hit = ka[pos_c] == kb
        if not hit.any():
            return 0.0 + 0.0j
        return complex(np.sum(np.conj(amps_a[pos_c[hit]]) * amps_b[hit]))
    stacked = np.concatenate((masks_a, masks_b))
    vals = np.concatenate((np.conj(amps_a), amps_b))
    side = np.concatenate(
        (np.zeros(ma, dtype=np.int8), np.ones(mb, dtype=np.int8))
    )
    order = lexsort_rows(stacked)
    stacked = stacked[order]
    vals = vals[order]
    side = side[order]
    same = np.all(stacked[1:] == stacked[:-1], axis=1)
    pair = same & (side[1:] != side[:-1])
    if not pair.any():
        return 0.0 + 0.0j
    idx = np.flatnonzero(pair)
    return complex(np.sum(vals[idx] * vals[idx + 1]))


def prune_keep(
    amps: np.ndarray,
    budget: float,
    force_first: bool = False,
) -> tuple[np.ndarray | None, float]:
    """Keep mask for rows with |amp| >= budget * ||amps||_2 / sqrt(m).

    Returns (None, 0.0) when nothing is dropped; otherwise the boolean
    keep mask and the dropped squared mass, which is bounded by
    (budget * ||amps||_2)**2. force_first pins row 0 regardless.
    """
    m = amps.shape[0]
    if m == 0 or budget <= 0.0:
        return None, 0.0
    mags_sq = amps.real**2 + amps.imag**2
    total = float(mags_sq.sum())
    if total == 0.0:
        return None, 0.0
    thr_sq = (budget * budget) * total / m
    keep = mags_sq >= thr_sq
    if force_first:
        keep[0] = True
    if keep.all():
        return None, 0.0
    dropped = float(mags_sq[~keep].sum())
    return keep, dropped


def prune_mass(
    masks: np.ndarray,
    amps: np.ndarray,
    budget: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Drop rows below the relative mass budget; see prune_keep."""
    keep, dropped = prune_keep(amps, budget)
    if keep is None:
        return masks, amps, 0.0
    return masks[keep], amps[keep], dropped
