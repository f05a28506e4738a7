"""Orderings of projections: recovery, synthetic corruption and goodness.

A :class:`Permutation` maps a claimed position ``i`` (1-based) to the true rank
``map[i]`` of the sample placed there. An ordering is ``good(delta_bar, n_delta)``
when at most ``n_delta`` positions satisfy ``|i - map[i]| > delta_bar``.

Position 1 is the anchor (the view assumed to sit at angle 0); with
``anchor_fixed`` the perturbations never move it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import make_rng


@dataclass(frozen=True)
class Permutation:
    map: np.ndarray
    anchor_fixed: bool = True

    def __post_init__(self):
        m = np.array(self.map, dtype=np.int64).ravel()
        n = m.size
        if n < 1:
            raise ValueError("empty permutation")
        if not np.array_equal(np.sort(m), np.arange(1, n + 1)):
            raise ValueError("map is not a bijection of 1..N")
        if self.anchor_fixed and m[0] != 1:
            raise ValueError("anchor_fixed requires map[1] == 1")
        m.setflags(write=False)
        object.__setattr__(self, "map", m)

    @classmethod
    def identity(cls, n: int, anchor_fixed: bool = True) -> "Permutation":
        return cls(np.arange(1, n + 1), anchor_fixed)

    @property
    def n(self) -> int:
        return self.map.size

    def indices(self) -> np.ndarray:
        """0-based row indices, handy for fancy indexing."""
        return self.map - 1

    def reversed_tail(self) -> "Permutation":
        """Keep the anchor, reverse everything after it."""
        return Permutation(np.concatenate([self.map[:1], self.map[:0:-1]]), self.anchor_fixed)

    def tolist(self) -> list[int]:
        return [int(v) for v in self.map]


@dataclass(frozen=True)
class OrderingQuality:
    delta_bar: int
    n_delta: int


def nn_order(vectors, start: int = 0) -> Permutation:
    """Greedy nearest-neighbour chain through ``vectors`` (rows), from row ``start``.

    Each step moves to the unvisited row with the smallest Euclidean distance to
    the current one; ties go to the lowest index. Returns 1-based row indices in
    visiting order (anchored when ``start == 0``).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n == 0:
        raise ValueError("nn_order needs at least one vector")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range")
    sq = np.einsum("ij,ij->i", x, x)
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    cur = start
    for step in range(n):
        order[step] = cur
        visited[cur] = True
        if step == n - 1:
            break
        d2 = sq - 2.0 * (x @ x[cur]) + sq[cur]
        d2[visited] = np.inf
        best = d2.min()
        # the expanded form loses a few ulps; resolve near-ties exactly
        cand = np.flatnonzero(d2 <= best + 1e-9 * (abs(best) + sq[cur]) + 1e-300)
        if cand.size > 1:
            exact = np.sum((x[cand] - x[cur]) ** 2, axis=1)
            cand = cand[exact == exact.min()]
        cur = int(cand[0])
    return Permutation(order + 1, anchor_fixed=(start == 0))


def measure_goodness(perm: Permutation, delta_bar: int) -> OrderingQuality:
    pos = np.arange(1, perm.n + 1)
    n_delta = int(np.count_nonzero(np.abs(pos - perm.map) > delta_bar))
    return OrderingQuality(int(delta_bar), n_delta)


def _eligible(perm: Permutation) -> np.ndarray:
    start = 1 if perm.anchor_fixed else 0
    return np.arange(start, perm.n)


def perturb_shuffle(perm: Permutation, subset_size: int, seed: int) -> Permutation:
    """Randomly re-permute the images of a random subset of positions."""
    elig = _eligible(perm)
    if subset_size < 0 or subset_size > elig.size:
        raise ValueError(f"subset_size={subset_size} exceeds {elig.size} eligible positions")
    rng = make_rng(seed)
    pos = rng.choice(elig, size=subset_size, replace=False)
    out = perm.map.copy()
    out[pos] = perm.map[rng.permutation(pos)]
    return Permutation(out, perm.anchor_fixed)


def perturb_shift(perm: Permutation, block_start: int, block_len: int, insert_at: int) -> Permutation:
    """Move the consecutive block ``[block_start, block_start + block_len)`` so it starts at ``insert_at``.

    Positions are 1-based; ``insert_at`` is where the block's first element ends
    up after the move. Elements between the old and new location slide over by
    ``block_len``.
    """
    n = perm.n
    lo = 2 if perm.anchor_fixed else 1
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if block_start < lo or block_start + block_len - 1 > n:
        raise ValueError("block out of range")
    if insert_at < lo or insert_at + block_len - 1 > n:
        raise ValueError("insert_at out of range")
    items = list(perm.map)
    b0 = block_start - 1
    block = items[b0 : b0 + block_len]
    rest = items[:b0] + items[b0 + block_len :]
    i0 = insert_at - 1
    return Permutation(rest[:i0] + block + rest[i0:], perm.anchor_fixed)


def synth_good_map(
    n: int,
    delta_bar: int,
    n_delta: int,
    seed: int,
    n_shifts: int | None = None,
    max_tries: int = 200,
) -> Permutation:
    """Anchored permutation with exactly ``n_delta`` positions displaced by more than ``delta_bar``.

    The violators come first: ``n_delta`` random positions are shuffled among
    themselves so that every element lands more than ``delta_bar`` away. A
    single violator (``n_delta == 1``) is produced by one long jump instead,
    since a shuffle cannot displace exactly one element. Up to ``n_shifts``
    local shifts are then placed in untouched windows of ``delta_bar + 1``
    positions, so nobody inside them moves further than ``delta_bar``.

    ``n_shifts`` defaults to ``round(ln n)``; fewer are used when the windows
    do not fit.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if delta_bar < 0 or n_delta < 0 or n_delta > n:
        raise ValueError("need delta_bar >= 0 and 0 <= n_delta <= n")
    if n_shifts is None:
        n_shifts = max(1, round(math.log(n))) if n > 1 else 0
    rng = make_rng(seed)
    base = np.arange(1, n + 1)
    m = n - 1  # positions 2..n are movable
    if n_delta > m or n_delta > 0 and (n_delta == 1 and delta_bar == 0 or delta_bar + 1 >= m):
        raise ValueError(f"cannot displace {n_delta} of {n} positions by more than {delta_bar}")

    for _ in range(max_tries):
        out = base.copy()
        busy = np.zeros(n + 2, dtype=bool)
        busy[1] = True  # anchor

        if n_delta == 1:
            jump = delta_bar + 1
            a = int(rng.integers(2, n - jump + 1))
            src, dst = (a, a + jump) if rng.random() < 0.5 else (a + jump, a)
            # move element at src to dst; the ones in between slide by one
            items = list(out)
            v = items.pop(src - 1)
            items.insert(dst - 1, v)
            out = np.array(items)
            busy[min(src, dst) : max(src, dst) + 1] = True
        elif n_delta >= 2:
            pos = np.sort(rng.choice(np.arange(2, n + 1), size=n_delta, replace=False))
            perm = _far_derangement(pos, delta_bar, rng)
            if perm is None:
                continue
            out[pos - 1] = pos[perm]
            busy[pos] = True

        w = delta_bar + 1
        if w >= 2 and n_shifts > 0:
            slots = [s for s in range(2, n - w + 2, w) if not busy[s : s + w].any()]
            chosen = rng.choice(len(slots), size=min(n_shifts, len(slots)), replace=False) if slots else []
            for si in chosen:
                s = slots[int(si)]
                L = int(rng.integers(1, w))
                b = int(rng.integers(s, s + w - L + 1))
                ins = int(rng.integers(s, s + w - L + 1))
                seg = list(out[s - 1 : s - 1 + w])
                blk = seg[b - s : b - s + L]
                rest = seg[: b - s] + seg[b - s + L :]
                seg = rest[: ins - s] + blk + rest[ins - s :]
                out[s - 1 : s - 1 + w] = seg

        result = Permutation(out)
        if measure_goodness(result, delta_bar).n_delta == n_delta:
            return result
    raise ValueError(f"could not build good({delta_bar}, {n_delta}) map for n={n}")


def _far_derangement(pos: np.ndarray, delta_bar: int, rng, sweeps: int = 30):
    """Random permutation ``p`` of range(len(pos)) with ``|pos[i] - pos[p[i]]| > delta_bar`` for all i.

    Starts from a uniform shuffle and repairs offending entries by random swaps
    that fix both ends, so the result stays unstructured.
    """
    k = pos.size
    p = rng.permutation(k)
    for _ in range(sweeps):
        bad = np.flatnonzero(np.abs(pos - pos[p]) <= delta_bar)
        if bad.size == 0:
            return p
        for i in rng.permutation(bad):
            for j in rng.integers(0, k, size=8):
                # after swapping, i takes p[j] and j takes p[i]
                if abs(int(pos[i]) - int(pos[p[j]])) > delta_bar and abs(int(pos[j]) - int(pos[p[i]])) > delta_bar:
                    p[i], p[j] = p[j], p[i]
                    break
    return p if np.all(np.abs(pos - pos[p]) > delta_bar) else None


def looks_reversed(perm: Permutation) -> bool:
    """True when the order after the anchor runs mostly backwards (a mirrored chain)."""
    if perm.n < 3:
        return False
    tail = perm.map[1:].astype(np.float64)
    idx = np.arange(tail.size, dtype=np.float64)
    return bool(np.corrcoef(idx, tail)[0, 1] < 0)
