"""Minimal-volume prediction intervals and interval unions.

At a covariate point, given kernel weights on the observed brackets, the
solver finds the shortest closed interval (or disjoint union of at most M
intervals) whose weighted bracket-containment frequency reaches the target
1 - alpha - psi.

Candidate endpoints are restricted to observed bracket endpoints: the
containment indicator is piecewise constant in the endpoints with jumps only
at data values, so snapping left endpoints to observed lows and right
endpoints to observed highs loses no optimality and makes the search finite.

The single-interval solver is exact.  The union solver is a dynamic program
over sorted candidate endpoints that keeps, per (end position, components
used), a Pareto frontier of (achieved weight, total length) pairs pruned on
a weight grid; its output is feasible by construction and minimal up to the
grid resolution (exactness at fine grids is certified against the
brute-force oracle in the test suite).
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernels import EmptyNeighborhoodError, KernelSpec, weights_at
from .rules import PredictionRule
from .sets import Interval, IntervalUnion

__all__ = [
    "SolverConfig",
    "WeightedBrackets",
    "min_interval",
    "min_union",
    "brute_force_min_union",
    "fit_prediction_rule",
    "auto_psi",
    "FEASIBILITY_TOL",
]

# Weighted sums are compared against the coverage target with this absolute
# slack: empirical weights are float cumsums, and an exact tie (common under
# fixed censoring) must count as feasible.
FEASIBILITY_TOL = 1e-9

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SolverConfig:
    """Target level and search controls for the set solvers.

    ``weight_grid`` is the Pareto-pruning resolution of the union solver:
    frontier entries whose achieved weights fall in the same grid bucket are
    collapsed, trading exactness for tractability.
    """

    alpha: float
    psi_n: float = 0.0
    max_components: int = 2
    weight_grid: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.psi_n < 0.0:
            raise ValueError("psi_n must be nonnegative")
        if 1.0 - self.alpha - self.psi_n <= 0.0:
            raise ValueError("need 1 - alpha - psi_n > 0")
        if int(self.max_components) != self.max_components or self.max_components < 1:
            raise ValueError("max_components must be an integer >= 1")
        if self.weight_grid <= 0.0:
            raise ValueError("weight_grid must be positive")

    @property
    def tau(self) -> float:
        return 1.0 - self.alpha - self.psi_n

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "psi_n": self.psi_n,
            "max_components": int(self.max_components),
            "weight_grid": self.weight_grid,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SolverConfig":
        return cls(**obj)


def auto_psi(n: int, bandwidth) -> float:
    """Slack matched to the kernel estimator's uniform convergence rate."""
    h = np.prod(np.asarray(bandwidth, dtype=float))
    return 0.5 * math.sqrt(math.log(n) / (n * h))


@dataclass(frozen=True)
class WeightedBrackets:
    """Brackets with normalized nonnegative weights, the solver's input."""

    y_lo: np.ndarray
    y_hi: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        y_lo = np.asarray(self.y_lo, dtype=float)
        y_hi = np.asarray(self.y_hi, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if not (y_lo.shape == y_hi.shape == w.shape) or y_lo.ndim != 1:
            raise ValueError("y_lo, y_hi, w must be 1-d arrays of equal length")
        if y_lo.size == 0:
            raise ValueError("empty WeightedBrackets")
        if np.any(y_lo > y_hi):
            raise ValueError("brackets must satisfy y_lo <= y_hi")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("total weight must be positive")
        object.__setattr__(self, "y_lo", y_lo)
        object.__setattr__(self, "y_hi", y_hi)
        object.__setattr__(self, "w", w / total)

    @classmethod
    def from_dataset(cls, data: Dataset, weights: np.ndarray) -> "WeightedBrackets":
        weights = np.asarray(weights, dtype=float)
        keep = weights > 0
        if not keep.any():
            raise ValueError("all weights are zero")
        return cls(data.y_lo[keep], data.y_hi[keep], weights[keep])

    def __len__(self) -> int:
        return self.y_lo.size


def _dedupe(wb: WeightedBrackets) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Merge identical (lo, hi) brackets, summing their weights."""
    pairs = np.column_stack([wb.y_lo, wb.y_hi])
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    w = np.zeros(uniq.shape[0])
    np.add.at(w, inverse.ravel(), wb.w)
    return uniq[:, 0], uniq[:, 1], w


def _containment_table(lo, hi, w):
    """Candidate endpoints plus the table W[a, b] = weight inside [L[a], U[b]]."""
    L = np.unique(lo)
    U = np.unique(hi)
    s = np.zeros((L.size, U.size))
    np.add.at(s, (np.searchsorted(L, lo), np.searchsorted(U, hi)), w)
    table = np.cumsum(s[::-1, :], axis=0)[::-1, :].cumsum(axis=1)
    return L, U, table


class _Fenwick:
    """Prefix sums with O(log n) update and first-prefix-above search."""

    def __init__(self, values: np.ndarray):
        self.n = len(values)
        self.tree = np.zeros(self.n + 1)
        self.tree[1:] = values
        for i in range(1, self.n + 1):
            j = i + (i & -i)
            if j <= self.n:
                self.tree[j] += self.tree[i]
        self.total = float(values.sum())

    def add(self, i: int, delta: float) -> None:
        self.total += delta
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def search(self, target: float) -> int:
        """Smallest 0-based index whose prefix sum reaches ``target``."""
        idx = 0
        bit = 1 << self.n.bit_length()
        rem = target
        while bit:
            nxt = idx + bit
            if nxt <= self.n and self.tree[nxt] < rem:
                idx = nxt
                rem -= self.tree[nxt]
            bit >>= 1
        return idx


def min_interval(wb: WeightedBrackets, cfg: SolverConfig) -> Interval:
    """Shortest interval [t0, t1] with weighted containment >= 1 - alpha - psi.

    Candidate t0 values are observed lows, candidate t1 values observed
    highs; ties in length are broken by smaller t0, then smaller t1.  Runs in
    O(n log n) via a sweep over left candidates with a running weight
    structure over right candidates.
    """
    lo, hi, w = _dedupe(wb)
    need = max(cfg.tau - FEASIBILITY_TOL, _TINY)
    left = np.unique(lo)
    right = np.unique(hi)
    rank_hi = np.searchsorted(right, hi)
    base = np.zeros(right.size)
    np.add.at(base, rank_hi, w)
    fen = _Fenwick(base)
    order = np.argsort(lo, kind="stable")
    lo_sorted = lo[order]
    ptr = 0
    best: tuple[float, float, float] | None = None
    for t0 in left:
        while ptr < order.size and lo_sorted[ptr] < t0:
            i = order[ptr]
            fen.add(int(rank_hi[i]), -float(w[i]))
            ptr += 1
        if fen.total < need:
            break
        t1 = float(right[fen.search(need)])
        cand = (t1 - float(t0), float(t0), t1)
        if best is None or cand < best:
            best = cand
    if best is None:  # unreachable: the hull of all brackets has weight 1
        raise RuntimeError("no feasible interval found")
    return Interval(best[1], best[2])


def _min_interval_scan(wb: WeightedBrackets, cfg: SolverConfig) -> Interval:
    """Reference quadratic scan over all candidate endpoint pairs."""
    lo, hi, w = _dedupe(wb)
    left, right, table = _containment_table(lo, hi, w)
    need = max(cfg.tau - FEASIBILITY_TOL, _TINY)
    lengths = right[None, :] - left[:, None]
    feasible = (table >= need) & (lengths >= 0)
    lengths = np.where(feasible, lengths, np.inf)
    flat = int(np.argmin(lengths))  # row-major argmin = (length, t0, t1) lexicographic
    a, b = divmod(flat, right.size)
    if not np.isfinite(lengths[a, b]):
        raise RuntimeError("no feasible interval found")
    return Interval(float(left[a]), float(right[b]))


def _path_endpoints(path, left, right) -> tuple[float, ...]:
    out: list[float] = []
    for a, b in path:
        out.append(float(left[a]))
        out.append(float(right[b]))
    return tuple(out)


def _gap_trimmed_union(
    lo: np.ndarray,
    hi: np.ndarray,
    t0: float,
    t1: float,
    m_cap: int,
) -> tuple[float, tuple[float, ...]]:
    """Shorten [t0, t1] by dropping its widest interior gaps.

    The brackets contained in [t0, t1] form connected blobs; removing the
    empty space between them (keeping at most ``m_cap`` components, merging
    across the smallest gaps when there are more blobs) keeps every contained
    bracket contained.  The result is a feasible union with the same weight
    and no greater length, used to seed the search incumbent.
    """
    sel = (lo >= t0) & (hi <= t1)
    blob_lo: list[float] = []
    blob_hi: list[float] = []
    for l_v, h_v in zip(lo[sel], hi[sel]):  # lo is sorted, so blobs build in order
        if blob_hi and l_v <= blob_hi[-1]:
            if h_v > blob_hi[-1]:
                blob_hi[-1] = h_v
        else:
            blob_lo.append(l_v)
            blob_hi.append(h_v)
    k = len(blob_lo)
    if k > m_cap:
        gaps = np.array(blob_lo[1:]) - np.array(blob_hi[:-1])
        cut = np.sort(np.argsort(-gaps, kind="stable")[: m_cap - 1])
        starts = [blob_lo[0]] + [blob_lo[i + 1] for i in cut]
        ends = [blob_hi[i] for i in cut] + [blob_hi[-1]]
    else:
        starts, ends = blob_lo, blob_hi
    length = float(sum(e - s for s, e in zip(starts, ends)))
    endpoints = tuple(v for s, e in zip(starts, ends) for v in (s, e))
    return length, endpoints


def min_union(wb: WeightedBrackets, cfg: SolverConfig) -> IntervalUnion:
    """Minimal-volume union of at most ``max_components`` disjoint intervals.

    Always returns a union whose weighted containment reaches the target
    (the hull is feasible, so a solution exists).  Total length is minimal up
    to the ``weight_grid`` Pareto-pruning resolution; ties are broken
    lexicographically by leftmost endpoints.
    """
    if cfg.max_components == 1:
        return IntervalUnion([min_interval(wb, cfg)])

    lo, hi, w = _dedupe(wb)
    need = max(cfg.tau - FEASIBILITY_TOL, _TINY)
    grid = cfg.weight_grid
    m_cap = int(cfg.max_components)
    left, right, table = _containment_table(lo, hi, w)
    n_left, n_right = left.size, right.size

    # Exact single-interval optimum seeds the incumbent.
    lengths = right[None, :] - left[:, None]
    feasible = (table >= need) & (lengths >= 0)
    masked = np.where(feasible, lengths, np.inf)
    flat = int(np.argmin(masked))
    a0, b0 = divmod(flat, n_right)
    inc_len = float(masked[a0, b0])
    inc_tuple = _path_endpoints(((a0, b0),), left, right)

    # Weight still catchable by segments starting strictly right of each end.
    lo_order = np.argsort(lo, kind="stable")
    lo_sorted = lo[lo_order]
    w_sorted = w[lo_order]
    suffix = np.concatenate([np.cumsum(w_sorted[::-1])[::-1], [0.0]])
    catch = suffix[np.searchsorted(lo_sorted, right, side="right")]

    # Last end index strictly below each left candidate.
    bmax = np.searchsorted(right, left, side="left") - 1

    # Paths are kept as a shared parent-pointer log; entries are registered
    # lazily, only once they survive frontier pruning.
    log_parent: list[int] = []
    log_a: list[int] = []
    log_b: list[int] = []

    def path_of(eid: int) -> tuple[tuple[int, int], ...]:
        segs = []
        while eid >= 0:
            segs.append((log_a[eid], log_b[eid]))
            eid = log_parent[eid]
        return tuple(reversed(segs))

    def offer(length: float, endpoints: tuple[float, ...]) -> None:
        nonlocal inc_len, inc_tuple
        if length < inc_len or (length == inc_len and endpoints < inc_tuple):
            inc_len = length
            inc_tuple = endpoints

    # A gap-trimmed version of the single-interval optimum is feasible with
    # the same weight and usually near-optimal; a tight incumbent makes the
    # length-budget pruning below bite from the start.
    offer(*_gap_trimmed_union(lo, hi, float(left[a0]), float(right[b0]), m_cap))

    # Snapshot layout: (weights, lengths, entry ids, weights as a plain list,
    # lengths as a plain list); the lists give C-speed bisect in the hot loop.
    empty = (np.empty(0), np.empty(0), np.empty(0, dtype=np.int64), [], [])

    def fold(prev, parts, cat: float, b: int):
        """Merge new batch entries into a frontier snapshot and prune it.

        ``parts`` rows are (w, len, parent_id, a); surviving new entries are
        registered in the path log here, after pruning.
        """
        if parts:
            w_arr = np.concatenate([prev[0]] + [p[0] for p in parts])
            l_arr = np.concatenate([prev[1]] + [p[1] for p in parts])
            # Negative markers index the pending (parent, a) rows.
            n_new = sum(p[0].size for p in parts)
            id_arr = np.concatenate(
                [prev[2], -np.arange(1, n_new + 1, dtype=np.int64)]
            )
            pend_parent = np.concatenate([p[2] for p in parts])
            pend_a = np.concatenate([p[3] for p in parts])
        else:
            w_arr, l_arr, id_arr = prev[:3]
            pend_parent = pend_a = None
        keep = (w_arr < need) & (w_arr + cat >= need) & (l_arr <= inc_len)
        w_arr, l_arr, id_arr = w_arr[keep], l_arr[keep], id_arr[keep]
        if w_arr.size == 0:
            return empty
        order = np.lexsort((-l_arr, w_arr))  # weight asc, length desc
        w_arr, l_arr, id_arr = w_arr[order], l_arr[order], id_arr[order]
        l_rev = l_arr[::-1]
        prev_min = np.concatenate([[np.inf], np.minimum.accumulate(l_rev)[:-1]])
        keep = (l_rev < prev_min)[::-1]
        w_arr, l_arr, id_arr = w_arr[keep], l_arr[keep], id_arr[keep]
        # Grid pruning: one (min-length) entry per weight bucket; the
        # maximal-weight entry always stays so feasibility remains reachable.
        buckets = np.floor(w_arr / grid).astype(np.int64)
        first = np.ones(w_arr.size, dtype=bool)
        first[1:] = buckets[1:] != buckets[:-1]
        first[-1] = True
        w_arr, l_arr, id_arr = w_arr[first], l_arr[first], id_arr[first]
        neg = id_arr < 0
        if neg.any():
            rows = (-id_arr[neg] - 1).astype(np.int64)
            start = len(log_parent)
            log_parent.extend(int(v) for v in pend_parent[rows])
            log_a.extend(int(v) for v in pend_a[rows])
            log_b.extend([b] * rows.size)
            id_arr = id_arr.copy()
            id_arr[neg] = np.arange(start, start + rows.size, dtype=np.int64)
        return w_arr, l_arr, id_arr, w_arr.tolist(), l_arr.tolist()

    # pref[m-1][b]: frontier of m-segment unions ending at or before right[b];
    # only layers m < m_cap are kept, deeper unions either close or die.
    pref = [[empty] * n_right for _ in range(m_cap - 1)]
    maxw = np.full((m_cap - 1, n_right), -np.inf)

    for b in range(n_right):
        t1 = float(right[b])
        a_hi = int(np.searchsorted(left, t1, side="right"))
        cat = float(catch[b])
        batches: dict[int, list] = {}

        if a_hi:
            seg_w = table[:a_hi, b]
            seg_len = t1 - left[:a_hi]
            bm = bmax[:a_hi]
            seg_w_list = seg_w.tolist()
            seg_len_list = seg_len.tolist()
            bm_list = bm.tolist()

            # Extend (m-1)-segment unions ending before each start.  Frontier
            # snapshots are sorted by weight with strictly increasing length,
            # so the entries worth combining with segment (a, b) form a
            # contiguous slice: weight at least need - cat - seg_w[a] (else
            # the union can never reach the target) and length at most
            # inc_len - seg_len[a] (else it cannot beat the incumbent).
            prev_ok = bm >= 0
            bm_safe = np.clip(bm, 0, None)
            for m in range(2, m_cap + 1):
                layer = pref[m - 2]
                prev_max = np.where(prev_ok, maxw[m - 2][bm_safe], -np.inf)
                cand_a = np.nonzero(
                    (seg_w > 0)
                    & (prev_max + seg_w + cat >= need)
                    & (seg_len <= inc_len)
                )[0].tolist()
                extend_layer = m < m_cap
                for a in cand_a:
                    sw = seg_w_list[a]
                    sl = seg_len_list[a]
                    snap = layer[bm_list[a]]
                    fw_list = snap[3]
                    if not fw_list:
                        continue
                    fl_list = snap[4]
                    feas_pos = bisect_left(fw_list, need - sw)
                    if feas_pos < len(fw_list):
                        # lengths increase along the frontier: the first
                        # feasible entry is the shortest closing candidate
                        tot = fl_list[feas_pos] + sl
                        if tot <= inc_len:
                            ends = _path_endpoints(
                                path_of(int(snap[2][feas_pos])) + ((a, b),),
                                left,
                                right,
                            )
                            offer(tot, ends)
                    if extend_layer:
                        lo_pos = bisect_left(fw_list, need - cat - sw)
                        stop = min(feas_pos, bisect_right(fl_list, inc_len - sl))
                        if lo_pos < stop:
                            fw, fl, fid = snap[0], snap[1], snap[2]
                            batches.setdefault(m, []).append(
                                (
                                    fw[lo_pos:stop] + sw,
                                    fl[lo_pos:stop] + sl,
                                    fid[lo_pos:stop],
                                    np.full(stop - lo_pos, a, dtype=np.int64),
                                )
                            )

            # Single segments enter the frontier (feasible singles are already
            # covered by the exact incumbent above).
            live1 = (
                (seg_w > 0)
                & (seg_w < need)
                & (seg_w + cat >= need)
                & (seg_len <= inc_len)
            )
            if live1.any():
                a_live = np.nonzero(live1)[0].astype(np.int64)
                batches.setdefault(1, []).append(
                    (
                        seg_w[a_live],
                        seg_len[a_live],
                        np.full(a_live.size, -1, dtype=np.int64),
                        a_live,
                    )
                )

        # Stale entries (pruned by an improved incumbent or a smaller
        # catchable weight) are filtered at query time by the slices above,
        # so untouched frontiers roll forward by reference.
        for m in range(1, m_cap):
            prev = pref[m - 1][b - 1] if b else empty
            parts = batches.get(m, [])
            if parts:
                snap = fold(prev, parts, cat, b)
                pref[m - 1][b] = snap
                maxw[m - 1][b] = snap[0][-1] if snap[0].size else -np.inf
            else:
                pref[m - 1][b] = prev
                maxw[m - 1][b] = maxw[m - 1][b - 1] if b else -np.inf

    segments = [
        Interval(inc_tuple[i], inc_tuple[i + 1]) for i in range(0, len(inc_tuple), 2)
    ]
    return IntervalUnion(segments)


def brute_force_min_union(wb: WeightedBrackets, cfg: SolverConfig) -> IntervalUnion:
    """Exact optimum by exhaustive enumeration; a test oracle for small inputs.

    Enumerates every ordered choice of at most ``max_components`` disjoint
    candidate segments.  Refuses instances with more than 16 distinct
    endpoints.
    """
    lo, hi, w = _dedupe(wb)
    left = np.unique(lo)
    right = np.unique(hi)
    if left.size + right.size > 16:
        raise ValueError("instance too large for exhaustive enumeration")
    need = max(cfg.tau - FEASIBILITY_TOL, _TINY)
    m_cap = int(cfg.max_components)

    segs = [
        (float(left[a]), float(right[b]))
        for a in range(left.size)
        for b in range(right.size)
        if left[a] <= right[b]
    ]
    segs.sort()
    inside = {s: (lo >= s[0]) & (hi <= s[1]) for s in segs}

    lo_sorted = np.sort(lo)
    w_by_lo = w[np.argsort(lo, kind="stable")]
    suffix = np.concatenate([np.cumsum(w_by_lo[::-1])[::-1], [0.0]])

    best: tuple[float, tuple[float, ...]] | None = None

    def recurse(start_after: float, count: int, mask, length: float, path):
        nonlocal best
        weight = float(w[mask].sum()) if mask is not None else 0.0
        if weight >= need:
            cand = (length, tuple(v for seg in path for v in seg))
            if best is None or cand < best:
                best = cand
            return
        if count == m_cap:
            return
        reachable = suffix[int(np.searchsorted(lo_sorted, start_after, side="right"))]
        if weight + reachable < need:
            return
        for s in segs:
            if s[0] <= start_after and count > 0:
                continue
            if best is not None and length + (s[1] - s[0]) > best[0]:
                continue
            new_mask = inside[s] if mask is None else (mask | inside[s])
            recurse(s[1], count + 1, new_mask, length + (s[1] - s[0]), path + [s])

    recurse(-math.inf, 0, None, 0.0, [])
    if best is None:
        raise RuntimeError("no feasible union found")
    ends = best[1]
    return IntervalUnion(
        [Interval(ends[i], ends[i + 1]) for i in range(0, len(ends), 2)]
    )


def fit_prediction_rule(
    data: Dataset, grid, spec: KernelSpec, cfg: SolverConfig
) -> PredictionRule:
    """Minimal-volume union rule on a covariate grid.

    Grid points with an empty kernel neighborhood are marked undefined and
    excluded rather than failing the whole fit.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    sets: list[IntervalUnion | None] = []
    for point in grid:
        wv = weights_at(data, point, spec)
        if wv.empty:
            sets.append(None)
            continue
        wb = WeightedBrackets.from_dataset(data, wv.weights)
        sets.append(min_union(wb, cfg))
    meta = {"kernel": spec.to_json(), "solver": cfg.to_json()}
    return PredictionRule(grid, sets, meta=meta)
