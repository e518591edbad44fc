"""1-D k-means with greedy k-means++ seeding, plus an exact small-n oracle.

Both routines exploit the 1-D structure: optimal clusters are contiguous runs
of the sorted values, so prefix sums give any run's cost in O(1) and a Lloyd
iteration is a handful of bisects instead of an n*k distance sweep. Equal
values always share a label (assignment is by value, ties to the lower
cluster index), so duplicates never straddle a cluster boundary.

Everything here is pure and deterministic per seed; calls may run
concurrently.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from typing import Sequence

from trisect.errors import ArgumentError
from trisect.rng import Rng, mix64

LLOYD_MAX_ITERATIONS = 100
DEFAULT_RESTARTS = 10


@dataclass(frozen=True)
class ClusterAssignment:
    """Result of clustering scalars into k ordered groups.

    ``centroids`` are strictly ascending, so label 0 is the lowest ("lower")
    cluster and label k-1 the highest ("upper"). ``labels`` follow the input
    order of the clustered values.
    """

    k: int
    centroids: tuple[float, ...]
    labels: tuple[int, ...]
    objective: float

    def cluster_values(self, values: Sequence[float]) -> list[list[float]]:
        """Group the original scalars by label (input order preserved)."""
        if len(values) != len(self.labels):
            raise ArgumentError("values do not match this assignment")
        groups: list[list[float]] = [[] for _ in range(self.k)]
        for v, lbl in zip(values, self.labels):
            groups[lbl].append(float(v))
        return groups


def _prefixes(xs: list[float]) -> tuple[list[float], list[float]]:
    n = len(xs)
    ps = [0.0] * (n + 1)
    pq = [0.0] * (n + 1)
    for i, x in enumerate(xs):
        ps[i + 1] = ps[i] + x
        pq[i + 1] = pq[i] + x * x
    return ps, pq


def _run_cost(ps, pq, lo: int, hi: int) -> float:
    """Sum of squared distances of xs[lo:hi] to its own mean."""
    cnt = hi - lo
    s = ps[hi] - ps[lo]
    q = pq[hi] - pq[lo]
    return max(0.0, q - (s * s) / cnt)


def _cost_to_center(ps, pq, lo: int, hi: int, c: float) -> float:
    cnt = hi - lo
    s = ps[hi] - ps[lo]
    q = pq[hi] - pq[lo]
    return max(0.0, q - 2.0 * c * s + c * c * cnt)


def _labels_for(values: Sequence[float], centroids: Sequence[float]) -> tuple[int, ...]:
    thresholds = [
        (centroids[j] + centroids[j + 1]) * 0.5 for j in range(len(centroids) - 1)
    ]
    return tuple(bisect_left(thresholds, float(v)) for v in values)


def _bounds(xs: list[float], centers: Sequence[float]) -> tuple[int, ...]:
    return tuple(
        bisect_right(xs, (centers[j] + centers[j + 1]) * 0.5)
        for j in range(len(centers) - 1)
    )


def _finalize(xs, ps, pq, centers: list[float]):
    """Means/objective of the runs induced by ``centers``; drops empty runs."""
    n = len(xs)
    bounds = _bounds(xs, centers)
    starts = (0,) + bounds
    ends = bounds + (n,)
    centroids: list[float] = []
    objective = 0.0
    for lo, hi in zip(starts, ends):
        if lo == hi:
            continue
        centroids.append((ps[hi] - ps[lo]) / (hi - lo))
        objective += _run_cost(ps, pq, lo, hi)
    return objective, centroids


def _seed_centers(xs, ps, pq, k_eff: int, rng: Rng) -> list[float]:
    """Greedy k-means++: first center uniform over the points, then for each
    new center draw 2+floor(ln k) candidates from the squared-distance
    distribution and keep the one minimizing the total objective."""
    n = len(xs)
    centers = [xs[rng.randrange(n)]]
    d2 = [0.0] * n
    c0 = centers[0]
    for i, x in enumerate(xs):
        dx = x - c0
        d2[i] = dx * dx
    d2cum = [0.0] * (n + 1)
    for i in range(n):
        d2cum[i + 1] = d2cum[i] + d2[i]
    n_cand = 2 + int(math.floor(math.log(k_eff)))
    for _ in range(k_eff - 1):
        total = d2cum[n]
        best_cand = None
        best_obj = math.inf
        for _ in range(n_cand):
            u = rng.random() * total
            idx = bisect_right(d2cum, u) - 1
            if idx >= n:
                idx = n - 1
            while idx > 0 and d2[idx] == 0.0:
                idx -= 1
            cand = xs[idx]
            pos = bisect_left(centers, cand)
            lo = 0 if pos == 0 else bisect_right(xs, (centers[pos - 1] + cand) * 0.5)
            hi = n if pos == len(centers) else bisect_right(xs, (cand + centers[pos]) * 0.5)
            obj = total - (d2cum[hi] - d2cum[lo]) + _cost_to_center(ps, pq, lo, hi, cand)
            if obj < best_obj:
                best_obj = obj
                best_cand = cand
        insort(centers, best_cand)
        # refresh distances inside the new center's cell
        pos = bisect_left(centers, best_cand)
        lo = 0 if pos == 0 else bisect_right(xs, (centers[pos - 1] + best_cand) * 0.5)
        hi = n if pos == len(centers) - 1 else bisect_right(xs, (best_cand + centers[pos + 1]) * 0.5)
        for i in range(lo, hi):
            dx = xs[i] - best_cand
            dd = dx * dx
            if dd < d2[i]:
                d2[i] = dd
        for i in range(lo, n):
            d2cum[i + 1] = d2cum[i] + d2[i]
    return centers


def _lloyd(xs, ps, pq, centers: list[float]):
    n = len(xs)
    m = len(centers)
    prev_bounds: tuple[int, ...] | None = None
    for _ in range(LLOYD_MAX_ITERATIONS):
        bounds = _bounds(xs, centers)
        starts = (0,) + bounds
        ends = bounds + (n,)
        empties = [j for j in range(m) if starts[j] == ends[j]]
        if empties:
            # reseed the first empty cluster at the farthest point
            far_i, far_d = 0, -1.0
            for j in range(m):
                for i in range(starts[j], ends[j]):
                    d = abs(xs[i] - centers[j])
                    if d > far_d:
                        far_i, far_d = i, d
            centers[empties[0]] = xs[far_i]
            centers.sort()
            prev_bounds = None
            continue
        if bounds == prev_bounds:
            break
        prev_bounds = bounds
        centers = [(ps[ends[j]] - ps[starts[j]]) / (ends[j] - starts[j]) for j in range(m)]
    return _finalize(xs, ps, pq, centers)


def kmeans_1d(values: Sequence[float], k: int, seed: int,
              restarts: int = DEFAULT_RESTARTS) -> ClusterAssignment:
    """Cluster scalars into k groups (fewer if there are fewer distinct values).

    Runs ``restarts`` independent greedy-k-means++ seedings followed by Lloyd
    iterations until the assignment is stable (or 100 iterations) and keeps
    the lowest objective; ties keep the earliest restart, so results are
    deterministic per seed.
    """
    values = list(values)
    if not values:
        raise ArgumentError("kmeans_1d needs at least one value")
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    if restarts < 1:
        raise ArgumentError(f"restarts must be >= 1, got {restarts}")
    xs = sorted(float(v) for v in values)
    n = len(xs)
    distinct = 1 + sum(1 for i in range(1, n) if xs[i] != xs[i - 1])
    k_eff = min(k, distinct)
    ps, pq = _prefixes(xs)
    if k_eff == 1:
        centroid = ps[n] / n
        return ClusterAssignment(
            k=1,
            centroids=(centroid,),
            labels=(0,) * len(values),
            objective=_run_cost(ps, pq, 0, n),
        )
    best_obj = math.inf
    best_centroids: list[float] | None = None
    for r in range(restarts):
        rng = Rng(mix64(seed, r))
        centers = _seed_centers(xs, ps, pq, k_eff, rng)
        objective, centroids = _lloyd(xs, ps, pq, centers)
        if objective < best_obj:
            best_obj = objective
            best_centroids = centroids
    assert best_centroids is not None
    assert all(
        best_centroids[i] < best_centroids[i + 1] for i in range(len(best_centroids) - 1)
    ), "centroids must be strictly ascending"
    return ClusterAssignment(
        k=len(best_centroids),
        centroids=tuple(best_centroids),
        labels=_labels_for(values, best_centroids),
        objective=best_obj,
    )


BRUTE_FORCE_LIMIT = 64


def brute_force_kmeans_1d(values: Sequence[float], k: int) -> ClusterAssignment:
    """Exact optimal 1-D k-means by dynamic programming over the sorted
    distinct values (optimal clusters are contiguous runs). Test oracle;
    guarded to <= 64 values."""
    values = list(values)
    if not values:
        raise ArgumentError("brute_force_kmeans_1d needs at least one value")
    if len(values) > BRUTE_FORCE_LIMIT:
        raise ArgumentError(
            f"brute_force_kmeans_1d is limited to {BRUTE_FORCE_LIMIT} values, got {len(values)}"
        )
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    xs = sorted(float(v) for v in values)
    uniq: list[float] = []
    counts: list[int] = []
    for x in xs:
        if uniq and x == uniq[-1]:
            counts[-1] += 1
        else:
            uniq.append(x)
            counts.append(1)
    d = len(uniq)
    k_eff = min(k, d)
    wn = [0] * (d + 1)
    ws = [0.0] * (d + 1)
    wq = [0.0] * (d + 1)
    for i in range(d):
        wn[i + 1] = wn[i] + counts[i]
        ws[i + 1] = ws[i] + counts[i] * uniq[i]
        wq[i + 1] = wq[i] + counts[i] * uniq[i] * uniq[i]

    def wcost(lo: int, hi: int) -> float:
        cnt = wn[hi] - wn[lo]
        s = ws[hi] - ws[lo]
        q = wq[hi] - wq[lo]
        return max(0.0, q - (s * s) / cnt)

    # dp[c][i]: best cost of the first i distinct values in c non-empty clusters
    prev = [math.inf] * (d + 1)
    for i in range(1, d + 1):
        prev[i] = wcost(0, i)
    choice = [[0] * (d + 1) for _ in range(k_eff + 1)]
    for c in range(2, k_eff + 1):
        cur = [math.inf] * (d + 1)
        for i in range(c, d + 1):
            best = math.inf
            arg = c - 1
            for m in range(c - 1, i):
                cost = prev[m] + wcost(m, i)
                if cost < best:
                    best = cost
                    arg = m
            cur[i] = best
            choice[c][i] = arg
        prev = cur
    objective = prev[d]
    cuts = [d]
    for c in range(k_eff, 1, -1):
        cuts.append(choice[c][cuts[-1]])
    cuts.append(0)
    cuts.reverse()
    centroids = []
    label_of: dict[float, int] = {}
    for j in range(k_eff):
        lo, hi = cuts[j], cuts[j + 1]
        centroids.append((ws[hi] - ws[lo]) / (wn[hi] - wn[lo]))
        for i in range(lo, hi):
            label_of[uniq[i]] = j
    return ClusterAssignment(
        k=k_eff,
        centroids=tuple(centroids),
        labels=tuple(label_of[float(v)] for v in values),
        objective=objective,
    )
