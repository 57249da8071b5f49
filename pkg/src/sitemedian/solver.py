"""Exact k-median and uncapacitated k-facility-location solvers.

Facilities are experimental sites (rows of a :class:`DistanceMatrix`),
clients are policy sites (columns). Internally everything works with row
positions; since rows are sorted by site index, lexicographic order on
positions equals lexicographic order on site indices.

Every candidate set is costed by :func:`_set_costs`, so the enumeration
oracle and branch-and-bound produce bit-identical objective values for the
same set and their tie-breaks agree.
"""

from __future__ import annotations

import heapq
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, islice
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import CapExceededError, UsageError
from .metric import DistanceMatrix

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-6
DEFAULT_CAP = 10**7
_CHUNK = 20000


def enumeration_cap() -> int:
    return int(os.environ.get("SITEMEDIAN_CAP", DEFAULT_CAP))


@dataclass(frozen=True)
class Selection:
    members: tuple[int, ...]
    k_limit: int

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted(self.members)))
        if not 1 <= len(self.members) <= self.k_limit:
            raise ValueError(
                f"selection size {len(self.members)} outside [1, {self.k_limit}]"
            )
        if len(set(self.members)) != len(self.members):
            raise ValueError("selection has repeated members")

    def check(self, D: DistanceMatrix) -> None:
        bad = [i for i in self.members if i not in D.rows]
        if bad:
            raise ValueError(f"sites {bad} are not experimental sites")
        if self.k_limit > D.n_facilities:
            raise ValueError("k_limit exceeds the number of experimental sites")


@dataclass(frozen=True)
class Certificate:
    lower_bound: float
    upper_bound: float
    gap: float
    nodes_explored: int
    proved_optimal: bool


@dataclass(frozen=True)
class Solution:
    selection: Selection
    assignment: dict
    objective: float
    certificate: Certificate

    @property
    def members(self) -> tuple[int, ...]:
        return self.selection.members

    def to_dict(self, D: Optional[DistanceMatrix] = None) -> dict:
        label = D.label if D is not None else str
        c = self.certificate
        return {
            "selected": [label(i) for i in self.members],
            "assignment": {label(j): label(i) for j, i in self.assignment.items()},
            "objective": self.objective,
            "certificate": {
                "lower_bound": c.lower_bound,
                "upper_bound": c.upper_bound,
                "gap": c.gap,
                "nodes": c.nodes_explored,
                "proved_optimal": c.proved_optimal,
            },
        }


def opening_from_welfare(costs: Sequence[float], C: float) -> np.ndarray:
    """Convert welfare-unit experimentation costs c_i into opening costs 2 c_i / C."""
    if not C > 0:
        raise ValueError("Lipschitz constant must be positive")
    c = np.asarray(costs, dtype=float)
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite and nonnegative")
    return 2.0 * c / C


def _check_opening(D: DistanceMatrix, opening) -> Optional[np.ndarray]:
    if opening is None:
        return None
    o = np.asarray(opening, dtype=float)
    if o.shape != (D.n_facilities,):
        raise ValueError(f"need one opening cost per experimental site ({D.n_facilities})")
    if np.any(o < 0) or not np.all(np.isfinite(o)):
        raise ValueError("opening costs must be finite and nonnegative")
    return o


def _check_k(D: DistanceMatrix, k: int) -> None:
    if not isinstance(k, (int, np.integer)) or not 1 <= k <= D.n_facilities:
        raise UsageError(f"k must be an integer in [1, {D.n_facilities}], got {k!r}")


def _set_costs(Dv: np.ndarray, opening: Optional[np.ndarray], combos: np.ndarray) -> np.ndarray:
    """Objective of each row of ``combos`` (facility positions)."""
    total = Dv[combos].min(axis=1).sum(axis=1)
    if opening is not None:
        total = total + opening[combos].sum(axis=1)
    return total


def _set_cost(Dv, opening, members: Sequence[int]) -> float:
    return float(_set_costs(Dv, opening, np.asarray([members], dtype=np.intp))[0])


def _positions(D: DistanceMatrix, members: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(D.row(i) for i in members))


def objective(D: DistanceMatrix, S, opening=None) -> float:
    """Sum over policy sites of the distance to their nearest selected site.

    ``S`` is a :class:`Selection` or an iterable of experimental site
    indices. Policy sites that are themselves selected contribute zero.
    """
    members = S.members if isinstance(S, Selection) else tuple(S)
    if not members:
        raise ValueError("empty selection")
    return _set_cost(D.values, _check_opening(D, opening), _positions(D, members))


def assign(D: DistanceMatrix, members: Iterable[int]) -> dict:
    """Policy site -> nearest selected site (smallest index on ties)."""
    pos = np.asarray(_positions(D, members), dtype=np.intp)
    nearest = pos[np.argmin(D.values[pos], axis=0)]
    return {j: D.rows[int(p)] for j, p in zip(D.cols, nearest)}


def _make_solution(D, k, pos, value, lower, nodes, tol) -> Solution:
    members = tuple(D.rows[p] for p in pos)
    gap = max(value - lower, 0.0)
    cert = Certificate(lower, value, gap, nodes, gap <= tol)
    return Solution(Selection(members, k), assign(D, members), value, cert)


def _combo_chunks(n: int, r: int):
    it = combinations(range(n), r)
    while True:
        block = list(islice(it, _CHUNK))
        if not block:
            return
        yield np.asarray(block, dtype=np.intp)


def _chunk_min(args):
    Dv, opening, combos = args
    vals = _set_costs(Dv, opening, combos)
    i = int(np.argmin(vals))  # first occurrence is the lexicographically smallest
    return float(vals[i]), tuple(int(p) for p in combos[i])


def solve_enumerate(
    D: DistanceMatrix, k: int, opening=None, workers: int = 1, cap: Optional[int] = None
) -> Solution:
    """Exhaustive search; returns the lexicographically smallest optimal set.

    Without opening costs only sets of size exactly ``k`` are scanned (adding
    a facility never raises the objective). With opening costs every size
    from 1 to ``k`` is scanned.
    """
    _check_k(D, k)
    opening = _check_opening(D, opening)
    n = D.n_facilities
    sizes = [k] if opening is None else list(range(1, k + 1))
    count = sum(math.comb(n, r) for r in sizes)
    cap = enumeration_cap() if cap is None else cap
    if count > cap:
        raise CapExceededError(f"{count} candidate sets exceed the enumeration cap {cap}")
    Dv = D.values
    jobs = ((Dv, opening, c) for r in sizes for c in _combo_chunks(n, r))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_chunk_min, jobs))
    else:
        results = [_chunk_min(j) for j in jobs]
    # results arrive in job order; min over (value, set) is order independent anyway
    value, pos = min(results)
    return _make_solution(D, k, pos, value, value, count, DEFAULT_TOLERANCE)


def enumerate_optima(
    D: DistanceMatrix, k: int, tol: float = 0.0, cap: Optional[int] = None
) -> list[Selection]:
    """All size-``k`` sets within ``tol`` (absolute) of the optimum, sorted."""
    _check_k(D, k)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    cap = enumeration_cap() if cap is None else cap
    count = math.comb(D.n_facilities, k)
    if count > cap:
        raise CapExceededError(f"C({D.n_facilities},{k}) = {count} exceeds the cap {cap}")
    vals, sets = [], []
    for combos in _combo_chunks(D.n_facilities, k):
        vals.append(_set_costs(D.values, None, combos))
        sets.append(combos)
    vals = np.concatenate(vals)
    sets = np.concatenate(sets)
    best = vals.min()
    keep = np.flatnonzero(vals <= best + tol)
    return [Selection(tuple(D.rows[p] for p in sets[i]), k) for i in keep]


@dataclass(order=True)
class _Node:
    lb: float
    neg_depth: int
    open_key: tuple
    status: np.ndarray = field(compare=False)
    lam: np.ndarray = field(compare=False)
    branch_on: int = field(compare=False, default=-1)


class _BranchAndBound:
    """Best-first search over open/closed facility decisions.

    Node bound is the larger of
      * the combinatorial bound: opening costs of forced-open facilities plus
        each client's distance to its nearest non-closed facility, and
      * a Lagrangian bound obtained by relaxing the one-facility-per-client
        constraints, tuned by subgradient steps warm-started from the parent.
    """

    ROOT_ITERS = 150
    NODE_ITERS = 25
    SAFETY = 1e-9

    def __init__(self, D, k, opening, node_limit, tolerance, trace):
        self.D = D
        self.Dv = D.values
        self.n, self.m = self.Dv.shape
        self.k = k
        self.opening = opening
        self.fl = opening is not None
        self.node_limit = node_limit
        self.tol = tolerance
        self.trace = trace
        self.best_val = math.inf
        self.best_pos: Optional[tuple] = None
        self.nodes = 0

    def offer(self, pos) -> float:
        pos = tuple(sorted(int(p) for p in pos))
        val = _set_cost(self.Dv, self.opening, pos)
        if (val, pos) < (self.best_val, self.best_pos or ()):
            self.best_val, self.best_pos = val, pos
        return val

    def _lagrangian(self, status, lam, iters):
        Dv, opening = self.Dv, self.opening
        avail = np.flatnonzero(status >= 0)
        forced = status[avail] == 1
        free_pos = avail[~forced]
        r = self.k - int(forced.sum())
        Da = Dv[avail]
        oa = opening[avail] if self.fl else 0.0
        best_L, best_lam, best_T = -math.inf, lam, avail[forced]
        mu, stall = 2.0, 0
        for _ in range(iters):
            rho = np.minimum(Da - lam, 0.0).sum(axis=1) + oa
            rho_free = rho[~forced]
            order = np.argsort(rho_free, kind="stable")[:r]
            if self.fl:
                order = order[rho_free[order] < 0]
            L = float(lam.sum() + rho[forced].sum() + rho_free[order].sum())
            T = np.concatenate([avail[forced], free_pos[order]])
            if L > best_L:
                if L > best_L + 1e-12 * (1.0 + abs(L)):
                    stall = 0
                best_L, best_lam, best_T = L, lam, T
            else:
                stall += 1
                if stall >= 4:
                    mu, stall = mu / 2.0, 0
            if mu < 1e-3:
                break
            g = 1.0 - (Dv[T] < lam).sum(axis=0) if len(T) else np.ones(self.m)
            gg = float(g @ g)
            if gg == 0.0:
                break
            ub = self.best_val if math.isfinite(self.best_val) else abs(L) * 1.5 + 1.0
            if ub <= L:
                break
            lam = lam + (mu * (ub - L) / gg) * g
        return best_L, best_lam, best_T

    def bound(self, status, lam, iters):
        Dv = self.Dv
        avail = np.flatnonzero(status >= 0)
        O = np.flatnonzero(status == 1)
        comb = float(Dv[avail].min(axis=0).sum())
        if self.fl:
            comb += float(self.opening[O].sum())
        L, lam, T = self._lagrangian(status, lam, iters)
        if len(T) and (self.fl or len(T) == self.k):
            self.offer(T)
        if self.fl and len(O):
            self.offer(O)
        lb = max(comb, L - self.SAFETY * (1.0 + abs(L)))
        # branching facility: nearest free facility to the worst-served client
        R = np.flatnonzero(status == 0)
        base = O if len(O) else T
        if len(R) == 0:
            return lb, lam, -1
        if len(base):
            cost = Dv[base].min(axis=0)
        else:
            cost = Dv[avail].min(axis=0)
        j = int(np.argmax(cost))
        i = int(R[np.argmin(Dv[R, j])])
        return lb, lam, i

    def is_leaf(self, status) -> Optional[tuple]:
        n_open = int((status == 1).sum())
        n_free = int((status == 0).sum())
        if self.fl:
            if n_open == self.k or n_free == 0:
                return tuple(np.flatnonzero(status == 1))
            return None
        if n_open == self.k:
            return tuple(np.flatnonzero(status == 1))
        if n_open + n_free == self.k:
            return tuple(np.flatnonzero(status >= 0))
        return None

    def make_node(self, status, lam, depth, iters):
        self.nodes += 1
        leaf = self.is_leaf(status)
        if leaf is not None:
            val = self.offer(leaf) if leaf else math.inf
            if self.trace is not None:
                self.trace.append((val, self.best_val, status.copy()))
            return None
        lb, lam, branch_on = self.bound(status, lam, iters)
        if self.trace is not None:
            self.trace.append((lb, self.best_val, status.copy()))
        key = tuple(np.flatnonzero(status == 1))
        return _Node(lb, -depth, key, status, lam, branch_on)

    def run(self) -> Solution:
        root_status = np.zeros(self.n, dtype=np.int8)
        lam0 = self.Dv.min(axis=0) + np.sort(self.Dv, axis=0)[min(1, self.n - 1)]
        heap = []
        root = self.make_node(root_status, lam0 * 0.5, 0, self.ROOT_ITERS)
        if root is not None:
            heap.append(root)
        if self.best_pos is None and self.fl:
            # any single facility is feasible
            singles = self.Dv.sum(axis=1) + self.opening
            self.offer((int(np.argmin(singles)),))
        while heap:
            if heap[0].lb > self.best_val:
                heap = []
                break
            if self.nodes >= self.node_limit:
                break
            node = heapq.heappop(heap)
            if node.lb > self.best_val:
                continue
            depth = -node.neg_depth + 1
            for value in (1, -1):  # open branch first
                status = node.status.copy()
                status[node.branch_on] = value
                if value == -1 and not self.fl and int((status >= 0).sum()) < self.k:
                    continue
                child = self.make_node(status, node.lam, depth, self.NODE_ITERS)
                if child is not None and child.lb <= self.best_val:
                    heapq.heappush(heap, child)
        if heap:
            lower = min(self.best_val, min(nd.lb for nd in heap))
        else:
            lower = self.best_val
        return _make_solution(
            self.D, self.k, self.best_pos, self.best_val, lower, self.nodes, self.tol
        )


def solve_bnb(
    D: DistanceMatrix,
    k: int,
    opening=None,
    tolerance: float = DEFAULT_TOLERANCE,
    node_limit: int = 10**7,
    trace: Optional[list] = None,
) -> Solution:
    """Exact branch-and-bound; ``opening`` switches to k-facility location.

    The search only discards nodes whose bound strictly exceeds the
    incumbent, so on completion the certificate gap is zero and ties are
    resolved to the lexicographically smallest optimal set, exactly as in
    :func:`solve_enumerate`. ``tolerance`` decides ``proved_optimal`` when
    ``node_limit`` stops the search early.
    """
    _check_k(D, k)
    opening = _check_opening(D, opening)
    if tolerance < 0:
        raise ValueError("tolerance must be nonnegative")
    if node_limit < 1:
        raise UsageError("node_limit must be >= 1")
    return _BranchAndBound(D, k, opening, node_limit, tolerance, trace).run()


def solve_facility_location(
    D: DistanceMatrix, k: int, opening, tolerance: float = DEFAULT_TOLERANCE,
    node_limit: int = 10**7,
) -> Solution:
    """Minimize opening costs plus connection costs over 1 <= |S| <= k."""
    if opening is None:
        raise ValueError("facility location needs opening costs")
    return solve_bnb(D, k, opening, tolerance=tolerance, node_limit=node_limit)


from .lp import export_ilp  # noqa: E402,F401  (the ILP writer belongs to the solver API)
