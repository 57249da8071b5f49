"""Minimax-regret quantities for purposive site selection.

Sigma and estimate arguments are float arrays indexed by site index with
NaN marking a missing value (``ProblemInstance.sigmas`` / ``.estimates``).
Distances come from a :class:`DistanceMatrix`, so any metric works.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from itertools import combinations
from typing import Optional

from .errors import MissingValueError, ThresholdError, UsageError, ZeroDenominatorError
from .ingest import ProblemInstance
from .metric import DistanceMatrix, MetricSpec, nearest_neighbor
from .normal import norm_cdf
from .solver import Selection, solve_bnb

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
UNITS = "welfare per policy site"
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class BConstant:
    z_star: float
    B: float


def _f(z: float) -> float:
    return z * norm_cdf(-z)


@lru_cache(maxsize=None)
def b_constant(precision: float = 1e-10) -> BConstant:
    """Maximize z * Phi(-z) over z >= 0.

    Returns the maximizer and the maximal value; the value is what scales a
    site's standard deviation into its worst-case regret under the sign rule.
    """
    if not precision > 0:
        raise ValueError("precision must be positive")
    step = 0.01
    grid = [i * step for i in range(501)]
    vals = [_f(z) for z in grid]
    i = max(range(len(vals)), key=vals.__getitem__)
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    a = hi - _GOLDEN * (hi - lo)
    b = lo + _GOLDEN * (hi - lo)
    fa, fb = _f(a), _f(b)
    while hi - lo > precision:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + _GOLDEN * (hi - lo)
            fb = _f(b)
        else:
            hi, b, fb = b, a, fa
            a = hi - _GOLDEN * (hi - lo)
            fa = _f(a)
    z = 0.5 * (lo + hi)
    return BConstant(z, _f(z))


def _b(b: Optional[float]) -> float:
    return b_constant().B if b is None else float(b)


def _members(S) -> tuple[int, ...]:
    return S.members if isinstance(S, Selection) else tuple(sorted(S))


def _value(arr, site: int, what: str) -> float:
    v = float(arr[site]) if arr is not None else math.nan
    if math.isnan(v):
        raise MissingValueError(f"{what} missing for site {site}")
    return v


def _unselected_policy(D: DistanceMatrix, members) -> list[int]:
    chosen = set(members)
    return [j for j in D.cols if j not in chosen]


def c_threshold(D: DistanceMatrix, S, sigmas) -> float:
    """Smallest Lipschitz constant bound above which nearest-neighbour rules are optimal for S."""
    members = _members(S)
    worst = 0.0
    for j in _unselected_policy(D, members):
        nn = nearest_neighbor(j, members, D)
        sigma = _value(sigmas, nn, "sigma")
        dist = D(nn, j)
        ratio = math.inf if dist == 0 else SQRT_HALF_PI * sigma / dist
        worst = max(worst, ratio)
    return worst


def c_star(D: DistanceMatrix, k: int, sigmas) -> float:
    """Maximum of :func:`c_threshold` over every nonempty selection of size <= k.

    Any (facility i, client j != i) pair is realised as a nearest-neighbour
    pair by the singleton selection {i}, and every selection's threshold is
    a max over such pairs, so the joint max reduces to a max over pairs.
    """
    if not 1 <= k <= D.n_facilities:
        raise UsageError(f"k must lie in [1, {D.n_facilities}]")
    worst = 0.0
    for a, i in enumerate(D.rows):
        sigma = _value(sigmas, i, "sigma")
        for b, j in enumerate(D.cols):
            if i == j:
                continue
            dist = D.values[a, b]
            worst = max(worst, math.inf if dist == 0 else SQRT_HALF_PI * sigma / dist)
    return worst


def sigma_tilde(C: float, dist: float, sigma: float, site=None) -> float:
    """Effective dispersion used by the randomized nearest-neighbour rule."""
    v = C * dist / SQRT_HALF_PI
    if not v > sigma:
        raise ThresholdError(
            f"C = {C!r} is at or below the threshold for site {site!r}"
            f" (needs C > {SQRT_HALF_PI * sigma / dist if dist else math.inf!r})",
            threshold=SQRT_HALF_PI * sigma / dist if dist else math.inf,
            site=site,
        )
    return math.sqrt((v - sigma) * (v + sigma))


@dataclass(frozen=True)
class TreatmentPlan:
    probabilities: dict
    sigma_tilde: dict
    nearest: dict

    def to_dict(self, D: Optional[DistanceMatrix] = None) -> dict:
        label = D.label if D is not None else str
        return {
            "probabilities": {label(s): p for s, p in self.probabilities.items()},
            "sigma_tilde": {label(s): v for s, v in self.sigma_tilde.items()},
            "nearest": {label(s): label(n) for s, n in self.nearest.items()},
        }


def treatment_rule(D: DistanceMatrix, S, C: float, estimates, sigmas) -> TreatmentPlan:
    """Per-policy-site implementation probabilities of the minimax-regret rule.

    Selected policy sites follow the sign of their own estimate; every other
    policy site uses Phi(estimate of its nearest selected site / sigma_tilde).
    """
    members = _members(S)
    for i in members:
        _value(estimates, i, "estimate")
    probs, tildes, nearest = {}, {}, {}
    chosen = set(members)
    for j in D.cols:
        if j in chosen:
            probs[j] = 1.0 if float(estimates[j]) >= 0 else 0.0
            continue
        nn = nearest_neighbor(j, members, D)
        st = sigma_tilde(C, D(nn, j), _value(sigmas, nn, "sigma"), site=j)
        tildes[j] = st
        nearest[j] = nn
        probs[j] = norm_cdf(float(estimates[nn]) / st)
    return TreatmentPlan(probs, tildes, nearest)


def _policy_count(D: DistanceMatrix) -> int:
    return D.n_clients


def _connection_sum(D: DistanceMatrix, members) -> float:
    total = 0.0
    for j in _unselected_policy(D, members):
        total += D(nearest_neighbor(j, members, D), j)
    return total


def regret_lower_bound(D: DistanceMatrix, S, C: float) -> float:
    members = _members(S)
    return C / (2.0 * _policy_count(D)) * _connection_sum(D, members)


def _require_above(D, members, C, sigmas) -> float:
    thr = c_threshold(D, members, sigmas)
    if not C > thr:
        raise ThresholdError(
            f"C = {C!r} is not above the selection's threshold C(S) = {thr!r}", threshold=thr
        )
    return thr


def _selected_sigma_sum(D: DistanceMatrix, members, sigmas) -> float:
    policy = set(D.cols)
    return sum(_value(sigmas, i, "sigma") for i in members if i in policy)


def regret_upper_bound(D: DistanceMatrix, S, C: float, sigmas, b: Optional[float] = None) -> float:
    members = _members(S)
    _require_above(D, members, C, sigmas)
    first = _b(b) / _policy_count(D) * _selected_sigma_sum(D, members, sigmas)
    return first + regret_lower_bound(D, members, C)


def theorem_slack(D: DistanceMatrix, k: int, sigmas, b: Optional[float] = None) -> float:
    """Uniform bound on |worst-case regret - scaled k-median objective| over A(k)."""
    sigma_e = max(_value(sigmas, i, "sigma") for i in D.rows)
    overlap = len(set(D.rows) & set(D.cols))
    return _b(b) * sigma_e * min(overlap, k) / _policy_count(D)


@dataclass(frozen=True)
class RegretBounds:
    lower: float
    upper: float
    slack_bound: float
    c_threshold: float
    units: str = UNITS

    def to_dict(self) -> dict:
        return asdict(self)


def regret_bounds(
    D: DistanceMatrix, S, C: float, sigmas, k: Optional[int] = None, b: Optional[float] = None
) -> RegretBounds:
    members = _members(S)
    k = len(members) if k is None else k
    thr = _require_above(D, members, C, sigmas)
    return RegretBounds(
        lower=regret_lower_bound(D, members, C),
        upper=regret_upper_bound(D, members, C, sigmas, b),
        slack_bound=theorem_slack(D, k, sigmas, b),
        c_threshold=thr,
    )


@dataclass(frozen=True)
class RelativeErrorBounds:
    lo: float
    hi: float
    slack: float
    denominator: float
    optimum: float

    def to_dict(self) -> dict:
        return asdict(self)


def relative_error_bounds(
    D: DistanceMatrix,
    k: int,
    C: float,
    sigmas,
    b: Optional[float] = None,
    optimum: Optional[float] = None,
) -> RelativeErrorBounds:
    """Bracket the ratio of minimax regret to the scaled optimal k-median value."""
    if optimum is None:
        optimum = solve_bnb(D, k).objective
    den = C / (2.0 * _policy_count(D)) * optimum
    if not den > 0:
        raise ZeroDenominatorError(
            "optimal k-median value is zero: every policy site can be selected, "
            "and the k-median solution is exact"
        )
    slack = theorem_slack(D, k, sigmas, b)
    return RelativeErrorBounds(max(0.0, 1.0 - slack / den), 1.0 + slack / den, slack, den, optimum)


def min_lipschitz(instance: ProblemInstance, spec: Optional[MetricSpec] = None):
    """Smallest Lipschitz constant consistent with the estimated effects.

    Returns ``(C_min, (id_a, id_b))`` for the maximizing pair.
    """
    spec = spec or MetricSpec.euclidean()
    est = instance.estimates
    missing = [s.id for s in instance.sites if math.isnan(est[s.index])]
    if missing:
        raise MissingValueError("estimate missing for " + ", ".join(missing))
    dist = spec.pairwise(instance.X, instance.X)
    best, pair = 0.0, None
    for a, b in combinations(range(len(instance.sites)), 2):
        ratio = abs(est[a] - est[b]) / dist[a, b]
        if pair is None or ratio > best:
            best, pair = float(ratio), (instance.sites[a].id, instance.sites[b].id)
    return best, pair


def heterogeneity_bounds(
    D: DistanceMatrix,
    S,
    C: float,
    c: float,
    sigmas,
    k: Optional[int] = None,
    b: Optional[float] = None,
) -> RegretBounds:
    """Bounds when effects may differ by up to C * distance + c between sites."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    members = _members(S)
    k = len(members) if k is None else k
    unselected = _unselected_policy(D, members)
    thr = 0.0
    for j in unselected:
        nn = nearest_neighbor(j, members, D)
        dist = D(nn, j)
        need = SQRT_HALF_PI * _value(sigmas, nn, "sigma") - c
        if need > 0:
            thr = max(thr, math.inf if dist == 0 else need / dist)
    if not C > thr:
        raise ThresholdError(f"C = {C!r} is not above the threshold {thr!r}", threshold=thr)
    n_p = _policy_count(D)
    lower = regret_lower_bound(D, members, C) + c * len(unselected) / (2.0 * n_p)
    first = _b(b) / n_p * _selected_sigma_sum(D, members, sigmas)
    return RegretBounds(lower, first + lower, theorem_slack(D, k, sigmas, b), thr)
