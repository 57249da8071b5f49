"""Connection-cost metrics, facility-by-client distance matrices, nearest neighbours."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, MetricSpecError
from .ingest import ProblemInstance


class MetricKind(enum.Enum):
    EUCLIDEAN = "euclidean"
    WEIGHTED_EUCLIDEAN = "weuclid"
    HOLDER_POWER = "holder"


@dataclass(frozen=True)
class MetricSpec:
    """Declarative metric description.

    ``HOLDER_POWER`` raises a base metric to ``alpha``; the base is Euclidean
    unless ``weight`` is given, in which case it is the weighted Euclidean
    distance ``sqrt((x-y)' W (x-y))``.
    """

    kind: MetricKind = MetricKind.EUCLIDEAN
    weight: Optional[np.ndarray] = field(default=None, compare=False)
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind is MetricKind.WEIGHTED_EUCLIDEAN and self.weight is None:
            raise MetricSpecError("weighted Euclidean metric needs a weight matrix")
        if self.weight is not None:
            W = np.array(self.weight, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise MetricSpecError(f"weight matrix must be square, got shape {W.shape}")
            if not np.array_equal(W, W.T):
                raise MetricSpecError("weight matrix is not symmetric")
            try:
                np.linalg.cholesky(W)
            except np.linalg.LinAlgError:
                raise MetricSpecError("weight matrix is not positive definite") from None
            W.setflags(write=False)
            object.__setattr__(self, "weight", W)
        if self.kind is MetricKind.HOLDER_POWER:
            if self.alpha is None or not (0.0 < self.alpha <= 1.0):
                raise MetricSpecError(f"alpha must lie in (0, 1], got {self.alpha}")
        elif self.alpha is not None:
            raise MetricSpecError("alpha only applies to the Holder power metric")

    @classmethod
    def euclidean(cls) -> "MetricSpec":
        return cls()

    @classmethod
    def weighted(cls, W) -> "MetricSpec":
        return cls(MetricKind.WEIGHTED_EUCLIDEAN, weight=W)

    @classmethod
    def holder(cls, alpha: float, W=None) -> "MetricSpec":
        return cls(MetricKind.HOLDER_POWER, weight=W, alpha=alpha)

    @property
    def dimension(self) -> Optional[int]:
        return None if self.weight is None else self.weight.shape[0]

    def pairwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """(len(A), len(B)) matrix of distances between the rows of A and B."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.shape[-1] != B.shape[-1]:
            raise DimensionError(f"dimension mismatch: {A.shape[-1]} vs {B.shape[-1]}")
        if self.dimension is not None and A.shape[-1] != self.dimension:
            raise DimensionError(
                f"metric expects dimension {self.dimension}, got {A.shape[-1]}"
            )
        diff = A[:, None, :] - B[None, :, :]
        if self.weight is None:
            sq = np.einsum("ijk,ijk->ij", diff, diff)
        else:
            sq = np.einsum("ijk,kl,ijl->ij", diff, self.weight, diff)
        # rounding can leave tiny negatives for nearly equal points under W
        dist = np.sqrt(np.maximum(sq, 0.0))
        if self.kind is MetricKind.HOLDER_POWER:
            with np.errstate(divide="ignore"):
                dist = dist ** self.alpha
        return dist


def distance(spec: MetricSpec, x: Sequence[float], y: Sequence[float]) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.ndim != 1 or y.ndim != 1:
        raise DimensionError("distance expects two vectors")
    return float(spec.pairwise(x[None, :], y[None, :])[0, 0])


def parse_metric(text: str, read_matrix=None) -> MetricSpec:
    """Parse ``euclidean``, ``weuclid:<file>``, ``holder:<alpha>[:weuclid:<file>]``."""
    read_matrix = read_matrix or (lambda path: np.loadtxt(path, ndmin=2))
    parts = text.split(":")
    try:
        if parts == ["euclidean"]:
            return MetricSpec.euclidean()
        if parts[0] == "weuclid" and len(parts) >= 2:
            return MetricSpec.weighted(read_matrix(":".join(parts[1:])))
        if parts[0] == "holder" and len(parts) >= 2:
            alpha = float(parts[1])
            if len(parts) == 2:
                return MetricSpec.holder(alpha)
            if parts[2] == "weuclid" and len(parts) >= 4:
                return MetricSpec.holder(alpha, read_matrix(":".join(parts[3:])))
    except ValueError as exc:
        raise MetricSpecError(f"bad metric {text!r}: {exc}") from None
    raise MetricSpecError(f"unrecognized metric {text!r}")


@dataclass(frozen=True)
class DistanceMatrix:
    """Distances from experimental sites (rows) to policy sites (columns).

    ``rows`` and ``cols`` hold site indices in ascending order, so row
    position order coincides with site index order.
    """

    values: np.ndarray
    rows: tuple[int, ...]
    cols: tuple[int, ...]
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.rows), len(self.cols)):
            raise DimensionError("distance matrix shape does not match index sets")
        if list(self.rows) != sorted(self.rows) or list(self.cols) != sorted(self.cols):
            raise ValueError("row and column site indices must be ascending")
        object.__setattr__(self, "_row_pos", {s: i for i, s in enumerate(self.rows)})
        object.__setattr__(self, "_col_pos", {s: j for j, s in enumerate(self.cols)})

    @property
    def n_facilities(self) -> int:
        return len(self.rows)

    @property
    def n_clients(self) -> int:
        return len(self.cols)

    def row(self, site: int) -> int:
        return self._row_pos[site]

    def col(self, site: int) -> int:
        return self._col_pos[site]

    def __call__(self, i: int, j: int) -> float:
        """Distance between experimental site ``i`` and policy site ``j``."""
        return float(self.values[self._row_pos[i], self._col_pos[j]])

    def label(self, site: int) -> str:
        return self.ids[site] if self.ids else str(site)


def distance_matrix(instance: ProblemInstance, spec: Optional[MetricSpec] = None) -> DistanceMatrix:
    spec = spec or MetricSpec.euclidean()
    rows = instance.experimental_indices
    cols = instance.policy_indices
    X = instance.X
    values = spec.pairwise(X[list(rows)], X[list(cols)])
    # a site in both roles is at distance exactly zero from itself
    for j, s in enumerate(cols):
        if instance.sites[s].role.experimental:
            values[rows.index(s), j] = 0.0
    return DistanceMatrix(values, rows, cols, instance.ids)


def from_matrix(values, rows=None, cols=None, ids=()) -> DistanceMatrix:
    """Wrap a raw facility-by-client matrix; default site indices are positions."""
    values = np.asarray(values, dtype=float)
    rows = tuple(range(values.shape[0])) if rows is None else tuple(rows)
    cols = tuple(range(values.shape[1])) if cols is None else tuple(cols)
    return DistanceMatrix(values, rows, cols, tuple(ids))


def nearest_neighbor(j: int, S: Iterable[int], D: DistanceMatrix) -> int:
    """Member of ``S`` closest to policy site ``j``; ties go to the smallest index."""
    members = sorted(S)
    if not members:
        raise ValueError("nearest_neighbor needs a nonempty selection")
    col = D.col(j)
    best, best_d = None, np.inf
    for i in members:
        d = D.values[D.row(i), col]
        if d < best_d:
            best, best_d = i, d
    return best


@dataclass
class AxiomReport:
    trials: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_metric_axioms(
    spec: MetricSpec, points, trials: int, seed: int = 0, slack: float = 1e-12
) -> AxiomReport:
    """Spot-check symmetry, identity of indiscernibles and the triangle inequality."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    rng = np.random.default_rng(seed)
    report = AxiomReport(trials)
    for a, b, c in rng.integers(0, len(P), size=(trials, 3)):
        x, y, z = P[a], P[b], P[c]
        dxy, dyx = distance(spec, x, y), distance(spec, y, x)
        dxz, dyz = distance(spec, x, z), distance(spec, y, z)
        witness = (int(a), int(b), int(c))
        if not (np.isfinite(dxy) and dxy >= 0):
            report.violations.append(("nonnegativity", witness, dxy))
        if abs(dxy - dyx) > slack:
            report.violations.append(("symmetry", witness, dxy - dyx))
        same = np.array_equal(x, y)
        if same and dxy != 0 or not same and not dxy > 0:
            report.violations.append(("identity", witness, dxy))
        if dxz > dxy + dyz + slack:
            report.violations.append(("triangle", witness, dxz - dxy - dyz))
    return report
