"""Site-level CSV ingestion, validation and covariate standardization."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    AlreadyStandardizedError,
    CardinalityError,
    DuplicateCovariatesError,
    DuplicateIdError,
    MalformedCSVError,
    NonNumericError,
    RaggedRowError,
    UnknownRoleError,
    ZeroVarianceError,
)


class Role(enum.Enum):
    EXPERIMENTAL = "E"
    POLICY = "P"
    BOTH = "EP"

    @property
    def experimental(self) -> bool:
        return self is not Role.POLICY

    @property
    def policy(self) -> bool:
        return self is not Role.EXPERIMENTAL


@dataclass(frozen=True)
class Site:
    id: str
    index: int
    role: Role
    covariates: tuple[float, ...]
    sigma: Optional[float] = None
    cost: Optional[float] = None
    estimate: Optional[float] = None


@dataclass(frozen=True)
class ProblemInstance:
    sites: tuple[Site, ...]
    covariate_names: tuple[str, ...]
    standardized: bool = False
    _X: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        X = np.array([s.covariates for s in self.sites], dtype=float)
        X.setflags(write=False)
        object.__setattr__(self, "_X", X)

    @property
    def dimension(self) -> int:
        return len(self.covariate_names)

    @property
    def X(self) -> np.ndarray:
        """Read-only (n_sites, d) covariate matrix."""
        return self._X

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sites)

    @property
    def experimental_indices(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.sites if s.role.experimental)

    @property
    def policy_indices(self) -> tuple[int, ...]:
        return tuple(s.index for s in self.sites if s.role.policy)

    def index_of(self, site_id: str) -> int:
        for s in self.sites:
            if s.id == site_id:
                return s.index
        raise KeyError(site_id)

    def _column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(s, name) is None else getattr(s, name) for s in self.sites],
            dtype=float,
        )

    @property
    def sigmas(self) -> np.ndarray:
        """Per-site standard deviations, NaN where missing."""
        return self._column("sigma")

    @property
    def costs(self) -> np.ndarray:
        return self._column("cost")

    @property
    def estimates(self) -> np.ndarray:
        return self._column("estimate")


_OPTIONAL = ("sigma", "cost", "estimate")
_ROLE_TOKENS = {r.value: r for r in Role}


def _parse_float(text: str, line: int, column: str, optional: bool) -> Optional[float]:
    text = text.strip()
    if text == "" and optional:
        return None
    try:
        value = float(text)
    except ValueError:
        raise NonNumericError(f"non-numeric value {text!r}", line=line, column=column) from None
    if not math.isfinite(value):
        raise NonNumericError(f"non-finite value {text!r}", line=line, column=column)
    return value


def load_csv(
    source: Union[str, bytes, IO],
    sigma_column: str = "sigma",
    cost_column: str = "cost",
    estimate_column: str = "estimate",
) -> ProblemInstance:
    """Parse a site CSV into a validated :class:`ProblemInstance`.

    ``source`` may be a path, raw bytes, or an open text/binary stream.
    Required columns are ``id`` and ``role``; the optional sigma, cost and
    estimate columns may be renamed through the keyword arguments. Every
    other column is a covariate, kept in file order.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    if text.startswith("﻿"):
        text = text[1:]

    try:
        rows = list(csv.reader(io.StringIO(text, newline=""), strict=True))
    except csv.Error as exc:
        raise MalformedCSVError(f"malformed CSV: {exc}") from None
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise MalformedCSVError("empty CSV")

    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise MalformedCSVError("duplicate column names in header", line=1)
    for required in ("id", "role"):
        if required not in header:
            raise MalformedCSVError(f"missing required column {required!r}", line=1)
    special = {sigma_column: "sigma", cost_column: "cost", estimate_column: "estimate"}
    cov_names = [h for h in header if h not in ("id", "role") and h not in special]
    if not cov_names:
        raise MalformedCSVError("no covariate columns", line=1)
    pos = {h: i for i, h in enumerate(header)}

    sites = []
    seen: dict[str, int] = {}
    for row_no, row in enumerate(rows[1:]):
        line = row_no + 2
        if len(row) != len(header):
            raise RaggedRowError(
                f"expected {len(header)} fields, found {len(row)}", line=line
            )
        site_id = row[pos["id"]].strip()
        if not site_id:
            raise MalformedCSVError("empty id", line=line, column="id")
        if site_id in seen:
            raise DuplicateIdError(
                f"duplicate id {site_id!r} (first on line {seen[site_id]})",
                line=line,
                column="id",
            )
        seen[site_id] = line
        token = row[pos["role"]].strip()
        if token not in _ROLE_TOKENS:
            raise UnknownRoleError(
                f"unknown role {token!r}; expected one of E, P, EP", line=line, column="role"
            )
        extras = {}
        for col, attr in special.items():
            if col in pos:
                value = _parse_float(row[pos[col]], line, col, optional=True)
                if value is not None and attr in ("sigma", "cost") and value < 0:
                    raise NonNumericError(f"{attr} must be nonnegative", line=line, column=col)
                extras[attr] = value
        covs = tuple(_parse_float(row[pos[c]], line, c, optional=False) for c in cov_names)
        sites.append(Site(site_id, row_no, _ROLE_TOKENS[token], covs, **extras))

    instance = ProblemInstance(tuple(sites), tuple(cov_names))
    check_instance(instance)
    return instance


def check_instance(instance: ProblemInstance) -> None:
    """Raise if the role cardinalities or covariate distinctness fail."""
    if len(instance.experimental_indices) < 2:
        raise CardinalityError(
            f"need at least 2 experimental sites, found {len(instance.experimental_indices)}"
        )
    if not instance.policy_indices:
        raise CardinalityError("policy site set is empty")
    first: dict[tuple, str] = {}
    for s in instance.sites:
        if s.covariates in first:
            raise DuplicateCovariatesError(
                f"sites {first[s.covariates]!r} and {s.id!r} share covariate vector "
                f"{s.covariates}",
                line=s.index + 2,
            )
        first[s.covariates] = s.id


def dumps_csv(instance: ProblemInstance) -> str:
    """Serialize back to the CSV schema; floats use repr so re-parsing is exact."""
    cols = ["id", "role"]
    present = [a for a in _OPTIONAL if any(getattr(s, a) is not None for s in instance.sites)]
    cols += present + list(instance.covariate_names)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(cols)
    for s in instance.sites:
        row = [s.id, s.role.value]
        for a in present:
            v = getattr(s, a)
            row.append("" if v is None else repr(v))
        row += [repr(v) for v in s.covariates]
        writer.writerow(row)
    return out.getvalue()


def standardize(instance: ProblemInstance, denominator: str = "n-1") -> ProblemInstance:
    """Replace every covariate column by its z-score over all sites."""
    if instance.standardized:
        raise AlreadyStandardizedError("instance is already standardized")
    if denominator not in ("n", "n-1"):
        raise ValueError("denominator must be 'n' or 'n-1'")
    X = instance.X
    ddof = 1 if denominator == "n-1" else 0
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=ddof)
    for j, name in enumerate(instance.covariate_names):
        if not sd[j] > 0 or np.all(X[:, j] == X[0, j]):
            raise ZeroVarianceError("zero-variance covariate column", column=name)
    Z = (X - mean) / sd
    sites = tuple(
        replace(s, covariates=tuple(float(v) for v in Z[s.index])) for s in instance.sites
    )
    out = ProblemInstance(sites, instance.covariate_names, standardized=True)
    check_instance(out)
    return out


@dataclass
class Diagnostics:
    distinct_covariates: bool
    min_distance: float
    closest_pair: Optional[tuple[str, str]]
    missing_sigma: list[str]
    missing_estimate: list[str]
    n_experimental: int
    n_policy: int

    @property
    def min_lipschitz_available(self) -> bool:
        return not self.missing_estimate

    def lines(self) -> list[str]:
        out = [
            "distinct covariates: OK" if self.distinct_covariates
            else "distinct covariates: VIOLATED (duplicate covariate vectors)",
            f"minimum pairwise covariate distance: {self.min_distance:.17g}"
            + (f" ({self.closest_pair[0]}, {self.closest_pair[1]})" if self.closest_pair else ""),
            f"experimental sites: {self.n_experimental}, policy sites: {self.n_policy}",
        ]
        if self.missing_sigma:
            out.append(
                "warning: sigma missing for " + ", ".join(self.missing_sigma)
                + "; bound operations that need these sigmas will fail"
            )
        if self.min_lipschitz_available:
            out.append("min_lipschitz available")
        else:
            out.append("min_lipschitz unavailable: estimate missing for "
                       + ", ".join(self.missing_estimate))
        return out


def validate(instance: ProblemInstance) -> Diagnostics:
    """Report on data assumptions without raising."""
    X = instance.X
    best, pair = math.inf, None
    for a, b in combinations(range(len(instance.sites)), 2):
        d = float(np.sqrt(np.sum((X[a] - X[b]) ** 2)))
        if d < best:
            best, pair = d, (instance.sites[a].id, instance.sites[b].id)
    return Diagnostics(
        distinct_covariates=best > 0,
        min_distance=best,
        closest_pair=pair,
        missing_sigma=[s.id for s in instance.sites if s.sigma is None],
        missing_estimate=[s.id for s in instance.sites if s.estimate is None],
        n_experimental=len(instance.experimental_indices),
        n_policy=len(instance.policy_indices),
    )


def attach_values(
    instance: ProblemInstance,
    sigma: Optional[dict] = None,
    estimate: Optional[dict] = None,
    cost: Optional[dict] = None,
) -> ProblemInstance:
    """Return a copy with per-site values filled in from ``{id: value}`` maps.

    Sites absent from a map keep their current value.
    """
    maps = {"sigma": sigma or {}, "estimate": estimate or {}, "cost": cost or {}}
    for name, m in maps.items():
        for v in m.values():
            if v is not None and not math.isfinite(float(v)):
                raise NonNumericError(f"non-finite {name} value {v!r}")
            if name != "estimate" and v is not None and float(v) < 0:
                raise NonNumericError(f"{name} must be nonnegative")
    sites = tuple(
        replace(s, **{n: float(m[s.id]) for n, m in maps.items() if s.id in m})
        for s in instance.sites
    )
    return ProblemInstance(sites, instance.covariate_names, instance.standardized)


def from_arrays(
    X: Sequence[Sequence[float]],
    roles: Iterable[str],
    ids: Optional[Sequence[str]] = None,
    sigma: Optional[Sequence[Optional[float]]] = None,
    cost: Optional[Sequence[Optional[float]]] = None,
    estimate: Optional[Sequence[Optional[float]]] = None,
) -> ProblemInstance:
    """Build an instance in memory (role tokens as in the CSV schema)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    roles = list(roles)
    n = X.shape[0]
    ids = list(ids) if ids is not None else [f"s{i}" for i in range(n)]
    sites = []
    for i in range(n):
        if roles[i] not in _ROLE_TOKENS:
            raise UnknownRoleError(f"unknown role {roles[i]!r}")
        sites.append(Site(
            ids[i], i, _ROLE_TOKENS[roles[i]], tuple(float(v) for v in X[i]),
            sigma=None if sigma is None or sigma[i] is None else float(sigma[i]),
            cost=None if cost is None or cost[i] is None else float(cost[i]),
            estimate=None if estimate is None or estimate[i] is None else float(estimate[i]),
        ))
    if len(set(ids)) != n:
        raise DuplicateIdError("duplicate ids")
    inst = ProblemInstance(tuple(sites), tuple(f"x{j}" for j in range(X.shape[1])))
    check_instance(inst)
    return inst
