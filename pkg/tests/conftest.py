import numpy as np
import pytest

from sitemedian.ingest import from_arrays
from sitemedian.metric import distance_matrix, from_matrix


def random_instance(rng, n=None, d=None, disjoint=False, overlap=None, with_sigma=True):
    """Random sites with continuous covariates.

    ``disjoint`` makes experimental and policy sets disjoint; otherwise each
    site is E, P or EP at random (with at least 2 E and 1 P).
    """
    n = n or int(rng.integers(4, 13))
    d = d or int(rng.integers(1, 6))
    X = rng.normal(size=(n, d))
    while True:
        if disjoint:
            n_e = int(rng.integers(2, n))
            roles = ["E"] * n_e + ["P"] * (n - n_e)
            rng.shuffle(roles)
        else:
            roles = list(rng.choice(["E", "P", "EP"], size=n))
        n_exp = sum(r != "P" for r in roles)
        n_pol = sum(r != "E" for r in roles)
        if n_exp >= 2 and n_pol >= 1:
            if overlap is None or any(r == "EP" for r in roles) == overlap:
                break
    sigma = rng.uniform(0.05, 0.5, size=n) if with_sigma else None
    est = rng.normal(size=n)
    return from_arrays(X, roles, sigma=sigma, estimate=est)


def line_matrix(xe, xp):
    """1-D facility/client distance matrix; site indices are facilities then clients."""
    xe, xp = np.asarray(xe, float), np.asarray(xp, float)
    n = len(xe)
    return from_matrix(np.abs(xe[:, None] - xp[None, :]), cols=range(n, n + len(xp)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def four_site():
    """Sites a..d on a line at 0, 1, 2.5, 6; a, b, d may host experiments."""
    inst = from_arrays(
        [0.0, 1.0, 2.5, 6.0], ["EP", "EP", "P", "EP"], ids=list("abcd"),
        sigma=[0.1, 0.1, None, 0.2], cost=[1, 1, None, 5], estimate=[0.2, 0.5, 0.3, 0.9],
    )
    return inst, distance_matrix(inst)
