"""Bundled per-country effect estimates for the 15-country survey experiment.

Difference-in-means effects of a high- versus low-skilled immigration
framing on support, with standard errors. Covariates are not bundled; see
the README for how to build the covariate CSV and merge these values in.
"""

from __future__ import annotations

import csv
import io
from importlib import resources

from .ingest import ProblemInstance, attach_values

ALIASES = {"Czechia": "Czech Republic", "UK": "United Kingdom", "Great Britain": "United Kingdom"}


def country_estimates() -> dict[str, tuple[float, float]]:
    """``{country: (estimate, standard_error)}``."""
    text = resources.files(__package__).joinpath("data/country_estimates.csv").read_text("utf-8")
    return {
        row["id"]: (float(row["estimate"]), float(row["sigma"]))
        for row in csv.DictReader(io.StringIO(text))
    }


def with_country_estimates(instance: ProblemInstance) -> ProblemInstance:
    """Fill estimate and sigma for every site whose id names a bundled country."""
    table = country_estimates()
    est, sig = {}, {}
    for site in instance.sites:
        name = ALIASES.get(site.id, site.id)
        if name in table:
            est[site.id], sig[site.id] = table[name]
    return attach_values(instance, sigma=sig, estimate=est)
