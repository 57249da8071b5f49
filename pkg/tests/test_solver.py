import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import line_matrix, random_instance
from sitemedian.errors import CapExceededError, UsageError
from sitemedian.metric import distance_matrix, from_matrix
from sitemedian.ingest import from_arrays
from sitemedian.solver import (
    Selection,
    assign,
    enumerate_optima,
    objective,
    opening_from_welfare,
    solve_bnb,
    solve_enumerate,
    solve_facility_location,
)


def naive_optimum(D, k, opening=None):
    """Plain loop over subsets; sizes 1..k so it also covers facility location."""
    best = (math.inf, ())
    for r in range(1, k + 1):
        for S in combinations(D.rows, r):
            total = 0.0
            for j in D.cols:
                total += min(D(i, j) for i in S)
            if opening is not None:
                total += sum(opening[D.row(i)] for i in S)
            best = min(best, (total, S))
    return best


def feasible_completions(status, D, k, fl):
    O = [D.rows[p] for p in np.flatnonzero(status == 1)]
    R = [D.rows[p] for p in np.flatnonzero(status == 0)]
    for r in range(0, len(R) + 1):
        for extra in combinations(R, r):
            S = tuple(sorted(O + list(extra)))
            if S and (len(S) <= k if fl else len(S) == k):
                yield S


def test_objective_hand_example():
    # facilities at 0, 1, 6; clients at 0, 1, 2.5, 6 (the shared points are the same sites)
    inst = from_arrays([0.0, 1.0, 6.0, 2.5], ["EP", "EP", "EP", "P"])
    D = distance_matrix(inst)
    assert objective(D, (1, 2)) == 2.5
    assert objective(D, Selection((0, 1, 2), 3)) == 1.5


def test_objective_zero_when_all_policy_selected():
    inst = from_arrays([0.0, 1.0, 6.0], ["EP", "EP", "E"])
    assert objective(distance_matrix(inst), (0, 1)) == 0.0


def test_objective_scales(rng):
    inst = random_instance(rng)
    scaled = from_arrays(3 * inst.X, [s.role.value for s in inst.sites])
    S = inst.experimental_indices[:2]
    assert objective(distance_matrix(scaled), S) == pytest.approx(
        3 * objective(distance_matrix(inst), S), rel=1e-12
    )


def test_enumerate_hand_example():
    inst = from_arrays([0.0, 1.0, 6.0], ["EP", "EP", "EP"])
    sol = solve_enumerate(distance_matrix(inst), 1)
    assert sol.members == (1,)
    assert sol.objective == 6.0
    assert sol.certificate.proved_optimal and sol.certificate.gap == 0.0


def test_symmetric_line_tie_break():
    D = line_matrix([1, 4], [2, 3])
    assert solve_enumerate(D, 1).members == (0,)
    assert solve_bnb(D, 1).members == (0,)
    assert solve_enumerate(D, 1).objective == 3.0
    assert [s.members for s in enumerate_optima(D, 1)] == [(0,), (1,)]


def test_full_selection_zero():
    inst = from_arrays([0.0, 1.0, 6.0], ["EP", "EP", "EP"])
    D = distance_matrix(inst)
    assert solve_enumerate(D, 3).objective == 0.0
    assert solve_bnb(D, 3).objective == 0.0


@pytest.mark.parametrize("solver", [solve_enumerate, solve_bnb])
def test_k_out_of_range(solver):
    D = line_matrix([0, 1, 2], [3])
    for k in (0, 4, -1):
        with pytest.raises(UsageError):
            solver(D, k)


def test_node_limit_validation():
    with pytest.raises(UsageError):
        solve_bnb(line_matrix([0, 1, 2], [3]), 1, node_limit=0)


def test_assignment_is_nearest(rng):
    inst = random_instance(rng, n=10)
    D = distance_matrix(inst)
    sol = solve_bnb(D, 3)
    for j, i in sol.assignment.items():
        assert D(i, j) == min(D(s, j) for s in sol.members)
        ties = [s for s in sol.members if D(s, j) == D(i, j)]
        assert i == min(ties)
    assert set(sol.assignment) == set(D.cols)


def test_matches_naive_oracle(rng):
    for _ in range(40):
        inst = random_instance(rng)
        D = distance_matrix(inst)
        k = int(rng.integers(1, min(4, D.n_facilities) + 1))
        opening = rng.uniform(0, 2, D.n_facilities) if rng.random() < 0.5 else None
        value, members = naive_optimum(D, k, opening)
        for sol in (solve_enumerate(D, k, opening), solve_bnb(D, k, opening)):
            assert sol.objective == pytest.approx(value, abs=1e-9)
            assert sol.members == members


def test_enumerate_workers_identical(rng):
    inst = random_instance(rng, n=12)
    D = distance_matrix(inst)
    k = min(4, D.n_facilities)
    a = solve_enumerate(D, k, workers=1)
    b = solve_enumerate(D, k, workers=4)
    assert a == b


def test_enumerate_cap(monkeypatch):
    D = from_matrix(np.arange(30.0).reshape(10, 3))
    with pytest.raises(CapExceededError):
        solve_enumerate(D, 5, cap=100)
    with pytest.raises(CapExceededError):
        enumerate_optima(D, 5, cap=100)
    monkeypatch.setenv("SITEMEDIAN_CAP", "10")
    with pytest.raises(CapExceededError):
        enumerate_optima(D, 5)


def test_enumerate_optima_all_sets():
    D = line_matrix([0, 1, 2, 3, 4], [2.2, 7])
    got = enumerate_optima(D, 2, tol=1e9)
    assert [s.members for s in got] == list(combinations(range(5), 2))


def test_generic_instances_unique_optimum(rng):
    unique = 0
    for _ in range(100):
        # with k > 1 a chosen facility may serve no client and ties are structural
        inst = random_instance(rng, disjoint=True)
        unique += len(enumerate_optima(distance_matrix(inst), 1)) == 1
    assert unique == 100


def test_facility_location_examples():
    D = line_matrix([0, 10], [1, 9])
    sol = solve_facility_location(D, 2, np.array([0.0, 100.0]))
    assert sol.members == (0,)
    assert sol.objective == 10.0
    assert solve_enumerate(D, 2, np.array([0.0, 100.0])).members == (0,)


def test_facility_location_zero_costs(rng):
    for _ in range(10):
        D = distance_matrix(random_instance(rng))
        k = min(3, D.n_facilities)
        plain = solve_bnb(D, k)
        fl = solve_facility_location(D, k, np.zeros(D.n_facilities))
        assert fl.objective == pytest.approx(plain.objective, abs=1e-12)
        # with free facilities, a smaller set may tie; its value must match
        assert objective(D, fl.members) == pytest.approx(plain.objective, abs=1e-12)


def test_opening_from_welfare():
    np.testing.assert_array_equal(opening_from_welfare([5, 5], 2.0), [5.0, 5.0])
    with pytest.raises(ValueError):
        opening_from_welfare([1.0], 0.0)
    with pytest.raises(ValueError):
        opening_from_welfare([-1.0], 1.0)


def test_monotone_in_k(rng):
    for _ in range(10):
        D = distance_matrix(random_instance(rng, n=10))
        vals = [solve_bnb(D, k).objective for k in range(1, D.n_facilities + 1)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_set_monotonicity(rng):
    D = distance_matrix(random_instance(rng, n=10))
    rows = D.rows
    for r in range(1, len(rows)):
        for S in list(combinations(rows, r))[:5]:
            for extra in rows:
                if extra not in S:
                    assert objective(D, S + (extra,)) <= objective(D, S)


def test_argmin_scale_invariance(rng):
    for _ in range(10):
        inst = random_instance(rng)
        roles = [s.role.value for s in inst.sites]
        D = distance_matrix(inst)
        D3 = distance_matrix(from_arrays(2.5 * inst.X, roles))
        k = min(2, D.n_facilities)
        a, b = enumerate_optima(D, k, 1e-9), enumerate_optima(D3, k, 2.5e-9)
        assert [s.members for s in a] == [s.members for s in b]


def test_certificate_honesty_and_lb_validity(rng):
    for trial in range(20):
        inst = random_instance(rng, n=9)
        D = distance_matrix(inst)
        k = min(3, D.n_facilities)
        fl = trial % 2 == 1
        opening = rng.uniform(0, 1, D.n_facilities) if fl else None
        trace = []
        sol = solve_bnb(D, k, opening, trace=trace)
        c = sol.certificate
        assert c.gap == c.upper_bound - c.lower_bound >= 0
        assert c.proved_optimal == (c.gap <= 1e-6)
        assert c.upper_bound == sol.objective
        for lb, incumbent, status in trace:
            best = min(
                (objective(D, S, opening) for S in feasible_completions(status, D, k, fl)),
                default=math.inf,
            )
            assert lb <= best + 1e-9
            assert incumbent >= c.lower_bound - 1e-12


def test_node_limit_reports_gap(rng):
    inst = random_instance(rng, n=24, d=4)
    D = distance_matrix(inst)
    sol = solve_bnb(D, 6, node_limit=1)
    c = sol.certificate
    assert c.nodes_explored >= 1
    assert c.lower_bound <= sol.objective
    assert c.gap == c.upper_bound - c.lower_bound
    assert c.proved_optimal == (c.gap <= 1e-6)
    exact = solve_bnb(D, 6)
    assert c.lower_bound <= exact.objective + 1e-9 <= sol.objective + 1e-9


def test_solution_json_shape(four_site):
    inst, D = four_site
    out = solve_bnb(D, 1).to_dict(D)
    assert out["selected"] == ["b"]
    assert out["assignment"] == {"a": "b", "b": "b", "c": "b", "d": "b"}
    assert set(out["certificate"]) == {"lower_bound", "upper_bound", "gap", "nodes", "proved_optimal"}


def test_selection_validation():
    with pytest.raises(ValueError):
        Selection((), 1)
    with pytest.raises(ValueError):
        Selection((0, 1, 2), 2)
    D = line_matrix([0, 1], [2])
    with pytest.raises(ValueError):
        Selection((5,), 1).check(D)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.integers(1, 4),
    st.booleans(),
)
def test_bnb_equals_enumeration_property(seed, k, with_opening):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    D = distance_matrix(inst)
    k = min(k, D.n_facilities)
    opening = rng.uniform(0, 2, D.n_facilities) if with_opening else None
    a, b = solve_enumerate(D, k, opening), solve_bnb(D, k, opening)
    assert abs(a.objective - b.objective) <= 1e-9
    assert a.members == b.members
    assert assign(D, a.members) == a.assignment
