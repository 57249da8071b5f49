import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitemedian.randomized import (
    InfeasibleConfigError,
    LineConfig,
    SamplingScheme,
    brute_force_grid,
    clamp01,
    eval_regret,
    overlap_worst_case,
    verify_lemma3,
    worst_case_regret,
)

SCHEMES = list(SamplingScheme)


def test_clamp01():
    assert clamp01(1.7) == 1.0
    assert clamp01(-0.3) == 0.0
    assert clamp01(0.4) == 0.4


def test_eval_examples():
    C = 1.0
    for s in SCHEMES:
        assert eval_regret(LineConfig(C, (0, 0, 0, 0)), s) == 0.0
    assert eval_regret(LineConfig(C, (0, C, C, 0)), SamplingScheme.UniformRandom14) == C / 2
    assert eval_regret(LineConfig(C, (0, C, 2 * C, 3 * C)), SamplingScheme.PurposiveSite1) == 0.75


def test_infeasible_config():
    with pytest.raises(InfeasibleConfigError):
        LineConfig(1.0, (0, 2, 0, 0))
    with pytest.raises(InfeasibleConfigError):
        LineConfig(1.0, (0, 1, 2, 3.5))
    with pytest.raises(InfeasibleConfigError):
        LineConfig(0.0, (0, 0, 0, 0))


@pytest.mark.parametrize("scheme,target", [
    (SamplingScheme.UniformRandom14, 0.5),
    (SamplingScheme.PurposiveSite1, 0.75),
    (SamplingScheme.PurposiveSite4, 0.75),
])
def test_worst_cases(scheme, target):
    wc = worst_case_regret(scheme, 1.0, 200)
    assert wc.value == pytest.approx(target, abs=1e-6)
    assert wc.grid_value <= wc.candidate_value + 1e-12
    cfg = LineConfig(1.0, wc.argmax_tau)
    assert eval_regret(cfg, scheme) == pytest.approx(wc.value, abs=1e-12)


def test_scales_linearly():
    for s in SCHEMES:
        one = worst_case_regret(s, 1.0, 60).value
        two = worst_case_regret(s, 2.0, 60).value
        assert two == pytest.approx(2 * one, rel=1e-12)


def test_resolution_floor():
    with pytest.raises(ValueError):
        worst_case_regret(SamplingScheme.UniformRandom14, 1.0, 49)


def test_reduced_grid_matches_brute_force():
    # the reduced scan only visits extreme tau1/tau4; compare with the full 4-D grid
    res = 12
    from sitemedian.randomized import _grid_search

    for s in SCHEMES:
        reduced, _, _ = _grid_search(s, 1.0, res)
        full, _ = brute_force_grid(s, 1.0, res)
        assert reduced == pytest.approx(full, abs=1e-12)


def test_grid_error_bound():
    for s in SCHEMES:
        for res in (50, 51, 97):
            wc = worst_case_regret(s, 1.0, res)
            assert wc.grid_value <= wc.candidate_value + 1e-12
            assert wc.candidate_value - wc.grid_value <= 4 * wc.grid_step


def test_verify_report():
    report = verify_lemma3(1.0, 200)
    d = report.to_dict()
    assert report.passed and d["pass"]
    assert d["purposive"] == pytest.approx(0.75, abs=1e-6)
    assert d["randomized"] == pytest.approx(0.5, abs=1e-6)
    assert d["gap"] == pytest.approx(0.25, abs=1e-6)
    p1 = report.results[SamplingScheme.PurposiveSite1].value
    p4 = report.results[SamplingScheme.PurposiveSite4].value
    assert p1 == p4
    assert d["randomized"] <= d["purposive"]
    assert verify_lemma3(1.0, 50).passed
    assert verify_lemma3(2.0, 60).to_dict()["purposive"] == pytest.approx(1.5)


feasible = st.tuples(
    st.floats(-3, 3), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).map(lambda d: (d[0], d[0] + d[1], d[0] + d[1] + d[2], d[0] + d[1] + d[2] + d[3]))


@settings(max_examples=200, deadline=None)
@given(feasible, st.sampled_from(SCHEMES))
def test_dominance_and_sign_symmetry(tau, scheme):
    cfg = LineConfig(1.0, tau)
    v = eval_regret(cfg, scheme)
    assert v <= worst_case_regret(scheme, 1.0, 50).value + 1e-12
    flipped = eval_regret(LineConfig(1.0, tuple(-t for t in tau)), scheme)
    assert flipped == pytest.approx(v, abs=1e-12)


def test_mirror_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(50):
        steps = rng.uniform(-1, 1, 3)
        tau = tuple(np.concatenate([[0.0], np.cumsum(steps)]))
        a = eval_regret(LineConfig(1.0, tau), SamplingScheme.PurposiveSite1)
        b = eval_regret(LineConfig(1.0, tau[::-1]), SamplingScheme.PurposiveSite4)
        assert a == pytest.approx(b, abs=1e-12)


def test_overlap_variant_runs():
    out = overlap_worst_case(1.0, p_site1=0.5, resolution=60)
    assert 0.0 <= out["worst_case"] <= 1.0
    assert abs(out["argmax_tau"][0] - out["argmax_tau"][1]) <= 1.0 + 1e-12
    with pytest.raises(ValueError):
        overlap_worst_case(1.0, p_site1=1.5)
