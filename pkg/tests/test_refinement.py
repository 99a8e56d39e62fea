import logging
import math

import numpy as np
import pytest

import hierdomain as hd
from hierdomain.envs import ContinuousWorld, PartPose
from hierdomain.errors import EmptySearchSpace, NoRelevantAtoms, ZeroDefault
from hierdomain.refinement import accept_refinement, find_mismatches, refine_classifier, robustness, sample_pool


HIGH = hd.GroundAtom("high", ("cube",))


def lifted(z: float) -> ContinuousWorld:
    return ContinuousWorld(parts=(("cube", PartPose((0.0, 0.0, z), (0.0, 0.0, 0.0), (0.01, 0.01, 0.01))),))


@pytest.fixture
def data() -> list[tuple[ContinuousWorld, hd.SymbolicState]]:
    return [(lifted(z), frozenset({HIGH}) if z >= 0.05 else frozenset()) for z in (0.0, 0.01, 0.02, 0.1, 0.11, 0.12)]


@pytest.fixture
def program() -> hd.ClassifierProgram:
    return hd.parse_classifier("high(p){h=0.2 m} := z(center(p)) >= h")


@pytest.mark.parametrize("f_min, expected", [
    (1.0, hd.RefineDecision.KEEP),
    (0.9, hd.RefineDecision.KEEP),
    (0.75, hd.RefineDecision.OPTIMIZE_HYPERS),
    (0.6, hd.RefineDecision.OPTIMIZE_HYPERS),
    (0.59, hd.RefineDecision.ORACLE_REFINE),
    (0.0, hd.RefineDecision.ORACLE_REFINE),
])
def test_refine_decision(f_min, expected):
    assert hd.refine_decision(f_min) is expected


def test_refine_decision_range():
    with pytest.raises(ValueError):
        hd.refine_decision(1.5)


def test_f1_scores(program, data):
    assert hd.f1_scores(program, program.defaults, data, [HIGH]).f_min == 0.0
    report = hd.f1_scores(program, {"h": 0.1}, data, [HIGH])
    assert report.f_min == report.f_avg == 1.0
    # h=0.115 keeps one of three positives
    assert hd.f1_scores(program, {"h": 0.115}, data, [HIGH]).f_avg == pytest.approx(0.5)


def test_f1_skips_atoms_never_true(program, data):
    with pytest.raises(NoRelevantAtoms):
        hd.f1_scores(program, {"h": 1.0}, [(w, frozenset()) for w, _ in data], [HIGH])


def test_sample_pool(program):
    search = hd.SearchConfig(samples=50, seed=3)
    pool = sample_pool(program, search)
    assert len(pool) == 51
    assert pool[0] == {"h": 0.2}
    assert all(0.002 <= theta["h"] <= 20.0 for theta in pool)
    assert pool == sample_pool(program, search)


def test_sample_pool_needs_hyperparameters():
    with pytest.raises(EmptySearchSpace):
        sample_pool(hd.parse_classifier("flat(p) := z(center(p)) >= 0"), hd.SearchConfig())


def test_optimize_finds_separating_threshold(program, data):
    theta = hd.optimize_hypers(program, data, [HIGH], hd.SearchConfig(samples=200, seed=0))
    assert 0.02 < theta["h"] <= 0.1
    assert hd.f1_scores(program, theta, data, [HIGH]).f_avg == 1.0


def test_robustness():
    pool = [({"h": 1.0}, 1.0), ({"h": 1.5}, 1.0), ({"h": 3.0}, 0.5)]
    assert robustness({"h": 1.0}, pool, {"h": 1.0}) == 2.0
    assert robustness({"h": 1.5}, pool, {"h": 1.0}) == 1.5
    assert robustness({"h": 1.0}, pool[:2], {"h": 1.0}) == math.inf


def test_robustness_zero_default(caplog):
    pool = [({"h": 0.0}, 1.0), ({"h": 0.5}, 0.0)]
    with caplog.at_level(logging.WARNING, logger="hierdomain.refinement"):
        assert robustness({"h": 0.0}, pool, {"h": 0.0}) == 0.5
    assert [r.levelno for r in caplog.records] == [logging.WARNING]
    assert "Zero default for h" in caplog.text
    with pytest.raises(ZeroDefault):
        robustness({"h": 0.0}, pool, {"h": 0.0}, allow_zero_default=False)


def test_accept_refinement_keeps_better_program(program, data):
    worse = hd.parse_classifier("high(p){h=0.5 m} := z(center(p)) >= h")
    old = (program, {"h": 0.1})
    assert accept_refinement(old, (worse, worse.defaults), data, [HIGH]) is old


def test_refine_classifier_without_oracle(program, data):
    registry = hd.ClassifierRegistry()
    registry.register(program)
    rounds = refine_classifier("high", registry, data, [HIGH], hd.LearnerConfig())
    assert [r.decision for r in rounds] == [hd.RefineDecision.ORACLE_REFINE, hd.RefineDecision.KEEP]
    assert rounds[0].action == "hyperparameters"
    assert 0.02 < registry.theta("high")["h"] <= 0.1


def test_refine_all_skips_unobserved_predicates(program, data):
    registry = hd.ClassifierRegistry()
    registry.register(program)
    registry.register(hd.parse_classifier("low(p){h=0.05} := z(center(p)) < h"))
    rounds = hd.refine_all(registry, data, {"high": [HIGH]})
    assert {r.predicate for r in rounds} == {"high"}


def test_mismatch_description(program, data):
    found = find_mismatches(program, program.defaults, data, [HIGH])
    assert len(found) == 3
    text = found[0].describe()
    assert "Atom: (high cube)" in text
    assert "Classifier result: False" in text
    assert "Expected result: True" in text


def test_accepted_score_never_drops(program, data):
    rng = np.random.default_rng(11)
    current = (program, {"h": 0.2})
    best = hd.f1_scores(program, current[1], data, [HIGH]).f_avg
    for h in rng.uniform(0.0, 0.2, 100):
        candidate = (program, {"h": float(h)})
        before = hd.f1_scores(program, current[1], data, [HIGH]).f_avg
        after = hd.f1_scores(program, candidate[1], data, [HIGH]).f_avg
        current = accept_refinement(current, candidate, data, [HIGH])
        kept = hd.f1_scores(program, current[1], data, [HIGH]).f_avg
        assert kept == max(before, after)
        assert kept >= best
        best = kept


# ============================================================================
# Noisy tolerance scenario
# ============================================================================

ON_TABLE = hd.GroundAtom("on_table", ("cube",))


@pytest.fixture
def noisy() -> list[tuple[ContinuousWorld, hd.SymbolicState]]:
    """20 observations with 1 cm pose noise; half resting on the table, half lifted to 9 cm"""
    rng = np.random.default_rng(5)
    out = []
    for i in range(20):
        resting = i % 2 == 0
        z = (0.0 if resting else 0.09) + float(rng.normal(0.0, 0.01))
        out.append((lifted(z), frozenset({ON_TABLE}) if resting else frozenset()))
    return out


@pytest.fixture
def tolerance() -> hd.ClassifierProgram:
    return hd.parse_classifier("on_table(p){tol=0.001 m} := |z(center(p))| <= tol")


def test_noise_defeats_millimetre_tolerance(tolerance, noisy):
    assert hd.f1_scores(tolerance, tolerance.defaults, noisy, [ON_TABLE]).f_min < 0.9


def test_optimizer_matches_grid_scan(tolerance, noisy):
    grid = np.linspace(0.0005, 0.1, 2000)
    perfect = [t for t in grid if hd.f1_scores(tolerance, {"tol": float(t)}, noisy, [ON_TABLE]).f_avg == 1.0]
    low, high = min(perfect), max(perfect)
    assert low < high

    search = hd.SearchConfig(samples=200, seed=0)
    theta = hd.optimize_hypers(tolerance, noisy, [ON_TABLE], search)
    assert low - grid[1] + grid[0] <= theta["tol"] <= high + grid[1] - grid[0]
    assert hd.f1_scores(tolerance, theta, noisy, [ON_TABLE]).f_avg == 1.0

    # most robust perfect member of the pool: farthest from any imperfect one
    scored = [(p["tol"], hd.f1_scores(tolerance, p, noisy, [ON_TABLE]).f_avg) for p in sample_pool(tolerance, search)]
    imperfect = [t for t, s in scored if s < 1.0]
    margin = {t: min(abs(t - u) for u in imperfect) for t, s in scored if s == 1.0}
    assert theta["tol"] == max(margin, key=margin.get)

    assert hd.optimize_hypers(tolerance, noisy, [ON_TABLE], search) == theta


def test_refinement_recovers_from_noise(tolerance, noisy):
    registry = hd.ClassifierRegistry()
    registry.register(tolerance)
    rounds = refine_classifier("on_table", registry, noisy, [ON_TABLE], hd.LearnerConfig())
    assert rounds[0].action == "hyperparameters"
    assert hd.f1_scores(tolerance, registry.theta("on_table"), noisy, [ON_TABLE]).f_min >= 0.95
