import pytest

import hierdomain as hd
from hierdomain.envs import fixture_path
from hierdomain.oracle.roles import OracleRole
from hierdomain.recovery import apply_recovery, decide_recovery
from hierdomain.verification import FailurePhase, SymbolicGrounder, Verified, ground_state


def atom(text: str) -> hd.GroundAtom:
    name, *args = text.split()
    return hd.GroundAtom(name, tuple(args))


LOAD = hd.Action("load_truck", ("package_0", "truck_1", "location_0"))

LOAD_WITHOUT_DELETE = """
(:action load_truck
  :parameters (?p - package ?t - truck ?l - location)
  :precondition (and (at ?t ?l) (at ?p ?l))
  :effect (and (in ?p ?t)))
"""


@pytest.fixture
def manifest() -> hd.Manifest:
    return hd.Manifest.load(fixture_path("logistics", "manifest.json"))


@pytest.fixture
def env(manifest):
    return manifest.make_env(0)


@pytest.fixture
def domain(manifest) -> hd.DomainModel:
    return manifest.reference_domain()


def verify(action, skill, env, domain, path=()):
    return hd.verify_leaf(action, skill, env, SymbolicGrounder(), domain, env.objects, path)


# ============================================================================
# Grounding
# ============================================================================

def test_symbolic_grounder_reads_state_atoms(env, domain):
    state = ground_state(SymbolicGrounder(), env.observe(), domain, env.objects)
    assert atom("at package_0 location_0") in state
    assert not any(a.predicate in ("in_city", "airport") for a in state)


def test_symbolic_grounder_rejects_static_predicates(env, domain):
    with pytest.raises(ValueError, match="state-independent"):
        SymbolicGrounder().ground(env.observe(), [domain.predicate("airport")], domain, env.objects)


# ============================================================================
# Leaf verification
# ============================================================================

def test_verified_leaf(env, domain):
    result = verify(LOAD, hd.SkillCall("load_truck", ("package_0", "truck_1")), env, domain)
    assert isinstance(result, Verified)
    assert result.transition.skill.name == "load_truck"
    assert atom("in package_0 truck_1") in result.transition.x_next.atoms


def test_unmet_precondition_executes_nothing(env, domain):
    action = hd.Action("unload_plane", ("package_0", "plane_0", "location_1"))
    report = verify(action, hd.SkillCall("unload_plane", ("package_0", "plane_0")), env, domain, ("transport", "unload_plane"))
    assert report.phase is FailurePhase.PRECONDITION_CHECK
    assert report.missing == ("(in package_0 plane_0)",)
    assert env.interactions == 0
    assert "Hierarchy: transport > unload_plane" in report.summary()


def test_skill_exception(env, domain):
    report = verify(LOAD, hd.SkillCall("unload_truck", ("package_0", "truck_1")), env, domain)
    assert report.phase is FailurePhase.SKILL_EXCEPTION
    assert "preconditions" in report.error
    assert env.interactions == 1


def test_effect_mismatch(env, domain):
    faulty = domain.with_operator(hd.parse_operator(LOAD_WITHOUT_DELETE, domain))
    report = verify(LOAD, hd.SkillCall("load_truck", ("package_0", "truck_1")), env, faulty)
    assert report.phase is FailurePhase.EFFECT_MISMATCH
    assert report.expected == hd.EffectSet(frozenset({atom("in package_0 truck_1")}))
    assert report.observed.delete == {atom("at package_0 location_0")}
    assert "(at package_0 location_0): True -> False" in report.summary()
    assert report.to_dict()["phase"] == "EffectMismatch"


def test_report_effects_only_for_mismatches():
    with pytest.raises(ValueError):
        hd.FailureReport(LOAD, None, FailurePhase.EFFECT_MISMATCH)
    with pytest.raises(ValueError):
        hd.FailureReport(LOAD, None, FailurePhase.SKILL_EXCEPTION, hd.EffectSet(), hd.EffectSet())


def test_decision_needs_operators():
    with pytest.raises(ValueError):
        hd.RecoveryDecision(hd.FixType.PDDL_FIX, ())


# ============================================================================
# Recovery
# ============================================================================

class RecordingTarget:
    def __init__(self, levels: dict[str, int]):
        self.levels = levels
        self.calls: list[tuple[str, str]] = []

    def owner_level(self, operator: str) -> int:
        return self.levels[operator]

    def edit_operator(self, operator: str, feedback: str) -> int:
        self.calls.append(("edit", operator))
        return self.levels[operator]

    def retranslate(self, operator: str, feedback: str) -> int:
        self.calls.append(("retranslate", operator))
        return self.levels[operator] + 1


@pytest.fixture
def report() -> hd.FailureReport:
    return hd.FailureReport(LOAD, hd.SkillCall("load_truck", ("package_0", "truck_1")), FailurePhase.SKILL_EXCEPTION, error="dropped")


@pytest.mark.parametrize("fix, calls, level", [
    (hd.FixType.PDDL_FIX, [("edit", "load_truck")], 1),
    (hd.FixType.PRIOR_SKILLS, [("retranslate", "load_truck"), ("edit", "load_truck")], 1),
    (hd.FixType.INCORRECT_INSTANTIATION, [("retranslate", "load_truck")], 2),
    (hd.FixType.MULTIPLE_SKILLS, [("retranslate", "load_truck")], 2),
])
def test_apply_recovery(report, fix, calls, level):
    target = RecordingTarget({"load_truck": 1})
    assert apply_recovery(hd.RecoveryDecision(fix, ("load_truck",)), target, report) == level
    assert target.calls == calls


def test_apply_recovery_replans_from_highest_level(report):
    target = RecordingTarget({"transport": 0, "load_truck": 1})
    decision = hd.RecoveryDecision(hd.FixType.PDDL_FIX, ("load_truck", "transport"))
    assert apply_recovery(decision, target, report) == 0
    assert [op for _, op in target.calls] == ["load_truck", "transport"]


def test_decide_recovery_asks_reasoner(domain, report):
    oracle = hd.ScriptedOracle(domain)
    failing = hd.FailureReport(LOAD, report.skill, FailurePhase.SKILL_EXCEPTION, error="dropped", state=frozenset({atom("at truck_1 location_0")}))
    decision = decide_recovery(failing, "", oracle, domain.operator("load_truck"), ["load_truck", "unload_truck"])
    assert decision.fix is hd.FixType.PDDL_FIX
    assert decision.operators == ("load_truck",)
    assert oracle.calls(OracleRole.REASONER) == 1
