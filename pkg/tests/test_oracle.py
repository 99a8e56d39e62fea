import json
from dataclasses import replace

import httpx
import pytest

import hierdomain as hd
from hierdomain.envs import DiscreteWorld, fixture_path
from hierdomain.errors import (
    AuthError, MissingContextField, ParseFailure, RateLimited, ReplayDivergence, TranscriptExhausted,
    TransportError, UnparseableDecision,
)
from hierdomain.oracle import build_prompt, domain_answer, parse_response
from hierdomain.oracle.responses import sections
from hierdomain.verification import FailurePhase


def atom(text: str) -> hd.GroundAtom:
    name, *args = text.split()
    return hd.GroundAtom(name, tuple(args))


@pytest.fixture
def manifest() -> hd.Manifest:
    return hd.Manifest.load(fixture_path("logistics", "manifest.json"))


@pytest.fixture
def domain(manifest) -> hd.DomainModel:
    return manifest.reference_domain()


@pytest.fixture
def objects(manifest) -> dict[str, str]:
    return manifest.problem(0).object_types


@pytest.fixture
def translate(manifest, domain, objects) -> dict:
    return {"operator": domain.operator("load_truck"), "skills": manifest.skills(), "objects": objects}


class QueuedOracle(hd.Oracle):
    def __init__(self, answers: list[str]):
        super().__init__()
        self.answers = list(answers)

    @classmethod
    def shortname(cls) -> str:
        return "queued"

    def _respond(self, role, messages, context, seq):
        return self.answers.pop(0)


REASONER_CONTEXT = {
    "operator": hd.OperatorDef("load_truck"),
    "skill": "load_truck(package_0, truck_1)",
    "phase": FailurePhase.SKILL_EXCEPTION.value,
    "state": frozenset({hd.GroundAtom("at", ("truck_1", "location_0"))}),
    "hierarchy": "transport > load_truck",
    "operators": ["load_truck"],
}


# ============================================================================
# Prompts and responses
# ============================================================================

def test_prompt_needs_context_fields():
    with pytest.raises(MissingContextField, match="skills"):
        build_prompt(hd.OracleRole.TRANSLATE, {"operator": hd.OperatorDef("load_truck")})


def test_prompt_is_deterministic(translate):
    first = build_prompt(hd.OracleRole.TRANSLATE, translate)
    assert first == build_prompt(hd.OracleRole.TRANSLATE, translate)
    assert first[0].role == "system"
    assert "(:action load_truck" in first[-1].content


def test_sections_ignore_fenced_headings():
    found = sections("# Skill Mapping\n- a()\n```\n# not a heading\n```\n## Next\nrest")
    assert set(found) == {"skill mapping", "next"}
    assert "# not a heading" in found["skill mapping"]


def test_domain_answer(domain, objects):
    op = domain.operator("unload_truck")
    text = domain_answer([hd.parse_predicate("(loaded ?t - truck) ; state: carries a package")], [op], ["(at package_0 location_1): true"])
    edit = parse_response(hd.OracleRole.DOMAIN, text, {"domain": domain, "objects": objects})
    assert edit.operators == (op,)
    assert edit.predicates[0].kind is hd.PredicateKind.STATE_BASED
    goal = edit.apply_goal(hd.Goal(frozenset({atom("at package_0 location_2")})))
    assert goal.positive == {atom("at package_0 location_2"), atom("at package_0 location_1")}


def test_domain_answer_rejects_state_based_init(domain, objects):
    text = domain_answer([], [], init=["(at package_0 location_1)"])
    with pytest.raises(ParseFailure, match="Initial State"):
        parse_response(hd.OracleRole.DOMAIN, text, {"domain": domain, "objects": objects})


def test_decomposition_needs_operators(domain, objects):
    with pytest.raises(ParseFailure):
        parse_response(hd.OracleRole.DECOMPOSE, domain_answer([], []), {"domain": domain, "objects": objects})


def test_translation(translate):
    calls = parse_response(hd.OracleRole.TRANSLATE, "# Skill Mapping\n- load_truck(?p, t_truck)\n", translate)
    assert calls == [hd.SkillCall("load_truck", ("?p", "t_truck"))]


@pytest.mark.parametrize("answer", [
    "# Skill Mapping\n- fly(?p, ?t)\n",
    "# Skill Mapping\n- load_truck(?p)\n",
    "# Skill Mapping\n- load_truck(?p, ?x)\n",
    "# Skill Mapping\n",
    "- load_truck(?p, ?t)\n",
])
def test_bad_translations(translate, answer):
    with pytest.raises((ParseFailure, ValueError)):
        parse_response(hd.OracleRole.TRANSLATE, answer, translate)


@pytest.mark.parametrize("answer", [
    "no json here",
    '```json\n{"type_of_fix": "rewrite", "operators": ["load_truck"]}\n```',
    '```json\n{"type_of_fix": "pddl-fix", "operators": []}\n```',
    '```json\n{"type_of_fix": "pddl-fix", "operators": ["fly"]}\n```',
])
def test_bad_decisions(answer):
    with pytest.raises(UnparseableDecision):
        parse_response(hd.OracleRole.REASONER, answer, REASONER_CONTEXT)


def test_decision():
    answer = 'Analysis first.\n{"type_of_fix": "prior-skills", "operators": ["load_truck"], "rationale": "truck elsewhere"}'
    decision = parse_response(hd.OracleRole.REASONER, answer, REASONER_CONTEXT)
    assert decision.fix is hd.FixType.PRIOR_SKILLS
    assert decision.rationale == "truck elsewhere"


def test_fallback_plan():
    plan = parse_response(hd.OracleRole.PLAN_FALLBACK, "### Plan\n1. (load_truck package_0 truck_1 location_0)\n2. (drive_truck truck_1 location_0 location_1 city_0)\n", {})
    assert [a.operator for a in plan] == ["load_truck", "drive_truck"]


def test_labels_only_for_requested_atoms():
    context = {"atoms": [atom("hand_empty arm")]}
    labels = parse_response(hd.OracleRole.PSEUDO_LABEL, "- (hand_empty arm): true\n- (holding arm bulb): true\n", context)
    assert labels == {atom("hand_empty arm")}


# ============================================================================
# Re-ask
# ============================================================================

def test_unusable_answer_is_asked_again():
    oracle = QueuedOracle(["garbage", '{"type_of_fix": "pddl-fix", "operators": ["load_truck"]}'])
    decision = oracle.ask(hd.OracleRole.REASONER, REASONER_CONTEXT)
    assert decision.fix is hd.FixType.PDDL_FIX
    assert oracle.last_retried
    assert oracle.calls(hd.OracleRole.REASONER) == 2
    assert oracle.usage_report()["Reasoner"]["retries"] == 1
    assert "could not be used" in oracle.session.exchanges[1].messages[-1].content
    assert len(oracle.session.history) == 2


def test_second_unusable_answer_fails():
    oracle = QueuedOracle(["garbage", "still garbage"])
    with pytest.raises(UnparseableDecision):
        oracle.ask(hd.OracleRole.REASONER, REASONER_CONTEXT)


# ============================================================================
# Scripted and replay
# ============================================================================

def test_scripted_translation(domain, translate):
    oracle = hd.ScriptedOracle(domain)
    assert oracle.ask(hd.OracleRole.TRANSLATE, translate) == [hd.SkillCall("load_truck", ("?p", "?t"))]


def test_scripted_labels_read_true_state(domain):
    world = DiscreteWorld(frozenset({atom("at package_0 location_0")}))
    context = {"scene": world, "atoms": [atom("at package_0 location_0"), atom("in package_0 truck_1")]}
    assert hd.ScriptedOracle(domain).ask(hd.OracleRole.PSEUDO_LABEL, context) == {atom("at package_0 location_0")}


def test_record_and_replay(tmp_path, domain, translate):
    transcript = tmp_path / "transcript.jsonl"
    recorded = hd.ScriptedOracle(domain, record=transcript).ask(hd.OracleRole.TRANSLATE, translate)

    replay = hd.ReplayOracle(transcript)
    assert replay.ask(hd.OracleRole.TRANSLATE, translate) == recorded
    with pytest.raises(TranscriptExhausted):
        replay.ask(hd.OracleRole.TRANSLATE, translate)


def test_replay_divergence(tmp_path, domain, translate):
    transcript = tmp_path / "transcript.jsonl"
    hd.ScriptedOracle(domain, record=transcript).ask(hd.OracleRole.TRANSLATE, translate)

    changed = dict(translate, operator=domain.operator("unload_truck"))
    with pytest.raises(ReplayDivergence) as e:
        hd.ReplayOracle(transcript).ask(hd.OracleRole.TRANSLATE, changed)
    assert e.value.seq == 1
    assert "unload_truck" in e.value.diff


# ============================================================================
# Live
# ============================================================================

ENDPOINT = hd.LiveEndpoint("http://oracle.test/v1/chat/completions", "secret")


def completion(content: str) -> httpx.Response:
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def live(responses: list[httpx.Response], seen: list[httpx.Request] | None = None) -> hd.LiveOracle:
    def handler(request: httpx.Request) -> httpx.Response:
        if seen is not None:
            seen.append(request)
        return responses.pop(0)
    return hd.LiveOracle(ENDPOINT, transport=httpx.MockTransport(handler), backoff=0.0)


def test_live_retries_server_errors(translate):
    seen: list[httpx.Request] = []
    oracle = live([httpx.Response(503), httpx.Response(502), completion("# Skill Mapping\n- load_truck(?p, ?t)\n")], seen)
    assert oracle.ask(hd.OracleRole.TRANSLATE, translate) == [hd.SkillCall("load_truck", ("?p", "?t"))]
    assert len(seen) == 3
    assert seen[0].headers["Authorization"] == "Bearer secret"
    assert json.loads(seen[0].content)["temperature"] == 0.0


def test_live_sends_compacted_history(translate):
    seen: list[httpx.Request] = []
    answer = "# Skill Mapping\n- load_truck(?p, ?t)\n"
    oracle = live([completion("garbage"), completion(answer), completion(answer)], seen)
    oracle.ask(hd.OracleRole.TRANSLATE, translate)
    oracle.ask(hd.OracleRole.TRANSLATE, translate)

    first, retry, second = (json.loads(r.content)["messages"] for r in seen)
    assert [m["role"] for m in first] == ["system", "user"]
    assert [m["role"] for m in retry] == ["system", "user", "assistant", "user"]
    assert [m["role"] for m in second] == ["system", "user", "assistant", "user"]
    assert second[1] == first[1]
    assert second[2] == {"role": "assistant", "content": answer}
    assert "garbage" not in json.dumps(second)


def test_live_history_is_bounded(translate):
    seen: list[httpx.Request] = []
    answer = "# Skill Mapping\n- load_truck(?p, ?t)\n"
    endpoint = replace(ENDPOINT, history_turns=1)
    oracle = hd.LiveOracle(endpoint, transport=httpx.MockTransport(lambda r: seen.append(r) or completion(answer)), backoff=0.0)
    for _ in range(4):
        oracle.ask(hd.OracleRole.TRANSLATE, translate)
    assert len(oracle.session.history) == 8
    assert len(json.loads(seen[-1].content)["messages"]) == 4

    silent = hd.LiveOracle(replace(ENDPOINT, history_turns=0), transport=httpx.MockTransport(lambda r: seen.append(r) or completion(answer)))
    silent.session.history = list(oracle.session.history)
    silent.ask(hd.OracleRole.TRANSLATE, translate)
    assert len(json.loads(seen[-1].content)["messages"]) == 2


@pytest.mark.parametrize("responses, error", [
    ([httpx.Response(401)], AuthError),
    ([httpx.Response(400, text="bad request")], TransportError),
    ([httpx.Response(429) for _ in range(3)], RateLimited),
    ([httpx.Response(500) for _ in range(3)], TransportError),
    ([httpx.Response(200, json={"choices": []})], TransportError),
])
def test_live_errors(translate, responses, error):
    with pytest.raises(error):
        live(list(responses)).ask(hd.OracleRole.TRANSLATE, translate)


def test_preflight_fails_on_bad_credentials():
    with pytest.raises(AuthError):
        live([httpx.Response(403)]).preflight()


def test_endpoint_from_environment():
    endpoint = hd.LiveEndpoint.from_environ({"HIERDOMAIN_ENDPOINT": "http://x", "HIERDOMAIN_API_KEY": "k", "HIERDOMAIN_TEMPERATURE": "0.5"})
    assert endpoint.temperature == 0.5
    with pytest.raises(ValueError, match="HIERDOMAIN_API_KEY"):
        hd.LiveEndpoint.from_environ({"HIERDOMAIN_ENDPOINT": "http://x"})
