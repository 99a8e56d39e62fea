import json

import pytest

import hierdomain as hd
from hierdomain.envs import LogisticsEnvironment, TabletopEnvironment, fixture_path


def atom(text: str) -> hd.GroundAtom:
    name, *args = text.split()
    return hd.GroundAtom(name, tuple(args))


def test_logistics_manifest():
    m = hd.Manifest.load(fixture_path("logistics", "manifest.json"))
    assert m.environment == "logistics"
    assert len(m.tasks) == 3
    assert m.budgets == hd.Budgets(10, 20)
    assert m.psi_init() == []
    assert m.goal(0).positive == {atom("at package_0 location_2")}
    assert atom("airport location_1") in m.static_init(0)
    assert m.skills().get("drive_truck").arity == 3
    assert isinstance(m.make_env(2), LogisticsEnvironment)


def test_lamp_manifest():
    m = hd.Manifest.load(fixture_path("lamp", "manifest.json"))
    assert [p.name for p in m.psi_init()] == ["assembled"]
    assert m.reference_domain() is None
    assert m.static_init(0) == frozenset()
    assert ("part", "object") in m.types()
    assert "close_gripper" in m.skills()
    assert isinstance(m.make_env(0), TabletopEnvironment)


def test_faulty_manifest_points_at_script():
    m = hd.Manifest.load(fixture_path("logistics", "faulty", "manifest.json"))
    assert m.script is not None and (m.script / "domain.md").is_file()
    assert m.budgets.interactions == 20


@pytest.fixture
def base(tmp_path) -> dict:
    (tmp_path / "domain.pddl").write_text(fixture_path("logistics", "domain.pddl").read_text())
    (tmp_path / "task1.pddl").write_text(fixture_path("logistics", "task1.pddl").read_text())
    return {"environment": "logistics", "domain": "domain.pddl", "tasks": [{"instruction": "move", "problem": "task1.pddl"}]}


def test_minimal_manifest(tmp_path, base):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(base))
    m = hd.Manifest.load(path)
    assert m.name == tmp_path.name
    assert m.budgets == hd.Budgets()


@pytest.mark.parametrize("change, message", [
    ({"environment": "kitchen"}, "Unknown environment"),
    ({"tasks": []}, "no tasks"),
    ({"domain": "missing.pddl"}, "missing files"),
    ({"budgets": {"interactions": -1}}, "Invalid settings"),
    ({"budgets": {"steps": 3}}, "Invalid settings"),
    ({"predicates": ["(at ?o - physobj"]}, "Invalid initial predicate"),
    ({"tasks": [{"instruction": "move"}]}, "no problem file"),
])
def test_rejected_manifests(tmp_path, base, change, message):
    with pytest.raises(hd.ManifestError, match=message):
        hd.Manifest.from_mapping(base | change, tmp_path / "manifest.json")


def test_tabletop_needs_scene(tmp_path):
    with pytest.raises(hd.ManifestError, match="scene"):
        hd.Manifest.from_mapping({"environment": "tabletop", "tasks": [{"instruction": "stack"}]}, tmp_path / "manifest.json")


def test_unreadable_manifest(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json")
    with pytest.raises(hd.ManifestError, match="not valid JSON"):
        hd.Manifest.load(path)
    with pytest.raises(hd.ManifestError, match="Cannot read"):
        hd.Manifest.load(tmp_path / "missing.json")
