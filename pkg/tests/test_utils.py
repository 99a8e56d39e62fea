from pathlib import Path
import pytest

from hierdomain import utils

def test_remove_file_and_tree(tmp_path: Path):
    f = tmp_path / "audit.jsonl"
    f.write_text("{}\n")
    assert utils.remove(f)
    assert not f.exists()

    tree = tmp_path / "hierarchy" / "task1" / "level-0"
    tree.mkdir(parents=True)
    (tree / "plan.txt").write_text("")
    assert utils.remove(tmp_path / "hierarchy")
    assert not (tmp_path / "hierarchy").exists()

def test_remove_missing_path(tmp_path: Path):
    assert not utils.remove(tmp_path / "nothing")

def test_prepare_dir_clears(tmp_path: Path):
    out = tmp_path / "run"
    assert utils.prepare_dir(out)
    (out / "stale.txt").write_text("old")
    assert utils.prepare_dir(out)
    assert (out / "stale.txt").exists()
    assert utils.prepare_dir(out, clear=True)
    assert list(out.iterdir()) == []

def test_digest_ignores_key_order():
    assert utils.digest({"role": "DOMAIN", "seq": 1}) == utils.digest({"seq": 1, "role": "DOMAIN"})
    assert utils.digest({"seq": 1}) != utils.digest({"seq": 2})

def test_jsonl(tmp_path: Path):
    path = tmp_path / "t.jsonl"
    assert utils.write_jsonl(path, [{"seq": 0}, {"seq": 1}]) == 2
    utils.append_jsonl(path, {"seq": 2})
    assert [r["seq"] for r in utils.read_jsonl(path)] == [0, 1, 2]

def test_read_jsonl_reports_line(tmp_path: Path):
    path = tmp_path / "t.jsonl"
    path.write_text('{"seq": 0}\n\nnot json\n')
    with pytest.raises(ValueError, match=":3:"):
        list(utils.read_jsonl(path))
