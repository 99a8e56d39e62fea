import errno
import hashlib
import json
import logging
import pathlib
import shutil
from collections.abc import Iterable, Iterator


log = logging.getLogger(__name__)


def remove(item: pathlib.Path) -> bool:
    """Remove a file, symlink, or directory tree left over from an earlier run.

    Returns True on success, False on failure.
    """
    try:
        if item.is_symlink():
            # is_file() follows symlinks
            item.unlink()
        elif item.is_file():
            item.unlink()
        elif item.is_dir():
            shutil.rmtree(item)
        else:
            log.warning("Will not remove '%s' (unknown type)", item)
            return False
        return True
    except OSError as e:
        if e.errno == errno.ENOENT:
            return True
        elif e.errno == errno.EACCES:
            log.error("Permission denied removing '%s'", item)
        else:
            log.error("Failed to remove '%s': %s", item, e)
        return False


def prepare_dir(path: pathlib.Path, clear: bool = False) -> bool:
    """Create an output directory, optionally emptying it first"""
    if clear and path.exists() and not remove(path):
        return False
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        log.error("Unable to create '%s': %s", path, e)
        return False
    return True


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(data) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def write_jsonl(path: pathlib.Path, records: Iterable[dict]) -> int:
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


def append_jsonl(path: pathlib.Path, record: dict) -> None:
    with path.open("a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: pathlib.Path) -> Iterator[dict]:
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: {e.msg}") from None
