"""Line-delimited JSON files with a header line, written atomically."""

import json
import os
import tempfile


def dumps(obj):
    # float repr is the shortest string that round-trips exactly
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_jsonl(path, header, rows):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".jsonl")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(dumps(header) + "\n")
            for row in rows:
                fh.write(dumps(row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_jsonl(path, error_cls, code):
    """Return ``(header, rows)``; any malformed content raises ``error_cls(code)``."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if not text:
        raise error_cls(code, f"{path}: empty file")
    if not text.endswith("\n"):
        raise error_cls(code, f"{path}: truncated (no trailing newline)")
    lines = text[:-1].split("\n")
    try:
        parsed = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise error_cls(code, f"{path}: {exc}") from exc
    if not all(isinstance(p, dict) for p in parsed):
        raise error_cls(code, f"{path}: every line must be a JSON object")
    return parsed[0], parsed[1:]
