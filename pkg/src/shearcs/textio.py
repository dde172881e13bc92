"""Small helpers for the plain-text formats used across the package."""

import os
import tempfile
from pathlib import Path


class FormatError(ValueError):
    """Raised when a file does not follow the expected layout."""


def atomic_write_bytes(path, payload):
    """Write ``payload`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def parse_key_values(text, repeatable=()):
    """Parse ``key = value`` lines.

    Blank lines and ``#`` comments are ignored. Keys listed in
    ``repeatable`` collect their values in a list; any other key may
    appear once.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"line {lineno}: empty key")
        if key in repeatable:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        else:
            out[key] = value
    return out


def split_numbers(value, kind=float):
    """Split a whitespace/comma separated list of numbers."""
    return [kind(tok) for tok in value.replace(",", " ").split()]


def read_header(fh, magic):
    """Read a text header terminated by an ``end`` line from a binary stream.

    Returns the header as a dict of ``key -> list[str]`` tokens.
    """
    first = fh.readline().decode("ascii", errors="replace").strip()
    if first != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {first!r}")
    fields = {}
    while True:
        line = fh.readline()
        if not line:
            raise FormatError(f"{magic}: header not terminated")
        tokens = line.decode("ascii").split()
        if not tokens:
            continue
        if tokens[0] == "end":
            return fields
        fields[tokens[0]] = tokens[1:]


def write_header(magic, fields):
    lines = [magic]
    for key, values in fields.items():
        if isinstance(values, (list, tuple)):
            values = " ".join(str(v) for v in values)
        lines.append(f"{key} {values}")
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii")
