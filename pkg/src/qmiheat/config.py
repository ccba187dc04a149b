"""Flat key=value configuration text.

One option per line, ``#`` starts a comment, blank lines ignored.  The
normalized form is ``key=value`` with whitespace trimmed, in first-seen
key order; re-serializing a parsed config reproduces it exactly.
"""

from .errors import DataFormatError


def parse_config(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise DataFormatError(f"{source}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def serialize_config(mapping):
    return "".join(f"{k}={v}\n" for k, v in mapping.items())


def load_config(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read(), source=str(path))


def save_config(mapping, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(serialize_config(mapping))
