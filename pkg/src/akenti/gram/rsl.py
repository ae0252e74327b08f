"""RSL job descriptions and the executable-to-resource mapping file."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

RECOGNIZED = {
    "executable": "executable",
    "arguments": "arguments",
    "count": "count",
    "maxmemory": "maxMemory",
    "queue": "queue",
    "jobtag": "jobtag",
}
NUMERIC = ("count", "maxmemory")
DEFAULT_JOBTAG = "default"
JOBCLASS_KEY = "jobclass"

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class RslSyntaxError(ValueError):
    pass


class DuplicateAttribute(RslSyntaxError):
    pass


class NoMapping(LookupError):
    pass


@dataclass(frozen=True)
class RSLRequest:
    attributes: dict[str, str] = field(default_factory=dict)

    def get(self, name: str, default: str | None = None) -> str | None:
        return self.attributes.get(name.lower(), default)

    @property
    def executable(self) -> str | None:
        return self.attributes.get("executable")

    @property
    def jobtag(self) -> str:
        return self.attributes.get("jobtag") or DEFAULT_JOBTAG

    def system_attributes(self) -> dict[str, str]:
        """RSL values offered to the decision function as SYSTEM attributes."""
        return {
            RECOGNIZED[name]: value
            for name, value in self.attributes.items()
            if name in ("executable", "count", "maxmemory", "queue")
        }

    def to_text(self) -> str:
        def quote(v: str) -> str:
            if re.fullmatch(r"[^\s()\"]+", v):
                return v
            return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'

        return "&" + "".join(f"({k}={quote(v)})" for k, v in self.attributes.items())


def parse_rsl(text: str) -> RSLRequest:
    """Parse ``&(name=value)(name=value)...``; names are case-insensitive."""
    if not text or not text.strip():
        raise RslSyntaxError("empty RSL")
    s, pos = text, 0

    def ws():
        nonlocal pos
        while pos < len(s) and s[pos].isspace():
            pos += 1

    ws()
    if pos >= len(s) or s[pos] != "&":
        raise RslSyntaxError(f"RSL must start with '&' (position {pos})")
    pos += 1
    attrs: dict[str, str] = {}
    while True:
        ws()
        if pos >= len(s):
            break
        if s[pos] != "(":
            raise RslSyntaxError(f"expected '(' at position {pos}")
        pos += 1
        ws()
        m = _NAME_RE.match(s, pos)
        if not m:
            raise RslSyntaxError(f"expected attribute name at position {pos}")
        name = m.group().lower()
        pos = m.end()
        ws()
        if pos >= len(s) or s[pos] != "=":
            raise RslSyntaxError(f"expected '=' after {name!r}")
        pos += 1
        ws()
        if pos < len(s) and s[pos] == '"':
            pos += 1
            chars = []
            while pos < len(s) and s[pos] != '"':
                if s[pos] == "\\" and pos + 1 < len(s):
                    pos += 1
                chars.append(s[pos])
                pos += 1
            if pos >= len(s):
                raise RslSyntaxError("unterminated quoted value")
            pos += 1
            value = "".join(chars)
        else:
            start = pos
            while pos < len(s) and s[pos] != ")":
                pos += 1
            value = s[start:pos].strip()
        ws()
        if pos >= len(s) or s[pos] != ")":
            raise RslSyntaxError(f"expected ')' closing {name!r}")
        pos += 1
        if name in attrs:
            raise DuplicateAttribute(f"attribute {name!r} given twice")
        if name in NUMERIC and not value.isdigit():
            raise RslSyntaxError(f"{name} must be numeric, got {value!r}")
        attrs[name] = value
    if not attrs:
        raise RslSyntaxError("RSL has no attributes")
    return RSLRequest(attrs)


@dataclass(frozen=True)
class MappingTable:
    """Executable path -> resource rows, plus the optional job-class root."""

    entries: dict[str, str]
    jobclass_root: str | None = None

    @classmethod
    def parse(cls, text: str) -> "MappingTable":
        entries, root = {}, None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            cols = line.split()
            if len(cols) != 2:
                raise ValueError(f"mapping line {lineno}: expected two columns, got {raw!r}")
            if cols[0] == JOBCLASS_KEY:
                root = cols[1]
            else:
                entries[cols[0]] = cols[1]
        return cls(entries, root)

    @classmethod
    def load(cls, path: str | Path) -> "MappingTable":
        return cls.parse(Path(path).read_text())

    def jobclass_resource(self, jobtag: str) -> str | None:
        return f"{self.jobclass_root}/{jobtag}" if self.jobclass_root else None


def map_executable(path: str, mapping_table: MappingTable) -> str:
    try:
        return mapping_table.entries[path]
    except KeyError:
        raise NoMapping(f"no resource is mapped for executable {path!r}") from None
