"""Minimal secret templating: only ``{{ .Data.<key> }}`` placeholders."""
from __future__ import annotations

import re
from typing import Mapping

from .errors import VaultError

_PLACEHOLDER = re.compile(r"\s*\.Data\.([^\s{}]+)\s*")


class TemplateError(VaultError, ValueError):
    pass


class TemplateSyntaxError(TemplateError):
    def __init__(self, message: str, template: str, offset: int):
        self.offset = offset
        self.line = template.count("\n", 0, offset) + 1
        self.column = offset - (template.rfind("\n", 0, offset) + 1) + 1
        super().__init__(f"{message} at line {self.line}, column {self.column}")


class MissingKeyError(TemplateError, KeyError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"template references missing key {key!r}")

    def __str__(self) -> str:
        return self.args[0]


def placeholders(template: str) -> list[str]:
    """Keys referenced by ``template``, in order; raises on bad syntax."""
    keys = []
    pos = 0
    while True:
        start = template.find("{{", pos)
        if start < 0:
            return keys
        end = template.find("}}", start + 2)
        if end < 0:
            raise TemplateSyntaxError("unclosed '{{'", template, start)
        m = _PLACEHOLDER.fullmatch(template, start + 2, end)
        if m is None:
            raise TemplateSyntaxError("expected '{{ .Data.<key> }}'", template, start)
        keys.append(m.group(1))
        pos = end + 2


def render_template(template: str, data: Mapping[str, str]) -> str:
    """Substitute every ``{{ .Data.key }}`` with ``data[key]``.

    >>> render_template("user={{ .Data.user }}", {"user": "dbs"})
    'user=dbs'
    """
    out = []
    pos = 0
    for key in placeholders(template):
        start = template.find("{{", pos)
        end = template.find("}}", start + 2)
        if key not in data:
            raise MissingKeyError(key)
        out.append(template[pos:start])
        out.append(data[key])
        pos = end + 2
    out.append(template[pos:])
    return "".join(out)
