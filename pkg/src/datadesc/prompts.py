"""Prompt template loading and placeholder filling.

Templates are plain text files read verbatim — their exact bytes matter, since
filled prompts must differ from the template only at declared placeholders. A
placeholder is ``{identifier}``. Filling replaces exactly the requested
placeholders and nothing else, so JSON braces inside substituted *values* are
inert. A custom template root overlays the packaged defaults file by file.
"""
from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigurationError, ContractViolationError

PACKAGE_TEMPLATE_DIR = Path(__file__).parent / "templates"

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


def placeholders(template: str) -> set[str]:
    """The set of placeholder names declared in a template."""
    return set(_PLACEHOLDER_RE.findall(template))


def fill(template: str, **values: str) -> str:
    """Replace each ``{name}`` with its value; every value must be consumed.

    Raises ContractViolationError when a supplied name has no placeholder in
    the template — that is always a caller bug, not a data condition.
    """
    out = template
    for name, value in values.items():
        token = "{" + name + "}"
        if token not in out:
            raise ContractViolationError(f"template has no placeholder {token}")
        out = out.replace(token, value)
    return out


def as_regex(template: str) -> re.Pattern[str]:
    """Compile a template into a pattern matching any legal filling of it.

    Used by tests to check prompt fidelity: a filled prompt must match the
    template with each placeholder turned into a wildcard group.
    """
    parts: list[str] = []
    last = 0
    names_seen: set[str] = set()
    for match in _PLACEHOLDER_RE.finditer(template):
        parts.append(re.escape(template[last:match.start()]))
        name = match.group(1)
        if name in names_seen:
            parts.append(f"(?P={name})")
        else:
            parts.append(f"(?P<{name}>.*)")
            names_seen.add(name)
        last = match.end()
    parts.append(re.escape(template[last:]))
    return re.compile("".join(parts), re.DOTALL)


class TemplateSet:
    """Loads named templates, overlaying a custom root over packaged defaults."""

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._cache: dict[str, str] = {}

    def load(self, name: str) -> str:
        """Read ``<name>`` (a filename with extension) verbatim, cached."""
        if name in self._cache:
            return self._cache[name]
        candidates = []
        if self.root is not None:
            candidates.append(self.root / name)
        candidates.append(PACKAGE_TEMPLATE_DIR / name)
        for path in candidates:
            if path.is_file():
                text = path.read_text(encoding="utf-8")
                self._cache[name] = text
                return text
        raise ConfigurationError(
            f"template {name!r} not found in "
            + ", ".join(str(p.parent) for p in candidates)
        )

    def fill(self, name: str, **values: str) -> str:
        return fill(self.load(name), **values)
