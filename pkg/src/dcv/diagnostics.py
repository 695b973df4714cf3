"""Diagnostics shared by the parser, validator, and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ast import Pos


@dataclass(frozen=True)
class Diagnostic:
    message: str
    pos: Pos = field(default=Pos())
    severity: str = "error"
    file: str | None = None

    def render(self, file: str | None = None) -> str:
        name = self.file or file or "<input>"
        return f"{name}:{self.pos.line}:{self.pos.col}: {self.severity}: {self.message}"

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "line": self.pos.line,
            "col": self.pos.col,
            "severity": self.severity,
            "message": self.message,
        }


class InputError(Exception):
    """Raised when source text fails to lex, parse, or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.message for d in diagnostics))


class DconSyntaxError(InputError):
    pass


class DconValidationError(InputError):
    pass
