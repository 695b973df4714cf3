"""S-expression reader for SMT-LIB 2 scripts (stdlib only, fast import)."""

from __future__ import annotations


class SexpError(Exception):
    pass


def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == ";":
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
        elif c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SexpError("unterminated quoted symbol")
            yield text[i + 1 : j]
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            if j >= n:
                raise SexpError("unterminated string")
            yield text[i : j + 1]
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '();"|':
                j += 1
            yield text[i:j]
            i = j


def parse_all(text: str) -> list:
    """Parse a script into a list of s-expressions (lists and atoms)."""
    stack: list[list] = [[]]
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SexpError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SexpError("unbalanced '('")
    return stack[0]
