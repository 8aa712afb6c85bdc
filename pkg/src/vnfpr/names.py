"""Reversible encoding of (symbol, index key) pairs into flat names.

Names appear in LP/MPS exports and solution files, so they must survive a
round trip through plain text.  Key parts are joined with "__"; characters
that could collide with the separator or the file grammar are %-escaped.
"""

from __future__ import annotations

_SAFE = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.'-")


def _escape(part: str) -> str:
    out = []
    for ch in part:
        if ch in _SAFE:
            out.append(ch)
        else:
            out.append("%{:02X}".format(ord(ch)))
    return "".join(out)


def _unescape(part: str) -> str:
    out = []
    i = 0
    while i < len(part):
        if part[i] == "%":
            out.append(chr(int(part[i + 1 : i + 3], 16)))
            i += 3
        else:
            out.append(part[i])
            i += 1
    return "".join(out)


def encode_name(sym: str, key: tuple) -> str:
    if not key:
        return sym
    return sym + "__" + "__".join(_escape(str(part)) for part in key)


def decode_name(name: str) -> tuple[str, tuple[str, ...]]:
    parts = name.split("__")
    return parts[0], tuple(_unescape(p) for p in parts[1:])
