"""Free group F2 combinatorics: reduced words, multiplication, Cayley balls.

Words are plain strings over the alphabet 'a', 'A' (= a^-1), 'b', 'B' (= b^-1).
The leftmost letter is the last generator applied, i.e. g = s_n ... s_1 acts
on a point by applying s_1 first.  The empty string is the identity and
serializes as "e".
"""

from __future__ import annotations

from collections import deque

GENERATORS = "aAbB"

#: canonical letter order used for deterministic enumeration / tie-breaking
LETTER_RANK = {s: i for i, s in enumerate(GENERATORS)}

DEFAULT_BALL_CAP = 12


class BallTooLargeError(Exception):
    """Raised when a Cayley-ball request exceeds the configured radius cap."""


def inverse_letter(s: str) -> str:
    return s.swapcase()


def reduce(raw: str) -> str:
    """Free reduction of an arbitrary letter string to its normal form."""
    out: list[str] = []
    for s in raw:
        if s not in LETTER_RANK:
            raise ValueError(f"bad generator letter {s!r}")
        if out and out[-1] == inverse_letter(s):
            out.pop()
        else:
            out.append(s)
    return "".join(out)


def multiply(g1: str, g2: str) -> str:
    """Normal form of g1 * g2 for g1, g2 already in normal form.

    Only cancellation at the junction is possible, so this is linear in the
    amount of cancellation rather than in len(g1) + len(g2).
    """
    i = len(g1)
    j = 0
    while i > 0 and j < len(g2) and g1[i - 1] == inverse_letter(g2[j]):
        i -= 1
        j += 1
    return g1[:i] + g2[j:]


def inverse(g: str) -> str:
    return g[::-1].swapcase()


def word_key(g: str):
    """Sort key: (length, canonical lexicographic)."""
    return (len(g), [LETTER_RANK[s] for s in g])


def left_extensions(g: str) -> list[str]:
    """All reduced sg with |sg| = |g| + 1, in canonical letter order."""
    if not g:
        return [s for s in GENERATORS]
    blocked = inverse_letter(g[0])
    return [s + g for s in GENERATORS if s != blocked]


def right_extensions(g: str) -> list[str]:
    """All reduced gs with |gs| = |g| + 1, in canonical letter order."""
    if not g:
        return [s for s in GENERATORS]
    blocked = inverse_letter(g[-1])
    return [g + s for s in GENERATORS if s != blocked]


def sphere(n: int) -> list[str]:
    """All reduced words of length exactly n (4 * 3^(n-1) of them, n >= 1)."""
    if n == 0:
        return [""]
    level = [s for s in GENERATORS]
    for _ in range(n - 1):
        level = [w for g in level for w in left_extensions(g)]
    return level


def ball(n: int, cap: int = DEFAULT_BALL_CAP) -> list[str]:
    """All reduced words of length <= n, sorted by (length, lexicographic).

    Enumerated by left-extension BFS from the identity, so the result is
    duplicate-free by construction; |ball(n)| = 2 * 3^n - 1.
    """
    if n < 0:
        raise ValueError("radius must be nonnegative")
    if n > cap:
        raise BallTooLargeError(f"ball radius {n} exceeds cap {cap}")
    out: list[str] = [""]
    level: deque[str] = deque([""])
    for _ in range(n):
        nxt: deque[str] = deque()
        for g in level:
            for w in left_extensions(g):
                nxt.append(w)
        out.extend(nxt)
        level = nxt
    # BFS emits each level in canonical order already, but sort defensively
    # so the public contract does not depend on deque iteration details.
    out.sort(key=word_key)
    return out


def to_ascii(g: str) -> str:
    """Serialized form used in reports ("e" for the identity)."""
    return g if g else "e"


def from_ascii(text: str) -> str:
    if text == "e":
        return ""
    w = reduce(text)
    if w != text:
        raise ValueError(f"{text!r} is not in normal form")
    return w
