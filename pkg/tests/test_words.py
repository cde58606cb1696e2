"""Word algebra against brute-force oracles."""

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from schottky_lab import words

LETTERS = "aAbB"


def brute_reduce(raw: str) -> str:
    """Independent oracle: cancel adjacent inverse pairs until stable."""
    out = raw
    while True:
        for i in range(len(out) - 1):
            if out[i] == words.inverse_letter(out[i + 1]):
                out = out[:i] + out[i + 2:]
                break
        else:
            return out


def brute_ball(n: int) -> set:
    """Independent oracle: reduce every raw string of length <= n."""
    out = {""}
    for k in range(1, n + 1):
        for tup in itertools.product(LETTERS, repeat=k):
            w = brute_reduce("".join(tup))
            if len(w) <= n:
                out.add(w)
    return out


raw_words = st.text(alphabet=LETTERS, max_size=12)


@given(raw_words)
@settings(max_examples=300)
def test_reduce_matches_brute_force(raw):
    assert words.reduce(raw) == brute_reduce(raw)


@given(raw_words)
def test_reduce_is_idempotent(raw):
    r = words.reduce(raw)
    assert words.reduce(r) == r


@given(raw_words, raw_words)
def test_multiply_reduces_concatenation(g1, g2):
    r1, r2 = words.reduce(g1), words.reduce(g2)
    assert words.multiply(r1, r2) == brute_reduce(r1 + r2)


@given(raw_words, raw_words, raw_words)
def test_multiply_is_associative(g1, g2, g3):
    a, b, c = (words.reduce(g) for g in (g1, g2, g3))
    assert words.multiply(words.multiply(a, b), c) == \
        words.multiply(a, words.multiply(b, c))


@given(raw_words)
def test_inverse_cancels(g):
    r = words.reduce(g)
    assert words.multiply(r, words.inverse(r)) == ""
    assert words.multiply(words.inverse(r), r) == ""


@pytest.mark.parametrize("n", range(0, 6))
def test_ball_matches_generate_and_dedup(n):
    assert set(words.ball(n)) == brute_ball(n)


@pytest.mark.parametrize("n,size", [(n, 2 * 3 ** n - 1) for n in range(9)])
def test_ball_sizes(n, size):
    assert len(words.ball(n)) == size


def test_sphere_sizes():
    assert len(words.sphere(0)) == 1
    for n in range(1, 7):
        assert len(words.sphere(n)) == 4 * 3 ** (n - 1)


@given(raw_words)
def test_ascii_round_trip(g):
    r = words.reduce(g)
    assert words.from_ascii(words.to_ascii(r)) == r


def test_identity_ascii():
    assert words.to_ascii("") == "e"
    assert words.from_ascii("e") == ""
